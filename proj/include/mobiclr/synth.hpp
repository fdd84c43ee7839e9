#pragma once

// Synthetic cities with planted temporal function profiles.
//
// Each region mixes K hour-of-week templates (residential, commercial,
// entertainment; see data/synth_profiles.csv) with simplex weights, scaled by
// a per-region volume and perturbed by truncated Gaussian count noise. The
// planted indicator is linear in the mixture weights.

#include "mobiclr/ingest.hpp"
#include "mobiclr/probe.hpp"

#include <array>
#include <optional>
#include <string>

namespace mobiclr::synth {

inline constexpr int kHoursPerWeek = 168;
inline constexpr int kMaxProfiles = 3;

struct CityProfile {
    std::string name;
    Mat templates;  // 168 x 2, col 0 inbound, col 1 outbound
};

/// The built-in profiles, in order residential, commercial, entertainment.
const std::array<CityProfile, kMaxProfiles>& profiles();

struct CityOptions {
    int regions = 60;
    int profiles = 3;
    int hours = 336;
    double noise_level = 1.0;       // count noise std = noise_level * sqrt(mean + 1)
    double volume_spread = 0.5;     // log-normal sigma of the per-region volume multiplier; 0 disables
    double dirichlet_alpha = 1.0;   // mixture-weight concentration
    double indicator_noise = 0.02;  // std of the Gaussian noise added to the indicator
    std::uint64_t seed = 0;
    std::optional<Mat> weights;     // overrides the sampled N x K mixture weights
    ingest::Timestamp time_origin = 1546819200;  // 2019-01-07T00:00Z, a Monday

    void validate() const;
};

struct SynthCity {
    ingest::MobilitySeries series;
    Mat weights;   // N x K, rows on the simplex
    Vec volumes;   // N
    Vec beta;      // K
    Vec indicator; // N
    CityOptions options;

    probe::TargetTable target(const std::string& name = "indicator") const;
};

SynthCity gen_city(const CityOptions& options);

/// Convenience overload matching the common parameters.
SynthCity gen_city(int regions, int profiles, int hours, double noise_level, std::uint64_t seed);

void write_target_csv(const std::filesystem::path& path, const probe::TargetTable& target);

}  // namespace mobiclr::synth
