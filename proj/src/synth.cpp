#include "mobiclr/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mobiclr::synth {

// Generated at configure time from data/synth_profiles.csv.
extern const char* const kProfilesCsv;

namespace {

std::array<CityProfile, kMaxProfiles> parse_profiles() {
    std::array<CityProfile, kMaxProfiles> out{{{"residential", Mat::Zero(kHoursPerWeek, 2)},
                                               {"commercial", Mat::Zero(kHoursPerWeek, 2)},
                                               {"entertainment", Mat::Zero(kHoursPerWeek, 2)}}};
    std::istringstream is(kProfilesCsv);
    std::string line;
    int rows = 0;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("hour_of_week", 0) == 0) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> v;
        while (std::getline(ls, cell, ',')) v.push_back(std::stod(cell));
        if (v.size() != 7) throw FormatError("synth profiles: expected 7 columns");
        const auto h = static_cast<Eigen::Index>(v[0]);
        for (int k = 0; k < kMaxProfiles; ++k) {
            out[k].templates(h, 0) = v[1 + 2 * k];
            out[k].templates(h, 1) = v[2 + 2 * k];
        }
        ++rows;
    }
    if (rows != kHoursPerWeek) throw FormatError("synth profiles: expected 168 hourly rows");
    return out;
}

}  // namespace

const std::array<CityProfile, kMaxProfiles>& profiles() {
    static const auto p = parse_profiles();
    return p;
}

void CityOptions::validate() const {
    if (regions < 8) throw ArgumentError("gen_city: need at least 8 regions");
    if (hours < 24 || hours % 24 != 0) throw ArgumentError("gen_city: hours must be a positive multiple of 24");
    if (profiles < 1 || profiles > kMaxProfiles) throw ArgumentError("gen_city: profiles must be between 1 and 3");
    if (noise_level < 0.0 || volume_spread < 0.0 || indicator_noise < 0.0 || !(dirichlet_alpha > 0.0))
        throw ArgumentError("gen_city: noise parameters must be non-negative");
    if (weights) {
        if (weights->rows() != regions || weights->cols() != profiles)
            throw ArgumentError("gen_city: weight override must be regions x profiles");
        for (Eigen::Index r = 0; r < weights->rows(); ++r)
            if (std::abs(weights->row(r).sum() - 1.0) > 1e-9 || weights->row(r).minCoeff() < 0.0)
                throw ArgumentError("gen_city: weight rows must lie on the simplex");
    }
}

probe::TargetTable SynthCity::target(const std::string& name) const {
    return {name, series.region_ids, indicator};
}

SynthCity gen_city(const CityOptions& options) {
    options.validate();
    const int N = options.regions;
    const int K = options.profiles;
    SynthCity city;
    city.options = options;

    // Mixture weights: Dirichlet via normalized gammas.
    if (options.weights) {
        city.weights = *options.weights;
    } else {
        Rng rng(derive_seed(options.seed, 0x3e16u));
        std::gamma_distribution<double> gamma(options.dirichlet_alpha, 1.0);
        city.weights.resize(N, K);
        for (int n = 0; n < N; ++n) {
            for (int k = 0; k < K; ++k) city.weights(n, k) = gamma(rng);
            city.weights.row(n) /= city.weights.row(n).sum();
        }
    }

    city.volumes = Vec::Ones(N);
    if (options.volume_spread > 0.0) {
        Rng rng(derive_seed(options.seed, 0x701u));
        std::lognormal_distribution<double> vol(0.0, options.volume_spread);
        for (int n = 0; n < N; ++n) city.volumes(n) = vol(rng);
    }

    // Indicator coefficients: an evenly spaced ladder in a seed-chosen order.
    {
        std::vector<int> order(K);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(options.seed, 0xbe7au));
        std::shuffle(order.begin(), order.end(), rng);
        city.beta.resize(K);
        for (int k = 0; k < K; ++k) city.beta(order[k]) = K == 1 ? 1.0 : static_cast<double>(k) / (K - 1);
    }

    auto& s = city.series;
    s.time_origin = options.time_origin;
    s.hours = options.hours;
    for (int n = 0; n < N; ++n) {
        char id[16];
        std::snprintf(id, sizeof id, "R%03d", n);
        s.region_ids.emplace_back(id);
    }
    s.counts.assign(static_cast<std::size_t>(N) * options.hours * 2, 0);

    Rng noise_rng(derive_seed(options.seed, 0x401eu));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const auto& prof = profiles();
    for (int n = 0; n < N; ++n) {
        for (int t = 0; t < options.hours; ++t) {
            for (int c = 0; c < 2; ++c) {
                double mean = 0.0;
                for (int k = 0; k < K; ++k) mean += city.weights(n, k) * prof[k].templates(t % kHoursPerWeek, c);
                mean *= city.volumes(n);
                double v = mean;
                if (options.noise_level > 0.0) v += options.noise_level * std::sqrt(mean + 1.0) * gauss(noise_rng);
                s.at(n, t, c) = std::max<std::int64_t>(0, std::llround(v));
            }
        }
    }

    Rng y_rng(derive_seed(options.seed, 0x1d1cu));
    std::normal_distribution<double> y_noise(0.0, options.indicator_noise > 0.0 ? options.indicator_noise : 1.0);
    city.indicator = city.weights * city.beta;
    if (options.indicator_noise > 0.0)
        for (int n = 0; n < N; ++n) city.indicator(n) += y_noise(y_rng);
    return city;
}

SynthCity gen_city(int regions, int profiles, int hours, double noise_level, std::uint64_t seed) {
    CityOptions o;
    o.regions = regions;
    o.profiles = profiles;
    o.hours = hours;
    o.noise_level = noise_level;
    o.seed = seed;
    return gen_city(o);
}

void write_target_csv(const std::filesystem::path& path, const probe::TargetTable& target) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path.string());
    os.precision(17);
    os << "region_id," << target.name << '\n';
    for (std::size_t i = 0; i < target.region_ids.size(); ++i)
        os << target.region_ids[i] << ',' << target.values(static_cast<Eigen::Index>(i)) << '\n';
}

}  // namespace mobiclr::synth
