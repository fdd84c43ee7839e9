#pragma once

// Independent reference implementations used only by tests. Nothing under
// src/ outside this directory may include this header.

#include "mobiclr/encoder.hpp"
#include "mobiclr/ingest.hpp"
#include "mobiclr/objectives.hpp"

#include <functional>
#include <string>

namespace mobiclr::testkit {

/// Literal nested-loop transcription of the per-timestep loss for anchor (n, t).
double oracle_instance_term(const std::vector<Mat>& z, const std::vector<Mat>& z_tilde, std::size_t n,
                            Eigen::Index t, double tau);

/// Literal transcription of the pooled alignment term for anchor n.
double oracle_alignment_term(const std::vector<Mat>& joint, const std::vector<Mat>& flow, std::size_t n,
                             double tau_a);

/// Full objective, loop by loop, without vectorization or max-logit shifts.
objectives::LossBreakdown oracle_total_loss(const objectives::BatchProjections& batch,
                                            const objectives::Temperatures& temps);

struct OracleReport {
    double max_abs_L_i = 0.0;
    double max_abs_L_o = 0.0;
    double max_abs_L_a = 0.0;
    double max_abs_total = 0.0;
    double grad_max_rel_error = 0.0;
    bool pass = false;
};

double relative_error(double analytic, double numeric);

/// Central differences of f at x, one coordinate at a time.
Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double step);

struct GradCheck {
    double max_rel_error = 0.0;
    std::string worst_tensor;
    std::size_t checked = 0;
    bool all_finite = true;
};

/// Compares an analytic model gradient with central differences of loss(model).
GradCheck check_model_gradient(const std::function<double(const encoder::Model&)>& loss,
                               const encoder::Model& params, const encoder::Model& analytic, double step);

/// Counts by looping over every (region, hour, trip); layout matches MobilitySeries::counts.
std::vector<std::int64_t> naive_counts(const std::vector<ingest::TripRecord>& trips,
                                       const std::vector<std::string>& ids, ingest::Timestamp start,
                                       std::int64_t hours);

/// Id-resolved trips ("r0".."r{regions}", the last one unknown) with times spilling two hours past the window.
std::vector<ingest::TripRecord> random_trips(int count, int regions, ingest::Timestamp start, std::int64_t hours,
                                             std::uint64_t seed);

}  // namespace mobiclr::testkit
