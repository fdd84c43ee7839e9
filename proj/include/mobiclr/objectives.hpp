#pragma once

// Contrastive objectives over projected representations.
//
// Both the per-timestep instance loss and the pooled alignment loss share
// one shape: for anchor row n,
//
//   l(n) = -log  D(a_n, c_n) / ( sum_{m != n} D(a_n, a_m) + sum_m D(a_n, c_m) )
//
// with D(u, v) = exp(cos(u, v) / tau). `a` are the anchors (which double as
// in-view negatives) and `c` the cross-view candidates, c_n being the positive.

#include "mobiclr/common.hpp"

#include <array>
#include <vector>

namespace mobiclr::objectives {

inline constexpr double kNormGuard = 1e-8;

struct Temperatures {
    double tau = 1.0;
    double tau_a = 0.1;
    void validate() const;
};

/// dot(a,b) / (max(|a|,d) max(|b|,d)), clamped to [-1, 1].
double cosine_sim(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b);

struct ContrastiveRows {
    Vec losses;        // one per anchor
    Mat grad_anchors;  // d(sum of losses * weight)/d anchors, if requested
    Mat grad_cross;
};

/// Losses for B anchors (rows of `anchors`) against `cross`. If grad_weight
/// is non-zero, the gradients of grad_weight * sum(losses) are filled in.
ContrastiveRows contrastive_rows(const Mat& anchors, const Mat& cross, double tau, double grad_weight = 0.0);

/// Flow-keyed projections: z[flow][n] is the T x F projection of region n,
/// z_tilde the second view. An empty vector means the flow was not computed.
struct BatchProjections {
    std::array<std::vector<Mat>, 3> z;
    std::array<std::vector<Mat>, 3> z_tilde;

    std::size_t batch_size() const;
};

struct NtXentResult {
    Mat per_sample;  // B x T
    double mean = 0.0;
    std::vector<Mat> grad_z;        // filled when requested: d(mean)/dZ
    std::vector<Mat> grad_z_tilde;  // d(mean)/dZ~
};

/// Per-timestep NT-Xent, averaged over B x T.
NtXentResult ntxent_timestep(const std::vector<Mat>& z, const std::vector<Mat>& z_tilde, double tau,
                             bool want_grad = false);

/// Row mean over time.
Eigen::RowVectorXd temporal_mean_pool(const Mat& z);
/// Stacks pooled rows into B x F.
Mat pool_batch(const std::vector<Mat>& zs);

/// Per-sample alignment loss of pooled joint anchors against pooled flow candidates.
Vec aux_pair_loss(const Mat& anchor, const Mat& candidates, double tau_a);

struct LossBreakdown {
    double L_i = 0.0;
    double L_o = 0.0;
    double L_a = 0.0;
    double total = 0.0;
};

struct LossOptions {
    bool use_Li = true;
    bool use_Lo = true;
    bool use_La = true;
    bool symmetric = false;  // average l(z, z~) and l(z~, z) for L_i / L_o
};

/// Pooled alignment regularizer over the four pooled pairs.
double aux_regularizer(const BatchProjections& batch, double tau_a, BatchProjections* grad = nullptr);

/// L = L_i + L_o + L_a; disabled terms are reported as 0. When grad is given it
/// receives dL/dz for every flow the enabled terms touch (others left empty).
LossBreakdown total_loss(const BatchProjections& batch, const Temperatures& temps, const LossOptions& options = {},
                         BatchProjections* grad = nullptr);

/// Which flows the enabled terms need.
std::array<bool, 3> required_flows(const LossOptions& options);

}  // namespace mobiclr::objectives
