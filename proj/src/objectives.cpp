#include "mobiclr/objectives.hpp"

#include <algorithm>
#include <cmath>

namespace mobiclr::objectives {

void Temperatures::validate() const {
    if (!(tau > 0.0) || !(tau_a > 0.0)) throw ConfigError("temperatures must be strictly positive");
}

double cosine_sim(const Eigen::Ref<const Eigen::RowVectorXd>& a, const Eigen::Ref<const Eigen::RowVectorXd>& b) {
    if (a.size() != b.size()) throw ArgumentError("cosine_sim: vectors differ in length");
    const double na = std::max(a.norm(), kNormGuard);
    const double nb = std::max(b.norm(), kNormGuard);
    return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

namespace {

struct Normalized {
    Mat unit;
    Vec norm;  // guarded norms
    Vec raw;   // true norms
};

Normalized normalize_rows(const Mat& x) {
    Normalized n;
    n.raw = x.rowwise().norm();
    n.norm = n.raw.cwiseMax(kNormGuard);
    n.unit = n.norm.cwiseInverse().asDiagonal() * x;
    return n;
}

// Pulls a gradient w.r.t. guarded unit rows back to the raw rows.
Mat unnormalize_grad(const Normalized& n, const Mat& grad_unit) {
    Mat g(grad_unit.rows(), grad_unit.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
        if (n.raw(r) > kNormGuard) {
            const double radial = grad_unit.row(r).dot(n.unit.row(r));
            g.row(r) = (grad_unit.row(r) - radial * n.unit.row(r)) / n.raw(r);
        } else {
            g.row(r) = grad_unit.row(r) / kNormGuard;
        }
    }
    return g;
}

}  // namespace

ContrastiveRows contrastive_rows(const Mat& anchors, const Mat& cross, double tau, double grad_weight) {
    const Eigen::Index B = anchors.rows();
    if (B < 2) throw ArgumentError("contrastive loss needs a batch of at least 2");
    if (cross.rows() != B || cross.cols() != anchors.cols())
        throw ArgumentError("contrastive loss: anchor and candidate shapes differ");
    if (!(tau > 0.0)) throw ArgumentError("temperature must be positive");

    const Normalized a = normalize_rows(anchors);
    const Normalized c = normalize_rows(cross);
    const Mat s_aa = (a.unit * a.unit.transpose()).cwiseMax(-1.0).cwiseMin(1.0) / tau;
    const Mat s_ac = (a.unit * c.unit.transpose()).cwiseMax(-1.0).cwiseMin(1.0) / tau;

    ContrastiveRows out;
    out.losses.resize(B);
    const bool want_grad = grad_weight != 0.0;
    Mat g_aa, g_ac;
    if (want_grad) {
        g_aa = Mat::Zero(B, B);
        g_ac = Mat::Zero(B, B);
    }
    for (Eigen::Index n = 0; n < B; ++n) {
        // Per-anchor max-logit shift keeps every exponent <= 0.
        double hi = s_ac.row(n).maxCoeff();
        for (Eigen::Index m = 0; m < B; ++m)
            if (m != n) hi = std::max(hi, s_aa(n, m));
        double denom = 0.0;
        for (Eigen::Index m = 0; m < B; ++m) {
            if (m != n) denom += std::exp(s_aa(n, m) - hi);
            denom += std::exp(s_ac(n, m) - hi);
        }
        const double lse = hi + std::log(denom);
        out.losses(n) = lse - s_ac(n, n);
        if (want_grad) {
            const double w = grad_weight / tau;
            for (Eigen::Index m = 0; m < B; ++m) {
                if (m != n) g_aa(n, m) = w * std::exp(s_aa(n, m) - lse);
                g_ac(n, m) = w * std::exp(s_ac(n, m) - lse);
            }
            g_ac(n, n) -= w;
        }
    }
    if (want_grad) {
        const Mat d_a_unit = (g_aa + g_aa.transpose()) * a.unit + g_ac * c.unit;
        const Mat d_c_unit = g_ac.transpose() * a.unit;
        out.grad_anchors = unnormalize_grad(a, d_a_unit);
        out.grad_cross = unnormalize_grad(c, d_c_unit);
    }
    return out;
}

std::size_t BatchProjections::batch_size() const {
    for (const auto& v : z)
        if (!v.empty()) return v.size();
    return 0;
}

namespace {

void check_batch(const std::vector<Mat>& z, const std::vector<Mat>& z_tilde) {
    if (z.size() < 2) throw ArgumentError("NT-Xent needs a batch of at least 2");
    if (z_tilde.size() != z.size()) throw ArgumentError("NT-Xent: view batches differ in size");
    for (std::size_t n = 0; n < z.size(); ++n)
        if (z[n].rows() != z.front().rows() || z[n].cols() != z.front().cols() || z_tilde[n].rows() != z[n].rows() ||
            z_tilde[n].cols() != z[n].cols())
            throw ArgumentError("NT-Xent: inconsistent projection shapes");
}

}  // namespace

NtXentResult ntxent_timestep(const std::vector<Mat>& z, const std::vector<Mat>& z_tilde, double tau, bool want_grad) {
    check_batch(z, z_tilde);
    const auto B = static_cast<Eigen::Index>(z.size());
    const Eigen::Index T = z.front().rows();
    const Eigen::Index F = z.front().cols();
    if (T < 1) throw ArgumentError("NT-Xent: projections must have at least one timestep");

    NtXentResult r;
    r.per_sample.resize(B, T);
    const double weight = want_grad ? 1.0 / static_cast<double>(B * T) : 0.0;
    if (want_grad) {
        r.grad_z.assign(B, Mat::Zero(T, F));
        r.grad_z_tilde.assign(B, Mat::Zero(T, F));
    }
    Mat anchors(B, F), cross(B, F);
    for (Eigen::Index t = 0; t < T; ++t) {
        for (Eigen::Index n = 0; n < B; ++n) {
            anchors.row(n) = z[n].row(t);
            cross.row(n) = z_tilde[n].row(t);
        }
        ContrastiveRows rows = contrastive_rows(anchors, cross, tau, weight);
        r.per_sample.col(t) = rows.losses;
        if (want_grad) {
            for (Eigen::Index n = 0; n < B; ++n) {
                r.grad_z[n].row(t) = rows.grad_anchors.row(n);
                r.grad_z_tilde[n].row(t) = rows.grad_cross.row(n);
            }
        }
    }
    r.mean = r.per_sample.mean();
    return r;
}

Eigen::RowVectorXd temporal_mean_pool(const Mat& z) {
    if (z.rows() < 1) throw ArgumentError("temporal_mean_pool: need at least one timestep");
    return z.colwise().mean();
}

Mat pool_batch(const std::vector<Mat>& zs) {
    if (zs.empty()) return {};
    Mat out(static_cast<Eigen::Index>(zs.size()), zs.front().cols());
    for (std::size_t n = 0; n < zs.size(); ++n) out.row(static_cast<Eigen::Index>(n)) = temporal_mean_pool(zs[n]);
    return out;
}

Vec aux_pair_loss(const Mat& anchor, const Mat& candidates, double tau_a) {
    return contrastive_rows(anchor, candidates, tau_a).losses;
}

namespace {

constexpr int kI = 0;
constexpr int kO = 1;
constexpr int kIO = 2;

// Spreads a pooled-row gradient evenly over the T timesteps.
void add_pooled_grad(std::vector<Mat>& grad, const Mat& pooled_grad, const std::vector<Mat>& like) {
    if (grad.empty())
        for (const Mat& m : like) grad.push_back(Mat::Zero(m.rows(), m.cols()));
    for (std::size_t n = 0; n < grad.size(); ++n) {
        const auto T = static_cast<double>(grad[n].rows());
        grad[n].rowwise() += pooled_grad.row(static_cast<Eigen::Index>(n)) / T;
    }
}

void add_grad(std::vector<Mat>& grad, const std::vector<Mat>& g, double scale) {
    if (grad.empty()) {
        for (const Mat& m : g) grad.push_back(m * scale);
        return;
    }
    for (std::size_t n = 0; n < grad.size(); ++n) grad[n] += g[n] * scale;
}

}  // namespace

double aux_regularizer(const BatchProjections& batch, double tau_a, BatchProjections* grad) {
    for (int k : {kI, kO, kIO})
        if (batch.z[k].empty() || batch.z_tilde[k].empty())
            throw ArgumentError("aux_regularizer needs projections for all three flows");
    const auto B = static_cast<double>(batch.z[kIO].size());
    const double w = grad ? 1.0 / B : 0.0;
    double total = 0.0;
    for (int flow : {kI, kO}) {
        for (bool tilde : {false, true}) {
            const auto& joint = tilde ? batch.z_tilde[kIO] : batch.z[kIO];
            const auto& single = tilde ? batch.z_tilde[flow] : batch.z[flow];
            const Mat anchor = pool_batch(joint);
            const Mat cand = pool_batch(single);
            if (anchor.rows() != cand.rows()) throw ArgumentError("aux_regularizer: flow batches differ in size");
            ContrastiveRows rows = contrastive_rows(anchor, cand, tau_a, w);
            total += rows.losses.mean();
            if (grad) {
                add_pooled_grad(tilde ? grad->z_tilde[kIO] : grad->z[kIO], rows.grad_anchors, joint);
                add_pooled_grad(tilde ? grad->z_tilde[flow] : grad->z[flow], rows.grad_cross, single);
            }
        }
    }
    return total;
}

std::array<bool, 3> required_flows(const LossOptions& o) {
    return {o.use_Li || o.use_La, o.use_Lo || o.use_La, o.use_La};
}

LossBreakdown total_loss(const BatchProjections& batch, const Temperatures& temps, const LossOptions& options,
                         BatchProjections* grad) {
    temps.validate();
    LossBreakdown out;
    const bool want = grad != nullptr;
    auto flow_loss = [&](int k) {
        NtXentResult fwd = ntxent_timestep(batch.z[k], batch.z_tilde[k], temps.tau, want);
        if (!options.symmetric) {
            if (want) {
                add_grad(grad->z[k], fwd.grad_z, 1.0);
                add_grad(grad->z_tilde[k], fwd.grad_z_tilde, 1.0);
            }
            return fwd.mean;
        }
        NtXentResult rev = ntxent_timestep(batch.z_tilde[k], batch.z[k], temps.tau, want);
        if (want) {
            add_grad(grad->z[k], fwd.grad_z, 0.5);
            add_grad(grad->z_tilde[k], fwd.grad_z_tilde, 0.5);
            add_grad(grad->z_tilde[k], rev.grad_z, 0.5);
            add_grad(grad->z[k], rev.grad_z_tilde, 0.5);
        }
        return 0.5 * (fwd.mean + rev.mean);
    };
    if (options.use_Li) out.L_i = flow_loss(kI);
    if (options.use_Lo) out.L_o = flow_loss(kO);
    if (options.use_La) out.L_a = aux_regularizer(batch, temps.tau_a, grad);
    out.total = out.L_i + out.L_o + out.L_a;
    return out;
}

}  // namespace mobiclr::objectives
