#include "oracle.hpp"

#include <algorithm>
#include <cmath>

namespace mobiclr::testkit {

namespace {

double sim(const Mat& a, Eigen::Index ra, const Mat& b, Eigen::Index rb) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Eigen::Index f = 0; f < a.cols(); ++f) {
        dot += a(ra, f) * b(rb, f);
        na += a(ra, f) * a(ra, f);
        nb += b(rb, f) * b(rb, f);
    }
    na = std::max(std::sqrt(na), objectives::kNormGuard);
    nb = std::max(std::sqrt(nb), objectives::kNormGuard);
    return std::clamp(dot / (na * nb), -1.0, 1.0);
}

Mat pooled(const Mat& z) {
    Mat p = Mat::Zero(1, z.cols());
    for (Eigen::Index t = 0; t < z.rows(); ++t)
        for (Eigen::Index f = 0; f < z.cols(); ++f) p(0, f) += z(t, f);
    return p / static_cast<double>(z.rows());
}

}  // namespace

double oracle_instance_term(const std::vector<Mat>& z, const std::vector<Mat>& z_tilde, std::size_t n,
                            Eigen::Index t, double tau) {
    const double numerator = std::exp(sim(z[n], t, z_tilde[n], t) / tau);
    double denominator = 0.0;
    for (std::size_t m = 0; m < z.size(); ++m)
        if (m != n) denominator += std::exp(sim(z[n], t, z[m], t) / tau);
    for (std::size_t m = 0; m < z.size(); ++m) denominator += std::exp(sim(z[n], t, z_tilde[m], t) / tau);
    return -std::log(numerator / denominator);
}

double oracle_alignment_term(const std::vector<Mat>& joint, const std::vector<Mat>& flow, std::size_t n,
                             double tau_a) {
    const Mat anchor = pooled(joint[n]);
    auto D = [&](const Mat& other) { return std::exp(sim(anchor, 0, other, 0) / tau_a); };
    const double numerator = D(pooled(flow[n]));
    double denominator = 0.0;
    for (std::size_t m = 0; m < joint.size(); ++m)
        if (m != n) denominator += D(pooled(joint[m]));
    for (std::size_t m = 0; m < flow.size(); ++m) denominator += D(pooled(flow[m]));
    return -std::log(numerator / denominator);
}

objectives::LossBreakdown oracle_total_loss(const objectives::BatchProjections& batch,
                                            const objectives::Temperatures& temps) {
    const std::size_t B = batch.z[2].size();
    const Eigen::Index T = batch.z[2].front().rows();
    objectives::LossBreakdown out;
    for (int flow : {0, 1}) {
        double sum = 0.0;
        for (std::size_t n = 0; n < B; ++n)
            for (Eigen::Index t = 0; t < T; ++t)
                sum += oracle_instance_term(batch.z[flow], batch.z_tilde[flow], n, t, temps.tau);
        (flow == 0 ? out.L_i : out.L_o) = sum / (static_cast<double>(B) * static_cast<double>(T));
    }
    double ai = 0.0, ao = 0.0;
    for (std::size_t n = 0; n < B; ++n) {
        ai += oracle_alignment_term(batch.z[2], batch.z[0], n, temps.tau_a) +
              oracle_alignment_term(batch.z_tilde[2], batch.z_tilde[0], n, temps.tau_a);
        ao += oracle_alignment_term(batch.z[2], batch.z[1], n, temps.tau_a) +
              oracle_alignment_term(batch.z_tilde[2], batch.z_tilde[1], n, temps.tau_a);
    }
    out.L_a = ai / static_cast<double>(B) + ao / static_cast<double>(B);
    out.total = out.L_i + out.L_o + out.L_a;
    return out;
}

double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

Vec finite_diff_grad(const std::function<double(const Vec&)>& f, const Vec& x, double step) {
    Vec g(x.size());
    Vec probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + step;
        const double up = f(probe);
        probe(i) = x(i) - step;
        const double down = f(probe);
        probe(i) = x(i);
        g(i) = (up - down) / (2.0 * step);
    }
    return g;
}

GradCheck check_model_gradient(const std::function<double(const encoder::Model&)>& loss,
                               const encoder::Model& params, const encoder::Model& analytic, double step) {
    encoder::Model probe = params;
    std::vector<std::pair<std::string, Mat*>> tensors;
    encoder::for_each_tensor(probe, [&](const std::string& name, Mat& t) { tensors.emplace_back(name, &t); });
    std::vector<const Mat*> grads;
    encoder::for_each_tensor(analytic, [&](const std::string&, const Mat& t) { grads.push_back(&t); });

    GradCheck result;
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        Mat& t = *tensors[k].second;
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            const double saved = t.data()[i];
            t.data()[i] = saved + step;
            const double up = loss(probe);
            t.data()[i] = saved - step;
            const double down = loss(probe);
            t.data()[i] = saved;
            if (!std::isfinite(up) || !std::isfinite(down)) result.all_finite = false;
            const double numeric = (up - down) / (2.0 * step);
            const double err = relative_error(grads[k]->data()[i], numeric);
            if (err > result.max_rel_error) {
                result.max_rel_error = err;
                result.worst_tensor = tensors[k].first + "[" + std::to_string(i) + "]";
            }
            ++result.checked;
        }
    }
    return result;
}

std::vector<std::int64_t> naive_counts(const std::vector<ingest::TripRecord>& trips,
                                       const std::vector<std::string>& ids, ingest::Timestamp start,
                                       std::int64_t hours) {
    std::vector<std::int64_t> out(ids.size() * static_cast<std::size_t>(hours) * 2, 0);
    for (std::size_t n = 0; n < ids.size(); ++n)
        for (std::int64_t t = 0; t < hours; ++t)
            for (const auto& trip : trips) {
                const ingest::Timestamp lo = start + t * 3600, hi = lo + 3600;
                if (trip.destination.region_id == ids[n] && trip.end_time >= lo && trip.end_time < hi)
                    ++out[(n * hours + t) * 2 + 0];
                if (trip.origin.region_id == ids[n] && trip.start_time >= lo && trip.start_time < hi)
                    ++out[(n * hours + t) * 2 + 1];
            }
    return out;
}

std::vector<ingest::TripRecord> random_trips(int count, int regions, ingest::Timestamp start, std::int64_t hours,
                                             std::uint64_t seed) {
    Rng rng(seed);
    std::uniform_int_distribution<int> region(0, regions);
    std::uniform_int_distribution<ingest::Timestamp> when(start - 7200, start + hours * 3600 + 7200);
    std::uniform_int_distribution<ingest::Timestamp> duration(0, 5400);
    std::vector<ingest::TripRecord> trips;
    for (int k = 0; k < count; ++k) {
        ingest::TripRecord t;
        t.origin.region_id = "r" + std::to_string(region(rng));
        t.destination.region_id = "r" + std::to_string(region(rng));
        t.start_time = when(rng);
        t.end_time = t.start_time + duration(rng);
        trips.push_back(std::move(t));
    }
    return trips;
}

}  // namespace mobiclr::testkit
