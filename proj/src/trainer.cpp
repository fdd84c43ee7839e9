#include "mobiclr/trainer.hpp"

#include "mobiclr/container.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mobiclr::trainer {

using encoder::Flow;
using encoder::Model;

void TrainConfig::validate() const {
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(loss.use_Li || loss.use_Lo || loss.use_La)) throw ConfigError("at least one loss term must be enabled");
    for (const auto& s : pipeline) s.validate();
    temps.validate();
    model.validate();
}

namespace {

objectives::BatchProjections collect(const std::vector<encoder::TrioOutputs>& outs, std::array<bool, 3> active) {
    objectives::BatchProjections b;
    for (int k = 0; k < 3; ++k) {
        if (!active[k]) continue;
        for (const auto& o : outs) {
            b.z[k].push_back(o.view_a.z[k]);
            b.z_tilde[k].push_back(o.view_b.z[k]);
        }
    }
    return b;
}

std::vector<encoder::TrioOutputs> forward_batch(const Model& model, const std::vector<Mat>& views_a,
                                                const std::vector<Mat>& views_b, std::array<bool, 3> active) {
    if (views_a.size() != views_b.size()) throw ArgumentError("view batches differ in size");
    std::vector<encoder::TrioOutputs> outs(views_a.size());
    const auto n = static_cast<std::ptrdiff_t>(views_a.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) outs[i] = encoder::forward_trio(views_a[i], views_b[i], model, active);
    return outs;
}

}  // namespace

objectives::LossBreakdown batch_loss(const Model& model, const std::vector<Mat>& views_a,
                                     const std::vector<Mat>& views_b, const objectives::Temperatures& temps,
                                     const objectives::LossOptions& options) {
    const auto active = objectives::required_flows(options);
    const auto outs = forward_batch(model, views_a, views_b, active);
    return objectives::total_loss(collect(outs, active), temps, options);
}

StepGradient loss_and_gradient(const Model& model, const std::vector<Mat>& views_a, const std::vector<Mat>& views_b,
                               const objectives::Temperatures& temps, const objectives::LossOptions& options) {
    const auto active = objectives::required_flows(options);
    const auto outs = forward_batch(model, views_a, views_b, active);
    objectives::BatchProjections dz;
    StepGradient result;
    result.loss = objectives::total_loss(collect(outs, active), temps, options, &dz);

    // Per-region gradient buffers reduced in region order, so the result does
    // not depend on thread scheduling.
    const auto n = static_cast<std::ptrdiff_t>(outs.size());
    std::vector<Model> partial(outs.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        partial[i] = encoder::zeros_like(model);
        std::array<Mat, 3> ga, gb;
        for (int k = 0; k < 3; ++k) {
            if (!dz.z[k].empty()) ga[k] = dz.z[k][i];
            if (!dz.z_tilde[k].empty()) gb[k] = dz.z_tilde[k][i];
        }
        encoder::backward_flows(model, outs[i].view_a, ga, partial[i]);
        encoder::backward_flows(model, outs[i].view_b, gb, partial[i]);
    }
    result.grad = std::move(partial.front());
    for (std::size_t i = 1; i < partial.size(); ++i) encoder::accumulate(result.grad, partial[i]);
    return result;
}

augment::ViewPair region_views(const Mat& joint, const TrainConfig& config, int epoch, std::size_t region) {
    const int draw_epoch = config.cached_views ? 0 : epoch;
    Rng rng(derive_seed(config.seed, 0xa06u, draw_epoch, region));
    return augment::two_views(joint, config.pipeline, rng);
}

void optimizer_step(TrainState& state, const Model& grad, const TrainConfig& config) {
    ++state.step;
    std::vector<const Mat*> g;
    encoder::for_each_tensor(grad, [&](const std::string&, const Mat& t) { g.push_back(&t); });
    if (config.optimizer == OptimizerKind::Sgd) {
        std::size_t i = 0;
        encoder::for_each_tensor(state.model, [&](const std::string&, Mat& p) { p -= config.learning_rate * *g[i++]; });
        return;
    }
    std::vector<Mat*> m, v;
    encoder::for_each_tensor(state.adam_m, [&](const std::string&, Mat& t) { m.push_back(&t); });
    encoder::for_each_tensor(state.adam_v, [&](const std::string&, Mat& t) { v.push_back(&t); });
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    std::size_t i = 0;
    encoder::for_each_tensor(state.model, [&](const std::string&, Mat& p) {
        const Mat& gi = *g[i];
        Mat& mi = *m[i];
        Mat& vi = *v[i];
        mi = b1 * mi + (1.0 - b1) * gi;
        vi = b2 * vi + (1.0 - b2) * gi.cwiseAbs2();
        p.array() -= config.learning_rate * (mi.array() / c1) / ((vi.array() / c2).sqrt() + config.adam_eps);
        ++i;
    });
}

TrainState train(const ingest::NormalizedSeries& data, const TrainConfig& config, std::span<const std::size_t> regions,
                 const StepCallback& on_step) {
    config.validate();
    std::vector<std::size_t> pool(regions.begin(), regions.end());
    if (pool.empty()) {
        pool.resize(data.regions());
        std::iota(pool.begin(), pool.end(), 0);
    }
    for (std::size_t r : pool)
        if (r >= data.regions()) throw ArgumentError("train: region index out of range");
    if (pool.size() < 2) throw ArgumentError("train: need at least 2 regions");
    if (pool.size() < static_cast<std::size_t>(config.batch_size))
        throw ArgumentError("train: batch_size " + std::to_string(config.batch_size) + " exceeds the " +
                            std::to_string(pool.size()) + " available regions");
    for (std::size_t r : pool)
        if (data.values[r].cols() != 2) throw ArgumentError("train: series must have inbound and outbound channels");

    TrainState state;
    state.model = encoder::init_model(config.model, derive_seed(config.seed, 0x1417u));
    state.adam_m = encoder::zeros_like(state.model);
    state.adam_v = encoder::zeros_like(state.model);

    const auto B = static_cast<std::size_t>(config.batch_size);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        state.epoch = epoch;
        std::vector<std::size_t> order = pool;
        Rng shuffle_rng(derive_seed(config.seed, 0x5u, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (std::size_t begin = 0; begin < order.size(); begin += B) {
            const std::size_t end = std::min(order.size(), begin + B);
            if (end - begin < 2) break;  // no in-batch negative
            std::vector<Mat> views_a, views_b;
            StepRecord rec;
            rec.epoch = epoch;
            for (std::size_t k = begin; k < end; ++k) {
                const std::size_t r = order[k];
                auto views = region_views(data.values[r], config, epoch, r);
                views_a.push_back(std::move(views.view_a));
                views_b.push_back(std::move(views.view_b));
                rec.batch_ids.push_back(data.region_ids[r]);
            }
            StepGradient sg = loss_and_gradient(state.model, views_a, views_b, config.temps, config.loss);
            if (!std::isfinite(sg.loss.total)) {
                std::ostringstream msg;
                msg << "non-finite loss at epoch " << epoch << " step " << state.step << " (batch:";
                for (const auto& id : rec.batch_ids) msg << ' ' << id;
                msg << ')';
                throw TrainingError(msg.str());
            }
            for (Flow f : encoder::kFlows) {
                rec.encoder_grad_norm[static_cast<int>(f)] = std::sqrt(encoder::squared_norm(sg.grad.encoder(f)));
                rec.head_grad_norm[static_cast<int>(f)] = std::sqrt(encoder::squared_norm(sg.grad.head(f)));
            }
            optimizer_step(state, sg.grad, config);
            rec.step = state.step;
            rec.loss = sg.loss;
            bool finite = true;
            encoder::for_each_tensor(state.model, [&](const std::string&, const Mat& p) { finite = finite && p.allFinite(); });
            if (!finite)
                throw TrainingError("parameters became non-finite at step " + std::to_string(state.step));
            if (on_step) on_step(rec);
            state.history.push_back(std::move(rec));
        }
    }
    state.epoch = config.epochs;
    return state;
}

std::vector<double> epoch_means(const std::vector<StepRecord>& history) {
    std::vector<double> sums, counts;
    for (const auto& r : history) {
        if (static_cast<std::size_t>(r.epoch) >= sums.size()) {
            sums.resize(r.epoch + 1, 0.0);
            counts.resize(r.epoch + 1, 0.0);
        }
        sums[r.epoch] += r.loss.total;
        counts[r.epoch] += 1.0;
    }
    for (std::size_t e = 0; e < sums.size(); ++e) sums[e] = counts[e] > 0 ? sums[e] / counts[e] : 0.0;
    return sums;
}

void write_loss_log(const std::filesystem::path& path, const std::vector<StepRecord>& history) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path.string());
    for (const auto& r : history) {
        nlohmann::json j = {{"epoch", r.epoch}, {"step", r.step},       {"L_i", r.loss.L_i},
                            {"L_o", r.loss.L_o}, {"L_a", r.loss.L_a}, {"total", r.loss.total}};
        os << j.dump() << '\n';
    }
}

// ---- embeddings -------------------------------------------------------------

std::string to_string(EmbeddingSource s) {
    switch (s) {
        case EmbeddingSource::Joint: return "io";
        case EmbeddingSource::Inbound: return "i";
        case EmbeddingSource::Outbound: return "o";
        case EmbeddingSource::MeanFlow: return "mean_i_o";
    }
    return "?";
}

EmbeddingSource embedding_source_from_string(const std::string& s) {
    if (s == "io") return EmbeddingSource::Joint;
    if (s == "i") return EmbeddingSource::Inbound;
    if (s == "o") return EmbeddingSource::Outbound;
    if (s == "mean_i_o") return EmbeddingSource::MeanFlow;
    throw ConfigError("unknown embedding source '" + s + "'");
}

RegionEmbeddings embed_regions(const ingest::NormalizedSeries& data, const Model& model, EmbeddingSource source) {
    RegionEmbeddings out;
    out.region_ids = data.region_ids;
    out.source = to_string(source);
    const int D = model.config.repr_dim;
    out.matrix.resize(static_cast<Eigen::Index>(data.regions()), D);
    const auto n = static_cast<std::ptrdiff_t>(data.regions());
    for (const Mat& v : data.values)
        if (v.cols() != 2) throw ArgumentError("embed_regions: series must have inbound and outbound channels");
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
        const Mat& x = data.values[r];
        auto pooled = [&](Flow f) {
            return objectives::temporal_mean_pool(encoder::encode(encoder::flow_input(x, f), model.encoder(f)));
        };
        switch (source) {
            case EmbeddingSource::Joint: out.matrix.row(r) = pooled(Flow::Joint); break;
            case EmbeddingSource::Inbound: out.matrix.row(r) = pooled(Flow::Inbound); break;
            case EmbeddingSource::Outbound: out.matrix.row(r) = pooled(Flow::Outbound); break;
            case EmbeddingSource::MeanFlow:
                out.matrix.row(r) = 0.5 * (pooled(Flow::Inbound) + pooled(Flow::Outbound));
                break;
        }
    }
    return out;
}

void write_embeddings(const std::filesystem::path& path, const RegionEmbeddings& emb, const std::string& config_hash) {
    container::Blob blob;
    blob.header = {{"kind", "region_embeddings"},
                   {"shape", {emb.matrix.rows(), emb.matrix.cols()}},
                   {"region_ids", emb.region_ids},
                   {"source", emb.source}};
    if (!config_hash.empty()) blob.header["config_hash"] = config_hash;
    blob.payload = std::vector<double>(emb.matrix.data(), emb.matrix.data() + emb.matrix.size());
    container::write(path, blob);
}

RegionEmbeddings read_embeddings(const std::filesystem::path& path) {
    auto blob = container::read_kind(path, "region_embeddings");
    RegionEmbeddings e;
    try {
        e.region_ids = blob.header.at("region_ids").get<std::vector<std::string>>();
        e.source = blob.header.value("source", std::string{});
        const auto shape = blob.header.at("shape").get<std::vector<Eigen::Index>>();
        const auto* values = std::get_if<std::vector<double>>(&blob.payload);
        if (shape.size() != 2 || !values || static_cast<Eigen::Index>(values->size()) != shape[0] * shape[1] ||
            shape[0] != static_cast<Eigen::Index>(e.region_ids.size()))
            throw FormatError(path.string() + ": inconsistent embeddings container");
        e.matrix = Eigen::Map<const Mat>(values->data(), shape[0], shape[1]);
    } catch (const nlohmann::json::exception& ex) {
        throw FormatError(path.string() + ": bad embeddings header: " + ex.what());
    }
    return e;
}

void write_embeddings_csv(const std::filesystem::path& path, const RegionEmbeddings& emb) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path.string());
    os.precision(17);
    os << "region_id";
    for (Eigen::Index d = 0; d < emb.matrix.cols(); ++d) os << ",e" << d;
    os << '\n';
    for (Eigen::Index r = 0; r < emb.matrix.rows(); ++r) {
        os << emb.region_ids[r];
        for (Eigen::Index d = 0; d < emb.matrix.cols(); ++d) os << ',' << emb.matrix(r, d);
        os << '\n';
    }
}

}  // namespace mobiclr::trainer
