#include "mobiclr/augment.hpp"

namespace mobiclr::augment {

std::string to_string(Kind kind) {
    switch (kind) {
        case Kind::Jitter: return "jitter";
        case Kind::Shift: return "shift";
        case Kind::Scale: return "scale";
        case Kind::Dropout: return "dropout";
    }
    return "?";
}

Kind kind_from_string(const std::string& name) {
    if (name == "jitter") return Kind::Jitter;
    if (name == "shift") return Kind::Shift;
    if (name == "scale") return Kind::Scale;
    if (name == "dropout") return Kind::Dropout;
    throw ConfigError("unknown augmentation kind '" + name + "'");
}

Spec Spec::jitter(double sigma, JitterMode mode) {
    Spec s;
    s.kind = Kind::Jitter;
    s.sigma = sigma;
    s.jitter_mode = mode;
    return s;
}

Spec Spec::shift(double sigma) {
    Spec s;
    s.kind = Kind::Shift;
    s.sigma = sigma;
    return s;
}

Spec Spec::scale(double sigma, ScaleMode mode) {
    Spec s;
    s.kind = Kind::Scale;
    s.sigma = sigma;
    s.scale_mode = mode;
    return s;
}

Spec Spec::dropout(double drop_prob) {
    Spec s;
    s.kind = Kind::Dropout;
    s.drop_prob = drop_prob;
    return s;
}

void Spec::validate() const {
    if (kind == Kind::Dropout) {
        if (!(drop_prob >= 0.0 && drop_prob <= 1.0)) throw ConfigError("dropout probability must lie in [0, 1]");
    } else if (!(sigma > 0.0)) {
        throw ConfigError(to_string(kind) + ": sigma must be positive");
    }
}

Pipeline default_pipeline() { return {Spec::jitter(), Spec::shift()}; }

Mat jitter_with(const Mat& x, const Mat& eps, JitterMode mode) {
    if (eps.rows() != x.rows() || eps.cols() != x.cols()) throw ArgumentError("jitter: noise shape mismatch");
    if (mode == JitterMode::Additive) return x + eps;
    return x.cwiseProduct(eps);
}

Mat shift_with(const Mat& x, double eps) { return x.array() + eps; }

Mat scale_with(const Mat& x, double factor) { return x * factor; }

Mat dropout_with(const Mat& x, const Mat& keep_mask) {
    if (keep_mask.rows() != x.rows() || keep_mask.cols() != x.cols())
        throw ArgumentError("dropout: mask shape mismatch");
    return x.cwiseProduct(keep_mask);
}

StepDraw sample_draw(const Spec& spec, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    spec.validate();
    StepDraw d;
    d.kind = spec.kind;
    switch (spec.kind) {
        case Kind::Jitter: {
            std::normal_distribution<double> n(0.0, spec.sigma);
            d.values.resize(rows, cols);
            for (Eigen::Index t = 0; t < rows; ++t)
                for (Eigen::Index c = 0; c < cols; ++c) d.values(t, c) = n(rng);
            break;
        }
        case Kind::Shift: {
            std::normal_distribution<double> n(0.0, spec.sigma);
            d.values = Mat::Constant(1, 1, n(rng));
            break;
        }
        case Kind::Scale: {
            const double mean = spec.scale_mode == ScaleMode::MeanOne ? 1.0 : 0.0;
            std::normal_distribution<double> n(mean, spec.sigma);
            d.values = Mat::Constant(1, 1, n(rng));
            break;
        }
        case Kind::Dropout: {
            std::bernoulli_distribution drop(spec.drop_prob);
            d.values.resize(rows, cols);
            for (Eigen::Index t = 0; t < rows; ++t)
                for (Eigen::Index c = 0; c < cols; ++c) d.values(t, c) = drop(rng) ? 0.0 : 1.0;
            break;
        }
    }
    return d;
}

Mat apply_draw(const Mat& x, const Spec& spec, const StepDraw& draw) {
    if (draw.kind != spec.kind) throw ArgumentError("recorded draw does not match the pipeline step");
    switch (spec.kind) {
        case Kind::Jitter: return jitter_with(x, draw.values, spec.jitter_mode);
        case Kind::Shift: return shift_with(x, draw.values(0, 0));
        case Kind::Scale: return scale_with(x, draw.values(0, 0));
        case Kind::Dropout: return dropout_with(x, draw.values);
    }
    return x;
}

namespace {

Mat sample_and_apply(const Mat& x, const Spec& spec, Rng& rng, StepDraw* record) {
    StepDraw d = sample_draw(spec, x.rows(), x.cols(), rng);
    Mat y = apply_draw(x, spec, d);
    if (record) *record = std::move(d);
    return y;
}

}  // namespace

Mat apply_jitter(const Mat& x, double sigma, JitterMode mode, Rng& rng, StepDraw* record) {
    return sample_and_apply(x, Spec::jitter(sigma, mode), rng, record);
}

Mat apply_shift(const Mat& x, double sigma, Rng& rng, StepDraw* record) {
    return sample_and_apply(x, Spec::shift(sigma), rng, record);
}

Mat apply_scale(const Mat& x, double sigma, ScaleMode mode, Rng& rng, StepDraw* record) {
    return sample_and_apply(x, Spec::scale(sigma, mode), rng, record);
}

Mat apply_dropout(const Mat& x, double drop_prob, Rng& rng, StepDraw* record) {
    return sample_and_apply(x, Spec::dropout(drop_prob), rng, record);
}

Mat apply_pipeline(const Mat& x, const Pipeline& pipeline, Rng& rng, Draws* record) {
    Mat y = x;
    if (record) record->clear();
    for (const Spec& spec : pipeline) {
        StepDraw d;
        y = sample_and_apply(y, spec, rng, &d);
        if (record) record->push_back(std::move(d));
    }
    return y;
}

Mat replay(const Mat& x, const Pipeline& pipeline, const Draws& draws) {
    if (draws.size() != pipeline.size()) throw ArgumentError("replay: draw count does not match pipeline length");
    Mat y = x;
    for (std::size_t i = 0; i < pipeline.size(); ++i) y = apply_draw(y, pipeline[i], draws[i]);
    return y;
}

ViewPair two_views(const Mat& x, const Pipeline& pipeline, Rng& rng) {
    ViewPair p;
    p.view_a = apply_pipeline(x, pipeline, rng, &p.draws_a);
    p.view_b = apply_pipeline(x, pipeline, rng, &p.draws_b);
    return p;
}

nlohmann::json to_json(const Spec& spec) {
    nlohmann::json j = {{"kind", to_string(spec.kind)}};
    switch (spec.kind) {
        case Kind::Jitter:
            j["sigma"] = spec.sigma;
            j["mode"] = spec.jitter_mode == JitterMode::Additive ? "additive" : "multiplicative";
            break;
        case Kind::Shift: j["sigma"] = spec.sigma; break;
        case Kind::Scale:
            j["sigma"] = spec.sigma;
            j["mode"] = spec.scale_mode == ScaleMode::Literal ? "literal" : "mean_one";
            break;
        case Kind::Dropout: j["drop_prob"] = spec.drop_prob; break;
    }
    return j;
}

nlohmann::json to_json(const Pipeline& pipeline) {
    nlohmann::json j = nlohmann::json::array();
    for (const Spec& s : pipeline) j.push_back(to_json(s));
    return j;
}

Spec spec_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind")) throw ConfigError("augmentation step needs a 'kind'");
    Spec s;
    s.kind = kind_from_string(j.at("kind").get<std::string>());
    for (const auto& [key, value] : j.items()) {
        if (key == "kind") continue;
        const bool ok = (key == "sigma" && s.kind != Kind::Dropout) ||
                        (key == "drop_prob" && s.kind == Kind::Dropout) ||
                        (key == "mode" && (s.kind == Kind::Jitter || s.kind == Kind::Scale));
        if (!ok) throw ConfigError("augmentation '" + to_string(s.kind) + "' does not take parameter '" + key + "'");
    }
    s.sigma = j.value("sigma", 0.2);
    s.drop_prob = j.value("drop_prob", 0.1);
    if (j.contains("mode")) {
        const auto mode = j.at("mode").get<std::string>();
        if (s.kind == Kind::Jitter) {
            if (mode == "additive") s.jitter_mode = JitterMode::Additive;
            else if (mode == "multiplicative") s.jitter_mode = JitterMode::Multiplicative;
            else throw ConfigError("unknown jitter mode '" + mode + "'");
        } else {
            if (mode == "literal") s.scale_mode = ScaleMode::Literal;
            else if (mode == "mean_one") s.scale_mode = ScaleMode::MeanOne;
            else throw ConfigError("unknown scale mode '" + mode + "'");
        }
    }
    s.validate();
    return s;
}

Pipeline pipeline_from_json(const nlohmann::json& j) {
    if (!j.is_array()) throw ConfigError("augmentation pipeline must be a list");
    Pipeline p;
    for (const auto& step : j) p.push_back(spec_from_json(step));
    return p;
}

nlohmann::json draws_to_json(const Draws& draws) {
    nlohmann::json out = nlohmann::json::array();
    for (const StepDraw& d : draws) {
        std::vector<double> flat(d.values.data(), d.values.data() + d.values.size());
        out.push_back({{"kind", to_string(d.kind)}, {"rows", d.values.rows()}, {"cols", d.values.cols()}, {"values", flat}});
    }
    return out;
}

}  // namespace mobiclr::augment
