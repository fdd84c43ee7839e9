#include "mobiclr/encoder.hpp"

#include "mobiclr/container.hpp"
#include "mobiclr/kernels.hpp"

#include <cmath>

namespace mobiclr::encoder {

int EncoderConfig::receptive_radius() const {
    int radius = 0;
    for (int d : dilations) {
        const int left = kernels::left_pad(kernel_size, d);
        const int right = d * (kernel_size - 1) - left;
        radius += 2 * std::max(left, right);
    }
    return radius;
}

void EncoderConfig::validate() const {
    if (in_channels < 1 || hidden_channels < 1 || repr_dim < 1 || kernel_size < 1)
        throw ConfigError("encoder sizes must be positive");
    if (dilations.empty()) throw ConfigError("encoder needs at least one block");
    for (int d : dilations)
        if (d < 1) throw ConfigError("dilations must be positive");
}

void ProjectionConfig::validate() const {
    if (proj_dim < 1 || hidden < 1) throw ConfigError("projection sizes must be positive");
}

EncoderConfig ModelConfig::encoder_config(int in_channels) const {
    return {in_channels, hidden_channels, repr_dim, kernel_size, dilations};
}

void ModelConfig::validate() const {
    encoder_config(1).validate();
    projection.validate();
}

const char* flow_name(Flow f) {
    switch (f) {
        case Flow::Inbound: return "i";
        case Flow::Outbound: return "o";
        case Flow::Joint: return "io";
    }
    return "?";
}

// ---- visitation -----------------------------------------------------------

namespace {

template <typename E, typename F>
void visit_encoder(E& e, const std::string& p, const F& fn) {
    fn(p + "input.weight", e.input.weight);
    fn(p + "input.bias", e.input.bias);
    for (std::size_t b = 0; b < e.blocks.size(); ++b) {
        const std::string bp = p + "blocks." + std::to_string(b) + ".";
        auto conv = [&](auto& c, const std::string& name) {
            for (std::size_t j = 0; j < c.taps.size(); ++j) fn(bp + name + ".tap" + std::to_string(j), c.taps[j]);
            fn(bp + name + ".bias", c.bias);
        };
        conv(e.blocks[b].first, "conv1");
        conv(e.blocks[b].second, "conv2");
    }
    fn(p + "output.weight", e.output.weight);
    fn(p + "output.bias", e.output.bias);
}

template <typename H, typename F>
void visit_head(H& h, const std::string& p, const F& fn) {
    fn(p + "hidden.weight", h.hidden.weight);
    fn(p + "hidden.bias", h.hidden.bias);
    fn(p + "output.weight", h.output.weight);
    fn(p + "output.bias", h.output.bias);
}

template <typename M, typename F>
void visit_model(M& m, const F& fn) {
    for (Flow f : kFlows) {
        visit_encoder(m.encoder(f), std::string("f_") + flow_name(f) + ".", fn);
        visit_head(m.head(f), std::string("g_") + flow_name(f) + ".", fn);
    }
}

}  // namespace

void for_each_tensor(Encoder& e, const std::string& prefix, const TensorVisitor& fn) { visit_encoder(e, prefix, fn); }
void for_each_tensor(const Encoder& e, const std::string& prefix, const ConstTensorVisitor& fn) {
    visit_encoder(e, prefix, fn);
}
void for_each_tensor(ProjectionHead& h, const std::string& prefix, const TensorVisitor& fn) { visit_head(h, prefix, fn); }
void for_each_tensor(const ProjectionHead& h, const std::string& prefix, const ConstTensorVisitor& fn) {
    visit_head(h, prefix, fn);
}
void for_each_tensor(Model& m, const TensorVisitor& fn) { visit_model(m, fn); }
void for_each_tensor(const Model& m, const ConstTensorVisitor& fn) { visit_model(m, fn); }

Encoder zeros_like(const Encoder& e) {
    Encoder z = e;
    visit_encoder(z, "", [](const std::string&, Mat& t) { t.setZero(); });
    return z;
}

ProjectionHead zeros_like(const ProjectionHead& h) {
    ProjectionHead z = h;
    visit_head(z, "", [](const std::string&, Mat& t) { t.setZero(); });
    return z;
}

Model zeros_like(const Model& m) {
    Model z = m;
    visit_model(z, [](const std::string&, Mat& t) { t.setZero(); });
    return z;
}

void accumulate(Model& a, const Model& b) {
    std::vector<const Mat*> src;
    visit_model(b, [&](const std::string&, const Mat& t) { src.push_back(&t); });
    std::size_t i = 0;
    visit_model(a, [&](const std::string&, Mat& t) { t += *src[i++]; });
}

double squared_norm(const Encoder& e) {
    double s = 0.0;
    visit_encoder(e, "", [&](const std::string&, const Mat& t) { s += t.squaredNorm(); });
    return s;
}

double squared_norm(const ProjectionHead& h) {
    double s = 0.0;
    visit_head(h, "", [&](const std::string&, const Mat& t) { s += t.squaredNorm(); });
    return s;
}

std::size_t parameter_count(const Model& m) {
    std::size_t n = 0;
    visit_model(m, [&](const std::string&, const Mat& t) { n += static_cast<std::size_t>(t.size()); });
    return n;
}

// ---- init -----------------------------------------------------------------

namespace {

Mat uniform(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    std::uniform_real_distribution<double> u(-bound, bound);
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

Linear init_linear(int in, int out, Rng& rng) {
    return {uniform(in, out, 1.0 / std::sqrt(static_cast<double>(in)), rng), Mat::Zero(1, out)};
}

Conv1d init_conv(int in, int out, int kernel, int dilation, Rng& rng) {
    Conv1d c;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in) * kernel);
    for (int j = 0; j < kernel; ++j) c.taps.push_back(uniform(in, out, bound, rng));
    c.bias = Mat::Zero(1, out);
    c.dilation = dilation;
    return c;
}

}  // namespace

Encoder init_encoder(const EncoderConfig& config, Rng& rng) {
    config.validate();
    Encoder e;
    e.config = config;
    const int h = config.hidden_channels;
    e.input = init_linear(config.in_channels, h, rng);
    for (int d : config.dilations) {
        ResidualBlock b;
        b.first = init_conv(h, h, config.kernel_size, d, rng);
        b.second = init_conv(h, h, config.kernel_size, d, rng);
        e.blocks.push_back(std::move(b));
    }
    e.output = init_linear(h, config.repr_dim, rng);
    return e;
}

ProjectionHead init_head(const ProjectionConfig& config, int in_dim, Rng& rng) {
    config.validate();
    ProjectionHead h;
    h.config = config;
    h.in_dim = in_dim;
    h.hidden = init_linear(in_dim, config.hidden, rng);
    h.output = init_linear(config.hidden, config.proj_dim, rng);
    return h;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;
    m.init_seed = seed;
    for (Flow f : kFlows) {
        Rng rng(derive_seed(seed, 0x1e11c0de, static_cast<int>(f)));
        m.encoder(f) = init_encoder(config.encoder_config(f == Flow::Joint ? 2 : 1), rng);
        m.head(f) = init_head(config.projection, config.repr_dim, rng);
    }
    return m;
}

// ---- forward / backward ---------------------------------------------------

Mat encode(const Mat& x, const Encoder& enc, EncoderTrace* trace) {
    if (x.cols() != enc.config.in_channels)
        throw ArgumentError("encode: input has " + std::to_string(x.cols()) + " channels, encoder expects " +
                            std::to_string(enc.config.in_channels));
    if (x.rows() < 1) throw ArgumentError("encode: series must have at least one timestep");
    if (!x.allFinite()) throw ArgumentError("encode: input contains non-finite values");

    Mat u = kernels::linear(x, enc.input.weight, enc.input.bias);
    if (trace) {
        trace->x = x;
        trace->blocks.clear();
    }
    for (const ResidualBlock& b : enc.blocks) {
        Mat c1 = kernels::conv1d(kernels::gelu(u), b.first.taps, b.first.bias, b.first.dilation);
        Mat out = kernels::conv1d(kernels::gelu(c1), b.second.taps, b.second.bias, b.second.dilation);
        out += u;
        if (trace) trace->blocks.push_back({std::move(u), std::move(c1)});
        u = std::move(out);
    }
    Mat h = kernels::linear(u, enc.output.weight, enc.output.bias);
    if (trace) trace->last = std::move(u);
    return h;
}

void encode_backward(const Encoder& enc, const EncoderTrace& trace, const Mat& grad_h, Encoder& grad) {
    Mat g = kernels::linear_backward(trace.last, enc.output.weight, grad_h, grad.output.weight, grad.output.bias);
    for (std::size_t bi = enc.blocks.size(); bi-- > 0;) {
        const ResidualBlock& b = enc.blocks[bi];
        ResidualBlock& gb = grad.blocks[bi];
        const auto& tb = trace.blocks[bi];
        // g is dL/d(block output); the identity skip passes it straight to the input.
        Mat g_a2 = kernels::conv1d_backward(kernels::gelu(tb.c1), b.second.taps, b.second.dilation, g,
                                            gb.second.taps, gb.second.bias);
        Mat g_c1 = kernels::gelu_backward(tb.c1, g_a2);
        Mat g_a1 = kernels::conv1d_backward(kernels::gelu(tb.in), b.first.taps, b.first.dilation, g_c1,
                                            gb.first.taps, gb.first.bias);
        g += kernels::gelu_backward(tb.in, g_a1);
    }
    kernels::linear_backward(trace.x, enc.input.weight, g, grad.input.weight, grad.input.bias);
}

std::vector<Mat> encode_batch(const std::vector<Mat>& xs, const Encoder& enc) {
    std::vector<Mat> out(xs.size());
    const auto n = static_cast<std::ptrdiff_t>(xs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = encode(xs[i], enc);
    return out;
}

std::vector<Mat> encode_batch_serial(const std::vector<Mat>& xs, const Encoder& enc) {
    std::vector<Mat> out;
    out.reserve(xs.size());
    for (const Mat& x : xs) out.push_back(encode(x, enc));
    return out;
}

Mat project(const Mat& h, const ProjectionHead& head, HeadTrace* trace) {
    if (h.cols() != head.in_dim)
        throw ArgumentError("project: input has " + std::to_string(h.cols()) + " features, head expects " +
                            std::to_string(head.in_dim));
    Mat pre = kernels::linear(h, head.hidden.weight, head.hidden.bias);
    Mat z = kernels::linear(kernels::gelu(pre), head.output.weight, head.output.bias);
    if (trace) {
        trace->h = h;
        trace->pre = std::move(pre);
    }
    return z;
}

void project_backward(const ProjectionHead& head, const HeadTrace& trace, const Mat& grad_z, ProjectionHead& grad,
                      Mat* grad_h) {
    Mat g_act = kernels::linear_backward(kernels::gelu(trace.pre), head.output.weight, grad_z, grad.output.weight,
                                         grad.output.bias);
    Mat g_pre = kernels::gelu_backward(trace.pre, g_act);
    Mat g_h = kernels::linear_backward(trace.h, head.hidden.weight, g_pre, grad.hidden.weight, grad.hidden.bias);
    if (grad_h) *grad_h = std::move(g_h);
}

Mat flow_input(const Mat& joint, Flow f) {
    if (joint.cols() != 2) throw ArgumentError("flow_input: joint series must have 2 channels");
    switch (f) {
        case Flow::Inbound: return joint.col(0);
        case Flow::Outbound: return joint.col(1);
        case Flow::Joint: return joint;
    }
    return joint;
}

FlowOutputs forward_flows(const Mat& joint_view, const Model& model, std::array<bool, 3> active) {
    FlowOutputs out;
    out.active = active;
    for (Flow f : kFlows) {
        const int k = static_cast<int>(f);
        if (!active[k]) continue;
        out.h[k] = encode(flow_input(joint_view, f), model.encoder(f), &out.enc_trace[k]);
        out.z[k] = project(out.h[k], model.head(f), &out.head_trace[k]);
    }
    return out;
}

void backward_flows(const Model& model, const FlowOutputs& out, const std::array<Mat, 3>& grad_z, Model& grad) {
    for (Flow f : kFlows) {
        const int k = static_cast<int>(f);
        if (!out.active[k] || grad_z[k].size() == 0) continue;
        Mat grad_h;
        project_backward(model.head(f), out.head_trace[k], grad_z[k], grad.head(f), &grad_h);
        encode_backward(model.encoder(f), out.enc_trace[k], grad_h, grad.encoder(f));
    }
}

TrioOutputs forward_trio(const Mat& joint_view_a, const Mat& joint_view_b, const Model& model,
                         std::array<bool, 3> active) {
    if (joint_view_a.rows() != joint_view_b.rows()) throw ArgumentError("forward_trio: views differ in length");
    return {forward_flows(joint_view_a, model, active), forward_flows(joint_view_b, model, active)};
}

// ---- checkpoints ------------------------------------------------------------

nlohmann::json to_json(const ModelConfig& c) {
    return {{"hidden_channels", c.hidden_channels},
            {"repr_dim", c.repr_dim},
            {"kernel_size", c.kernel_size},
            {"dilations", c.dilations},
            {"proj_dim", c.projection.proj_dim},
            {"proj_hidden", c.projection.hidden}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.hidden_channels = j.at("hidden_channels").get<int>();
    c.repr_dim = j.at("repr_dim").get<int>();
    c.kernel_size = j.at("kernel_size").get<int>();
    c.dilations = j.at("dilations").get<std::vector<int>>();
    c.projection.proj_dim = j.at("proj_dim").get<int>();
    c.projection.hidden = j.at("proj_hidden").get<int>();
    c.validate();
    return c;
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta) {
    container::Blob blob;
    std::vector<double> payload;
    payload.reserve(parameter_count(model));
    nlohmann::json tensors = nlohmann::json::array();
    for_each_tensor(model, [&](const std::string& name, const Mat& t) {
        tensors.push_back({{"name", name}, {"rows", t.rows()}, {"cols", t.cols()}, {"offset", payload.size()}});
        payload.insert(payload.end(), t.data(), t.data() + t.size());
    });
    blob.header = {{"kind", "mobiclr_checkpoint"},
                   {"format_version", 1},
                   {"model", to_json(model.config)},
                   {"activation", "gelu"},
                   {"init_seed", model.init_seed},
                   {"train_seed", meta.train_seed},
                   {"config_hash", meta.config_hash},
                   {"extra", meta.extra},
                   {"tensors", tensors}};
    blob.payload = std::move(payload);
    container::write(path, blob);
}

Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta) {
    auto blob = container::read_kind(path, "mobiclr_checkpoint");
    const auto* payload = std::get_if<std::vector<double>>(&blob.payload);
    if (!payload) throw FormatError(path.string() + ": checkpoint payload must be float64");
    Model m;
    try {
        m = init_model(model_config_from_json(blob.header.at("model")), blob.header.at("init_seed").get<std::uint64_t>());
        const auto& tensors = blob.header.at("tensors");
        std::size_t i = 0;
        for_each_tensor(m, [&](const std::string& name, Mat& t) {
            if (i >= tensors.size()) throw FormatError(path.string() + ": checkpoint is missing tensors");
            const auto& desc = tensors[i++];
            if (desc.at("name").get<std::string>() != name || desc.at("rows").get<Eigen::Index>() != t.rows() ||
                desc.at("cols").get<Eigen::Index>() != t.cols())
                throw FormatError(path.string() + ": tensor '" + name + "' does not match the model layout");
            const auto offset = desc.at("offset").get<std::size_t>();
            if (offset + static_cast<std::size_t>(t.size()) > payload->size())
                throw FormatError(path.string() + ": truncated tensor '" + name + "'");
            std::copy_n(payload->data() + offset, t.size(), t.data());
        });
        if (i != tensors.size()) throw FormatError(path.string() + ": checkpoint has extra tensors");
        if (meta) {
            meta->train_seed = blob.header.value("train_seed", std::uint64_t{0});
            meta->config_hash = blob.header.value("config_hash", std::string{});
            meta->extra = blob.header.value("extra", nlohmann::json::object());
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": bad checkpoint header: " + e.what());
    }
    return m;
}

}  // namespace mobiclr::encoder
