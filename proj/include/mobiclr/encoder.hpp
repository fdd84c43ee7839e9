#pragma once

#include "mobiclr/common.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace mobiclr::encoder {

struct EncoderConfig {
    int in_channels = 2;
    int hidden_channels = 128;
    int repr_dim = 128;
    int kernel_size = 3;
    std::vector<int> dilations = {1, 2, 4};  // one per block

    int num_blocks() const { return static_cast<int>(dilations.size()); }
    /// Timesteps on either side that can influence one output row.
    int receptive_radius() const;
    void validate() const;
};

struct ProjectionConfig {
    int proj_dim = 128;
    int hidden = 128;
    void validate() const;
};

/// Shared shape of the encoder trio; in_channels is implied per encoder.
struct ModelConfig {
    int hidden_channels = 128;
    int repr_dim = 128;
    int kernel_size = 3;
    std::vector<int> dilations = {1, 2, 4};
    ProjectionConfig projection;

    EncoderConfig encoder_config(int in_channels) const;
    void validate() const;
};

struct Linear {
    Mat weight;  // in x out
    Mat bias;    // 1 x out
};

struct Conv1d {
    std::vector<Mat> taps;  // kernel_size matrices, each in x out
    Mat bias;               // 1 x out
    int dilation = 1;
};

/// out = conv2(gelu(conv1(gelu(in)))) + in
struct ResidualBlock {
    Conv1d first;
    Conv1d second;
};

/// Input projection -> dilated residual blocks -> per-timestep map to repr_dim.
struct Encoder {
    EncoderConfig config;
    Linear input;
    std::vector<ResidualBlock> blocks;
    Linear output;
};

/// Per-timestep two-layer MLP, repr_dim -> hidden -> proj_dim.
struct ProjectionHead {
    ProjectionConfig config;
    int in_dim = 0;
    Linear hidden;
    Linear output;
};

enum class Flow : int { Inbound = 0, Outbound = 1, Joint = 2 };
inline constexpr std::array<Flow, 3> kFlows = {Flow::Inbound, Flow::Outbound, Flow::Joint};
const char* flow_name(Flow f);  // "i", "o", "io"

struct Model {
    ModelConfig config;
    std::array<Encoder, 3> encoders;  // indexed by Flow
    std::array<ProjectionHead, 3> heads;
    std::uint64_t init_seed = 0;

    Encoder& encoder(Flow f) { return encoders[static_cast<int>(f)]; }
    const Encoder& encoder(Flow f) const { return encoders[static_cast<int>(f)]; }
    ProjectionHead& head(Flow f) { return heads[static_cast<int>(f)]; }
    const ProjectionHead& head(Flow f) const { return heads[static_cast<int>(f)]; }
};

// ---- parameter visitation ---------------------------------------------------

using TensorVisitor = std::function<void(const std::string& name, Mat& tensor)>;
using ConstTensorVisitor = std::function<void(const std::string& name, const Mat& tensor)>;

void for_each_tensor(Encoder& e, const std::string& prefix, const TensorVisitor& fn);
void for_each_tensor(const Encoder& e, const std::string& prefix, const ConstTensorVisitor& fn);
void for_each_tensor(ProjectionHead& h, const std::string& prefix, const TensorVisitor& fn);
void for_each_tensor(const ProjectionHead& h, const std::string& prefix, const ConstTensorVisitor& fn);
void for_each_tensor(Model& m, const TensorVisitor& fn);
void for_each_tensor(const Model& m, const ConstTensorVisitor& fn);

/// Same structure, every tensor zero. Used as a gradient accumulator.
Encoder zeros_like(const Encoder& e);
ProjectionHead zeros_like(const ProjectionHead& h);
Model zeros_like(const Model& m);

/// a += b, tensor by tensor.
void accumulate(Model& a, const Model& b);
double squared_norm(const Encoder& e);
double squared_norm(const ProjectionHead& h);
std::size_t parameter_count(const Model& m);

// ---- construction -------------------------------------------------------

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero. Deterministic in seed.
Encoder init_encoder(const EncoderConfig& config, Rng& rng);
ProjectionHead init_head(const ProjectionConfig& config, int in_dim, Rng& rng);
Model init_model(const ModelConfig& config, std::uint64_t seed);

// ---- forward / backward -------------------------------------------------

struct EncoderTrace {
    struct Block {
        Mat in;  // block input
        Mat c1;  // first conv output (pre-activation)
    };
    Mat x;
    std::vector<Block> blocks;
    Mat last;  // output of the final block
};

/// T x C -> T x repr_dim. Throws ArgumentError on channel mismatch, T < 1 or non-finite input.
Mat encode(const Mat& x, const Encoder& enc, EncoderTrace* trace = nullptr);
/// Accumulates parameter gradients into grad (same structure as enc) given dL/dh.
void encode_backward(const Encoder& enc, const EncoderTrace& trace, const Mat& grad_h, Encoder& grad);

/// Encodes many series; parallel over series.
std::vector<Mat> encode_batch(const std::vector<Mat>& xs, const Encoder& enc);
std::vector<Mat> encode_batch_serial(const std::vector<Mat>& xs, const Encoder& enc);

struct HeadTrace {
    Mat h;
    Mat pre;  // hidden pre-activation
};

Mat project(const Mat& h, const ProjectionHead& head, HeadTrace* trace = nullptr);
void project_backward(const ProjectionHead& head, const HeadTrace& trace, const Mat& grad_z, ProjectionHead& grad,
                      Mat* grad_h);

/// Inbound (column 0) or outbound (column 1) slice of a joint T x 2 series.
Mat flow_input(const Mat& joint, Flow f);

/// Encoder + head outputs for one region and one view, per flow.
struct FlowOutputs {
    std::array<Mat, 3> h;
    std::array<Mat, 3> z;
    std::array<EncoderTrace, 3> enc_trace;
    std::array<HeadTrace, 3> head_trace;
    std::array<bool, 3> active{};
};

/// Runs f and g for each flow in `active` on a joint T x 2 view.
FlowOutputs forward_flows(const Mat& joint_view, const Model& model, std::array<bool, 3> active = {true, true, true});

/// Backpropagates dL/dz per active flow into grad.
void backward_flows(const Model& model, const FlowOutputs& out, const std::array<Mat, 3>& grad_z, Model& grad);

/// Both views of one region through the trio: z^i, z~^i, z^o, z~^o, z^io, z~^io and the h tensors.
struct TrioOutputs {
    FlowOutputs view_a;
    FlowOutputs view_b;
};
TrioOutputs forward_trio(const Mat& joint_view_a, const Mat& joint_view_b, const Model& model,
                         std::array<bool, 3> active = {true, true, true});

// ---- checkpoints ----------------------------------------------------------

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct CheckpointMeta {
    std::uint64_t train_seed = 0;
    std::string config_hash;
    nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const Model& model, const CheckpointMeta& meta = {});
Model load_checkpoint(const std::filesystem::path& path, CheckpointMeta* meta = nullptr);

}  // namespace mobiclr::encoder
