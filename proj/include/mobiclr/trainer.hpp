#pragma once

#include "mobiclr/augment.hpp"
#include "mobiclr/encoder.hpp"
#include "mobiclr/ingest.hpp"
#include "mobiclr/objectives.hpp"

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mobiclr::trainer {

enum class OptimizerKind { Adam, Sgd };

struct TrainConfig {
    int batch_size = 4;
    double learning_rate = 1e-4;
    int epochs = 30;
    std::uint64_t seed = 0;
    augment::Pipeline pipeline = augment::default_pipeline();
    OptimizerKind optimizer = OptimizerKind::Adam;
    objectives::LossOptions loss;
    objectives::Temperatures temps;
    encoder::ModelConfig model;
    /// Reuse epoch-0 augmentation draws every epoch instead of resampling.
    bool cached_views = false;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct StepRecord {
    int epoch = 0;
    long step = 0;
    std::vector<std::string> batch_ids;
    objectives::LossBreakdown loss;
    std::array<double, 3> encoder_grad_norm{};  // by Flow
    std::array<double, 3> head_grad_norm{};
};

struct TrainState {
    encoder::Model model;
    encoder::Model adam_m;
    encoder::Model adam_v;
    int epoch = 0;
    long step = 0;
    std::vector<StepRecord> history;
};

struct StepGradient {
    objectives::LossBreakdown loss;
    encoder::Model grad;
};

/// Loss and parameter gradient for one batch of joint views (T x 2 each).
StepGradient loss_and_gradient(const encoder::Model& model, const std::vector<Mat>& views_a,
                               const std::vector<Mat>& views_b, const objectives::Temperatures& temps,
                               const objectives::LossOptions& options);

/// Forward-only loss for the same batch.
objectives::LossBreakdown batch_loss(const encoder::Model& model, const std::vector<Mat>& views_a,
                                     const std::vector<Mat>& views_b, const objectives::Temperatures& temps,
                                     const objectives::LossOptions& options);

/// Both augmented joint views of one region for one epoch.
augment::ViewPair region_views(const Mat& joint, const TrainConfig& config, int epoch, std::size_t region);

/// Applies one optimizer step in place.
void optimizer_step(TrainState& state, const encoder::Model& grad, const TrainConfig& config);

using StepCallback = std::function<void(const StepRecord&)>;

/// Trains on the given region indices (all regions when empty).
TrainState train(const ingest::NormalizedSeries& data, const TrainConfig& config,
                 std::span<const std::size_t> regions = {}, const StepCallback& on_step = {});

/// Mean total loss per epoch, in epoch order.
std::vector<double> epoch_means(const std::vector<StepRecord>& history);

/// One JSON object per line: epoch, step, L_i, L_o, L_a, total.
void write_loss_log(const std::filesystem::path& path, const std::vector<StepRecord>& history);

// ---- frozen embeddings ------------------------------------------------------

enum class EmbeddingSource { Joint, Inbound, Outbound, MeanFlow };
std::string to_string(EmbeddingSource s);
EmbeddingSource embedding_source_from_string(const std::string& s);

struct RegionEmbeddings {
    Mat matrix;  // N x D
    std::vector<std::string> region_ids;
    std::string source;  // checkpoint id or description
};

/// Temporal mean of the frozen encoder output on unaugmented input. Parallel over regions.
RegionEmbeddings embed_regions(const ingest::NormalizedSeries& data, const encoder::Model& model,
                               EmbeddingSource source = EmbeddingSource::Joint);

void write_embeddings(const std::filesystem::path& path, const RegionEmbeddings& emb,
                      const std::string& config_hash = {});
RegionEmbeddings read_embeddings(const std::filesystem::path& path);
/// region_id,e0,...,e{D-1} with round-trip precision.
void write_embeddings_csv(const std::filesystem::path& path, const RegionEmbeddings& emb);

}  // namespace mobiclr::trainer
