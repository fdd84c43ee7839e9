#pragma once

#include "mobiclr/config.hpp"
#include "mobiclr/probe.hpp"
#include "mobiclr/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mobiclr::experiments {

using config::PretrainScope;

/// Pretrain + frozen-embedding probe on one dataset and one target.
///
/// AllRegions: one pretraining on every region, then the probe's split runs.
/// TrainSplit: for each probe run, pretrain only on that run's training
/// regions, embed all regions, fit and score the probe on the same split.
probe::TargetReport train_and_evaluate(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                                       const trainer::TrainConfig& train, const probe::ProbeConfig& probe,
                                       PretrainScope scope,
                                       trainer::EmbeddingSource source = trainer::EmbeddingSource::Joint);

/// Probe on flattened z-scored inbound/outbound series (no encoder).
probe::TargetReport evaluate_raw_series(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                                        const probe::ProbeConfig& probe);
Mat flatten_series(const ingest::NormalizedSeries& data);

struct Cell {
    std::string row;
    std::string col;
    bool ok = false;
    double r2_mean = 0.0;
    double r2_std = 0.0;
    std::vector<double> alphas;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string error;
};

struct ResultMatrix {
    std::string kind;
    std::vector<std::string> rows;
    std::vector<std::string> cols;
    std::vector<Cell> cells;  // row-major

    Cell& at(std::size_t r, std::size_t c) { return cells[r * cols.size() + c]; }
    const Cell& at(std::size_t r, std::size_t c) const { return cells[r * cols.size() + c]; }
    double row_mean(std::size_t r) const;
};

struct ExperimentPlan {
    trainer::TrainConfig train;
    probe::ProbeConfig probe;
    PretrainScope scope = PretrainScope::TrainSplit;
    int workers = 1;
    std::vector<std::uint64_t> seeds = {0, 1, 2};  // ablation replicate seeds
    std::vector<int> batch_sizes = {4, 8, 12};
    std::vector<int> embed_dims = {64, 128, 256};
};

/// 4 x 4 over {scale, jitter, shift, dropout}; (a, a) = [a], (a, b) = [a then b].
ResultMatrix run_aug_grid(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                          const ExperimentPlan& plan);

/// Rows: L^o only, L^i only, w/o L^a, full. One column per seed.
ResultMatrix run_ablation(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                          const ExperimentPlan& plan);

/// Rows: batch sizes. Columns: embedding sizes (D and F both set).
ResultMatrix run_sensitivity(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                             const ExperimentPlan& plan);

/// Trains on every source region, freezes the encoders, and probes the target
/// city's own splits using f^io embeddings.
probe::TargetReport run_transfer(const ingest::NormalizedSeries& source, const ingest::NormalizedSeries& target,
                                 const probe::TargetTable& target_values, const trainer::TrainConfig& train,
                                 const probe::ProbeConfig& probe);

struct City {
    std::string name;
    ingest::NormalizedSeries data;
    probe::TargetTable target;
};

/// Source x target matrix; the diagonal is the non-transfer setting.
ResultMatrix run_transfer_matrix(const std::vector<City>& cities, const ExperimentPlan& plan);

nlohmann::json to_json(const ResultMatrix& m);
/// Row label column followed by one column of R² means per matrix column; failed cells are "NA".
void write_matrix_csv(const std::filesystem::path& path, const ResultMatrix& m);
/// Binary PGM heatmap (one block per cell) derived from the matrix values.
void write_heatmap_pgm(const std::filesystem::path& path, const ResultMatrix& m, int cell_pixels = 32);

}  // namespace mobiclr::experiments
