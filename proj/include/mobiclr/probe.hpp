#pragma once

#include "mobiclr/common.hpp"
#include "mobiclr/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mobiclr::probe {

struct RidgeModel {
    Vec weights;
    double intercept = 0.0;

    Vec predict(const Mat& x) const;
};

/// Centered ridge regression: (Xc'Xc + alpha I) w = Xc'yc, solved with LDLT
/// in the primal (D <= n) or dual (D > n) form.
RidgeModel ridge_fit(const Mat& x, const Vec& y, double alpha);

/// 1 - SS_res / SS_tot. Throws ArgumentError when y_true has zero variance.
double r2_score(const Vec& y_true, const Vec& y_pred);

struct TargetTable {
    std::string name;
    std::vector<std::string> region_ids;
    Vec values;
};

/// region_id,value (header optional). Rows with empty or non-numeric values are skipped.
TargetTable read_targets_csv(const std::filesystem::path& path, const std::string& name, char delimiter = ',');

struct ProbeConfig {
    std::vector<double> alphas = {0.1, 0.2, 0.5, 1, 2, 5, 10};
    double train_fraction = 0.75;
    int runs = 5;
    int cv_folds = 3;
    std::vector<std::uint64_t> split_seeds = {0, 1, 2, 3, 4};
    /// Selects alpha on the test split. Leaks test labels; fidelity comparisons only.
    bool unsafe_select_on_test = false;
    // Rescale each feature to unit variance using training-row statistics. Off by default.
    bool standardize = false;

    void validate() const;
};

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded shuffle of 0..n-1 split at round(train_fraction * n).
Split make_split(std::size_t n, double train_fraction, std::uint64_t seed);

struct ProbeRun {
    double alpha = 0.0;
    double r2 = 0.0;
    RidgeModel model;
};

/// Alpha by k-fold CV R² on the training rows, refit on all training rows, score on test rows.
ProbeRun probe_split(const Mat& x, const Vec& y, const Split& split, const ProbeConfig& config);

struct TargetReport {
    std::string name;
    double r2_mean = 0.0;
    double r2_std = 0.0;  // population std over runs
    std::vector<double> r2_runs;
    std::vector<double> alphas;
    std::size_t regions_used = 0;
    std::size_t regions_dropped = 0;
};

/// Embedding rows and target values for the regions present in both.
struct JoinedData {
    Mat x;
    Vec y;
    std::vector<std::string> region_ids;
    std::size_t dropped = 0;
};
JoinedData join(const trainer::RegionEmbeddings& emb, const TargetTable& target);
JoinedData join(const Mat& features, const std::vector<std::string>& ids, const TargetTable& target);

/// Aggregates per-run results into mean and population std.
TargetReport summarize(const std::string& name, const std::vector<ProbeRun>& runs);

TargetReport evaluate(const trainer::RegionEmbeddings& embeddings, const TargetTable& target,
                      const ProbeConfig& config);
TargetReport evaluate_features(const Mat& features, const std::vector<std::string>& ids, const TargetTable& target,
                               const ProbeConfig& config);

struct EvalReport {
    std::vector<TargetReport> targets;
    nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json to_json(const TargetReport& r);
nlohmann::json to_json(const EvalReport& r);

/// Rows = targets, columns = methods; cells "mean±std".
void write_table(const std::filesystem::path& path, const std::vector<std::string>& methods,
                 const std::vector<EvalReport>& reports);

nlohmann::json to_json(const ProbeConfig& c);
ProbeConfig probe_config_from_json(const nlohmann::json& j);

}  // namespace mobiclr::probe
