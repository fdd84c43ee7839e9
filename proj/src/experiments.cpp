#include "mobiclr/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>

namespace mobiclr::experiments {

using trainer::EmbeddingSource;

probe::TargetReport train_and_evaluate(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                                       const trainer::TrainConfig& train, const probe::ProbeConfig& probe,
                                       PretrainScope scope, EmbeddingSource source) {
    probe.validate();
    if (scope == PretrainScope::AllRegions) {
        const auto state = trainer::train(data, train);
        return probe::evaluate(trainer::embed_regions(data, state.model, source), target, probe);
    }

    // Split over the regions that have a target value, then map back to dataset rows.
    std::map<std::string, std::size_t> row_of;
    for (std::size_t i = 0; i < data.region_ids.size(); ++i) row_of[data.region_ids[i]] = i;
    Mat placeholder = Mat::Zero(static_cast<Eigen::Index>(data.regions()), 1);
    const probe::JoinedData joined = probe::join(placeholder, data.region_ids, target);
    const auto n = static_cast<std::size_t>(joined.y.size());
    if (n < 8) throw ArgumentError("evaluate: need at least 8 regions with target values");

    std::vector<probe::ProbeRun> runs;
    for (int r = 0; r < probe.runs; ++r) {
        const probe::Split split = probe::make_split(n, probe.train_fraction, probe.split_seeds[r]);
        std::vector<std::size_t> train_rows;
        for (std::size_t i : split.train) train_rows.push_back(row_of.at(joined.region_ids[i]));
        std::sort(train_rows.begin(), train_rows.end());
        const auto state = trainer::train(data, train, train_rows);
        const auto emb = trainer::embed_regions(data, state.model, source);
        const probe::JoinedData x = probe::join(emb, target);
        runs.push_back(probe::probe_split(x.x, x.y, split, probe));
    }
    probe::TargetReport rep = probe::summarize(target.name, runs);
    rep.regions_used = n;
    rep.regions_dropped = joined.dropped;
    return rep;
}

Mat flatten_series(const ingest::NormalizedSeries& data) {
    const Eigen::Index T = data.hours();
    Mat x(static_cast<Eigen::Index>(data.regions()), T * 2);
    for (std::size_t r = 0; r < data.regions(); ++r)
        x.row(static_cast<Eigen::Index>(r)) = Eigen::Map<const Eigen::RowVectorXd>(data.values[r].data(), T * 2);
    return x;
}

probe::TargetReport evaluate_raw_series(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                                        const probe::ProbeConfig& probe) {
    return probe::evaluate_features(flatten_series(data), data.region_ids, target, probe);
}

double ResultMatrix::row_mean(std::size_t r) const {
    double sum = 0.0;
    int n = 0;
    for (std::size_t c = 0; c < cols.size(); ++c)
        if (at(r, c).ok) {
            sum += at(r, c).r2_mean;
            ++n;
        }
    return n ? sum / n : std::numeric_limits<double>::quiet_NaN();
}

namespace {

struct Job {
    trainer::TrainConfig train;
    EmbeddingSource source = EmbeddingSource::Joint;
};

// Runs each cell's job on a bounded pool; a failing cell is recorded, not fatal.
void run_cells(ResultMatrix& m, const std::vector<Job>& jobs, int workers,
               const std::function<probe::TargetReport(const Job&)>& fn) {
    const auto n = static_cast<std::ptrdiff_t>(jobs.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, workers))
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        Cell& cell = m.cells[i];
        cell.config_hash = config::train_config_hash(jobs[i].train);
        cell.seed = jobs[i].train.seed;
        try {
            const auto rep = fn(jobs[i]);
            cell.r2_mean = rep.r2_mean;
            cell.r2_std = rep.r2_std;
            cell.alphas = rep.alphas;
            cell.ok = std::isfinite(rep.r2_mean);
            if (!cell.ok) cell.error = "non-finite R^2";
        } catch (const std::exception& e) {
            cell.ok = false;
            cell.error = e.what();
        }
    }
}

ResultMatrix shape(const std::string& kind, std::vector<std::string> rows, std::vector<std::string> cols) {
    ResultMatrix m;
    m.kind = kind;
    m.rows = std::move(rows);
    m.cols = std::move(cols);
    m.cells.resize(m.rows.size() * m.cols.size());
    for (std::size_t r = 0; r < m.rows.size(); ++r)
        for (std::size_t c = 0; c < m.cols.size(); ++c) {
            m.at(r, c).row = m.rows[r];
            m.at(r, c).col = m.cols[c];
        }
    return m;
}

}  // namespace

ResultMatrix run_aug_grid(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                          const ExperimentPlan& plan) {
    // Default parameters per transform, as in the training pipeline.
    const std::vector<std::pair<std::string, augment::Spec>> transforms = {
        {"scale", augment::Spec::scale()},
        {"jitter", augment::Spec::jitter()},
        {"shift", augment::Spec::shift()},
        {"dropout", augment::Spec::dropout()},
    };
    std::vector<std::string> names;
    for (const auto& t : transforms) names.push_back(t.first);
    ResultMatrix m = shape("aug_grid", names, names);
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < transforms.size(); ++r)
        for (std::size_t c = 0; c < transforms.size(); ++c) {
            Job j{plan.train};
            j.train.pipeline = r == c ? augment::Pipeline{transforms[r].second}
                                      : augment::Pipeline{transforms[r].second, transforms[c].second};
            jobs.push_back(std::move(j));
        }
    run_cells(m, jobs, plan.workers, [&](const Job& j) {
        return train_and_evaluate(data, target, j.train, plan.probe, plan.scope, j.source);
    });
    return m;
}

ResultMatrix run_ablation(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                          const ExperimentPlan& plan) {
    struct Row {
        std::string name;
        objectives::LossOptions loss;
        EmbeddingSource source;
    };
    const bool sym = plan.train.loss.symmetric;
    // f^io gets no gradient without L^a, so those rows are scored on the encoders that were trained.
    const std::vector<Row> rows = {
        {"L^o only", {false, true, false, sym}, EmbeddingSource::Outbound},
        {"L^i only", {true, false, false, sym}, EmbeddingSource::Inbound},
        {"w/o L^a", {true, true, false, sym}, EmbeddingSource::MeanFlow},
        {"full", {true, true, true, sym}, EmbeddingSource::Joint},
    };
    std::vector<std::string> row_names, col_names;
    for (const auto& r : rows) row_names.push_back(r.name);
    for (auto s : plan.seeds) col_names.push_back("seed=" + std::to_string(s));
    ResultMatrix m = shape("ablation", row_names, col_names);
    std::vector<Job> jobs;
    for (const auto& r : rows)
        for (auto s : plan.seeds) {
            Job j{plan.train, r.source};
            j.train.loss = r.loss;
            j.train.seed = s;
            jobs.push_back(std::move(j));
        }
    run_cells(m, jobs, plan.workers, [&](const Job& j) {
        return train_and_evaluate(data, target, j.train, plan.probe, plan.scope, j.source);
    });
    return m;
}

ResultMatrix run_sensitivity(const ingest::NormalizedSeries& data, const probe::TargetTable& target,
                             const ExperimentPlan& plan) {
    std::vector<std::string> rows, cols;
    for (int b : plan.batch_sizes) rows.push_back("B=" + std::to_string(b));
    for (int d : plan.embed_dims) cols.push_back("D=" + std::to_string(d));
    ResultMatrix m = shape("sensitivity", rows, cols);
    std::vector<Job> jobs;
    for (int b : plan.batch_sizes)
        for (int d : plan.embed_dims) {
            Job j{plan.train};
            j.train.batch_size = b;
            j.train.model.repr_dim = d;
            j.train.model.projection.proj_dim = d;
            jobs.push_back(std::move(j));
        }
    run_cells(m, jobs, plan.workers, [&](const Job& j) {
        return train_and_evaluate(data, target, j.train, plan.probe, plan.scope, j.source);
    });
    return m;
}

probe::TargetReport run_transfer(const ingest::NormalizedSeries& source, const ingest::NormalizedSeries& target,
                                 const probe::TargetTable& target_values, const trainer::TrainConfig& train,
                                 const probe::ProbeConfig& probe) {
    if (source.hours() != target.hours())
        throw ArgumentError("transfer: source and target series differ in length (" + std::to_string(source.hours()) +
                            " vs " + std::to_string(target.hours()) + " hours)");
    const auto state = trainer::train(source, train);
    const encoder::Model& frozen = state.model;
    return probe::evaluate(trainer::embed_regions(target, frozen, EmbeddingSource::Joint), target_values, probe);
}

ResultMatrix run_transfer_matrix(const std::vector<City>& cities, const ExperimentPlan& plan) {
    std::vector<std::string> names;
    for (const auto& c : cities) names.push_back(c.name);
    ResultMatrix m = shape("transfer", names, names);
    // One pretraining per source city, shared by its row.
    std::vector<encoder::Model> models(cities.size());
    std::vector<std::string> train_errors(cities.size());
    const auto n = static_cast<std::ptrdiff_t>(cities.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(1, plan.workers))
    for (std::ptrdiff_t s = 0; s < n; ++s) {
        try {
            models[s] = trainer::train(cities[s].data, plan.train).model;
        } catch (const std::exception& e) {
            train_errors[s] = e.what();
        }
    }
    const std::string hash = config::train_config_hash(plan.train);
    for (std::size_t s = 0; s < cities.size(); ++s)
        for (std::size_t t = 0; t < cities.size(); ++t) {
            Cell& cell = m.at(s, t);
            cell.config_hash = hash;
            cell.seed = plan.train.seed;
            if (!train_errors[s].empty()) {
                cell.error = train_errors[s];
                continue;
            }
            try {
                if (cities[s].data.hours() != cities[t].data.hours())
                    throw ArgumentError("transfer: series lengths differ");
                const auto rep = probe::evaluate(trainer::embed_regions(cities[t].data, models[s]), cities[t].target,
                                                 plan.probe);
                cell.r2_mean = rep.r2_mean;
                cell.r2_std = rep.r2_std;
                cell.alphas = rep.alphas;
                cell.ok = std::isfinite(rep.r2_mean);
            } catch (const std::exception& e) {
                cell.error = e.what();
            }
        }
    return m;
}

nlohmann::json to_json(const ResultMatrix& m) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : m.cells) {
        nlohmann::json j = {{"row", c.row},       {"col", c.col},     {"ok", c.ok},
                            {"config_hash", c.config_hash}, {"seed", c.seed}, {"alphas", c.alphas}};
        if (c.ok) {
            j["r2_mean"] = c.r2_mean;
            j["r2_std"] = c.r2_std;
        } else {
            j["error"] = c.error;
        }
        cells.push_back(j);
    }
    return {{"kind", m.kind}, {"rows", m.rows}, {"cols", m.cols}, {"cells", cells}};
}

void write_matrix_csv(const std::filesystem::path& path, const ResultMatrix& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path.string());
    os << m.kind;
    for (const auto& c : m.cols) os << ',' << c;
    os << '\n';
    os << std::fixed << std::setprecision(6);
    for (std::size_t r = 0; r < m.rows.size(); ++r) {
        os << m.rows[r];
        for (std::size_t c = 0; c < m.cols.size(); ++c) {
            os << ',';
            if (m.at(r, c).ok)
                os << m.at(r, c).r2_mean;
            else
                os << "NA";
        }
        os << '\n';
    }
}

void write_heatmap_pgm(const std::filesystem::path& path, const ResultMatrix& m, int cell_pixels) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& c : m.cells)
        if (c.ok) {
            lo = std::min(lo, c.r2_mean);
            hi = std::max(hi, c.r2_mean);
        }
    const int w = static_cast<int>(m.cols.size()) * cell_pixels;
    const int h = static_cast<int>(m.rows.size()) * cell_pixels;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string());
    os << "P5\n" << w << ' ' << h << "\n255\n";
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const Cell& c = m.at(static_cast<std::size_t>(y / cell_pixels), static_cast<std::size_t>(x / cell_pixels));
            unsigned char v = 0;
            if (c.ok) v = hi > lo ? static_cast<unsigned char>(40 + 215 * (c.r2_mean - lo) / (hi - lo)) : 255;
            os.put(static_cast<char>(v));
        }
}

}  // namespace mobiclr::experiments
