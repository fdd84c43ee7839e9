#include "mobiclr/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

namespace mobiclr::probe {

Vec RidgeModel::predict(const Mat& x) const {
    if (x.cols() != weights.size()) throw ArgumentError("ridge predict: feature count mismatch");
    return (x * weights).array() + intercept;
}

RidgeModel ridge_fit(const Mat& x, const Vec& y, double alpha) {
    if (x.rows() < 2) throw ArgumentError("ridge_fit: need at least 2 samples");
    if (y.size() != x.rows()) throw ArgumentError("ridge_fit: X and y differ in length");
    if (!(alpha > 0.0)) throw ArgumentError("ridge_fit: alpha must be positive");

    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const double y_mean = y.mean();
    const Mat xc = x.rowwise() - x_mean;
    const Vec yc = y.array() - y_mean;

    RidgeModel m;
    if (xc.cols() <= xc.rows()) {
        Mat gram = xc.transpose() * xc;
        gram.diagonal().array() += alpha;
        m.weights = gram.ldlt().solve(xc.transpose() * yc);
    } else {
        Mat gram = xc * xc.transpose();
        gram.diagonal().array() += alpha;
        m.weights = xc.transpose() * gram.ldlt().solve(yc);
    }
    m.intercept = y_mean - x_mean.dot(m.weights);
    return m;
}

double r2_score(const Vec& y_true, const Vec& y_pred) {
    if (y_true.size() < 2) throw ArgumentError("r2_score: need at least 2 samples");
    if (y_pred.size() != y_true.size()) throw ArgumentError("r2_score: length mismatch");
    const double mean = y_true.mean();
    const double ss_tot = (y_true.array() - mean).square().sum();
    if (!(ss_tot > 0.0)) throw ArgumentError("r2_score: y_true has zero variance, R^2 is undefined");
    const double ss_res = (y_true - y_pred).squaredNorm();
    return 1.0 - ss_res / ss_tot;
}

TargetTable read_targets_csv(const std::filesystem::path& path, const std::string& name, char delimiter) {
    std::ifstream is(path);
    if (!is) throw FormatError("cannot open targets file " + path.string());
    TargetTable t;
    t.name = name;
    std::vector<double> values;
    std::string line;
    std::int64_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cut = line.find(delimiter);
        if (cut == std::string::npos)
            throw FormatError(path.string() + ": line " + std::to_string(line_no) + " needs region_id" + delimiter +
                              "value");
        std::string id = line.substr(0, cut);
        std::string val = line.substr(cut + 1);
        if (const auto next = val.find(delimiter); next != std::string::npos) val = val.substr(0, next);
        char* end = nullptr;
        const double v = std::strtod(val.c_str(), &end);
        if (val.empty() || end == val.c_str() || !std::isfinite(v)) continue;  // header row or missing value
        t.region_ids.push_back(id);
        values.push_back(v);
    }
    t.values = Eigen::Map<Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
    return t;
}

void ProbeConfig::validate() const {
    if (alphas.empty()) throw ConfigError("probe alphas must not be empty");
    for (double a : alphas)
        if (!(a > 0.0)) throw ConfigError("probe alphas must be positive");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    if (runs < 1) throw ConfigError("probe runs must be at least 1");
    if (cv_folds < 2) throw ConfigError("cv_folds must be at least 2");
    if (split_seeds.size() < static_cast<std::size_t>(runs))
        throw ConfigError("need one split seed per probe run");
}

Split make_split(std::size_t n, double train_fraction, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, 0x5b117u));
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 2, n >= 4 ? n - 2 : n);
    Split s;
    s.train.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.end());
    return s;
}

namespace {

Mat rows_of(const Mat& x, const std::vector<std::size_t>& idx) {
    Mat out(static_cast<Eigen::Index>(idx.size()), x.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(idx[i]);
    return out;
}

Vec rows_of(const Vec& y, const std::vector<std::size_t>& idx) {
    Vec out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(static_cast<Eigen::Index>(i)) = y(idx[i]);
    return out;
}

double cv_score(const Mat& x, const Vec& y, const std::vector<std::size_t>& train, int folds, double alpha) {
    double total = 0.0;
    int used = 0;
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> fit, val;
        for (std::size_t i = 0; i < train.size(); ++i) (static_cast<int>(i % folds) == f ? val : fit).push_back(train[i]);
        const Vec yv = rows_of(y, val);
        if (fit.size() < 2 || val.size() < 2 || !((yv.array() - yv.mean()).square().sum() > 0.0)) continue;
        const RidgeModel m = ridge_fit(rows_of(x, fit), rows_of(y, fit), alpha);
        total += r2_score(yv, m.predict(rows_of(x, val)));
        ++used;
    }
    if (used == 0) throw ArgumentError("probe: too few regions for cross-validation folds");
    return total / used;
}

}  // namespace

namespace {

Mat standardized(const Mat& x, const std::vector<std::size_t>& rows) {
    const Mat xt = rows_of(x, rows);
    const Eigen::RowVectorXd mu = xt.colwise().mean();
    Eigen::RowVectorXd sd = (xt.rowwise() - mu).array().square().colwise().mean().sqrt();
    for (Eigen::Index j = 0; j < sd.size(); ++j)
        if (sd(j) == 0.0) sd(j) = 1.0;
    return (x.rowwise() - mu).array().rowwise() / sd.array();
}

}  // namespace

ProbeRun probe_split(const Mat& x_in, const Vec& y, const Split& split, const ProbeConfig& config) {
    if (split.train.size() < static_cast<std::size_t>(2 * config.cv_folds))
        throw ArgumentError("probe: too few training regions for " + std::to_string(config.cv_folds) + "-fold CV");
    if (split.test.size() < 2) throw ArgumentError("probe: test split needs at least 2 regions");
    const Mat x = config.standardize ? standardized(x_in, split.train) : x_in;
    const Mat x_train = rows_of(x, split.train);
    const Vec y_train = rows_of(y, split.train);
    const Mat x_test = rows_of(x, split.test);
    const Vec y_test = rows_of(y, split.test);

    ProbeRun best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (double alpha : config.alphas) {
        double score = 0.0;
        RidgeModel m;
        if (config.unsafe_select_on_test) {
            m = ridge_fit(x_train, y_train, alpha);
            score = r2_score(y_test, m.predict(x_test));
        } else {
            score = cv_score(x, y, split.train, config.cv_folds, alpha);
        }
        if (score > best_score) {
            best_score = score;
            best.alpha = alpha;
        }
    }
    best.model = ridge_fit(x_train, y_train, best.alpha);
    best.r2 = r2_score(y_test, best.model.predict(x_test));
    return best;
}

JoinedData join(const Mat& features, const std::vector<std::string>& ids, const TargetTable& target) {
    if (static_cast<std::size_t>(features.rows()) != ids.size())
        throw ArgumentError("probe join: feature rows and ids differ in length");
    std::map<std::string, double> lookup;
    for (std::size_t i = 0; i < target.region_ids.size(); ++i) lookup[target.region_ids[i]] = target.values(i);
    std::vector<std::size_t> keep;
    std::vector<double> y;
    JoinedData out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto it = lookup.find(ids[i]);
        if (it == lookup.end()) {
            ++out.dropped;
            continue;
        }
        keep.push_back(i);
        y.push_back(it->second);
        out.region_ids.push_back(ids[i]);
    }
    out.x = rows_of(features, keep);
    out.y = Eigen::Map<Vec>(y.data(), static_cast<Eigen::Index>(y.size()));
    return out;
}

JoinedData join(const trainer::RegionEmbeddings& emb, const TargetTable& target) {
    return join(emb.matrix, emb.region_ids, target);
}

TargetReport summarize(const std::string& name, const std::vector<ProbeRun>& runs) {
    TargetReport r;
    r.name = name;
    for (const auto& run : runs) {
        r.r2_runs.push_back(run.r2);
        r.alphas.push_back(run.alpha);
    }
    const double n = static_cast<double>(r.r2_runs.size());
    r.r2_mean = std::accumulate(r.r2_runs.begin(), r.r2_runs.end(), 0.0) / n;
    double var = 0.0;
    for (double v : r.r2_runs) var += (v - r.r2_mean) * (v - r.r2_mean);
    r.r2_std = std::sqrt(var / n);
    return r;
}

TargetReport evaluate_features(const Mat& features, const std::vector<std::string>& ids, const TargetTable& target,
                               const ProbeConfig& config) {
    config.validate();
    const JoinedData data = join(features, ids, target);
    if (data.y.size() < 8) throw ArgumentError("evaluate: need at least 8 regions with target values");
    std::vector<ProbeRun> runs(static_cast<std::size_t>(config.runs));
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < config.runs; ++r) {
        const Split split = make_split(static_cast<std::size_t>(data.y.size()), config.train_fraction,
                                       config.split_seeds[static_cast<std::size_t>(r)]);
        runs[static_cast<std::size_t>(r)] = probe_split(data.x, data.y, split, config);
    }
    TargetReport rep = summarize(target.name, runs);
    rep.regions_used = static_cast<std::size_t>(data.y.size());
    rep.regions_dropped = data.dropped;
    return rep;
}

TargetReport evaluate(const trainer::RegionEmbeddings& embeddings, const TargetTable& target,
                      const ProbeConfig& config) {
    return evaluate_features(embeddings.matrix, embeddings.region_ids, target, config);
}

nlohmann::json to_json(const TargetReport& r) {
    return {{"target", r.name},          {"r2_mean", r.r2_mean},           {"r2_std", r.r2_std},
            {"r2_runs", r.r2_runs},      {"alphas", r.alphas},             {"regions_used", r.regions_used},
            {"regions_dropped", r.regions_dropped}};
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json targets = nlohmann::json::array();
    for (const auto& t : r.targets) targets.push_back(to_json(t));
    return {{"targets", targets}, {"metadata", r.metadata}};
}

void write_table(const std::filesystem::path& path, const std::vector<std::string>& methods,
                 const std::vector<EvalReport>& reports) {
    if (methods.size() != reports.size()) throw ArgumentError("write_table: one report per method");
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path);
    if (!os) throw FormatError("cannot open " + path.string());
    os << "target";
    for (const auto& m : methods) os << ',' << m;
    os << '\n';
    std::vector<std::string> names;
    for (const auto& rep : reports)
        for (const auto& t : rep.targets)
            if (std::find(names.begin(), names.end(), t.name) == names.end()) names.push_back(t.name);
    for (const auto& name : names) {
        os << name;
        for (const auto& rep : reports) {
            os << ',';
            for (const auto& t : rep.targets)
                if (t.name == name) os << std::fixed << std::setprecision(3) << t.r2_mean << "±" << t.r2_std;
        }
        os << '\n';
    }
}

nlohmann::json to_json(const ProbeConfig& c) {
    return {{"alphas", c.alphas},         {"train_fraction", c.train_fraction},
            {"runs", c.runs},             {"cv_folds", c.cv_folds},
            {"split_seeds", c.split_seeds}, {"unsafe_select_on_test", c.unsafe_select_on_test}, {"standardize", c.standardize}};
}

ProbeConfig probe_config_from_json(const nlohmann::json& j) {
    ProbeConfig c;
    c.alphas = j.at("alphas").get<std::vector<double>>();
    c.train_fraction = j.at("train_fraction").get<double>();
    c.runs = j.at("runs").get<int>();
    c.cv_folds = j.at("cv_folds").get<int>();
    c.split_seeds = j.at("split_seeds").get<std::vector<std::uint64_t>>();
    c.unsafe_select_on_test = j.at("unsafe_select_on_test").get<bool>();
    c.standardize = j.at("standardize").get<bool>();
    c.validate();
    return c;
}

}  // namespace mobiclr::probe
