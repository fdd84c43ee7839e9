#include "mobiclr/config.hpp"

#include <fstream>
#include <sstream>

namespace mobiclr::config {

using nlohmann::json;

const json& defaults() {
    static const json d = [] {
        const trainer::TrainConfig t;
        const probe::ProbeConfig p;
        return json{
            {"seed", 0},
            {"output_dir", ""},
            {"workers", 1},
            {"data",
             {{"trips", ""},
              {"regions", ""},
              {"delimiter", ","},
              {"window_start", ""},
              {"window_end", ""},
              {"series", ""},
              {"normalize", true},
              {"targets", json::array()}}},
            {"model", encoder::to_json(t.model)},
            {"train",
             {{"batch_size", t.batch_size},
              {"learning_rate", t.learning_rate},
              {"epochs", t.epochs},
              {"optimizer", "adam"},
              {"use_Li", true},
              {"use_Lo", true},
              {"use_La", true},
              {"symmetric_ntxent", false},
              {"cached_views", false},
              {"tau", t.temps.tau},
              {"tau_a", t.temps.tau_a},
              {"augmentation", augment::to_json(t.pipeline)},
              {"pretrain_scope", "train_split"}}},
            {"probe", probe::to_json(p)},
            {"embed", {{"checkpoint", ""}, {"source", "io"}}},
            {"experiment",
             {{"kind", "aug_grid"},
              {"target", ""},
              {"seeds", {0, 1, 2}},
              {"batch_sizes", {4, 8, 12}},
              {"embed_dims", {64, 128, 256}},
              {"cities", json::array()}}},
            {"synth",
             {{"regions", 60},
              {"profiles", 3},
              {"hours", 336},
              {"noise_level", 1.0},
              {"volume_spread", 0.5},
              {"dirichlet_alpha", 1.0},
              {"indicator_noise", 0.02},
              {"cities", 1}}},
        };
    }();
    return d;
}

namespace {

bool compatible(const json& def, const json& val) {
    if (def.is_number() && val.is_number()) {
        // Integer-valued settings must stay integral.
        if (def.is_number_integer() && !val.is_number_integer()) return false;
        return true;
    }
    return def.type() == val.type();
}

void merge(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ConfigError("config section '" + path + "' must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ConfigError("unknown config key '" + here + "'");
        json& slot = base[key];
        if (!compatible(slot, value)) throw ConfigError("config key '" + here + "' has the wrong type");
        if (slot.is_object())
            merge(slot, value, here);
        else
            slot = value;
    }
}

}  // namespace

json resolve(const json& user) {
    json doc = defaults();
    merge(doc, user, "");
    // Validate the typed views eagerly so errors surface before any work.
    train_config(doc);
    probe_config(doc);
    pretrain_scope(doc);
    for (const auto& t : doc["data"]["targets"])
        if (!t.is_object() || !t.contains("name") || !t.contains("path"))
            throw ConfigError("data.targets entries need 'name' and 'path'");
    if (doc["workers"].get<int>() < 1) throw ConfigError("workers must be at least 1");
    if (doc["data"]["delimiter"].get<std::string>().size() != 1)
        throw ConfigError("data.delimiter must be a single character");
    trainer::embedding_source_from_string(doc["embed"]["source"].get<std::string>());
    return doc;
}

json load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    try {
        return json::parse(is);
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value: " + assignment);
    const std::string key = assignment.substr(0, eq);
    const std::string raw = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    json* node = &doc;
    std::istringstream parts(key);
    std::string part;
    std::vector<std::string> path;
    while (std::getline(parts, part, '.')) path.push_back(part);
    // A string-typed setting keeps the raw text, so "window_end=7200" stays "7200".
    const json* def = &defaults();
    for (const auto& p : path) def = def && def->is_object() && def->contains(p) ? &(*def)[p] : nullptr;
    if (def && def->is_string()) value = raw;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        if (!node->is_object()) throw ConfigError("override path '" + key + "' crosses a non-object");
        node = &(*node)[path[i]];
        if (node->is_null()) *node = json::object();
    }
    (*node)[path.back()] = value;
}

std::string config_hash(const json& resolved) {
    json copy = resolved;
    copy.erase("output_dir");
    copy.erase("workers");
    return hex64(fnv1a(copy.dump()));
}

json to_json(const trainer::TrainConfig& c) {
    return {{"seed", c.seed},
            {"model", encoder::to_json(c.model)},
            {"train",
             {{"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"optimizer", c.optimizer == trainer::OptimizerKind::Adam ? "adam" : "sgd"},
              {"use_Li", c.loss.use_Li},
              {"use_Lo", c.loss.use_Lo},
              {"use_La", c.loss.use_La},
              {"symmetric_ntxent", c.loss.symmetric},
              {"cached_views", c.cached_views},
              {"tau", c.temps.tau},
              {"tau_a", c.temps.tau_a},
              {"augmentation", augment::to_json(c.pipeline)}}}};
}

std::string train_config_hash(const trainer::TrainConfig& config) { return hex64(fnv1a(to_json(config).dump())); }

trainer::TrainConfig train_config(const json& resolved) {
    trainer::TrainConfig c;
    try {
        const json& t = resolved.at("train");
        c.seed = resolved.at("seed").get<std::uint64_t>();
        c.model = encoder::model_config_from_json(resolved.at("model"));
        c.batch_size = t.at("batch_size").get<int>();
        c.learning_rate = t.at("learning_rate").get<double>();
        c.epochs = t.at("epochs").get<int>();
        const auto opt = t.at("optimizer").get<std::string>();
        if (opt == "adam") c.optimizer = trainer::OptimizerKind::Adam;
        else if (opt == "sgd") c.optimizer = trainer::OptimizerKind::Sgd;
        else throw ConfigError("train.optimizer must be 'adam' or 'sgd'");
        c.loss.use_Li = t.at("use_Li").get<bool>();
        c.loss.use_Lo = t.at("use_Lo").get<bool>();
        c.loss.use_La = t.at("use_La").get<bool>();
        c.loss.symmetric = t.at("symmetric_ntxent").get<bool>();
        c.cached_views = t.at("cached_views").get<bool>();
        c.temps.tau = t.at("tau").get<double>();
        c.temps.tau_a = t.at("tau_a").get<double>();
        c.pipeline = augment::pipeline_from_json(t.at("augmentation"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid train/model config: ") + e.what());
    }
    c.validate();
    return c;
}

probe::ProbeConfig probe_config(const json& resolved) {
    try {
        return probe::probe_config_from_json(resolved.at("probe"));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid probe config: ") + e.what());
    }
}

PretrainScope pretrain_scope(const json& resolved) {
    const auto s = resolved.at("train").at("pretrain_scope").get<std::string>();
    if (s == "train_split") return PretrainScope::TrainSplit;
    if (s == "all_regions") return PretrainScope::AllRegions;
    throw ConfigError("train.pretrain_scope must be 'train_split' or 'all_regions'");
}

std::string to_string(PretrainScope s) { return s == PretrainScope::TrainSplit ? "train_split" : "all_regions"; }

}  // namespace mobiclr::config
