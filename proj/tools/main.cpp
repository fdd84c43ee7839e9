// mobiclr command-line entry point.
//
//   mobiclr synth      --out DIR                  synthetic cities + planted targets
//   mobiclr ingest     --config run.json          trips -> hourly series container
//   mobiclr train      --config run.json          pretrain, checkpoint, embeddings
//   mobiclr embed      --config run.json          embeddings from a saved checkpoint
//   mobiclr evaluate   --config run.json          ridge probe per target
//   mobiclr experiment --config run.json          aug_grid | ablation | sensitivity | transfer
//
// Exit codes: 0 success, 2 invalid config or input format, 1 anything else.

#include "mobiclr/config.hpp"
#include "mobiclr/container.hpp"
#include "mobiclr/experiments.hpp"
#include "mobiclr/ingest.hpp"
#include "mobiclr/probe.hpp"
#include "mobiclr/synth.hpp"
#include "mobiclr/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mobiclr;

namespace {

constexpr const char* kOutEnv = "MOBICLR_OUT";

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> workers;
    std::vector<std::string> overrides;
    std::string embeddings;  // evaluate only
};

struct Run {
    json cfg;
    std::string hash;
    fs::path out;
};

Run prepare(const Globals& g, const std::string& command) {
    json user = g.config_path.empty() ? json::object() : config::load_file(g.config_path);
    for (const auto& o : g.overrides) config::apply_override(user, o);
    if (g.seed) user["seed"] = *g.seed;
    if (g.workers) user["workers"] = *g.workers;
    if (!g.out.empty()) user["output_dir"] = g.out;
    Run r;
    r.cfg = config::resolve(user);
    r.hash = config::config_hash(r.cfg);
    std::string out = r.cfg["output_dir"].get<std::string>();
    if (out.empty()) {
        const char* env = std::getenv(kOutEnv);
        out = (env && *env) ? env : "runs";
        out += "/" + command;
    }
    r.out = out;
    fs::create_directories(r.out);
    std::ofstream os(r.out / "resolved_config.json");
    os << json{{"command", command}, {"config_hash", r.hash}, {"config", r.cfg}}.dump(2) << '\n';
    return r;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream os(path);
    if (!os) throw FormatError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

ingest::NormalizedSeries load_dataset(const json& cfg, const fs::path& series_path) {
    if (series_path.empty()) throw ConfigError("data.series must name a series container");
    const auto series = ingest::read_series(series_path);
    return cfg["data"]["normalize"].get<bool>() ? ingest::zscore(series) : ingest::as_real(series);
}

ingest::NormalizedSeries load_dataset(const json& cfg) {
    return load_dataset(cfg, cfg["data"]["series"].get<std::string>());
}

std::vector<probe::TargetTable> load_targets(const json& cfg) {
    std::vector<probe::TargetTable> out;
    const char delim = cfg["data"]["delimiter"].get<std::string>()[0];
    for (const auto& t : cfg["data"]["targets"])
        out.push_back(probe::read_targets_csv(t["path"].get<std::string>(), t["name"].get<std::string>(), delim));
    if (out.empty()) throw ConfigError("data.targets is empty");
    return out;
}

int cmd_synth(const Globals& g) {
    const Run r = prepare(g, "synth");
    const json& s = r.cfg["synth"];
    const int cities = s["cities"].get<int>();
    json index = json::array();
    for (int c = 0; c < cities; ++c) {
        synth::CityOptions o;
        o.regions = s["regions"].get<int>();
        o.profiles = s["profiles"].get<int>();
        o.hours = s["hours"].get<int>();
        o.noise_level = s["noise_level"].get<double>();
        o.volume_spread = s["volume_spread"].get<double>();
        o.dirichlet_alpha = s["dirichlet_alpha"].get<double>();
        o.indicator_noise = s["indicator_noise"].get<double>();
        const auto base = r.cfg["seed"].get<std::uint64_t>();
        o.seed = c == 0 ? base : derive_seed(base, 0xc17, static_cast<std::uint64_t>(c));
        const auto city = synth::gen_city(o);
        const fs::path dir = r.out / ("city" + std::to_string(c));
        fs::create_directories(dir);
        ingest::write_series(dir / "series.bin", city.series, r.hash);
        ingest::write_series_csv(dir / "series.csv", city.series);
        synth::write_target_csv(dir / "indicator.csv", city.target());
        json truth = {{"seed", o.seed}, {"beta", std::vector<double>(city.beta.data(), city.beta.data() + city.beta.size())},
                      {"config_hash", r.hash}};
        write_json(dir / "truth.json", truth);
        index.push_back({{"name", "city" + std::to_string(c)},
                         {"series", (dir / "series.bin").string()},
                         {"target", (dir / "indicator.csv").string()}});
    }
    write_json(r.out / "cities.json", {{"config_hash", r.hash}, {"cities", index}});
    std::cout << "wrote " << cities << " synthetic cit" << (cities == 1 ? "y" : "ies") << " to " << r.out << '\n';
    return 0;
}

int cmd_ingest(const Globals& g) {
    const Run r = prepare(g, "ingest");
    const json& d = r.cfg["data"];
    const auto trips_path = d["trips"].get<std::string>();
    const auto regions_path = d["regions"].get<std::string>();
    if (trips_path.empty() || regions_path.empty()) throw ConfigError("data.trips and data.regions are required");
    if (d["window_start"].get<std::string>().empty() || d["window_end"].get<std::string>().empty())
        throw ConfigError("data.window_start and data.window_end are required");
    const auto start = ingest::parse_timestamp(d["window_start"].get<std::string>());
    const auto end = ingest::parse_timestamp(d["window_end"].get<std::string>());

    const auto regions = ingest::read_regions(regions_path);
    const auto trips = ingest::read_trips_csv(trips_path, {d["delimiter"].get<std::string>()[0]});
    if (trips.trips.empty()) std::cerr << "warning: no trips read from " << trips_path << '\n';
    ingest::BinDiagnostics diag;
    const auto series = ingest::bin_trips(trips.trips, regions, start, end, &diag);

    ingest::write_series(r.out / "series.bin", series, r.hash);
    ingest::write_series_csv(r.out / "series.csv", series);
    json totals = json::object();
    for (std::size_t n = 0; n < series.regions(); ++n) {
        std::int64_t in = 0, out = 0;
        for (std::int64_t t = 0; t < series.hours; ++t) {
            in += series.at(n, t, ingest::MobilitySeries::kInbound);
            out += series.at(n, t, ingest::MobilitySeries::kOutbound);
        }
        totals[series.region_ids[n]] = {{"inbound", in}, {"outbound", out}};
    }
    write_json(r.out / "diagnostics.json",
               {{"config_hash", r.hash},
                {"rows_read", trips.rows_read},
                {"rows_rejected", trips.rows_rejected},
                {"trips", diag.trips},
                {"unresolved_origin", diag.unresolved_origin},
                {"unresolved_destination", diag.unresolved_destination},
                {"outbound_outside_window", diag.outbound_outside_window},
                {"inbound_outside_window", diag.inbound_outside_window},
                {"regions", series.regions()},
                {"hours", series.hours},
                {"region_totals", totals}});
    std::cout << "binned " << diag.trips << " trips into " << series.regions() << " x " << series.hours
              << " hours -> " << (r.out / "series.bin").string() << '\n';
    return 0;
}

int cmd_train(const Globals& g) {
    const Run r = prepare(g, "train");
    const auto data = load_dataset(r.cfg);
    const auto tc = config::train_config(r.cfg);
    const auto state = trainer::train(data, tc, {}, [](const trainer::StepRecord& s) {
        if (s.step % 50 == 0)
            std::cerr << "epoch " << s.epoch << " step " << s.step << " loss " << s.loss.total << '\n';
    });
    encoder::CheckpointMeta meta{tc.seed, r.hash, {}};
    encoder::save_checkpoint(r.out / "checkpoint.bin", state.model, meta);
    trainer::write_loss_log(r.out / "loss_log.jsonl", state.history);
    const auto source = trainer::embedding_source_from_string(r.cfg["embed"]["source"].get<std::string>());
    const auto emb = trainer::embed_regions(data, state.model, source);
    trainer::write_embeddings(r.out / "embeddings.bin", emb, r.hash);
    trainer::write_embeddings_csv(r.out / "embeddings.csv", emb);
    const auto means = trainer::epoch_means(state.history);
    std::cout << "trained " << state.step << " steps; final epoch loss "
              << (means.empty() ? 0.0 : means.back()) << " -> " << r.out << '\n';
    return 0;
}

int cmd_embed(const Globals& g) {
    const Run r = prepare(g, "embed");
    const auto ckpt = r.cfg["embed"]["checkpoint"].get<std::string>();
    if (ckpt.empty()) throw ConfigError("embed.checkpoint is required");
    const auto model = encoder::load_checkpoint(ckpt);
    const auto data = load_dataset(r.cfg);
    const auto emb =
        trainer::embed_regions(data, model, trainer::embedding_source_from_string(r.cfg["embed"]["source"].get<std::string>()));
    trainer::write_embeddings(r.out / "embeddings.bin", emb, r.hash);
    trainer::write_embeddings_csv(r.out / "embeddings.csv", emb);
    std::cout << "embedded " << emb.region_ids.size() << " regions -> " << r.out << '\n';
    return 0;
}

int cmd_evaluate(const Globals& g) {
    const Run r = prepare(g, "evaluate");
    if (g.embeddings.empty()) throw ConfigError("--embeddings is required");
    const auto emb = trainer::read_embeddings(g.embeddings);
    const auto pc = config::probe_config(r.cfg);
    probe::EvalReport report;
    for (const auto& t : load_targets(r.cfg)) report.targets.push_back(probe::evaluate(emb, t, pc));
    report.metadata = {{"config_hash", r.hash}, {"embeddings", g.embeddings}};
    write_json(r.out / "eval.json", probe::to_json(report));
    probe::write_table(r.out / "eval_table.csv", {"mobiclr"}, {report});
    for (const auto& t : report.targets) std::cout << t.name << ": R2 " << t.r2_mean << " +/- " << t.r2_std << '\n';
    return 0;
}

int cmd_experiment(const Globals& g) {
    const Run r = prepare(g, "experiment");
    const json& e = r.cfg["experiment"];
    experiments::ExperimentPlan plan;
    plan.train = config::train_config(r.cfg);
    plan.probe = config::probe_config(r.cfg);
    plan.scope = config::pretrain_scope(r.cfg);
    plan.workers = r.cfg["workers"].get<int>();
    plan.seeds = e["seeds"].get<std::vector<std::uint64_t>>();
    plan.batch_sizes = e["batch_sizes"].get<std::vector<int>>();
    plan.embed_dims = e["embed_dims"].get<std::vector<int>>();
    const auto kind = e["kind"].get<std::string>();

    experiments::ResultMatrix m;
    if (kind == "transfer") {
        std::vector<experiments::City> cities;
        for (const auto& c : e["cities"]) {
            if (!c.contains("name") || !c.contains("series") || !c.contains("target"))
                throw ConfigError("experiment.cities entries need 'name', 'series' and 'target'");
            const auto name = c["name"].get<std::string>();
            cities.push_back({name, load_dataset(r.cfg, c["series"].get<std::string>()),
                              probe::read_targets_csv(c["target"].get<std::string>(), name)});
        }
        if (cities.empty()) throw ConfigError("experiment.cities is empty");
        m = experiments::run_transfer_matrix(cities, plan);
    } else {
        const auto data = load_dataset(r.cfg);
        const auto targets = load_targets(r.cfg);
        const auto wanted = e["target"].get<std::string>();
        const probe::TargetTable* target = &targets.front();
        if (!wanted.empty()) {
            target = nullptr;
            for (const auto& t : targets)
                if (t.name == wanted) target = &t;
            if (!target) throw ConfigError("experiment.target '" + wanted + "' is not in data.targets");
        }
        if (kind == "aug_grid") m = experiments::run_aug_grid(data, *target, plan);
        else if (kind == "ablation") m = experiments::run_ablation(data, *target, plan);
        else if (kind == "sensitivity") m = experiments::run_sensitivity(data, *target, plan);
        else throw ConfigError("experiment.kind must be aug_grid, ablation, sensitivity or transfer");
    }
    json j = experiments::to_json(m);
    j["config_hash"] = r.hash;
    write_json(r.out / (m.kind + ".json"), j);
    experiments::write_matrix_csv(r.out / (m.kind + ".csv"), m);
    experiments::write_heatmap_pgm(r.out / (m.kind + ".pgm"), m);
    int failed = 0;
    for (const auto& c : m.cells) failed += c.ok ? 0 : 1;
    std::cout << m.kind << ": " << m.cells.size() - failed << "/" << m.cells.size() << " cells ok -> " << r.out
              << '\n';
    return 0;
}

void report_error(const std::string& kind, const std::string& message) {
    std::cerr << json{{"error", kind}, {"message", message}}.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Contrastive region embeddings from hourly inbound/outbound mobility flows"};
    app.require_subcommand(1);
    Globals g;
    auto add_globals = [&](CLI::App* sub) {
        sub->add_option("--config", g.config_path, "Run config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--seed", g.seed, "Global seed");
        sub->add_option("--out", g.out, std::string("Output directory (default $") + kOutEnv + "/<command>)");
        sub->add_option("--workers", g.workers, "Parallel experiment cells");
        sub->add_option("--set", g.overrides, "Override a config key, e.g. train.epochs=5");
    };
    struct Entry {
        const char* name;
        const char* help;
        int (*fn)(const Globals&);
    };
    const Entry entries[] = {
        {"synth", "Generate synthetic cities with a planted indicator", cmd_synth},
        {"ingest", "Bin trip records into hourly inbound/outbound series", cmd_ingest},
        {"train", "Pretrain the encoders and write checkpoint, loss log and embeddings", cmd_train},
        {"embed", "Embed regions with a saved checkpoint", cmd_embed},
        {"evaluate", "Ridge-probe embeddings against each target", cmd_evaluate},
        {"experiment", "Run an experiment grid", cmd_experiment},
    };
    int (*selected)(const Globals&) = nullptr;
    for (const auto& e : entries) {
        auto* sub = app.add_subcommand(e.name, e.help);
        add_globals(sub);
        if (std::string(e.name) == "evaluate") sub->add_option("--embeddings", g.embeddings, "Embeddings container");
        sub->callback([&selected, fn = e.fn] { selected = fn; });
    }
    CLI11_PARSE(app, argc, argv);

    try {
        return selected(g);
    } catch (const ConfigError& e) {
        report_error("config", e.what());
        return 2;
    } catch (const FormatError& e) {
        report_error("format", e.what());
        return 2;
    } catch (const ArgumentError& e) {
        report_error("argument", e.what());
        return 1;
    } catch (const std::exception& e) {
        report_error("runtime", e.what());
        return 1;
    }
}
