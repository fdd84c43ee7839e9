#include "helpers.hpp"

#include "doctest.h"
#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::string& args, const fs::path& dir) {
    const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string("\"") + MOBICLR_BIN + "\" " + args + " > \"" + out.string() + "\" 2> \"" +
                            err.string() + "\"";
    const int status = std::system(cmd.c_str());
    int code = status;
#ifdef WEXITSTATUS
    code = WEXITSTATUS(status);
#endif
    return {code, testing::read_bytes(out), testing::read_bytes(err)};
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("cli ingest bins a two-trip file") {
    const auto dir = testing::scratch_dir("cli_ingest");
    testing::write_text(dir / "regions.txt", "A\nB\n");
    testing::write_text(dir / "trips.csv",
                        "origin_id,dest_id,start_time,end_time\n"
                        "A,B,2019-01-07T00:10:00Z,2019-01-07T01:20:00Z\n"
                        "B,A,2019-01-07T02:00:00Z,2019-01-07T02:30:00Z\n");
    const auto r = run("ingest --out " + q(dir / "out") + " --set data.trips=" + q(dir / "trips.csv") +
                           " --set data.regions=" + q(dir / "regions.txt") +
                           " --set data.window_start=2019-01-07T00:00:00Z --set data.window_end=2019-01-07T03:00:00Z",
                       dir);
    REQUIRE(r.code == 0);
    CHECK(testing::read_bytes(dir / "out" / "series.csv") ==
          "region_id,hour,timestamp,inbound,outbound\n"
          "A,0,2019-01-07T00:00:00Z,0,1\n"
          "A,1,2019-01-07T01:00:00Z,0,0\n"
          "A,2,2019-01-07T02:00:00Z,1,0\n"
          "B,0,2019-01-07T00:00:00Z,0,0\n"
          "B,1,2019-01-07T01:00:00Z,1,0\n"
          "B,2,2019-01-07T02:00:00Z,0,1\n");
    const auto diag = nlohmann::json::parse(testing::read_bytes(dir / "out" / "diagnostics.json"));
    CHECK(diag["trips"] == 2);
    CHECK(diag["region_totals"]["A"]["inbound"] == 1);
    const auto resolved = nlohmann::json::parse(testing::read_bytes(dir / "out" / "resolved_config.json"));
    CHECK(resolved["config_hash"] == diag["config_hash"]);
}

TEST_CASE("cli reports a missing column with exit code 2") {
    const auto dir = testing::scratch_dir("cli_missing");
    testing::write_text(dir / "regions.txt", "A\nB\n");
    testing::write_text(dir / "trips.csv", "origin_id,dest_id,start_time\nA,B,0\n");
    const auto r = run("ingest --out " + q(dir / "out") + " --set data.trips=" + q(dir / "trips.csv") +
                           " --set data.regions=" + q(dir / "regions.txt") +
                           " --set data.window_start=0 --set data.window_end=3600",
                       dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("end_time") != std::string::npos);
}

TEST_CASE("cli warns on an empty trip file and still succeeds") {
    const auto dir = testing::scratch_dir("cli_empty");
    testing::write_text(dir / "regions.txt", "A\nB\n");
    testing::write_text(dir / "trips.csv", "");
    const auto r = run("ingest --out " + q(dir / "out") + " --set data.trips=" + q(dir / "trips.csv") +
                           " --set data.regions=" + q(dir / "regions.txt") +
                           " --set data.window_start=0 --set data.window_end=7200",
                       dir);
    CHECK(r.code == 0);
    CHECK(r.err.find("warning") != std::string::npos);
    CHECK(fs::exists(dir / "out" / "series.bin"));
}

TEST_CASE("cli rejects unknown config keys with exit code 2") {
    const auto dir = testing::scratch_dir("cli_badkey");
    const auto r = run("train --out " + q(dir / "out") + " --set train.epoch=3", dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("train.epoch") != std::string::npos);
}

TEST_CASE("cli synth, train, embed and evaluate are reproducible end to end") {
    const auto dir = testing::scratch_dir("cli_pipeline");
    const std::string small = " --set synth.regions=12 --set synth.hours=48 --set model.hidden_channels=8"
                              " --set model.repr_dim=8 --set model.proj_dim=8"
                              " --set model.proj_hidden=8 --set train.epochs=1";
    REQUIRE(run("synth --seed 5 --out " + q(dir / "synth") + small, dir).code == 0);
    const auto series = dir / "synth" / "city0" / "series.bin";
    const auto target = dir / "synth" / "city0" / "indicator.csv";
    CHECK(fs::exists(target));
    const std::string data = " --set data.series=" + q(series);

    REQUIRE(run("train --seed 1 --out " + q(dir / "t1") + small + data, dir).code == 0);
    REQUIRE(run("train --seed 1 --out " + q(dir / "t2") + small + data, dir).code == 0);
    CHECK(testing::read_bytes(dir / "t1" / "embeddings.bin") == testing::read_bytes(dir / "t2" / "embeddings.bin"));
    CHECK(testing::read_bytes(dir / "t1" / "loss_log.jsonl") == testing::read_bytes(dir / "t2" / "loss_log.jsonl"));

    REQUIRE(run("embed --out " + q(dir / "e") + small + data + " --set embed.checkpoint=" +
                    q(dir / "t1" / "checkpoint.bin"),
                dir)
                .code == 0);
    CHECK(testing::read_bytes(dir / "e" / "embeddings.csv") == testing::read_bytes(dir / "t1" / "embeddings.csv"));

    const std::string targets = " --set data.targets=[{\\\"name\\\":\\\"indicator\\\",\\\"path\\\":\\\"" +
                                target.generic_string() + "\\\"}]";
    const auto ev = run("evaluate --out " + q(dir / "ev") + small + targets + " --embeddings " +
                            q(dir / "t1" / "embeddings.bin"),
                        dir);
    REQUIRE(ev.code == 0);
    const auto report = nlohmann::json::parse(testing::read_bytes(dir / "ev" / "eval.json"));
    CHECK(report["targets"][0]["r2_runs"].size() == 5);

    const auto ex = run("experiment --workers 2 --out " + q(dir / "grid") + small + data + targets +
                            " --set train.pretrain_scope=all_regions --set probe.runs=2 --set probe.split_seeds=[0,1]",
                        dir);
    REQUIRE(ex.code == 0);
    const auto csv = testing::read_bytes(dir / "grid" / "aug_grid.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
    const auto grid = nlohmann::json::parse(testing::read_bytes(dir / "grid" / "aug_grid.json"));
    CHECK(grid["cells"].size() == 16);
    CHECK(fs::exists(dir / "grid" / "aug_grid.pgm"));
}
