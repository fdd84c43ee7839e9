#include "mobiclr/augment.hpp"
#include "mobiclr/config.hpp"

#include "doctest.h"

using namespace mobiclr;
using nlohmann::json;

TEST_CASE("resolve fills defaults and accepts partial documents") {
    const json r = config::resolve({{"train", {{"epochs", 3}}}});
    CHECK(r["train"]["epochs"] == 3);
    CHECK(r["train"]["batch_size"] == 4);
    CHECK(r["model"]["repr_dim"] == 128);
    CHECK(r["probe"]["alphas"].size() == 7);
    CHECK(config::train_config(r).epochs == 3);
    CHECK(config::pretrain_scope(r) == config::PretrainScope::TrainSplit);
}

TEST_CASE("unknown keys and wrong types are rejected") {
    CHECK_THROWS_AS(config::resolve({{"trian", {{"epochs", 3}}}}), ConfigError);
    CHECK_THROWS_AS(config::resolve({{"train", {{"epoch", 3}}}}), ConfigError);
    CHECK_THROWS_AS(config::resolve({{"train", {{"epochs", "three"}}}}), ConfigError);
    CHECK_THROWS_AS(config::resolve({{"train", {{"epochs", 2.5}}}}), ConfigError);
    CHECK_THROWS_AS(config::resolve({{"train", 5}}), ConfigError);
    CHECK_THROWS_AS(config::resolve({{"train", {{"optimizer", "rmsprop"}}}}), ConfigError);
    CHECK_THROWS_AS(config::resolve({{"train", {{"pretrain_scope", "everything"}}}}), ConfigError);
    CHECK_THROWS_AS(config::resolve({{"workers", 0}}), ConfigError);
    CHECK_THROWS_AS(config::resolve({{"embed", {{"source", "sideways"}}}}), ConfigError);
    try {
        config::resolve({{"train", {{"epoch", 3}}}});
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("train.epoch") != std::string::npos);
    }
}

TEST_CASE("overrides parse JSON values and fall back to strings") {
    json doc = json::object();
    config::apply_override(doc, "train.epochs=7");
    config::apply_override(doc, "train.learning_rate=0.001");
    config::apply_override(doc, "embed.source=o");
    config::apply_override(doc, "probe.alphas=[1,2]");
    CHECK(doc["train"]["epochs"] == 7);
    CHECK(doc["train"]["learning_rate"] == 0.001);
    CHECK(doc["embed"]["source"] == "o");
    CHECK(doc["probe"]["alphas"].size() == 2);
    config::apply_override(doc, "data.window_end=7200");
    CHECK(doc["data"]["window_end"] == "7200");
    CHECK_THROWS_AS(config::apply_override(doc, "novalue"), ConfigError);
    CHECK_THROWS_AS(config::apply_override(doc, "=3"), ConfigError);
    const json r = config::resolve(doc);
    CHECK(config::train_config(r).epochs == 7);
}

TEST_CASE("config hash ignores output location and worker count only") {
    const json a = config::resolve(json::object());
    const json b = config::resolve({{"output_dir", "/elsewhere"}, {"workers", 4}});
    const json c = config::resolve({{"seed", 1}});
    CHECK(config::config_hash(a) == config::config_hash(b));
    CHECK(config::config_hash(a) != config::config_hash(c));
    CHECK(config::config_hash(a).size() == 16);
}

TEST_CASE("training hash round-trips through the typed config") {
    const json r = config::resolve(json::object());
    const auto t = config::train_config(r);
    CHECK(config::train_config_hash(t) == config::train_config_hash(trainer::TrainConfig{}));
    auto grid_cell = t;
    grid_cell.pipeline = {augment::Spec::jitter(), augment::Spec::shift()};
    CHECK(config::train_config_hash(grid_cell) == config::train_config_hash(t));
    grid_cell.pipeline = {augment::Spec::shift(), augment::Spec::jitter()};
    CHECK(config::train_config_hash(grid_cell) != config::train_config_hash(t));
}

TEST_CASE("every default key survives a resolve") {
    const json r = config::resolve(json::object());
    CHECK(r == config::defaults());
}
