#pragma once

// Run configuration: one JSON document, merged over documented defaults.
// Unknown keys and type mismatches are rejected before any work starts.

#include "mobiclr/probe.hpp"
#include "mobiclr/trainer.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace mobiclr::config {

/// The full default document; every accepted key appears here.
const nlohmann::json& defaults();

/// Merges `user` over the defaults, rejecting unknown keys and wrong types.
nlohmann::json resolve(const nlohmann::json& user);

nlohmann::json load_file(const std::filesystem::path& path);

/// Applies "a.b.c=value"; value is parsed as JSON, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Hash of the resolved document, excluding keys that cannot change results
/// (output_dir, workers).
std::string config_hash(const nlohmann::json& resolved);

/// Hash of a training configuration alone; used to label experiment cells.
std::string train_config_hash(const trainer::TrainConfig& config);

trainer::TrainConfig train_config(const nlohmann::json& resolved);
probe::ProbeConfig probe_config(const nlohmann::json& resolved);

/// Canonical JSON of a TrainConfig, shaped like the "seed"/"model"/"train" sections.
nlohmann::json to_json(const trainer::TrainConfig& config);

enum class PretrainScope { TrainSplit, AllRegions };
PretrainScope pretrain_scope(const nlohmann::json& resolved);
std::string to_string(PretrainScope s);

}  // namespace mobiclr::config
