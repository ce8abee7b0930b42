#pragma once

#include <filesystem>
#include <json.hpp>
#include <string>
#include <vector>

#include "manifold_ot/maxmin.hpp"

namespace manifold_ot {

[[nodiscard]] ManifoldId manifold_from_name(const std::string& name);

[[nodiscard]] nlohmann::json to_json(const TrainConfig& cfg);
[[nodiscard]] TrainConfig train_config_from_json(const nlohmann::json& j);
[[nodiscard]] std::vector<LossRecord> trace_from_json(const nlohmann::json& j);

/// Manifest shared by transport and conditional solutions.
[[nodiscard]] nlohmann::json solution_manifest(ManifoldId m, int obs_dim, const TrainConfig& cfg,
                                               const std::vector<LossRecord>& trace);

/// Writes both checkpoints and the manifest; returns the written file names.
std::vector<std::string> save_pair(const PotentialField& nets, nlohmann::json manifest,
                                   const std::filesystem::path& dir, const std::string& prefix);
/// Reads both checkpoints into `nets` and returns the manifest.
nlohmann::json load_pair(PotentialField& nets, const std::filesystem::path& dir, const std::string& prefix);

}  // namespace manifold_ot
