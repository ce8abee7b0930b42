#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "manifold_ot/config.hpp"

namespace manifold_ot {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumericalError = 3;

/// 64-bit FNV-1a of the bytes, as 16 lowercase hex digits.
[[nodiscard]] std::string content_hash(std::string_view bytes);

struct ExperimentOutcome {
  int exit_code = kExitOk;
  std::string message;             // error text when exit_code != 0
  std::vector<std::string> files;  // written files, relative to the output directory
  nlohmann::json metrics;          // summary statistics, also stored in the manifest
};

/**
 * Runs one experiment into cfg.out_dir and writes manifest.json listing every
 * file with its content hash. Errors are caught and mapped to exit codes.
 */
[[nodiscard]] ExperimentOutcome run_experiment(const ExperimentConfig& cfg);

/// Runs seeds first..last of a transport or static experiment into out_dir/seed-N on up to `workers` threads.
[[nodiscard]] std::vector<ExperimentOutcome> run_experiment_seeds(const ExperimentConfig& cfg, std::uint64_t first,
                                                                  std::uint64_t last, unsigned workers);

/// Trajectory sample times written by the transport experiments.
inline constexpr double kTrajectoryTimes[] = {0.0, 0.25, 0.5, 0.75, 1.0};

}  // namespace manifold_ot
