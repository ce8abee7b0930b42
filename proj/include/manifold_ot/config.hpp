#pragma once

#include <cstdint>
#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "manifold_ot/maxmin.hpp"

namespace manifold_ot {

enum class ExperimentId {
  OtS1Gaussians,
  OtS1Mixture,
  OtSE2,
  FilterS1Static,
  FilterS1Dynamic,
  FilterSE2,
  OtSO3,
  FilterSO3,
};

[[nodiscard]] std::string_view experiment_name(ExperimentId id);
/// Throws ConfigError for an unrecognised name.
[[nodiscard]] ExperimentId experiment_from_name(std::string_view name);
[[nodiscard]] ManifoldId experiment_manifold(ExperimentId id);
[[nodiscard]] bool is_transport_experiment(ExperimentId id);

/// Which velocity setups filter-s1-dynamic runs.
enum class VelocitySetup { Known, Unknown, Both };

struct ExperimentConfig {
  ExperimentId experiment = ExperimentId::OtS1Gaussians;
  TrainConfig train;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";

  int train_samples = 10000;  // fixed training set, resampled with replacement
  int eval_samples = 1000;    // samples pushed through the learned map for the CSV outputs
  double kde_kappa = 100.0;
  int kde_grid = 512;
  double mixture_stddev = 0.5;  // ot-s1-mixture target components

  // Observation and dynamics.
  double ell = 0.5;
  double obs_noise = 0.1;
  double velocity = kTwoPi / 100.0;
  double process_noise = 0.1;
  double initial_truth = kPi / 4.0;
  VelocitySetup velocity_setup = VelocitySetup::Both;
  int particles = 1000;
  int steps = 50;
  int warm_outer_iters = 500;
  std::uint64_t seed_first = 0;  // filter seeds, inclusive range
  std::uint64_t seed_last = 9;
  std::vector<int> snapshot_steps{1, 10, 25, 50};

  // Static problems: the state that generates the observation.
  double truth_theta = kPi / 3.0;
  double truth_x = 0.3;
  bool noiseless_observation = true;

  int histogram_bins = 60;
};

/// Defaults for one experiment before any overrides.
[[nodiscard]] ExperimentConfig default_config(ExperimentId id);

/**
 * Parses line-oriented `key = value` text; `#` starts a comment. Values may
 * be numbers, simple products/quotients with `pi` (e.g. `2*pi/100`), booleans,
 * ranges `A..B` or comma lists. The experiment id comes from the text, the
 * `experiment` argument, or both if they agree. Errors carry the offending
 * line number.
 */
[[nodiscard]] ExperimentConfig parse_config(std::string_view text,
                                            std::optional<ExperimentId> experiment = std::nullopt);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path,
                                           std::optional<ExperimentId> experiment = std::nullopt);

/// Throws ConfigError when a field leaves its documented range.
void validate(const ExperimentConfig& cfg);

[[nodiscard]] nlohmann::json to_json(const ExperimentConfig& cfg);

/// Parses `A..B` (inclusive, A <= B) or a single integer.
[[nodiscard]] std::pair<std::uint64_t, std::uint64_t> parse_seed_range(std::string_view text);

}  // namespace manifold_ot
