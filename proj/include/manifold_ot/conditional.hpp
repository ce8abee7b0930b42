#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "manifold_ot/manifolds.hpp"
#include "manifold_ot/maxmin.hpp"

namespace manifold_ot {

/// A state/observation pair (x, y) drawn from the joint distribution.
struct JointSample {
  ManifoldPoint x;
  Eigen::VectorXd y;
};

/// Procedural joint model: prior draw followed by a simulated observation.
struct JointGenerator {
  ManifoldId manifold = ManifoldId::Circle;
  int obs_dim = 1;
  std::function<JointSample(Rng&)> draw;
};

using JointSource = std::variant<std::vector<JointSample>, JointGenerator>;

/**
 * Block-triangular transport T(x, y) = exp_x(-U(x, y)).
 *
 * For each observation y, T(., y) pushes the prior onto the posterior. Both
 * networks read (embed(x), y).
 */
struct ConditionalSolution {
  ManifoldId manifold = ManifoldId::Circle;
  int obs_dim = 0;
  PotentialField nets;
  TrainConfig config;
  std::vector<LossRecord> trace;
};

/// Keeps the x's in order and permutes the y's uniformly at random (batch size >= 2).
[[nodiscard]] std::vector<JointSample> independent_coupling(std::span<const JointSample> batch, Rng& rng);

[[nodiscard]] ObjectiveResult conditional_objective(ManifoldId m, const nn::Network& potential,
                                                    const nn::Network& field, std::span<const JointSample> joint,
                                                    std::span<const JointSample> independent);

/**
 * Alternating max-min training on joint samples (fixed dataset resampled
 * with replacement, or fresh draws from a generator). A warm solution's
 * parameters seed the networks; optimiser moments always start fresh.
 */
[[nodiscard]] ConditionalSolution train_conditional(const JointSource& joint, const TrainConfig& cfg,
                                                    const ConditionalSolution* warm, Rng& rng);

/// T(x_i, y) for every prior sample; y is broadcast to all of them.
[[nodiscard]] std::vector<ManifoldPoint> posterior_sample(const ConditionalSolution& sol,
                                                          std::span<const ManifoldPoint> prior,
                                                          const Eigen::VectorXd& y);

/// Pushes each pair (x, y) through (T, Id); the y's come back unchanged.
[[nodiscard]] std::vector<JointSample> apply_block_triangular(const ConditionalSolution& sol,
                                                              std::span<const JointSample> pairs);

void save_solution(const ConditionalSolution& sol, const std::filesystem::path& dir,
                   const std::string& prefix = "conditional");
[[nodiscard]] ConditionalSolution load_conditional_solution(const std::filesystem::path& dir,
                                                            const std::string& prefix = "conditional");

}  // namespace manifold_ot
