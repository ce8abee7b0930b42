#pragma once

#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "manifold_ot/manifolds.hpp"
#include "manifold_ot/maxmin.hpp"

namespace manifold_ot {

/// A procedurally sampleable distribution (fresh batches) or a fixed dataset (resampled with replacement).
using SampleSource = std::variant<DistributionSpec, std::vector<ManifoldPoint>>;

[[nodiscard]] ManifoldId manifold_of(const SampleSource& source);

/// Paired points standing in for a coupling of two empirical measures.
struct CouplingSample {
  std::vector<ManifoldPoint> first;
  std::vector<ManifoldPoint> second;
  std::vector<double> weights;
};

/**
 * Learned transport between a source and a target distribution.
 *
 * The potential term is averaged over the target and the inner term over the
 * source, so the field moves source samples onto the target:
 * T(z) = exp_z(-U(z)).
 */
struct OtSolution {
  ManifoldId manifold = ManifoldId::Circle;
  PotentialField nets;
  TrainConfig config;
  std::vector<LossRecord> trace;
};

/// Objective value and exact gradients on one pair of batches.
[[nodiscard]] ObjectiveResult ot_objective(ManifoldId m, const nn::Network& potential, const nn::Network& field,
                                           std::span<const ManifoldPoint> source,
                                           std::span<const ManifoldPoint> target);

[[nodiscard]] OtSolution train_ot(const SampleSource& source, const SampleSource& target, const TrainConfig& cfg,
                                  Rng& rng);
/// Seeds the generator from cfg.seed.
[[nodiscard]] OtSolution train_ot(const SampleSource& source, const SampleSource& target, const TrainConfig& cfg);

[[nodiscard]] ManifoldPoint transport(const OtSolution& sol, const ManifoldPoint& z);
[[nodiscard]] std::vector<ManifoldPoint> transport(const OtSolution& sol, std::span<const ManifoldPoint> points);

/// Displacement interpolation exp_z(-t U(z)), t in [0, 1].
[[nodiscard]] ManifoldPoint trajectory(const OtSolution& sol, const ManifoldPoint& z, double t);
[[nodiscard]] std::vector<ManifoldPoint> trajectory(const OtSolution& sol, std::span<const ManifoldPoint> points,
                                                    double t);

/// Writes <prefix>_potential.ckpt, <prefix>_field.ckpt and <prefix>_manifest.json into dir.
void save_solution(const OtSolution& sol, const std::filesystem::path& dir, const std::string& prefix = "ot");
[[nodiscard]] OtSolution load_solution(const std::filesystem::path& dir, const std::string& prefix = "ot");

}  // namespace manifold_ot
