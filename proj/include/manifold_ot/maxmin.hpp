#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "manifold_ot/manifolds.hpp"
#include "manifold_ot/nn.hpp"

namespace manifold_ot {

/// Optimisation schedule shared by the transport and conditional solvers.
struct TrainConfig {
  int batch_size = 64;
  double lr = 1e-3;
  int inner_min_iters = 10;
  int outer_max_iters = 3000;
  std::uint64_t seed = 0;
  int block_count = 1;
  int block_width = 32;
  int log_every = 50;
  // Optional annealing tail: from outer iteration anneal_start * outer_max_iters the
  // learning rate decays log-linearly to final_lr_ratio * lr. Ratio 1 keeps lr constant.
  double final_lr_ratio = 1.0;
  double anneal_start = 0.5;
};

/// Learning rate used at outer iteration `outer` (1-based).
[[nodiscard]] double scheduled_lr(const TrainConfig& cfg, int outer);

/// Throws ConfigError unless every field is positive.
void validate(const TrainConfig& cfg);

struct LossRecord {
  int iteration = 0;
  double value = 0.0;
};

/// The potential phi (scalar head) and the Lie-algebra vector field U.
struct PotentialField {
  nn::Network potential;
  nn::Network field;
};

/// Points plus optional conditioning rows (one row per point; zero columns when unconditional).
struct Batch {
  std::vector<ManifoldPoint> points;
  Eigen::MatrixXd cond;
};

struct ObjectiveResult {
  double value = 0.0;
  nn::Grads potential_grad;  // empty unless requested
  nn::Grads field_grad;      // empty unless requested
  double max_field_norm = 0.0;
  double max_abs_potential = 0.0;
};

/// Network inputs: embedding of each point followed by its conditioning row.
[[nodiscard]] Eigen::MatrixXd network_inputs(ManifoldId m, std::span<const ManifoldPoint> points,
                                             const Eigen::MatrixXd& cond);

[[nodiscard]] PotentialField make_potential_field(ManifoldId m, int cond_dim, const TrainConfig& cfg, Rng& rng);

/**
 * Sampled max-min objective
 *
 *   mean_target[phi(z, c)] + mean_source[cost(z, exp_z(-U(z, c))) - phi(exp_z(-U(z, c)), c)]
 *
 * with cost = d^2 / 2, plus exact parameter gradients for whichever networks
 * are requested. The target batch may be empty when only the field gradient
 * is needed (its term does not depend on U).
 */
[[nodiscard]] ObjectiveResult maxmin_objective(ManifoldId m, const PotentialField& nets, const Batch& target,
                                               const Batch& source, bool want_potential, bool want_field);

/// Fills `target` and `source` with fresh minibatches.
using BatchSampler = std::function<void(Rng& rng, Batch& target, Batch& source)>;

/**
 * Alternating optimisation: inner_min_iters Adam descent steps on U, then
 * one Adam ascent step on phi, repeated outer_max_iters times. Returns the
 * loss trace sampled every cfg.log_every outer iterations.
 *
 * Throws NumericalError on a non-finite objective.
 */
std::vector<LossRecord> run_maxmin(ManifoldId m, PotentialField& nets, const TrainConfig& cfg,
                                   const BatchSampler& sampler, Rng& rng);

/// exp_z(-t U(z, c)) for each point.
[[nodiscard]] std::vector<ManifoldPoint> apply_field(ManifoldId m, const nn::Network& field,
                                                     std::span<const ManifoldPoint> points,
                                                     const Eigen::MatrixXd& cond, double t = 1.0);

/// Raw field outputs U(z, c), one row per point.
[[nodiscard]] Eigen::MatrixXd field_values(ManifoldId m, const nn::Network& field,
                                           std::span<const ManifoldPoint> points, const Eigen::MatrixXd& cond);

}  // namespace manifold_ot
