#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "manifold_ot/conditional.hpp"
#include "manifold_ot/manifolds.hpp"
#include "manifold_ot/maxmin.hpp"

namespace manifold_ot {

/// Range to the wall of a unit-radius room from a robot offset by `ell` from the centre (S1 state).
struct CircleWall {
  double ell = 0.5;
};
/// Same sensor with the robot position part of the state: z = (x, y, heading).
struct SE2Wall {};
/// Selects (R11, R21, R31, R22) of a rotation.
struct SO3Entries {};

struct ObservationModel {
  std::variant<CircleWall, SE2Wall, SO3Entries> kind = CircleWall{};
  double noise_stddev = 0.1;
};

[[nodiscard]] ManifoldId manifold_of(const ObservationModel& obs);
[[nodiscard]] int obs_dim(const ObservationModel& obs);
/// Throws ConfigError for ell^2 >= 1 or a non-positive noise level.
void validate(const ObservationModel& obs);

[[nodiscard]] double wall_distance(double ell, double theta);
[[nodiscard]] double wall_distance(double x, double y, double theta);

/// h(z), plus N(0, sigma^2 I) noise when rng is non-null.
[[nodiscard]] Eigen::VectorXd observe(const ObservationModel& obs, const ManifoldPoint& z, Rng* rng = nullptr);
/// Gaussian log-likelihood up to an additive constant.
[[nodiscard]] double log_likelihood(const ObservationModel& obs, const ManifoldPoint& z, const Eigen::VectorXd& y);

/// theta_{t+1} = theta_t + velocity + noise on S1; zero velocity and noise give the identity on any manifold.
struct DynamicsModel {
  double velocity = 0.0;
  double noise_stddev = 0.0;
};

[[nodiscard]] ManifoldPoint propagate(const DynamicsModel& dyn, const ManifoldPoint& z, Rng& rng);

/// Particle cloud; `weights` is empty for unweighted ensembles, otherwise normalised.
struct Ensemble {
  std::vector<ManifoldPoint> particles;
  std::vector<double> weights;
};

/// Throws ContractError if weights are present but not positive or not normalised to 1e-12.
void check_ensemble(const Ensemble& e);

/// Propagate, simulate observations, fit the conditional map (warm-started), apply it at y_t.
[[nodiscard]] std::pair<Ensemble, ConditionalSolution> ot_filter_step(const Ensemble& ensemble,
                                                                      const Eigen::VectorXd& y_t,
                                                                      const DynamicsModel& dyn,
                                                                      const ObservationModel& obs,
                                                                      const TrainConfig& cfg,
                                                                      const ConditionalSolution* warm, Rng& rng);

/// Normalised posterior weights prior_w * likelihood; falls back to uniform (with a warning) if all vanish.
[[nodiscard]] std::vector<double> importance_weights(const Ensemble& ensemble, const Eigen::VectorXd& y,
                                                     const ObservationModel& obs);
/// Systematic resampling: one uniform offset, N evenly spaced pointers.
[[nodiscard]] std::vector<std::size_t> systematic_resample(std::span<const double> weights, Rng& rng);

[[nodiscard]] Ensemble sir_step(const Ensemble& ensemble, const Eigen::VectorXd& y_t, const DynamicsModel& dyn,
                                const ObservationModel& obs, Rng& rng);

/**
 * Perturbed-observation EnKF analysis in the angle chart: anomalies are
 * wrapped to (-pi, pi] around the circular mean and the result is reduced
 * mod 2*pi. `predicted` holds h(theta_i) row by row.
 */
[[nodiscard]] std::vector<double> enkf_analysis(std::span<const double> angles, const Eigen::MatrixXd& predicted,
                                                const Eigen::VectorXd& y, double noise_stddev, Rng& rng);

[[nodiscard]] Ensemble enkf_step(const Ensemble& ensemble, const Eigen::VectorXd& y_t, const DynamicsModel& dyn,
                                 const ObservationModel& obs, Rng& rng);

enum class FilterMethod { OT, SIR, EnKF };
[[nodiscard]] std::string_view method_name(FilterMethod m);

/// Orientation tracking in the circular room.
struct FilterScenario {
  double ell = 0.5;
  double velocity = kTwoPi / 100.0;
  bool velocity_known = true;  ///< false: filters assume zero velocity while the truth keeps moving
  double process_noise = 0.1;
  double obs_noise = 0.1;
  double initial_truth = kPi / 4.0;
  TrainConfig train;           ///< budget for the first OT step
  int warm_outer_iters = 500;  ///< budget for later, warm-started OT steps
};

struct TruthTrajectory {
  std::vector<ManifoldPoint> states;          // steps + 1 entries, index 0 is the initial state
  std::vector<Eigen::VectorXd> observations;  // observations[0] is empty
};

[[nodiscard]] TruthTrajectory simulate_truth(const FilterScenario& sc, int steps, std::uint64_t seed);

struct FilterRunResult {
  FilterMethod method = FilterMethod::SIR;
  std::uint64_t seed = 0;
  std::vector<Ensemble> ensembles;
  std::vector<double> squared_error;  // (estimate of d(theta, 0) - truth)^2 per step
  std::vector<ManifoldPoint> truth;
  std::vector<Eigen::VectorXd> observations;
  std::vector<double> wall_seconds;
};

struct FilterRunSummary {
  std::vector<FilterRunResult> runs;
  std::vector<double> mean_mse;  // squared error averaged over seeds, per step
};

/// Either mean of f(theta) = d(theta, 0) over particles (weighted when weights are present).
[[nodiscard]] double estimate_distance_to_zero(const Ensemble& e);

[[nodiscard]] FilterRunResult run_filter_seed(FilterMethod method, const FilterScenario& sc, int steps,
                                              int particles, std::uint64_t seed);
/// Runs every seed (truth depends only on the seed, so methods share truth and observations).
[[nodiscard]] FilterRunSummary run_filter(FilterMethod method, const FilterScenario& sc, int steps, int particles,
                                          std::span<const std::uint64_t> seeds);

[[nodiscard]] ObservationModel scenario_observation(const FilterScenario& sc);
[[nodiscard]] DynamicsModel scenario_dynamics(const FilterScenario& sc);

}  // namespace manifold_ot
