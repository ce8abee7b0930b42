#include "manifold_ot/filters.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>
#include <mutex>
#include <optional>
#include <thread>

#include "manifold_ot/errors.hpp"

namespace manifold_ot {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::uint64_t kTruthStream = 1;

std::uint64_t method_stream(FilterMethod m) {
  switch (m) {
    case FilterMethod::OT: return 11;
    case FilterMethod::SIR: return 12;
    case FilterMethod::EnKF: return 13;
  }
  return 0;
}

Ensemble propagate_all(const Ensemble& e, const DynamicsModel& dyn, Rng& rng) {
  Ensemble out;
  out.particles.reserve(e.particles.size());
  for (const auto& p : e.particles) out.particles.push_back(propagate(dyn, p, rng));
  out.weights = e.weights;
  return out;
}

}  // namespace

ManifoldId manifold_of(const ObservationModel& obs) {
  return std::visit(overloaded{[](const CircleWall&) { return ManifoldId::Circle; },
                               [](const SE2Wall&) { return ManifoldId::SE2; },
                               [](const SO3Entries&) { return ManifoldId::SO3; }},
                    obs.kind);
}

int obs_dim(const ObservationModel& obs) { return std::holds_alternative<SO3Entries>(obs.kind) ? 4 : 1; }

void validate(const ObservationModel& obs) {
  if (!(obs.noise_stddev > 0.0) || !std::isfinite(obs.noise_stddev))
    throw ConfigError("observation noise must be positive and finite");
  if (const auto* w = std::get_if<CircleWall>(&obs.kind)) {
    if (!(w->ell * w->ell < 1.0)) throw ConfigError("wall sensor offset needs ell^2 < 1");
  }
}

double wall_distance(double ell, double theta) {
  const double s = std::sin(theta);
  return ell * std::cos(theta) + std::sqrt(1.0 - ell * ell * s * s);
}

double wall_distance(double x, double y, double theta) {
  // Ray from (x, y) along the heading to the unit circle.
  const double b = x * std::cos(theta) + y * std::sin(theta);
  const double disc = std::max(0.0, b * b - (x * x + y * y) + 1.0);
  return -b + std::sqrt(disc);
}

Eigen::VectorXd observe(const ObservationModel& obs, const ManifoldPoint& z, Rng* rng) {
  if (z.manifold() != manifold_of(obs)) throw ContractError("observation model does not match the state manifold");
  Eigen::VectorXd y(obs_dim(obs));
  std::visit(overloaded{
                 [&](const CircleWall& w) { y(0) = wall_distance(w.ell, z.theta()); },
                 [&](const SE2Wall&) { y(0) = wall_distance(z.x(), z.y(), z.theta()); },
                 [&](const SO3Entries&) {
                   const auto c = z.coords();  // row-major
                   y << c[0], c[3], c[6], c[4];
                 },
             },
             obs.kind);
  if (rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < y.size(); ++i) y(i) += obs.noise_stddev * normal(*rng);
  }
  return y;
}

double log_likelihood(const ObservationModel& obs, const ManifoldPoint& z, const Eigen::VectorXd& y) {
  const Eigen::VectorXd h = observe(obs, z, nullptr);
  if (h.size() != y.size()) throw ContractError("observation length mismatch");
  return -(y - h).squaredNorm() / (2.0 * obs.noise_stddev * obs.noise_stddev);
}

ManifoldPoint propagate(const DynamicsModel& dyn, const ManifoldPoint& z, Rng& rng) {
  if (dyn.velocity == 0.0 && dyn.noise_stddev == 0.0) return z;
  if (z.manifold() != ManifoldId::Circle) throw ContractError("random-walk dynamics are defined on S1 only");
  double theta = z.theta() + dyn.velocity;
  if (dyn.noise_stddev > 0.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    theta += dyn.noise_stddev * normal(rng);
  }
  return ManifoldPoint::circle(theta);
}

void check_ensemble(const Ensemble& e) {
  if (e.particles.empty()) throw ContractError("empty ensemble");
  if (e.weights.empty()) return;
  if (e.weights.size() != e.particles.size()) throw ContractError("weight count differs from particle count");
  double total = 0.0;
  for (double w : e.weights) {
    if (!(w > 0.0)) throw ContractError("ensemble weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ContractError("ensemble weights are not normalised");
}

std::pair<Ensemble, ConditionalSolution> ot_filter_step(const Ensemble& ensemble, const Eigen::VectorXd& y_t,
                                                        const DynamicsModel& dyn, const ObservationModel& obs,
                                                        const TrainConfig& cfg, const ConditionalSolution* warm,
                                                        Rng& rng) {
  check_ensemble(ensemble);
  if (!ensemble.weights.empty()) throw ContractError("the OT filter works on unweighted ensembles");
  const Ensemble prior = propagate_all(ensemble, dyn, rng);
  std::vector<JointSample> joint;
  joint.reserve(prior.particles.size());
  for (const auto& x : prior.particles) joint.push_back({x, observe(obs, x, &rng)});
  ConditionalSolution sol = train_conditional(joint, cfg, warm, rng);
  Ensemble post;
  post.particles = posterior_sample(sol, prior.particles, y_t);
  return {std::move(post), std::move(sol)};
}

std::vector<double> importance_weights(const Ensemble& ensemble, const Eigen::VectorXd& y,
                                       const ObservationModel& obs) {
  const std::size_t n = ensemble.particles.size();
  std::vector<double> logw(n);
  double max_logw = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double prior = ensemble.weights.empty() ? 1.0 / static_cast<double>(n) : ensemble.weights[i];
    logw[i] = std::log(prior) + log_likelihood(obs, ensemble.particles[i], y);
    if (std::isfinite(logw[i])) max_logw = std::max(max_logw, logw[i]);
  }
  std::vector<double> w(n, 1.0 / static_cast<double>(n));
  if (!std::isfinite(max_logw)) {
    std::clog << "warning: all importance weights vanished; falling back to uniform weights\n";
    return w;
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = std::isfinite(logw[i]) ? std::exp(logw[i] - max_logw) : 0.0;
    total += w[i];
  }
  for (double& wi : w) wi /= total;
  return w;
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights, Rng& rng) {
  const std::size_t n = weights.size();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double offset = u(rng);
  std::vector<std::size_t> idx(n);
  double cumulative = weights.empty() ? 0.0 : weights[0];
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pointer = (offset + static_cast<double>(i)) / static_cast<double>(n);
    while (pointer > cumulative && j + 1 < n) {
      ++j;
      cumulative += weights[j];
    }
    idx[i] = j;
  }
  return idx;
}

Ensemble sir_step(const Ensemble& ensemble, const Eigen::VectorXd& y_t, const DynamicsModel& dyn,
                  const ObservationModel& obs, Rng& rng) {
  check_ensemble(ensemble);
  const Ensemble prior = propagate_all(ensemble, dyn, rng);
  const std::vector<double> w = importance_weights(prior, y_t, obs);
  const std::vector<std::size_t> idx = systematic_resample(w, rng);
  Ensemble out;
  out.particles.reserve(idx.size());
  for (std::size_t i : idx) out.particles.push_back(prior.particles[i]);
  out.weights.assign(idx.size(), 1.0 / static_cast<double>(idx.size()));
  return out;
}

std::vector<double> enkf_analysis(std::span<const double> angles, const Eigen::MatrixXd& predicted,
                                  const Eigen::VectorXd& y, double noise_stddev, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(angles.size());
  if (n < 2) throw ContractError("EnKF needs at least two particles");
  if (predicted.rows() != n || predicted.cols() != y.size()) throw ContractError("predicted observation shape mismatch");
  const Eigen::Index m = y.size();

  double cs = 0.0, sn = 0.0;
  for (double a : angles) {
    cs += std::cos(a);
    sn += std::sin(a);
  }
  const double center = std::atan2(sn, cs);
  Eigen::VectorXd anomaly(n);
  for (Eigen::Index i = 0; i < n; ++i) anomaly(i) = wrap_signed(angles[static_cast<std::size_t>(i)] - center);
  const double anomaly_mean = anomaly.mean();
  anomaly.array() -= anomaly_mean;
  const Eigen::MatrixXd obs_anomaly = predicted.rowwise() - predicted.colwise().mean();

  const double denom = static_cast<double>(n - 1);
  const Eigen::RowVectorXd cross = anomaly.transpose() * obs_anomaly / denom;
  Eigen::MatrixXd innovation_cov = obs_anomaly.transpose() * obs_anomaly / denom;
  innovation_cov.diagonal().array() += noise_stddev * noise_stddev;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(innovation_cov);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 1e-300)) {
    innovation_cov.diagonal().array() += 1e-9;
    ldlt.compute(innovation_cov);
  }
  const Eigen::RowVectorXd gain = ldlt.solve(cross.transpose()).transpose();

  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(angles.size());
  Eigen::VectorXd perturbed(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < m; ++k) perturbed(k) = y(k) + noise_stddev * normal(rng);
    const double delta = gain.dot(perturbed - predicted.row(i).transpose());
    out[static_cast<std::size_t>(i)] = wrap_angle(angles[static_cast<std::size_t>(i)] + delta);
  }
  return out;
}

Ensemble enkf_step(const Ensemble& ensemble, const Eigen::VectorXd& y_t, const DynamicsModel& dyn,
                   const ObservationModel& obs, Rng& rng) {
  check_ensemble(ensemble);
  if (manifold_of(obs) != ManifoldId::Circle) throw ContractError("the EnKF baseline is defined on S1 only");
  const Ensemble prior = propagate_all(ensemble, dyn, rng);
  const auto n = static_cast<Eigen::Index>(prior.particles.size());
  std::vector<double> angles(static_cast<std::size_t>(n));
  Eigen::MatrixXd predicted(n, obs_dim(obs));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = prior.particles[static_cast<std::size_t>(i)];
    angles[static_cast<std::size_t>(i)] = p.theta();
    predicted.row(i) = observe(obs, p, nullptr).transpose();
  }
  const std::vector<double> updated = enkf_analysis(angles, predicted, y_t, obs.noise_stddev, rng);
  Ensemble out;
  out.particles.reserve(updated.size());
  for (double a : updated) out.particles.push_back(ManifoldPoint::circle(a));
  return out;
}

std::string_view method_name(FilterMethod m) {
  switch (m) {
    case FilterMethod::OT: return "OT";
    case FilterMethod::SIR: return "SIR";
    case FilterMethod::EnKF: return "EnKF";
  }
  return "?";
}

ObservationModel scenario_observation(const FilterScenario& sc) {
  ObservationModel obs{CircleWall{sc.ell}, sc.obs_noise};
  validate(obs);
  return obs;
}

DynamicsModel scenario_dynamics(const FilterScenario& sc) {
  return {sc.velocity_known ? sc.velocity : 0.0, sc.process_noise};
}

TruthTrajectory simulate_truth(const FilterScenario& sc, int steps, std::uint64_t seed) {
  if (steps < 0) throw ConfigError("steps must be non-negative");
  const ObservationModel obs = scenario_observation(sc);
  const DynamicsModel truth_dyn{sc.velocity, sc.process_noise};
  Rng rng = seeded_stream(seed, kTruthStream);
  TruthTrajectory t;
  t.states.push_back(ManifoldPoint::circle(sc.initial_truth));
  t.observations.emplace_back();
  for (int k = 1; k <= steps; ++k) {
    t.states.push_back(propagate(truth_dyn, t.states.back(), rng));
    t.observations.push_back(observe(obs, t.states.back(), &rng));
  }
  return t;
}

double estimate_distance_to_zero(const Ensemble& e) {
  const ManifoldPoint origin = ManifoldPoint::circle(0.0);
  double acc = 0.0;
  const auto n = static_cast<double>(e.particles.size());
  for (std::size_t i = 0; i < e.particles.size(); ++i) {
    const double w = e.weights.empty() ? 1.0 / n : e.weights[i];
    acc += w * geodesic_dist(ManifoldId::Circle, e.particles[i], origin);
  }
  return acc;
}

FilterRunResult run_filter_seed(FilterMethod method, const FilterScenario& sc, int steps, int particles,
                                std::uint64_t seed) {
  if (particles < 2) throw ConfigError("need at least two particles");
  const TruthTrajectory truth = simulate_truth(sc, steps, seed);
  const ObservationModel obs = scenario_observation(sc);
  const DynamicsModel dyn = scenario_dynamics(sc);
  Rng rng = seeded_stream(seed, method_stream(method));

  FilterRunResult result;
  result.method = method;
  result.seed = seed;
  Ensemble current;
  current.particles = sample(CircleUniform{}, static_cast<std::size_t>(particles), rng);
  if (method == FilterMethod::SIR)
    current.weights.assign(current.particles.size(), 1.0 / static_cast<double>(particles));

  const ManifoldPoint origin = ManifoldPoint::circle(0.0);
  auto record = [&](const Ensemble& e, int k, double seconds) {
    const double f_true = geodesic_dist(ManifoldId::Circle, truth.states[static_cast<std::size_t>(k)], origin);
    const double err = estimate_distance_to_zero(e) - f_true;
    result.ensembles.push_back(e);
    result.squared_error.push_back(err * err);
    result.truth.push_back(truth.states[static_cast<std::size_t>(k)]);
    result.observations.push_back(truth.observations[static_cast<std::size_t>(k)]);
    result.wall_seconds.push_back(seconds);
  };
  record(current, 0, 0.0);

  std::optional<ConditionalSolution> warm;
  for (int k = 1; k <= steps; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const Eigen::VectorXd& y = truth.observations[static_cast<std::size_t>(k)];
    switch (method) {
      case FilterMethod::OT: {
        TrainConfig cfg = sc.train;
        if (warm) cfg.outer_max_iters = sc.warm_outer_iters;
        auto [next, sol] = ot_filter_step(current, y, dyn, obs, cfg, warm ? &*warm : nullptr, rng);
        current = std::move(next);
        warm = std::move(sol);
        break;
      }
      case FilterMethod::SIR: current = sir_step(current, y, dyn, obs, rng); break;
      case FilterMethod::EnKF: current = enkf_step(current, y, dyn, obs, rng); break;
    }
    check_ensemble(current);
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - start;
    record(current, k, dt.count());
  }
  return result;
}

FilterRunSummary run_filter(FilterMethod method, const FilterScenario& sc, int steps, int particles,
                            std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  FilterRunSummary summary;
  summary.runs.resize(seeds.size());
  const unsigned workers =
      std::max(1u, std::min(std::thread::hardware_concurrency(), static_cast<unsigned>(seeds.size())));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      try {
        summary.runs[i] = run_filter_seed(method, sc, steps, particles, seeds[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  summary.mean_mse.assign(static_cast<std::size_t>(steps) + 1, 0.0);
  for (const auto& run : summary.runs)
    for (std::size_t k = 0; k < run.squared_error.size(); ++k) summary.mean_mse[k] += run.squared_error[k];
  for (double& v : summary.mean_mse) v /= static_cast<double>(seeds.size());
  return summary;
}

}  // namespace manifold_ot
