#include "manifold_ot/experiments.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "manifold_ot/conditional.hpp"
#include "manifold_ot/errors.hpp"
#include "manifold_ot/evaluation.hpp"
#include "manifold_ot/filters.hpp"
#include "manifold_ot/ot_solver.hpp"

#ifndef MANIFOLD_OT_VERSION
#define MANIFOLD_OT_VERSION "0.0.0"
#endif

namespace manifold_ot {

namespace {

constexpr std::uint64_t kDataStream = 21;
constexpr std::uint64_t kTrainStream = 22;
constexpr std::uint64_t kEvalStream = 23;
constexpr std::size_t kOracleSamples = 256;

// Shortest round-trip decimal form; identical bytes for identical doubles.
std::string num(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string time_label(double t) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%.2f", t);
  return buf;
}

class Output {
 public:
  explicit Output(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

  const std::filesystem::path& dir() const { return dir_; }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + (dir_ / name).string());
    add(name, content);
  }

  // Registers a file produced by another writer (checkpoints, solution manifests).
  void record(const std::string& name) {
    std::ifstream in(dir_ / name, std::ios::binary);
    if (!in) throw std::runtime_error("missing output " + (dir_ / name).string());
    std::ostringstream ss;
    ss << in.rdbuf();
    add(name, ss.str());
  }

  nlohmann::json listing() const { return files_; }
  std::vector<std::string> names() const { return names_; }

 private:
  void add(const std::string& name, const std::string& content) {
    files_.push_back({{"name", name}, {"bytes", content.size()}, {"fnv1a64", content_hash(content)}});
    names_.push_back(name);
  }

  std::filesystem::path dir_;
  nlohmann::json files_ = nlohmann::json::array();
  std::vector<std::string> names_;
};

std::string coord_header(ManifoldId m) {
  switch (m) {
    case ManifoldId::Circle: return "theta";
    case ManifoldId::SE2: return "x,y,theta";
    case ManifoldId::SO3: return "r11,r12,r13,r21,r22,r23,r31,r32,r33";
  }
  return "";
}

void write_coords(std::ostream& out, const ManifoldPoint& p) {
  const auto c = p.coords();
  for (std::size_t i = 0; i < c.size(); ++i) out << (i ? "," : "") << num(c[i]);
}

std::string samples_csv(ManifoldId m, const std::vector<std::pair<double, std::vector<ManifoldPoint>>>& sets) {
  std::ostringstream out;
  out << "t," << coord_header(m) << '\n';
  for (const auto& [t, pts] : sets)
    for (const auto& p : pts) {
      out << num(t) << ',';
      write_coords(out, p);
      out << '\n';
    }
  return out.str();
}

std::string points_csv(ManifoldId m, std::span<const ManifoldPoint> pts) {
  std::ostringstream out;
  out << coord_header(m) << '\n';
  for (const auto& p : pts) {
    write_coords(out, p);
    out << '\n';
  }
  return out.str();
}

std::string density_csv(const eval::DensityCurve& c) {
  std::ostringstream out;
  out << "grid_theta,density\n";
  for (std::size_t k = 0; k < c.grid.size(); ++k) out << num(c.grid[k]) << ',' << num(c.density[k]) << '\n';
  return out.str();
}

std::string loss_csv(const std::vector<LossRecord>& trace) {
  std::ostringstream out;
  out << "iteration,value\n";
  for (const auto& r : trace) out << r.iteration << ',' << num(r.value) << '\n';
  return out.str();
}

void record_solution(Output& out, const std::string& prefix) {
  for (const char* suffix : {"_potential.ckpt", "_field.ckpt", "_manifest.json"}) out.record(prefix + suffix);
}

std::vector<ManifoldPoint> draw(const DistributionSpec& spec, int count, Rng& rng) {
  return sample(spec, static_cast<std::size_t>(count), rng);
}

// --- transport ---------------------------------------------------------------

struct TransportProblem {
  DistributionSpec source;
  DistributionSpec target;
};

TransportProblem transport_problem(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentId::OtS1Gaussians: return {CircleModGaussian{0.0, 1.0}, CircleModGaussian{kPi, 1.0}};
    case ExperimentId::OtS1Mixture:
      return {CircleUniform{},
              CircleMixture{{{0.5, 0.0, cfg.mixture_stddev}, {0.5, kPi, cfg.mixture_stddev}}}};
    case ExperimentId::OtSE2: return {SE2BoxUniform{-2.0, -1.0, -0.5, 0.5}, SE2BoxUniform{1.0, 2.0, -0.5, 0.5}};
    case ExperimentId::OtSO3: return {SO3Curve{SO3CurveFamily::P}, SO3Curve{SO3CurveFamily::Q}};
    default: throw ContractError("not a transport experiment");
  }
}

nlohmann::json transport_metrics(const OtSolution& sol, const TransportProblem& prob, Rng& rng) {
  const ManifoldId m = sol.manifold;
  const auto src = sample(prob.source, kOracleSamples, rng);
  const auto pushed = transport(sol, src);
  const auto tgt = sample(prob.target, kOracleSamples, rng);
  const auto tgt2 = sample(prob.target, kOracleSamples, rng);
  double map_cost = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) map_cost += half_sq_dist(m, src[i], pushed[i]);
  map_cost /= static_cast<double>(src.size());
  nlohmann::json j = {
      {"oracle_samples", kOracleSamples},
      {"map_cost", map_cost},
      {"oracle_cost", eval::discrete_ot(src, tgt, m).cost},
      {"pushforward_w2", eval::wasserstein2(pushed, tgt, m)},
      {"resampling_w2", eval::wasserstein2(tgt2, tgt, m)},
  };
  if (m == ManifoldId::Circle) {
    const Eigen::MatrixXd u = field_values(m, sol.nets.field, src, Eigen::MatrixXd(static_cast<Eigen::Index>(src.size()), 0));
    // Displacement is -U; clockwise means a negative angular step.
    j["clockwise_fraction"] = static_cast<double>((u.col(0).array() > 0.0).count()) / static_cast<double>(src.size());
    const auto angles = eval::angles_of(pushed);
    j["pushforward_circular_mean"] = eval::circular_mean(angles).mean;
  }
  return j;
}

nlohmann::json run_transport(const ExperimentConfig& cfg, Output& out) {
  const TransportProblem prob = transport_problem(cfg);
  const ManifoldId m = experiment_manifold(cfg.experiment);
  Rng data_rng = seeded_stream(cfg.seed, kDataStream);
  Rng train_rng = seeded_stream(cfg.seed, kTrainStream);
  Rng eval_rng = seeded_stream(cfg.seed, kEvalStream);

  const auto source_data = draw(prob.source, cfg.train_samples, data_rng);
  const auto target_data = draw(prob.target, cfg.train_samples, data_rng);
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const OtSolution sol = train_ot(source_data, target_data, tc, train_rng);
  save_solution(sol, out.dir(), "ot");
  record_solution(out, "ot");
  out.write("loss.csv", loss_csv(sol.trace));

  const auto src = draw(prob.source, cfg.eval_samples, eval_rng);
  const auto tgt = draw(prob.target, cfg.eval_samples, eval_rng);
  std::vector<std::pair<double, std::vector<ManifoldPoint>>> sets;
  for (double t : kTrajectoryTimes) sets.emplace_back(t, trajectory(sol, src, t));
  out.write("samples.csv", samples_csv(m, sets));
  out.write("target_samples.csv", points_csv(m, tgt));
  if (m == ManifoldId::Circle) {
    const auto kde_grid = static_cast<std::size_t>(cfg.kde_grid);
    for (const auto& [t, pts] : sets)
      out.write("kde_t" + time_label(t) + ".csv", density_csv(eval::circular_kde(eval::angles_of(pts), cfg.kde_kappa, kde_grid)));
    out.write("kde_target.csv", density_csv(eval::circular_kde(eval::angles_of(tgt), cfg.kde_kappa, kde_grid)));
  }
  nlohmann::json metrics = transport_metrics(sol, prob, eval_rng);
  metrics["final_loss"] = sol.trace.empty() ? 0.0 : sol.trace.back().value;
  if (m == ManifoldId::SO3) {
    double worst = 0.0;
    for (const auto& p : sets.back().second) {
      const Eigen::Matrix3d& r = p.rotation();
      worst = std::max(worst, (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
      worst = std::max(worst, std::abs(r.determinant() - 1.0));
    }
    metrics["max_orthonormality_error"] = worst;
  }
  return metrics;
}

// --- static filtering ----------------------------------------------------------

struct StaticProblem {
  DistributionSpec prior;
  ObservationModel obs;
  ManifoldPoint truth;
};

Eigen::Matrix3d rotation_about_x(double a) {
  Eigen::Matrix3d r;
  r << 1.0, 0.0, 0.0, 0.0, std::cos(a), -std::sin(a), 0.0, std::sin(a), std::cos(a);
  return r;
}

StaticProblem static_problem(const ExperimentConfig& cfg) {
  StaticProblem p{CircleUniform{}, {}, ManifoldPoint::circle(cfg.truth_theta)};
  p.obs.noise_stddev = cfg.obs_noise;
  switch (cfg.experiment) {
    case ExperimentId::FilterS1Static: p.obs.kind = CircleWall{cfg.ell}; break;
    case ExperimentId::FilterSE2:
      p.prior = SE2BoxUniform{-1.0, 1.0, 0.0, 0.0};
      p.obs.kind = SE2Wall{};
      p.truth = ManifoldPoint::se2(cfg.truth_x, 0.0, cfg.truth_theta);
      break;
    case ExperimentId::FilterSO3:
      p.prior = SO3Uniform{};
      p.obs.kind = SO3Entries{};
      p.truth = ManifoldPoint::so3(rotation_about_x(cfg.truth_theta));
      break;
    default: throw ContractError("not a static filtering experiment");
  }
  validate(p.obs);
  return p;
}

std::string histogram_csv(const std::vector<ManifoldPoint>& pts, int bins, nlohmann::json& metrics) {
  struct Component {
    const char* name;
    int index;
  };
  // (R22, R23, R32) in row-major coordinates.
  constexpr Component comps[] = {{"r22", 4}, {"r23", 5}, {"r32", 7}};
  std::ostringstream out;
  out << "component,bin_lo,bin_hi,mass\n";
  const double width = 2.0 / bins;
  const double n = static_cast<double>(pts.size());
  for (const auto& c : comps) {
    std::vector<double> mass(static_cast<std::size_t>(bins), 0.0);
    for (const auto& p : pts) {
      const double v = p.coords()[static_cast<std::size_t>(c.index)];
      const int b = std::clamp(static_cast<int>((v + 1.0) / width), 0, bins - 1);
      mass[static_cast<std::size_t>(b)] += 1.0 / n;
    }
    for (int b = 0; b < bins; ++b)
      out << c.name << ',' << num(-1.0 + b * width) << ',' << num(-1.0 + (b + 1) * width) << ','
          << num(mass[static_cast<std::size_t>(b)]) << '\n';
  }
  // Mass near the values of the two rotations that explain the observation.
  const double s = 1.0 / std::sqrt(2.0);
  auto frac = [&](int index, auto pred) {
    double k = 0.0;
    for (const auto& p : pts)
      if (pred(p.coords()[static_cast<std::size_t>(index)])) k += 1.0;
    return k / n;
  };
  metrics["r22_within_0.15"] = frac(4, [&](double v) { return std::abs(v - s) <= 0.15; });
  metrics["r23_within_0.15"] = frac(5, [&](double v) { return std::abs(std::abs(v) - s) <= 0.15; });
  metrics["r32_within_0.15"] = frac(7, [&](double v) { return std::abs(std::abs(v) - s) <= 0.15; });
  metrics["r23_negative_fraction"] = frac(5, [](double v) { return v < 0.0; });
  metrics["r23_positive_fraction"] = frac(5, [](double v) { return v > 0.0; });
  return out.str();
}

nlohmann::json run_static_filter(const ExperimentConfig& cfg, Output& out) {
  const StaticProblem prob = static_problem(cfg);
  const ManifoldId m = experiment_manifold(cfg.experiment);
  Rng data_rng = seeded_stream(cfg.seed, kDataStream);
  Rng train_rng = seeded_stream(cfg.seed, kTrainStream);
  Rng eval_rng = seeded_stream(cfg.seed, kEvalStream);

  std::vector<JointSample> joint;
  joint.reserve(static_cast<std::size_t>(cfg.train_samples));
  for (int i = 0; i < cfg.train_samples; ++i) {
    ManifoldPoint x = sample_one(prob.prior, data_rng);
    Eigen::VectorXd y = observe(prob.obs, x, &data_rng);
    joint.push_back({std::move(x), std::move(y)});
  }
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  const ConditionalSolution sol = train_conditional(joint, tc, nullptr, train_rng);
  save_solution(sol, out.dir(), "conditional");
  record_solution(out, "conditional");
  out.write("loss.csv", loss_csv(sol.trace));

  const Eigen::VectorXd y = observe(prob.obs, prob.truth, cfg.noiseless_observation ? nullptr : &eval_rng);
  const auto prior = draw(prob.prior, cfg.eval_samples, eval_rng);
  const Eigen::MatrixXd cond = Eigen::MatrixXd::Ones(static_cast<Eigen::Index>(prior.size()), 1) * y.transpose();
  std::vector<std::pair<double, std::vector<ManifoldPoint>>> sets;
  for (double t : kTrajectoryTimes) sets.emplace_back(t, apply_field(m, sol.nets.field, prior, cond, t));
  const std::vector<ManifoldPoint>& post = sets.back().second;
  out.write("samples.csv", samples_csv(m, sets));

  std::ostringstream obs_csv;
  obs_csv << "index,value\n";
  for (Eigen::Index i = 0; i < y.size(); ++i) obs_csv << i + 1 << ',' << num(y(i)) << '\n';
  out.write("observation.csv", obs_csv.str());

  nlohmann::json metrics = {{"final_loss", sol.trace.empty() ? 0.0 : sol.trace.back().value}};
  if (m == ManifoldId::Circle) {
    const auto grid = static_cast<std::size_t>(cfg.kde_grid);
    const auto kde = eval::circular_kde(eval::angles_of(post), cfg.kde_kappa, grid);
    out.write("kde_prior.csv", density_csv(eval::circular_kde(eval::angles_of(prior), cfg.kde_kappa, grid)));
    out.write("kde_posterior.csv", density_csv(kde));
    out.write("oracle_posterior.csv", density_csv(eval::bayes_quadrature_circle(prob.obs, y, 2048)));
    const auto modes = eval::find_modes(kde);
    metrics["posterior_modes"] = modes;
    metrics["bimodal"] = modes.size() == 2;
  } else if (m == ManifoldId::SE2) {
    std::ostringstream pred;
    pred << "kind,value\n";
    const int n_obs = 0;
    auto within = [&](const std::vector<ManifoldPoint>& pts, const char* kind) {
      double k = 0.0;
      for (const auto& p : pts) {
        const double h = observe(prob.obs, p)(n_obs);
        pred << kind << ',' << num(h) << '\n';
        if (std::abs(h - y(n_obs)) <= 3.0 * prob.obs.noise_stddev) k += 1.0;
      }
      return k / static_cast<double>(pts.size());
    };
    metrics["prior_predictive_within_3sigma"] = within(prior, "prior");
    metrics["posterior_predictive_within_3sigma"] = within(post, "posterior");
    out.write("predictive.csv", pred.str());
  } else {
    out.write("histograms.csv", histogram_csv(post, cfg.histogram_bins, metrics));
  }
  return metrics;
}

// --- dynamic filtering -----------------------------------------------------------

nlohmann::json run_dynamic_filter(const ExperimentConfig& cfg, Output& out) {
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = cfg.seed_first; s <= cfg.seed_last; ++s) seeds.push_back(s);
  std::vector<bool> setups;
  if (cfg.velocity_setup != VelocitySetup::Unknown) setups.push_back(true);
  if (cfg.velocity_setup != VelocitySetup::Known) setups.push_back(false);

  nlohmann::json metrics = nlohmann::json::object();
  for (bool known : setups) {
    FilterScenario sc;
    sc.ell = cfg.ell;
    sc.velocity = cfg.velocity;
    sc.velocity_known = known;
    sc.process_noise = cfg.process_noise;
    sc.obs_noise = cfg.obs_noise;
    sc.initial_truth = cfg.initial_truth;
    sc.train = cfg.train;
    sc.warm_outer_iters = cfg.warm_outer_iters;
    const std::string label = known ? "known" : "unknown";

    std::ostringstream mse;
    mse << "step,method,mean_mse\n";
    std::ostringstream bimodal;
    bimodal << "step,method,seed,bimodal\n";
    nlohmann::json setup_metrics;
    for (FilterMethod method : {FilterMethod::OT, FilterMethod::SIR, FilterMethod::EnKF}) {
      const std::string name(method_name(method));
      const FilterRunSummary summary = run_filter(method, sc, cfg.steps, cfg.particles, seeds);
      int bimodal_count = 0;
      int checked = 0;
      for (const auto& run : summary.runs) {
        std::ostringstream csv;
        csv << "step,method,seed,mse,truth_coord_1,obs_1\n";
        for (std::size_t k = 0; k < run.squared_error.size(); ++k) {
          csv << k << ',' << name << ',' << run.seed << ',' << num(run.squared_error[k]) << ','
              << num(run.truth[k].theta()) << ',';
          if (run.observations[k].size() > 0) csv << num(run.observations[k](0));
          csv << '\n';
          const std::vector<double> angles = eval::angles_of(run.ensembles[k].particles);
          const eval::DensityCurve kde = run.ensembles[k].weights.empty()
                                             ? eval::circular_kde(angles, cfg.kde_kappa)
                                             : eval::circular_kde(angles, cfg.kde_kappa, 512, run.ensembles[k].weights);
          const bool bi = eval::bimodality(kde);
          bimodal << k << ',' << name << ',' << run.seed << ',' << (bi ? 1 : 0) << '\n';
          if (k > 5) {
            ++checked;
            bimodal_count += bi ? 1 : 0;
          }
        }
        const std::string stem = "filter_" + label + "_" + name + "_seed" + std::to_string(run.seed);
        out.write(stem + ".csv", csv.str());
        for (int s : cfg.snapshot_steps) {
          if (s > cfg.steps) continue;
          const Ensemble& e = run.ensembles[static_cast<std::size_t>(s)];
          std::ostringstream pc;
          pc << "particle,theta" << (e.weights.empty() ? "" : ",weight") << '\n';
          for (std::size_t i = 0; i < e.particles.size(); ++i) {
            pc << i << ',' << num(e.particles[i].theta());
            if (!e.weights.empty()) pc << ',' << num(e.weights[i]);
            pc << '\n';
          }
          out.write("particles_" + label + "_" + name + "_seed" + std::to_string(run.seed) + "_step" +
                        std::to_string(s) + ".csv",
                    pc.str());
        }
      }
      for (std::size_t k = 0; k < summary.mean_mse.size(); ++k)
        mse << k << ',' << name << ',' << num(summary.mean_mse[k]) << '\n';
      setup_metrics[name] = {{"final_mean_mse", summary.mean_mse.back()},
                             {"bimodal_fraction_after_step5",
                              checked ? static_cast<double>(bimodal_count) / checked : 0.0}};
    }
    out.write("mse_" + label + ".csv", mse.str());
    out.write("bimodality_" + label + ".csv", bimodal.str());
    metrics[label] = setup_metrics;
  }
  return metrics;
}

}  // namespace

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentOutcome run_experiment(const ExperimentConfig& cfg) {
  ExperimentOutcome outcome;
  const auto start = std::chrono::steady_clock::now();
  try {
    validate(cfg);
    Output out(cfg.out_dir);
    switch (cfg.experiment) {
      case ExperimentId::OtS1Gaussians:
      case ExperimentId::OtS1Mixture:
      case ExperimentId::OtSE2:
      case ExperimentId::OtSO3: outcome.metrics = run_transport(cfg, out); break;
      case ExperimentId::FilterS1Static:
      case ExperimentId::FilterSE2:
      case ExperimentId::FilterSO3: outcome.metrics = run_static_filter(cfg, out); break;
      case ExperimentId::FilterS1Dynamic: outcome.metrics = run_dynamic_filter(cfg, out); break;
    }
    const std::chrono::duration<double> wall = std::chrono::steady_clock::now() - start;
    const nlohmann::json manifest = {{"experiment", experiment_name(cfg.experiment)},
                                     {"version", MANIFOLD_OT_VERSION},
                                     {"config", to_json(cfg)},
                                     {"wall_seconds", wall.count()},
                                     {"metrics", outcome.metrics},
                                     {"files", out.listing()}};
    std::ofstream mf(out.dir() / "manifest.json", std::ios::binary);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw std::runtime_error("cannot write manifest.json");
    outcome.files = out.names();
  } catch (const ConfigError& e) {
    outcome.exit_code = kExitConfigError;
    outcome.message = std::string("configuration error: ") + e.what();
  } catch (const NumericalError& e) {
    outcome.exit_code = kExitNumericalError;
    outcome.message = std::string("numerical failure: ") + e.what();
  } catch (const std::exception& e) {
    outcome.exit_code = kExitFailure;
    outcome.message = std::string("error: ") + e.what();
  }
  return outcome;
}

std::vector<ExperimentOutcome> run_experiment_seeds(const ExperimentConfig& cfg, std::uint64_t first,
                                                    std::uint64_t last, unsigned workers) {
  if (first > last) throw ConfigError("seed range is empty");
  const std::size_t count = static_cast<std::size_t>(last - first) + 1;
  std::vector<ExperimentOutcome> outcomes(count);
  std::mutex mu;
  std::size_t next = 0;
  auto worker = [&] {
    while (true) {
      std::size_t i = 0;
      {
        std::lock_guard lock(mu);
        if (next >= count) return;
        i = next++;
      }
      ExperimentConfig c = cfg;
      c.seed = first + i;
      c.out_dir = cfg.out_dir / ("seed-" + std::to_string(c.seed));
      outcomes[i] = run_experiment(c);
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n; ++w) pool.emplace_back(worker);
  }
  return outcomes;
}

}  // namespace manifold_ot
