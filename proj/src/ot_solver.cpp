#include "manifold_ot/ot_solver.hpp"

#include <fstream>
#include <json.hpp>

#include "manifold_ot/errors.hpp"
#include "manifold_ot/serialization.hpp"

namespace manifold_ot {

namespace {

void fill_batch(const SampleSource& src, std::size_t n, Rng& rng, Batch& out) {
  out.points.clear();
  out.points.reserve(n);
  if (const auto* spec = std::get_if<DistributionSpec>(&src)) {
    for (std::size_t i = 0; i < n; ++i) out.points.push_back(sample_one(*spec, rng));
  } else {
    const auto& data = std::get<std::vector<ManifoldPoint>>(src);
    std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
    for (std::size_t i = 0; i < n; ++i) out.points.push_back(data[pick(rng)]);
  }
  out.cond.resize(static_cast<Eigen::Index>(n), 0);
}

void check_source(const SampleSource& src) {
  if (const auto* spec = std::get_if<DistributionSpec>(&src)) {
    validate(*spec);
    return;
  }
  const auto& data = std::get<std::vector<ManifoldPoint>>(src);
  if (data.empty()) throw ContractError("empty sample list");
  const ManifoldId m = data.front().manifold();
  for (const auto& p : data) require_valid(m, p);
}

}  // namespace

ManifoldId manifold_of(const SampleSource& source) {
  if (const auto* spec = std::get_if<DistributionSpec>(&source)) return manifold_of(*spec);
  const auto& data = std::get<std::vector<ManifoldPoint>>(source);
  if (data.empty()) throw ContractError("empty sample list");
  return data.front().manifold();
}

ObjectiveResult ot_objective(ManifoldId m, const nn::Network& potential, const nn::Network& field,
                             std::span<const ManifoldPoint> source, std::span<const ManifoldPoint> target) {
  if (source.empty() || target.empty()) throw ContractError("empty batch");
  PotentialField nets{potential, field};
  Batch tgt{{target.begin(), target.end()}, Eigen::MatrixXd(static_cast<Eigen::Index>(target.size()), 0)};
  Batch src{{source.begin(), source.end()}, Eigen::MatrixXd(static_cast<Eigen::Index>(source.size()), 0)};
  return maxmin_objective(m, nets, tgt, src, true, true);
}

OtSolution train_ot(const SampleSource& source, const SampleSource& target, const TrainConfig& cfg, Rng& rng) {
  validate(cfg);
  check_source(source);
  check_source(target);
  const ManifoldId m = manifold_of(source);
  if (manifold_of(target) != m) throw ContractError("source and target live on different manifolds");

  OtSolution sol;
  sol.manifold = m;
  sol.config = cfg;
  sol.nets = make_potential_field(m, 0, cfg, rng);
  const auto n = static_cast<std::size_t>(cfg.batch_size);
  const BatchSampler sampler = [&](Rng& r, Batch& tgt, Batch& src) {
    fill_batch(source, n, r, src);
    fill_batch(target, n, r, tgt);
  };
  sol.trace = run_maxmin(m, sol.nets, cfg, sampler, rng);
  return sol;
}

OtSolution train_ot(const SampleSource& source, const SampleSource& target, const TrainConfig& cfg) {
  Rng rng(cfg.seed);
  return train_ot(source, target, cfg, rng);
}

ManifoldPoint transport(const OtSolution& sol, const ManifoldPoint& z) { return trajectory(sol, z, 1.0); }

std::vector<ManifoldPoint> transport(const OtSolution& sol, std::span<const ManifoldPoint> points) {
  return trajectory(sol, points, 1.0);
}

ManifoldPoint trajectory(const OtSolution& sol, const ManifoldPoint& z, double t) {
  return trajectory(sol, std::span<const ManifoldPoint>(&z, 1), t).front();
}

std::vector<ManifoldPoint> trajectory(const OtSolution& sol, std::span<const ManifoldPoint> points, double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw ContractError("trajectory time must lie in [0, 1]");
  for (const auto& p : points)
    if (p.manifold() != sol.manifold) throw ContractError("point is not on the solution's manifold");
  return apply_field(sol.manifold, sol.nets.field, points,
                     Eigen::MatrixXd(static_cast<Eigen::Index>(points.size()), 0), t);
}

void save_solution(const OtSolution& sol, const std::filesystem::path& dir, const std::string& prefix) {
  nlohmann::json manifest = solution_manifest(sol.manifold, 0, sol.config, sol.trace);
  save_pair(sol.nets, manifest, dir, prefix);
}

OtSolution load_solution(const std::filesystem::path& dir, const std::string& prefix) {
  OtSolution sol;
  const nlohmann::json manifest = load_pair(sol.nets, dir, prefix);
  sol.manifold = manifold_from_name(manifest.at("manifold").get<std::string>());
  sol.config = train_config_from_json(manifest.at("config"));
  sol.trace = trace_from_json(manifest.at("trace"));
  return sol;
}

}  // namespace manifold_ot
