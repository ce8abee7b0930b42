#include "manifold_ot/conditional.hpp"

#include <algorithm>
#include <numeric>

#include "manifold_ot/errors.hpp"
#include "manifold_ot/serialization.hpp"

namespace manifold_ot {

namespace {

Batch to_batch(std::span<const JointSample> samples) {
  Batch b;
  b.points.reserve(samples.size());
  const Eigen::Index m = samples.empty() ? 0 : samples.front().y.size();
  b.cond.resize(static_cast<Eigen::Index>(samples.size()), m);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].y.size() != m) throw ContractError("observations in one batch must share a length");
    b.points.push_back(samples[i].x);
    b.cond.row(static_cast<Eigen::Index>(i)) = samples[i].y.transpose();
  }
  return b;
}

}  // namespace

std::vector<JointSample> independent_coupling(std::span<const JointSample> batch, Rng& rng) {
  if (batch.size() < 2) throw ContractError("independent coupling needs at least two samples");
  std::vector<std::size_t> perm(batch.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<JointSample> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) out.push_back({batch[i].x, batch[perm[i]].y});
  return out;
}

ObjectiveResult conditional_objective(ManifoldId m, const nn::Network& potential, const nn::Network& field,
                                      std::span<const JointSample> joint, std::span<const JointSample> independent) {
  if (joint.empty() || independent.empty()) throw ContractError("empty batch");
  const PotentialField nets{potential, field};
  return maxmin_objective(m, nets, to_batch(joint), to_batch(independent), true, true);
}

ConditionalSolution train_conditional(const JointSource& joint, const TrainConfig& cfg,
                                      const ConditionalSolution* warm, Rng& rng) {
  validate(cfg);
  ConditionalSolution sol;
  sol.config = cfg;
  const auto n = static_cast<std::size_t>(cfg.batch_size);
  if (n < 2) throw ConfigError("conditional training needs batch_size >= 2");

  const auto* data = std::get_if<std::vector<JointSample>>(&joint);
  const auto* gen = std::get_if<JointGenerator>(&joint);
  if (data) {
    if (data->size() < n) throw ContractError("dataset is smaller than the batch size");
    sol.manifold = data->front().x.manifold();
    sol.obs_dim = static_cast<int>(data->front().y.size());
    for (const auto& s : *data) {
      require_valid(sol.manifold, s.x);
      if (s.y.size() != sol.obs_dim) throw ContractError("observations must share a length");
    }
  } else {
    if (!gen->draw) throw ContractError("joint generator has no draw function");
    sol.manifold = gen->manifold;
    sol.obs_dim = gen->obs_dim;
  }

  if (warm) {
    if (warm->manifold != sol.manifold || warm->obs_dim != sol.obs_dim)
      throw ContractError("warm start solution does not match the problem");
    sol.nets = warm->nets;
  } else {
    sol.nets = make_potential_field(sol.manifold, sol.obs_dim, cfg, rng);
  }

  std::vector<JointSample> scratch(n);
  const BatchSampler sampler = [&](Rng& r, Batch& tgt, Batch& src) {
    if (data) {
      std::uniform_int_distribution<std::size_t> pick(0, data->size() - 1);
      for (auto& s : scratch) s = (*data)[pick(r)];
    } else {
      for (auto& s : scratch) s = gen->draw(r);
    }
    tgt = to_batch(scratch);
    src = to_batch(independent_coupling(scratch, r));
  };
  sol.trace = run_maxmin(sol.manifold, sol.nets, cfg, sampler, rng);
  return sol;
}

std::vector<ManifoldPoint> posterior_sample(const ConditionalSolution& sol, std::span<const ManifoldPoint> prior,
                                            const Eigen::VectorXd& y) {
  if (y.size() != sol.obs_dim) throw ContractError("observation length does not match the solution");
  for (const auto& p : prior)
    if (p.manifold() != sol.manifold) throw ContractError("prior sample is not on the solution's manifold");
  const Eigen::MatrixXd cond = y.transpose().replicate(static_cast<Eigen::Index>(prior.size()), 1);
  return apply_field(sol.manifold, sol.nets.field, prior, cond, 1.0);
}

std::vector<JointSample> apply_block_triangular(const ConditionalSolution& sol, std::span<const JointSample> pairs) {
  const Batch b = to_batch(pairs);
  if (!pairs.empty() && b.cond.cols() != sol.obs_dim)
    throw ContractError("observation length does not match the solution");
  const auto moved = apply_field(sol.manifold, sol.nets.field, b.points, b.cond, 1.0);
  std::vector<JointSample> out;
  out.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) out.push_back({moved[i], pairs[i].y});
  return out;
}

void save_solution(const ConditionalSolution& sol, const std::filesystem::path& dir, const std::string& prefix) {
  save_pair(sol.nets, solution_manifest(sol.manifold, sol.obs_dim, sol.config, sol.trace), dir, prefix);
}

ConditionalSolution load_conditional_solution(const std::filesystem::path& dir, const std::string& prefix) {
  ConditionalSolution sol;
  const nlohmann::json manifest = load_pair(sol.nets, dir, prefix);
  sol.manifold = manifold_from_name(manifest.at("manifold").get<std::string>());
  sol.obs_dim = manifest.at("obs_dim").get<int>();
  sol.config = train_config_from_json(manifest.at("config"));
  sol.trace = trace_from_json(manifest.at("trace"));
  return sol;
}

}  // namespace manifold_ot
