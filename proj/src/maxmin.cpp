#include "manifold_ot/maxmin.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "manifold_ot/errors.hpp"

namespace manifold_ot {

void validate(const TrainConfig& cfg) {
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) throw ConfigError("lr must be positive");
  if (cfg.inner_min_iters < 1) throw ConfigError("inner_min_iters must be at least 1");
  if (cfg.outer_max_iters < 1) throw ConfigError("outer_max_iters must be positive");
  if (cfg.block_count < 1 || cfg.block_count > 2) throw ConfigError("block_count must be 1 or 2");
  if (cfg.block_width < 1) throw ConfigError("block_width must be positive");
  if (cfg.log_every < 1) throw ConfigError("log_every must be positive");
  if (!(cfg.final_lr_ratio > 0.0 && cfg.final_lr_ratio <= 1.0)) throw ConfigError("final_lr_ratio must lie in (0, 1]");
  if (!(cfg.anneal_start >= 0.0 && cfg.anneal_start < 1.0)) throw ConfigError("anneal_start must lie in [0, 1)");
}

double scheduled_lr(const TrainConfig& cfg, int outer) {
  if (cfg.final_lr_ratio == 1.0) return cfg.lr;
  const double begin = cfg.anneal_start * cfg.outer_max_iters;
  const double span = cfg.outer_max_iters - begin;
  const double frac = std::clamp((outer - begin) / span, 0.0, 1.0);
  return cfg.lr * std::pow(cfg.final_lr_ratio, frac);
}

Eigen::MatrixXd network_inputs(ManifoldId m, std::span<const ManifoldPoint> points, const Eigen::MatrixXd& cond) {
  const auto n = static_cast<Eigen::Index>(points.size());
  const int e = embed_dim(m);
  if (cond.cols() > 0 && cond.rows() != n) throw ContractError("conditioning rows do not match the point count");
  Eigen::MatrixXd x(n, e + cond.cols());
  std::array<double, 9> buf{};
  for (Eigen::Index i = 0; i < n; ++i) {
    embed(m, points[static_cast<std::size_t>(i)], std::span<double>(buf.data(), static_cast<std::size_t>(e)));
    for (int j = 0; j < e; ++j) x(i, j) = buf[static_cast<std::size_t>(j)];
  }
  if (cond.cols() > 0) x.rightCols(cond.cols()) = cond;
  return x;
}

PotentialField make_potential_field(ManifoldId m, int cond_dim, const TrainConfig& cfg, Rng& rng) {
  const int in = embed_dim(m) + cond_dim;
  nn::NetSpec phi{in, cfg.block_count, cfg.block_width, 1};
  nn::NetSpec u{in, cfg.block_count, cfg.block_width, tangent_dim(m)};
  PotentialField nets;
  nets.potential = nn::Network(phi, rng, nn::InitMode::ZeroHead);
  nets.field = nn::Network(u, rng, nn::InitMode::ZeroHead);
  return nets;
}

ObjectiveResult maxmin_objective(ManifoldId m, const PotentialField& nets, const Batch& target, const Batch& source,
                                 bool want_potential, bool want_field) {
  if (source.points.empty()) throw ContractError("empty source batch");
  if (want_potential && target.points.empty()) throw ContractError("empty target batch");
  const int e = embed_dim(m);
  const int n = tangent_dim(m);
  const Eigen::Index cond_dim = source.cond.cols();
  if (!target.points.empty() && target.cond.cols() != cond_dim)
    throw ContractError("target and source batches have different observation lengths");

  ObjectiveResult r;
  if (want_potential) r.potential_grad = nn::Grads::Zero(nets.potential.params().size());
  if (want_field) r.field_grad = nn::Grads::Zero(nets.field.params().size());

  if (!target.points.empty()) {
    const auto nt = static_cast<double>(target.points.size());
    nn::Tape tape;
    const Eigen::MatrixXd x = network_inputs(m, target.points, target.cond);
    const Eigen::MatrixXd f = nets.potential.forward(x, tape);
    r.value += f.mean();
    r.max_abs_potential = f.cwiseAbs().maxCoeff();
    if (want_potential) {
      nets.potential.backward(tape, Eigen::MatrixXd::Constant(f.rows(), 1, 1.0 / nt), &r.potential_grad);
    }
  }

  const auto ns_count = static_cast<Eigen::Index>(source.points.size());
  const auto ns = static_cast<double>(ns_count);
  nn::Tape field_tape;
  const Eigen::MatrixXd xs = network_inputs(m, source.points, source.cond);
  const Eigen::MatrixXd v = nets.field.forward(xs, field_tape);

  Eigen::MatrixXd moved(ns_count, e + cond_dim);
  Eigen::MatrixXd cost_grad(ns_count, n);
  std::vector<EmbedJacobian> jac(static_cast<std::size_t>(ns_count));
  double cost_sum = 0.0;
  Tangent w(n), gc(n);
  for (Eigen::Index i = 0; i < ns_count; ++i) {
    w = -v.row(i).transpose();
    r.max_field_norm = std::max(r.max_field_norm, w.norm());
    const ExpEmbedding ee = exp_embed_with_jacobian(m, source.points[static_cast<std::size_t>(i)], w);
    cost_sum += displacement_cost(m, w, &gc);
    cost_grad.row(i) = gc.transpose();
    moved.row(i).head(e) = ee.features.transpose();
    if (cond_dim > 0) moved.row(i).tail(cond_dim) = source.cond.row(i);
    jac[static_cast<std::size_t>(i)] = ee.jacobian;
  }

  nn::Tape moved_tape;
  const Eigen::MatrixXd g = nets.potential.forward(moved, moved_tape);
  r.value += (cost_sum - g.sum()) / ns;
  r.max_abs_potential = std::max(r.max_abs_potential, g.cwiseAbs().maxCoeff());

  if (want_potential || want_field) {
    const Eigen::MatrixXd cot = Eigen::MatrixXd::Constant(ns_count, 1, -1.0 / ns);
    const Eigen::MatrixXd g_in =
        nets.potential.backward(moved_tape, cot, want_potential ? &r.potential_grad : nullptr);
    if (want_field) {
      // d value / d w_i, then w = -U.
      Eigen::MatrixXd g_field(ns_count, n);
      for (Eigen::Index i = 0; i < ns_count; ++i) {
        const Eigen::VectorXd dw = cost_grad.row(i).transpose() / ns +
                                   jac[static_cast<std::size_t>(i)].transpose() * g_in.row(i).head(e).transpose();
        g_field.row(i) = -dw.transpose();
      }
      nets.field.backward(field_tape, g_field, &r.field_grad);
    }
  }
  return r;
}

namespace {

void check_finite(const ObjectiveResult& r, int outer, const char* phase) {
  if (std::isfinite(r.value)) return;
  std::ostringstream msg;
  msg << "non-finite objective at outer iteration " << outer << " (" << phase
      << " step): max |U| = " << r.max_field_norm << ", max |phi| = " << r.max_abs_potential;
  throw NumericalError(msg.str());
}

}  // namespace

std::vector<LossRecord> run_maxmin(ManifoldId m, PotentialField& nets, const TrainConfig& cfg,
                                   const BatchSampler& sampler, Rng& rng) {
  validate(cfg);
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  nn::AdamState phi_state(static_cast<std::size_t>(nets.potential.params().size()), adam_cfg);
  nn::AdamState u_state(static_cast<std::size_t>(nets.field.params().size()), adam_cfg);

  std::vector<LossRecord> trace;
  Batch target, source;
  for (int outer = 1; outer <= cfg.outer_max_iters; ++outer) {
    // One minibatch per outer iteration: the inner loop minimises over U on the
    // same samples the ascent step then scores.
    sampler(rng, target, source);
    phi_state.config.lr = u_state.config.lr = scheduled_lr(cfg, outer);
    for (int k = 0; k < cfg.inner_min_iters; ++k) {
      const ObjectiveResult r = maxmin_objective(m, nets, Batch{}, source, false, true);
      check_finite(r, outer, "min");
      nn::adam_step(nets.field.params(), r.field_grad, u_state);
    }
    ObjectiveResult r = maxmin_objective(m, nets, target, source, true, false);
    check_finite(r, outer, "max");
    r.potential_grad = -r.potential_grad;  // ascent
    nn::adam_step(nets.potential.params(), r.potential_grad, phi_state);
    if (outer % cfg.log_every == 0 || outer == cfg.outer_max_iters) trace.push_back({outer, r.value});
  }
  return trace;
}

Eigen::MatrixXd field_values(ManifoldId m, const nn::Network& field, std::span<const ManifoldPoint> points,
                             const Eigen::MatrixXd& cond) {
  return field.forward(network_inputs(m, points, cond));
}

std::vector<ManifoldPoint> apply_field(ManifoldId m, const nn::Network& field, std::span<const ManifoldPoint> points,
                                       const Eigen::MatrixXd& cond, double t) {
  std::vector<ManifoldPoint> out;
  out.reserve(points.size());
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < points.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, points.size() - start);
    const auto chunk = points.subspan(start, len);
    const Eigen::MatrixXd c =
        cond.cols() > 0 ? Eigen::MatrixXd(cond.middleRows(static_cast<Eigen::Index>(start),
                                                          static_cast<Eigen::Index>(len)))
                        : Eigen::MatrixXd(static_cast<Eigen::Index>(len), 0);
    const Eigen::MatrixXd v = field_values(m, field, chunk, c);
    Tangent w(tangent_dim(m));
    for (std::size_t i = 0; i < len; ++i) {
      w = -t * v.row(static_cast<Eigen::Index>(i)).transpose();
      out.push_back(exp_map(m, chunk[i], w));
    }
  }
  return out;
}

}  // namespace manifold_ot
