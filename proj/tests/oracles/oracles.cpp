#include "oracles.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "manifold_ot/conditional.hpp"
#include "manifold_ot/evaluation.hpp"
#include "manifold_ot/filters.hpp"
#include "manifold_ot/ot_solver.hpp"

namespace manifold_ot::oracle {

Eigen::Matrix3d series_exp(const Eigen::Matrix3d& a, int terms) {
  Eigen::Matrix3d sum = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d term = Eigen::Matrix3d::Identity();
  for (int k = 1; k <= terms; ++k) {
    term = term * a / static_cast<double>(k);
    sum += term;
  }
  return sum;
}

BruteAssignment brute_force_assignment(const Eigen::MatrixXd& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  BruteAssignment best{std::numeric_limits<double>::infinity(), perm};
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      total += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(perm[i]));
    if (total < best.total) best = {total, perm};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double central_difference(const std::function<double(double)>& f, double h) {
  return (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h);
}

double relative_error(double a, double b) { return std::abs(a - b) / (std::max(std::abs(a), std::abs(b)) + 1e-8); }

Tangent random_tangent(ManifoldId m, double max_norm, Rng& rng) {
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tangent v(tangent_dim(m));
  switch (m) {
    case ManifoldId::Circle: v(0) = max_norm * (2.0 * unit(rng) - 1.0); break;
    case ManifoldId::SE2:
      v(0) = 2.0 * normal(rng);
      v(1) = 2.0 * normal(rng);
      v(2) = max_norm * (2.0 * unit(rng) - 1.0);
      break;
    case ManifoldId::SO3: {
      Eigen::Vector3d axis(normal(rng), normal(rng), normal(rng));
      axis.normalize();
      v = axis * (max_norm * unit(rng));
      break;
    }
  }
  return v;
}

ManifoldPoint random_point(ManifoldId m, Rng& rng) {
  std::uniform_real_distribution<double> angle(0.0, kTwoPi);
  std::normal_distribution<double> normal;
  switch (m) {
    case ManifoldId::Circle: return ManifoldPoint::circle(angle(rng));
    case ManifoldId::SE2: return ManifoldPoint::se2(3.0 * normal(rng), 3.0 * normal(rng), angle(rng));
    case ManifoldId::SO3: {
      // Haar-independent construction: QR of a Gaussian matrix with a sign fix.
      Eigen::Matrix3d g;
      for (int i = 0; i < 9; ++i) g(i / 3, i % 3) = normal(rng);
      Eigen::HouseholderQR<Eigen::Matrix3d> qr(g);
      Eigen::Matrix3d q = qr.householderQ();
      if (q.determinant() < 0.0) q.col(0) = -q.col(0);
      return ManifoldPoint::so3(q);
    }
  }
  return ManifoldPoint::circle(0.0);
}

nn::Network random_network(const nn::NetSpec& spec, double scale, Rng& rng) {
  std::normal_distribution<double> normal(0.0, scale);
  nn::Params p(static_cast<Eigen::Index>(nn::layout_of(spec).size));
  for (auto& x : p) x = normal(rng);
  return nn::Network(spec, std::move(p));
}

nn::Network affine_network(const Eigen::MatrixXd& head, const Eigen::VectorXd& bias) {
  const int in = static_cast<int>(head.cols()), out = static_cast<int>(head.rows());
  const nn::NetSpec spec{in, 1, in, out};
  const nn::ParamLayout layout = nn::layout_of(spec);
  nn::Params p = nn::Params::Zero(static_cast<Eigen::Index>(layout.size));
  for (const auto& s : layout.segments) {
    double* at = p.data() + s.offset;
    if (s.name == "adapter.weight") Eigen::Map<Eigen::MatrixXd>(at, s.rows, s.cols).setIdentity();
    if (s.name == "head.weight") Eigen::Map<Eigen::MatrixXd>(at, s.rows, s.cols) = head;
    if (s.name == "head.bias") Eigen::Map<Eigen::VectorXd>(at, s.rows) = bias;
  }
  return nn::Network(spec, std::move(p));
}

nn::Network constant_network(int input_dim, const Eigen::VectorXd& value) {
  return affine_network(Eigen::MatrixXd::Zero(value.size(), input_dim), value);
}

namespace {

Eigen::VectorXd random_vector(Eigen::Index n, Rng& rng) {
  std::normal_distribution<double> normal;
  return Eigen::VectorXd::NullaryExpr(n, [&] { return normal(rng); });
}

DistributionSpec broad_spec(ManifoldId m) {
  switch (m) {
    case ManifoldId::Circle: return CircleUniform{};
    case ManifoldId::SE2: return SE2BoxUniform{-1.0, 1.0, -1.0, 1.0};
    case ManifoldId::SO3: return SO3Uniform{};
  }
  return CircleUniform{};
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(3);
  s << v;
  return s.str();
}

// Shared probe loop: f(eps) evaluates the objective at params + eps * direction.
template <class Objective>
double probe_pair(const nn::Network& phi, const nn::Network& field, Objective&& objective, int probes, Rng& rng) {
  const ObjectiveResult base = objective(phi, field);
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    const Eigen::VectorXd dp = random_vector(phi.params().size(), rng);
    const Eigen::VectorXd df = random_vector(field.params().size(), rng);
    const double analytic = base.potential_grad.dot(dp) + base.field_grad.dot(df);
    const double numeric = central_difference([&](double e) {
      const nn::Network p(phi.spec(), phi.params() + e * dp);
      const nn::Network f(field.spec(), field.params() + e * df);
      return objective(p, f).value;
    });
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return worst;
}

}  // namespace

double network_gradient_error(const nn::NetSpec& spec, int probes, Rng& rng) {
  const nn::Network net = random_network(spec, 0.5, rng);
  const Eigen::MatrixXd x = Eigen::MatrixXd::NullaryExpr(8, spec.input_dim, [&] { return random_vector(1, rng)(0); });
  const Eigen::MatrixXd cot =
      Eigen::MatrixXd::NullaryExpr(8, spec.output_dim, [&] { return random_vector(1, rng)(0); });
  const nn::Grads g = nn::backward(net, x, cot);
  double worst = 0.0;
  for (int k = 0; k < probes; ++k) {
    const Eigen::VectorXd d = random_vector(net.params().size(), rng);
    const double numeric = central_difference([&](double e) {
      const nn::Network n(spec, net.params() + e * d);
      return (n.forward(x).array() * cot.array()).sum();
    });
    worst = std::max(worst, relative_error(g.dot(d), numeric));
  }
  return worst;
}

double ot_objective_gradient_error(ManifoldId m, int probes, Rng& rng) {
  const int in = embed_dim(m);
  const nn::Network phi = random_network({in, 2, 32, 1}, 0.3, rng);
  // Small fields keep exp(-U) clear of the cut locus, where the cost has a kink.
  const nn::Network field = random_network({in, 2, 32, tangent_dim(m)}, 0.1, rng);
  const auto source = sample(broad_spec(m), 6, rng);
  const auto target = sample(broad_spec(m), 5, rng);
  return probe_pair(
      phi, field,
      [&](const nn::Network& p, const nn::Network& f) { return ot_objective(m, p, f, source, target); }, probes, rng);
}

double conditional_objective_gradient_error(ManifoldId m, int obs_dim, int probes, Rng& rng) {
  const int in = embed_dim(m) + obs_dim;
  const nn::Network phi = random_network({in, 2, 32, 1}, 0.3, rng);
  // Small fields keep exp(-U) clear of the cut locus, where the cost has a kink.
  const nn::Network field = random_network({in, 2, 32, tangent_dim(m)}, 0.1, rng);
  std::vector<JointSample> joint;
  for (int i = 0; i < 6; ++i) joint.push_back({sample_one(broad_spec(m), rng), random_vector(obs_dim, rng)});
  const auto indep = independent_coupling(joint, rng);
  return probe_pair(
      phi, field,
      [&](const nn::Network& p, const nn::Network& f) { return conditional_objective(m, p, f, joint, indep); },
      probes, rng);
}

std::vector<CheckResult> geometry_suite(int samples, Rng& rng) {
  std::vector<CheckResult> out;
  for (ManifoldId m : {ManifoldId::Circle, ManifoldId::SE2, ManifoldId::SO3}) {
    double worst = 0.0;
    for (int i = 0; i < samples; ++i) {
      const ManifoldPoint z = random_point(m, rng);
      const Tangent v = random_tangent(m, kPi * (1.0 - 1e-9), rng);
      worst = std::max(worst, (log_map(m, z, exp_map(m, z, v)) - v).cwiseAbs().maxCoeff());
    }
    out.push_back({std::string("exp/log round trip ") + std::string(manifold_name(m)), worst < 1e-8,
                   "max error " + fmt(worst)});

    double asym = 0.0, tri = 0.0, self = 0.0;
    for (int i = 0; i < samples; ++i) {
      const ManifoldPoint a = random_point(m, rng), b = random_point(m, rng), c = random_point(m, rng);
      const double ab = geodesic_dist(m, a, b), ba = geodesic_dist(m, b, a);
      asym = std::max(asym, std::abs(ab - ba));
      tri = std::min(tri, geodesic_dist(m, a, c) + geodesic_dist(m, c, b) - ab);
      self = std::max(self, geodesic_dist(m, a, a));
    }
    out.push_back({std::string("metric axioms ") + std::string(manifold_name(m)),
                   asym <= 1e-12 && tri >= -1e-9 && self <= 1e-12,
                   "asymmetry " + fmt(asym) + ", triangle slack " + fmt(tri) + ", d(z,z) " + fmt(self)});
  }

  double rod = 0.0, dist = 0.0, closure = 0.0;
  for (int i = 0; i < samples; ++i) {
    const Tangent w = random_tangent(ManifoldId::SO3, kPi, rng);
    const Eigen::Vector3d w3 = w;
    rod = std::max(rod, (rodrigues(w3) - series_exp(hat(w3))).cwiseAbs().maxCoeff());
    const ManifoldPoint r = random_point(ManifoldId::SO3, rng);
    const ManifoldPoint r2 = exp_map(ManifoldId::SO3, r, w);
    dist = std::max(dist, std::abs(geodesic_dist(ManifoldId::SO3, r, r2) - std::sqrt(2.0) * w3.norm()));
  }
  for (double norm : {1e-12, kPi - 1e-6, 1.0}) {
    for (int i = 0; i < 50; ++i) {
      Tangent w = random_tangent(ManifoldId::SO3, 1.0, rng);
      w = w.normalized() * norm;
      const Eigen::Matrix3d r = exp_map(ManifoldId::SO3, random_point(ManifoldId::SO3, rng), w).rotation();
      closure = std::max(closure, (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff());
      closure = std::max(closure, std::abs(r.determinant() - 1.0));
    }
  }
  out.push_back({"Rodrigues vs power series", rod < 1e-8, "max entry error " + fmt(rod)});
  out.push_back({"SO3 distance = sqrt(2)|w|", dist < 1e-8, "max error " + fmt(dist)});
  out.push_back({"SO3 closure", closure < 1e-9, "max orthonormality error " + fmt(closure)});
  return out;
}

std::vector<CheckResult> gradient_suite(int probes, Rng& rng) {
  std::vector<CheckResult> out;
  auto add = [&](const std::string& name, double err) {
    out.push_back({name, err < 1e-4, "worst relative error " + fmt(err) + " over " + std::to_string(probes) + " probes"});
  };
  add("nn backward (1 block)", network_gradient_error({3, 1, 32, 2}, probes, rng));
  add("nn backward (2 blocks)", network_gradient_error({9, 2, 32, 3}, probes, rng));
  for (ManifoldId m : {ManifoldId::Circle, ManifoldId::SE2, ManifoldId::SO3})
    add("ot_objective " + std::string(manifold_name(m)), ot_objective_gradient_error(m, probes, rng));
  add("conditional_objective S1", conditional_objective_gradient_error(ManifoldId::Circle, 1, probes, rng));
  add("conditional_objective SE2", conditional_objective_gradient_error(ManifoldId::SE2, 1, probes, rng));
  add("conditional_objective SO3", conditional_objective_gradient_error(ManifoldId::SO3, 4, probes, rng));
  return out;
}

std::vector<CheckResult> evaluation_suite(Rng& rng) {
  std::vector<CheckResult> out;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const ManifoldId m = trial % 2 ? ManifoldId::SO3 : ManifoldId::Circle;
    std::vector<ManifoldPoint> a, b;
    for (int i = 0; i < 5; ++i) {
      a.push_back(random_point(m, rng));
      b.push_back(random_point(m, rng));
    }
    const double hungarian = eval::discrete_ot(a, b, m).cost;
    const double brute = brute_force_assignment(eval::cost_matrix(a, b, m)).total / 5.0;
    worst = std::max(worst, std::abs(hungarian - brute));
  }
  out.push_back({"assignment vs 120 permutations", worst < 1e-12, "max cost difference " + fmt(worst)});

  std::vector<double> angles(200);
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  for (double& a : angles) a = u(rng);
  const double kde_mass = eval::integrate(eval::circular_kde(angles, 100.0, 512));
  out.push_back({"KDE integrates to 1", std::abs(kde_mass - 1.0) < 1e-6, "integral " + fmt(kde_mass)});

  ObservationModel obs;
  const Eigen::VectorXd y = observe(obs, ManifoldPoint::circle(kPi / 3.0));
  const eval::DensityCurve post = eval::bayes_quadrature_circle(obs, y, 2048);
  double mirror = 0.0;
  for (std::size_t k = 1; k < post.density.size(); ++k)
    mirror = std::max(mirror, std::abs(post.density[k] - post.density[post.density.size() - k]));
  out.push_back({"quadrature posterior normalised and mirror-symmetric",
                 std::abs(eval::integrate(post) - 1.0) < 1e-9 && mirror < 1e-9,
                 "mirror asymmetry " + fmt(mirror)});
  return out;
}

}  // namespace manifold_ot::oracle
