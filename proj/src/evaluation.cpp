#include "manifold_ot/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>

#include "manifold_ot/errors.hpp"

namespace manifold_ot::eval {

Eigen::MatrixXd cost_matrix(std::span<const ManifoldPoint> a, std::span<const ManifoldPoint> b, ManifoldId m) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j)
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = half_sq_dist(m, a[i], b[j]);
  return c;
}

Assignment solve_assignment(const Eigen::MatrixXd& cost) {
  if (cost.rows() != cost.cols()) throw ContractError("assignment needs a square cost matrix");
  const auto n = static_cast<std::size_t>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  // Row/column potentials and the column matched to each row; index 0 is a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), min_to(n + 1);
  std::vector<std::size_t> row_of(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of[0] = i;
    std::size_t j0 = 0;
    std::fill(min_to.begin(), min_to.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < min_to[j]) {
          min_to[j] = cur;
          way[j] = j0;
        }
        if (min_to[j] < delta) {
          delta = min_to[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          min_to[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  Assignment out;
  out.matching.assign(n, 0);
  for (std::size_t j = 1; j <= n; ++j)
    if (row_of[j] != 0) out.matching[row_of[j] - 1] = j - 1;
  for (std::size_t i = 0; i < n; ++i)
    out.cost += cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(out.matching[i]));
  return out;
}

Assignment discrete_ot(std::span<const ManifoldPoint> a, std::span<const ManifoldPoint> b, ManifoldId m) {
  if (a.size() != b.size()) throw ContractError("discrete OT needs equal-size sample sets");
  if (a.empty() || a.size() > 1024) throw ContractError("discrete OT supports 1..1024 samples");
  Assignment r = solve_assignment(cost_matrix(a, b, m));
  r.cost /= static_cast<double>(a.size());
  return r;
}

double wasserstein2(std::span<const ManifoldPoint> a, std::span<const ManifoldPoint> b, ManifoldId m) {
  return std::sqrt(2.0 * discrete_ot(a, b, m).cost);
}

std::vector<double> circle_grid(std::size_t size) {
  std::vector<double> g(size);
  for (std::size_t k = 0; k < size; ++k) g[k] = kTwoPi * static_cast<double>(k) / static_cast<double>(size);
  return g;
}

double integrate(const DensityCurve& c) {
  if (c.grid.empty()) return 0.0;
  const double h = kTwoPi / static_cast<double>(c.grid.size());
  return h * std::accumulate(c.density.begin(), c.density.end(), 0.0);
}

namespace {

void normalize(DensityCurve& c) {
  const double z = integrate(c);
  if (!(z > 0.0) || !std::isfinite(z)) throw NumericalError("density has a zero normaliser");
  for (double& d : c.density) d /= z;
}

}  // namespace

DensityCurve uniform_density(std::size_t grid_size) {
  DensityCurve c;
  c.grid = circle_grid(grid_size);
  c.density.assign(grid_size, 1.0 / kTwoPi);
  return c;
}

DensityCurve wrapped_normal_density(double mean, double sigma, std::size_t grid_size) {
  DensityCurve c;
  c.grid = circle_grid(grid_size);
  c.density.resize(grid_size);
  const int wraps = static_cast<int>(std::ceil(8.0 * sigma / kTwoPi)) + 1;
  for (std::size_t k = 0; k < grid_size; ++k) {
    double acc = 0.0;
    for (int w = -wraps; w <= wraps; ++w) {
      const double d = c.grid[k] - mean + kTwoPi * w;
      acc += std::exp(-0.5 * d * d / (sigma * sigma));
    }
    c.density[k] = acc / (sigma * std::sqrt(kTwoPi));
  }
  return c;
}

DensityCurve bayes_quadrature_circle(const ObservationModel& obs, const Eigen::VectorXd& y, std::size_t grid_size,
                                     const DensityCurve* prior) {
  if (!std::holds_alternative<CircleWall>(obs.kind)) throw ContractError("quadrature oracle needs a CircleWall model");
  if (prior && prior->grid.size() != grid_size) throw ContractError("prior grid size differs from grid_size");
  DensityCurve c;
  c.grid = circle_grid(grid_size);
  c.density.resize(grid_size);
  std::vector<double> logl(grid_size);
  double max_logl = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < grid_size; ++k) {
    logl[k] = log_likelihood(obs, ManifoldPoint::circle(c.grid[k]), y);
    max_logl = std::max(max_logl, logl[k]);
  }
  for (std::size_t k = 0; k < grid_size; ++k) {
    const double p = prior ? prior->density[k] : 1.0 / kTwoPi;
    c.density[k] = p * std::exp(logl[k] - max_logl);
  }
  normalize(c);
  return c;
}

DensityCurve circular_kde(std::span<const double> angles, double kappa, std::size_t grid_size,
                          std::span<const double> weights) {
  if (angles.empty()) throw ContractError("KDE needs at least one sample");
  if (!weights.empty() && weights.size() != angles.size()) throw ContractError("weight count differs from samples");
  DensityCurve c;
  c.kappa = kappa;
  c.grid = circle_grid(grid_size);
  c.density.assign(grid_size, 0.0);
  const double n = static_cast<double>(angles.size());
  for (std::size_t k = 0; k < grid_size; ++k) {
    const double g = c.grid[k];
    double acc = 0.0;
    for (std::size_t i = 0; i < angles.size(); ++i) {
      const double w = weights.empty() ? 1.0 / n : weights[i];
      acc += w * std::exp(kappa * (std::cos(g - angles[i]) - 1.0));
    }
    c.density[k] = acc;
  }
  normalize(c);
  return c;
}

CircularMean circular_mean(std::span<const double> angles) {
  if (angles.empty()) throw ContractError("circular mean of an empty sample");
  double cs = 0.0, sn = 0.0;
  for (double a : angles) {
    cs += std::cos(a);
    sn += std::sin(a);
  }
  const double n = static_cast<double>(angles.size());
  CircularMean r;
  r.resultant = std::hypot(cs, sn) / n;
  r.mean = wrap_angle(std::atan2(sn, cs));
  return r;
}

std::vector<double> find_modes(const DensityCurve& c, double rel_height, double min_separation) {
  const std::size_t g = c.density.size();
  if (g < 3) return {};
  const double peak = *std::max_element(c.density.begin(), c.density.end());
  std::vector<std::size_t> candidates;
  for (std::size_t k = 0; k < g; ++k) {
    const double prev = c.density[(k + g - 1) % g];
    const double next = c.density[(k + 1) % g];
    if (c.density[k] > prev && c.density[k] >= next && c.density[k] >= rel_height * peak) candidates.push_back(k);
  }
  std::sort(candidates.begin(), candidates.end(),
            [&](std::size_t a, std::size_t b) { return c.density[a] > c.density[b]; });
  std::vector<double> modes;
  for (std::size_t k : candidates) {
    const double theta = c.grid[k];
    const bool far = std::all_of(modes.begin(), modes.end(), [&](double m) {
      return std::abs(wrap_signed(theta - m)) >= min_separation;
    });
    if (far) modes.push_back(theta);
  }
  return modes;
}

bool bimodality(const DensityCurve& c) { return find_modes(c).size() == 2; }

bool bimodality(std::span<const double> angles, double kappa) { return bimodality(circular_kde(angles, kappa)); }

double total_variation(const DensityCurve& a, const DensityCurve& b) {
  if (a.density.size() != b.density.size()) throw ContractError("curves live on different grids");
  const double h = kTwoPi / static_cast<double>(a.density.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < a.density.size(); ++k) acc += std::abs(a.density[k] - b.density[k]);
  return 0.5 * h * acc;
}

double sup_distance(const DensityCurve& a, const DensityCurve& b) {
  if (a.density.size() != b.density.size()) throw ContractError("curves live on different grids");
  double s = 0.0;
  for (std::size_t k = 0; k < a.density.size(); ++k) s = std::max(s, std::abs(a.density[k] - b.density[k]));
  return s;
}

std::vector<double> angles_of(std::span<const ManifoldPoint> points) {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.theta());
  return out;
}

void write_density_csv(std::ostream& out, const DensityCurve& c) {
  out << "grid_theta,density\n" << std::setprecision(17);
  for (std::size_t k = 0; k < c.grid.size(); ++k) out << c.grid[k] << ',' << c.density[k] << '\n';
}

}  // namespace manifold_ot::eval
