#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "manifold_ot/filters.hpp"
#include "manifold_ot/manifolds.hpp"

namespace manifold_ot::eval {

/// Entry (i, j) = d(a_i, b_j)^2 / 2.
[[nodiscard]] Eigen::MatrixXd cost_matrix(std::span<const ManifoldPoint> a, std::span<const ManifoldPoint> b,
                                          ManifoldId m);

struct Assignment {
  double cost = 0.0;                  ///< mean matched cost for discrete_ot, total for solve_assignment
  std::vector<std::size_t> matching;  ///< matching[i] = column assigned to row i
};

/// Exact minimum-cost perfect matching on a square matrix (shortest augmenting paths, O(n^3)).
[[nodiscard]] Assignment solve_assignment(const Eigen::MatrixXd& cost);

/// Exact OT between two equal-size empirical measures (n <= 1024); cost is the mean of d^2 / 2.
[[nodiscard]] Assignment discrete_ot(std::span<const ManifoldPoint> a, std::span<const ManifoldPoint> b,
                                     ManifoldId m);
/// sqrt(2 * discrete_ot cost): the empirical 2-Wasserstein distance.
[[nodiscard]] double wasserstein2(std::span<const ManifoldPoint> a, std::span<const ManifoldPoint> b, ManifoldId m);

/// Density sampled on a uniform periodic grid theta_k = 2*pi*k/G.
struct DensityCurve {
  std::vector<double> grid;
  std::vector<double> density;
  double kappa = 0.0;  ///< KDE concentration when produced by circular_kde
};

[[nodiscard]] std::vector<double> circle_grid(std::size_t size);
/// Periodic trapezoid rule.
[[nodiscard]] double integrate(const DensityCurve& c);
[[nodiscard]] DensityCurve uniform_density(std::size_t grid_size);
/// Density of (mean + sigma * xi) mod 2*pi.
[[nodiscard]] DensityCurve wrapped_normal_density(double mean, double sigma, std::size_t grid_size);

/// Posterior on S1 by pointwise prior * likelihood under a CircleWall model. Uniform prior when null.
[[nodiscard]] DensityCurve bayes_quadrature_circle(const ObservationModel& obs, const Eigen::VectorXd& y,
                                                   std::size_t grid_size = 2048,
                                                   const DensityCurve* prior = nullptr);

/// Von Mises kernel density estimate, normalised on the grid.
[[nodiscard]] DensityCurve circular_kde(std::span<const double> angles, double kappa = 100.0,
                                        std::size_t grid_size = 512, std::span<const double> weights = {});

struct CircularMean {
  double mean = 0.0;       ///< in [0, 2*pi)
  double resultant = 0.0;  ///< mean resultant length in [0, 1]
};
[[nodiscard]] CircularMean circular_mean(std::span<const double> angles);

/// Grid local maxima of at least rel_height * max, greedily thinned to min_separation.
[[nodiscard]] std::vector<double> find_modes(const DensityCurve& c, double rel_height = 0.25,
                                             double min_separation = 0.5);
/// Exactly two significant modes (each >= 25% of the maximum, >= 0.5 rad apart).
[[nodiscard]] bool bimodality(const DensityCurve& c);
[[nodiscard]] bool bimodality(std::span<const double> angles, double kappa = 100.0);

/// Half the L1 distance between two curves on the same grid.
[[nodiscard]] double total_variation(const DensityCurve& a, const DensityCurve& b);
[[nodiscard]] double sup_distance(const DensityCurve& a, const DensityCurve& b);

[[nodiscard]] std::vector<double> angles_of(std::span<const ManifoldPoint> points);

/// CSV with header `grid_theta,density`.
void write_density_csv(std::ostream& out, const DensityCurve& c);

}  // namespace manifold_ot::eval
