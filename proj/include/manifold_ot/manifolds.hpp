#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace manifold_ot {

using Rng = std::mt19937_64;

enum class ManifoldId { Circle, SE2, SO3 };

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;

/// Lie-algebra coordinates; at most three entries for the supported groups.
using Tangent = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 3, 1>;

/// Jacobian of the embedding with respect to tangent coordinates (embed_dim x tangent_dim).
using EmbedJacobian = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, 9, 3>;

[[nodiscard]] int tangent_dim(ManifoldId m);
[[nodiscard]] int embed_dim(ManifoldId m);
/// Number of stored coordinates: 1 (theta), 3 (x, y, theta), 9 (row-major R).
[[nodiscard]] int coord_dim(ManifoldId m);
/// Scale between tangent norm and geodesic speed: 1 for S1 and SE(2), sqrt(2) for SO(3).
[[nodiscard]] double tangent_speed_factor(ManifoldId m);
[[nodiscard]] std::string_view manifold_name(ManifoldId m);

/**
 * A point on S1, SE(2) or SO(3) in its natural coordinates.
 *
 * Angles are kept in [0, 2*pi). Rotations are stored row-major and satisfy
 * R^T R = I, det R = 1 to within 1e-9 when built through the factories.
 */
class ManifoldPoint {
 public:
  ManifoldPoint() = default;

  static ManifoldPoint circle(double theta);
  static ManifoldPoint se2(double x, double y, double theta);
  static ManifoldPoint so3(const Eigen::Matrix3d& rotation);
  /// Rebuilds a point from coord_dim(m) raw coordinates without re-projection.
  static ManifoldPoint from_coords(ManifoldId m, std::span<const double> coords);

  [[nodiscard]] ManifoldId manifold() const { return id_; }
  [[nodiscard]] double theta() const;
  [[nodiscard]] double x() const;
  [[nodiscard]] double y() const;
  [[nodiscard]] Eigen::Matrix3d rotation() const;
  [[nodiscard]] std::span<const double> coords() const {
    return {data_.data(), static_cast<std::size_t>(coord_dim(id_))};
  }

  friend bool operator==(const ManifoldPoint&, const ManifoldPoint&) = default;

 private:
  ManifoldId id_ = ManifoldId::Circle;
  std::array<double, 9> data_{};
};

/// Reduces an angle to [0, 2*pi).
[[nodiscard]] double wrap_angle(double theta);
/// Reduces an angle to (-pi, pi].
[[nodiscard]] double wrap_signed(double theta);

[[nodiscard]] Eigen::Matrix3d hat(const Eigen::Vector3d& w);
[[nodiscard]] Eigen::Vector3d vee(const Eigen::Matrix3d& m);
/// Closed-form matrix exponential of [w]x (Rodrigues).
[[nodiscard]] Eigen::Matrix3d rodrigues(const Eigen::Vector3d& w);
/// Principal logarithm of a rotation, ||w|| <= pi.
[[nodiscard]] Eigen::Vector3d so3_log(const Eigen::Matrix3d& r);
/// Nearest rotation in Frobenius norm (polar factor).
[[nodiscard]] Eigen::Matrix3d project_to_so3(const Eigen::Matrix3d& m);
/// Right Jacobian of the SO(3) exponential: Exp(w + d) ~ Exp(w) Exp(Jr(w) d).
[[nodiscard]] Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& w);

[[nodiscard]] bool is_valid(ManifoldId m, const ManifoldPoint& z);
/// Throws ContractError if z is not a valid point of m.
void require_valid(ManifoldId m, const ManifoldPoint& z);

[[nodiscard]] ManifoldPoint exp_map(ManifoldId m, const ManifoldPoint& z, const Tangent& v);
[[nodiscard]] Tangent log_map(ManifoldId m, const ManifoldPoint& z, const ManifoldPoint& z_prime);
[[nodiscard]] double geodesic_dist(ManifoldId m, const ManifoldPoint& z, const ManifoldPoint& z_prime);
[[nodiscard]] double half_sq_dist(ManifoldId m, const ManifoldPoint& z, const ManifoldPoint& z_prime);

/// Network input layer: (cos, sin), (x, y, cos, sin), or row-major R.
void embed(ManifoldId m, const ManifoldPoint& z, std::span<double> out);
[[nodiscard]] Eigen::VectorXd embed(ManifoldId m, const ManifoldPoint& z);

/**
 * Cost of moving z to exp_z(v), i.e. d(z, exp_z(v))^2 / 2.
 *
 * All three groups are homogeneous, so the value depends on v only. When
 * `grad` is non-null it receives the derivative with respect to v (taken on
 * the branch that contains v; the cut locus has measure zero).
 */
double displacement_cost(ManifoldId m, const Tangent& v, Tangent* grad = nullptr);

/// exp_z(v), its embedding, and d embed(exp_z(v)) / dv.
struct ExpEmbedding {
  ManifoldPoint point;
  Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, 9, 1> features;
  EmbedJacobian jacobian;
};
[[nodiscard]] ExpEmbedding exp_embed_with_jacobian(ManifoldId m, const ManifoldPoint& z, const Tangent& v);

// ---------------------------------------------------------------------------
// Distributions
// ---------------------------------------------------------------------------

struct CircleUniform {};
struct CircleModGaussian {
  double mean = 0.0;
  double stddev = 1.0;
};
struct MixtureComponent {
  double weight = 1.0;
  double mean = 0.0;
  double stddev = 1.0;
};
struct CircleMixture {
  std::vector<MixtureComponent> components;
};
/// Uniform box in (x, y); heading uniform on [0, 2*pi). A degenerate range pins the coordinate.
struct SE2BoxUniform {
  double x_min = -1.0, x_max = 1.0;
  double y_min = -1.0, y_max = 1.0;
};
struct SO3Uniform {};
enum class SO3CurveFamily { P, Q };
/// One-parameter rotation families driven by a uniform angle on [0, 2*pi).
struct SO3Curve {
  SO3CurveFamily family = SO3CurveFamily::P;
};

using DistributionSpec =
    std::variant<CircleUniform, CircleModGaussian, CircleMixture, SE2BoxUniform, SO3Uniform, SO3Curve>;

[[nodiscard]] ManifoldId manifold_of(const DistributionSpec& spec);
/// Throws ConfigError on invalid parameters.
void validate(const DistributionSpec& spec);
[[nodiscard]] ManifoldPoint so3_curve_point(SO3CurveFamily family, double u);
[[nodiscard]] ManifoldPoint sample_one(const DistributionSpec& spec, Rng& rng);
[[nodiscard]] std::vector<ManifoldPoint> sample(const DistributionSpec& spec, std::size_t count, Rng& rng);

/// Axis uniform on the sphere, angle drawn from the Haar density proportional to 1 - cos(a).
[[nodiscard]] Eigen::Matrix3d sample_uniform_rotation(Rng& rng);
/// Independent generator for a (seed, purpose) pair; used to keep truth, data and filter draws separate.
[[nodiscard]] Rng seeded_stream(std::uint64_t seed, std::uint64_t purpose);

}  // namespace manifold_ot
