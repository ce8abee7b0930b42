#include "manifold_ot/manifolds.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <string>

#include "manifold_ot/errors.hpp"

namespace manifold_ot {

namespace {

void require_kind(ManifoldId expected, const ManifoldPoint& z) {
  if (z.manifold() != expected) {
    throw ContractError("point belongs to " + std::string(manifold_name(z.manifold())) + ", expected " +
                        std::string(manifold_name(expected)));
  }
}

void require_tangent(ManifoldId m, const Tangent& v) {
  if (v.size() != tangent_dim(m)) {
    throw ContractError("tangent vector has length " + std::to_string(v.size()) + ", " +
                        std::string(manifold_name(m)) + " needs " + std::to_string(tangent_dim(m)));
  }
}

constexpr double kOrthoTolerance = 1e-9;
constexpr double kReprojectThreshold = 1e-10;

}  // namespace

int tangent_dim(ManifoldId m) {
  switch (m) {
    case ManifoldId::Circle: return 1;
    case ManifoldId::SE2: return 3;
    case ManifoldId::SO3: return 3;
  }
  return 0;
}

int embed_dim(ManifoldId m) {
  switch (m) {
    case ManifoldId::Circle: return 2;
    case ManifoldId::SE2: return 4;
    case ManifoldId::SO3: return 9;
  }
  return 0;
}

int coord_dim(ManifoldId m) {
  switch (m) {
    case ManifoldId::Circle: return 1;
    case ManifoldId::SE2: return 3;
    case ManifoldId::SO3: return 9;
  }
  return 0;
}

double tangent_speed_factor(ManifoldId m) { return m == ManifoldId::SO3 ? std::sqrt(2.0) : 1.0; }

std::string_view manifold_name(ManifoldId m) {
  switch (m) {
    case ManifoldId::Circle: return "S1";
    case ManifoldId::SE2: return "SE2";
    case ManifoldId::SO3: return "SO3";
  }
  return "?";
}

double wrap_angle(double theta) {
  double r = std::fmod(theta, kTwoPi);
  if (r < 0.0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

double wrap_signed(double theta) {
  double r = theta - kTwoPi * std::floor((theta + kPi) / kTwoPi);
  if (r <= -kPi) r += kTwoPi;
  if (r > kPi) r -= kTwoPi;
  return r;
}

// ---------------------------------------------------------------------------
// ManifoldPoint
// ---------------------------------------------------------------------------

ManifoldPoint ManifoldPoint::circle(double theta) {
  ManifoldPoint p;
  p.id_ = ManifoldId::Circle;
  p.data_[0] = wrap_angle(theta);
  return p;
}

ManifoldPoint ManifoldPoint::se2(double x, double y, double theta) {
  ManifoldPoint p;
  p.id_ = ManifoldId::SE2;
  p.data_[0] = x;
  p.data_[1] = y;
  p.data_[2] = wrap_angle(theta);
  return p;
}

ManifoldPoint ManifoldPoint::so3(const Eigen::Matrix3d& rotation) {
  ManifoldPoint p;
  p.id_ = ManifoldId::SO3;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) p.data_[3 * i + j] = rotation(i, j);
  return p;
}

ManifoldPoint ManifoldPoint::from_coords(ManifoldId m, std::span<const double> coords) {
  if (static_cast<int>(coords.size()) != coord_dim(m)) {
    throw ContractError("expected " + std::to_string(coord_dim(m)) + " coordinates for " +
                        std::string(manifold_name(m)));
  }
  ManifoldPoint p;
  p.id_ = m;
  for (std::size_t i = 0; i < coords.size(); ++i) p.data_[i] = coords[i];
  return p;
}

double ManifoldPoint::theta() const {
  if (id_ == ManifoldId::Circle) return data_[0];
  if (id_ == ManifoldId::SE2) return data_[2];
  throw ContractError("SO3 points have no heading angle");
}

double ManifoldPoint::x() const {
  require_kind(ManifoldId::SE2, *this);
  return data_[0];
}

double ManifoldPoint::y() const {
  require_kind(ManifoldId::SE2, *this);
  return data_[1];
}

Eigen::Matrix3d ManifoldPoint::rotation() const {
  require_kind(ManifoldId::SO3, *this);
  Eigen::Matrix3d r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = data_[3 * i + j];
  return r;
}

// ---------------------------------------------------------------------------
// SO(3) helpers
// ---------------------------------------------------------------------------

Eigen::Matrix3d hat(const Eigen::Vector3d& w) {
  Eigen::Matrix3d s;
  // clang-format off
  s <<  0.0,  -w.z(),  w.y(),
        w.z(),  0.0,  -w.x(),
       -w.y(),  w.x(),  0.0;
  // clang-format on
  return s;
}

Eigen::Vector3d vee(const Eigen::Matrix3d& m) { return {m(2, 1), m(0, 2), m(1, 0)}; }

Eigen::Matrix3d rodrigues(const Eigen::Vector3d& w) {
  const double a = w.norm();
  const Eigen::Matrix3d k = hat(w);
  if (a < 1e-8) return Eigen::Matrix3d::Identity() + k + 0.5 * k * k;
  return Eigen::Matrix3d::Identity() + (std::sin(a) / a) * k + ((1.0 - std::cos(a)) / (a * a)) * k * k;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  // s = sin(a) * axis, c = cos(a); atan2 keeps the angle well conditioned at both ends.
  const Eigen::Vector3d s = 0.5 * vee(r - r.transpose());
  const double c = std::clamp(0.5 * (r.trace() - 1.0), -1.0, 1.0);
  const double sin_a = s.norm();
  const double angle = std::atan2(sin_a, c);

  if (angle < 1e-6) return s * (1.0 + angle * angle / 6.0);
  if (angle < kPi - 1e-3) return s * (angle / sin_a);

  // Near pi: (R + R^T)/2 - cos(a) I = (1 - cos(a)) axis axis^T.
  const Eigen::Matrix3d b = 0.5 * (r + r.transpose()) - c * Eigen::Matrix3d::Identity();
  int k = 0;
  b.diagonal().maxCoeff(&k);
  Eigen::Vector3d axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300) * (1.0 - c));
  axis.normalize();
  // The skew part fixes the sign; at exactly pi it vanishes and the dominant component stays positive.
  if (sin_a > 1e-12 && axis.dot(s) < 0.0) axis = -axis;
  return angle * axis;
}

Eigen::Matrix3d project_to_so3(const Eigen::Matrix3d& m) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d u = svd.matrixU();
  const Eigen::Matrix3d v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(2) = -u.col(2);
  return u * v.transpose();
}

Eigen::Matrix3d so3_right_jacobian(const Eigen::Vector3d& w) {
  const double a = w.norm();
  const Eigen::Matrix3d k = hat(w);
  if (a < 1e-6) return Eigen::Matrix3d::Identity() - 0.5 * k + (1.0 / 6.0) * k * k;
  const double a2 = a * a;
  return Eigen::Matrix3d::Identity() - ((1.0 - std::cos(a)) / a2) * k + ((a - std::sin(a)) / (a2 * a)) * k * k;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

bool is_valid(ManifoldId m, const ManifoldPoint& z) {
  if (z.manifold() != m) return false;
  for (double c : z.coords())
    if (!std::isfinite(c)) return false;
  switch (m) {
    case ManifoldId::Circle:
    case ManifoldId::SE2: {
      const double t = z.theta();
      return t >= 0.0 && t < kTwoPi;
    }
    case ManifoldId::SO3: {
      const Eigen::Matrix3d r = z.rotation();
      const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
      return ortho <= kOrthoTolerance && std::abs(r.determinant() - 1.0) <= kOrthoTolerance;
    }
  }
  return false;
}

void require_valid(ManifoldId m, const ManifoldPoint& z) {
  if (!is_valid(m, z)) throw ContractError("invalid point for manifold " + std::string(manifold_name(m)));
}

ManifoldPoint exp_map(ManifoldId m, const ManifoldPoint& z, const Tangent& v) {
  require_kind(m, z);
  require_tangent(m, v);
  switch (m) {
    case ManifoldId::Circle:
      return ManifoldPoint::circle(z.theta() + v(0));
    case ManifoldId::SE2:
      return ManifoldPoint::se2(z.x() + v(0), z.y() + v(1), z.theta() + v(2));
    case ManifoldId::SO3: {
      Eigen::Matrix3d r = z.rotation() * rodrigues(v.head<3>());
      if ((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() > kReprojectThreshold) r = project_to_so3(r);
      return ManifoldPoint::so3(r);
    }
  }
  return z;
}

Tangent log_map(ManifoldId m, const ManifoldPoint& z, const ManifoldPoint& z_prime) {
  require_kind(m, z);
  require_kind(m, z_prime);
  Tangent out(tangent_dim(m));
  switch (m) {
    case ManifoldId::Circle:
      out(0) = wrap_signed(z_prime.theta() - z.theta());
      break;
    case ManifoldId::SE2:
      out << z_prime.x() - z.x(), z_prime.y() - z.y(), wrap_signed(z_prime.theta() - z.theta());
      break;
    case ManifoldId::SO3:
      out = so3_log(z.rotation().transpose() * z_prime.rotation());
      break;
  }
  return out;
}

double geodesic_dist(ManifoldId m, const ManifoldPoint& z, const ManifoldPoint& z_prime) {
  const Tangent d = log_map(m, z, z_prime);
  return tangent_speed_factor(m) * d.norm();
}

double half_sq_dist(ManifoldId m, const ManifoldPoint& z, const ManifoldPoint& z_prime) {
  const Tangent d = log_map(m, z, z_prime);
  const double k = tangent_speed_factor(m);
  return 0.5 * k * k * d.squaredNorm();
}

void embed(ManifoldId m, const ManifoldPoint& z, std::span<double> out) {
  require_kind(m, z);
  if (static_cast<int>(out.size()) != embed_dim(m)) throw ContractError("embedding buffer has wrong size");
  switch (m) {
    case ManifoldId::Circle:
      out[0] = std::cos(z.theta());
      out[1] = std::sin(z.theta());
      break;
    case ManifoldId::SE2:
      out[0] = z.x();
      out[1] = z.y();
      out[2] = std::cos(z.theta());
      out[3] = std::sin(z.theta());
      break;
    case ManifoldId::SO3: {
      const auto c = z.coords();
      std::copy(c.begin(), c.end(), out.begin());
      break;
    }
  }
}

Eigen::VectorXd embed(ManifoldId m, const ManifoldPoint& z) {
  Eigen::VectorXd out(embed_dim(m));
  embed(m, z, std::span<double>(out.data(), static_cast<std::size_t>(out.size())));
  return out;
}

double displacement_cost(ManifoldId m, const Tangent& v, Tangent* grad) {
  require_tangent(m, v);
  switch (m) {
    case ManifoldId::Circle: {
      const double r = wrap_signed(v(0));
      if (grad) {
        grad->resize(1);
        (*grad)(0) = r;
      }
      return 0.5 * r * r;
    }
    case ManifoldId::SE2: {
      const double r = wrap_signed(v(2));
      if (grad) {
        grad->resize(3);
        *grad << v(0), v(1), r;
      }
      return 0.5 * (v(0) * v(0) + v(1) * v(1) + r * r);
    }
    case ManifoldId::SO3: {
      // d = sqrt(2) * |principal angle|, so d^2 / 2 = angle^2.
      const double a = v.norm();
      const double reduced = a - kTwoPi * std::round(a / kTwoPi);
      if (grad) {
        if (a < 1e-12) {
          *grad = 2.0 * v;
        } else {
          *grad = (2.0 * reduced / a) * v;
        }
      }
      return reduced * reduced;
    }
  }
  return 0.0;
}

ExpEmbedding exp_embed_with_jacobian(ManifoldId m, const ManifoldPoint& z, const Tangent& v) {
  require_kind(m, z);
  require_tangent(m, v);
  ExpEmbedding out;
  const int e = embed_dim(m);
  const int n = tangent_dim(m);
  out.features.resize(e);
  out.jacobian.setZero(e, n);
  switch (m) {
    case ManifoldId::Circle: {
      out.point = ManifoldPoint::circle(z.theta() + v(0));
      const double c = std::cos(out.point.theta());
      const double s = std::sin(out.point.theta());
      out.features << c, s;
      out.jacobian(0, 0) = -s;
      out.jacobian(1, 0) = c;
      break;
    }
    case ManifoldId::SE2: {
      out.point = ManifoldPoint::se2(z.x() + v(0), z.y() + v(1), z.theta() + v(2));
      const double c = std::cos(out.point.theta());
      const double s = std::sin(out.point.theta());
      out.features << out.point.x(), out.point.y(), c, s;
      out.jacobian(0, 0) = 1.0;
      out.jacobian(1, 1) = 1.0;
      out.jacobian(2, 2) = -s;
      out.jacobian(3, 2) = c;
      break;
    }
    case ManifoldId::SO3: {
      const Eigen::Vector3d w = v.head<3>();
      Eigen::Matrix3d r = z.rotation() * rodrigues(w);
      const Eigen::Matrix3d jr = so3_right_jacobian(w);
      for (int k = 0; k < 3; ++k) {
        const Eigen::Matrix3d dr = r * hat(jr.col(k));
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) out.jacobian(3 * i + j, k) = dr(i, j);
      }
      if ((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() > kReprojectThreshold) r = project_to_so3(r);
      out.point = ManifoldPoint::so3(r);
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) out.features(3 * i + j) = r(i, j);
      break;
    }
  }
  return out;
}

}  // namespace manifold_ot
