#include <cmath>
#include <numeric>
#include <string>

#include "manifold_ot/errors.hpp"
#include "manifold_ot/manifolds.hpp"

namespace manifold_ot {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double uniform_angle(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, kTwoPi);
  return wrap_angle(u(rng));
}

double uniform_in(double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return lo + (hi - lo) * u(rng);
}

void check_stddev(double s) {
  if (!(std::isfinite(s) && s > 0.0)) throw ConfigError("standard deviation must be positive and finite");
}

// Solves (a - sin a) / pi = p on [0, pi]; the CDF of the Haar rotation angle.
double haar_angle_from_quantile(double p) {
  const double target = p * kPi;
  double lo = 0.0, hi = kPi;
  double a = std::cbrt(6.0 * target);  // small-angle start: a - sin a ~ a^3 / 6
  if (!(a > lo && a < hi)) a = 0.5 * (lo + hi);
  for (int it = 0; it < 100; ++it) {
    const double f = a - std::sin(a) - target;
    if (f > 0.0) hi = a; else lo = a;
    const double df = 1.0 - std::cos(a);
    double next = df > 1e-300 ? a - f / df : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - a) < 1e-15) return next;
    a = next;
  }
  return a;
}

}  // namespace

ManifoldId manifold_of(const DistributionSpec& spec) {
  return std::visit(overloaded{
                        [](const CircleUniform&) { return ManifoldId::Circle; },
                        [](const CircleModGaussian&) { return ManifoldId::Circle; },
                        [](const CircleMixture&) { return ManifoldId::Circle; },
                        [](const SE2BoxUniform&) { return ManifoldId::SE2; },
                        [](const SO3Uniform&) { return ManifoldId::SO3; },
                        [](const SO3Curve&) { return ManifoldId::SO3; },
                    },
                    spec);
}

void validate(const DistributionSpec& spec) {
  std::visit(overloaded{
                 [](const CircleUniform&) {},
                 [](const CircleModGaussian& g) {
                   if (!std::isfinite(g.mean)) throw ConfigError("mean must be finite");
                   check_stddev(g.stddev);
                 },
                 [](const CircleMixture& mix) {
                   if (mix.components.empty()) throw ConfigError("mixture needs at least one component");
                   double total = 0.0;
                   for (const auto& c : mix.components) {
                     if (!(c.weight > 0.0)) throw ConfigError("mixture weights must be positive");
                     if (!std::isfinite(c.mean)) throw ConfigError("mean must be finite");
                     check_stddev(c.stddev);
                     total += c.weight;
                   }
                   if (std::abs(total - 1.0) > 1e-9) throw ConfigError("mixture weights must sum to 1");
                 },
                 [](const SE2BoxUniform& b) {
                   if (!(std::isfinite(b.x_min) && std::isfinite(b.x_max) && b.x_min <= b.x_max))
                     throw ConfigError("x range is empty");
                   if (!(std::isfinite(b.y_min) && std::isfinite(b.y_max) && b.y_min <= b.y_max))
                     throw ConfigError("y range is empty");
                 },
                 [](const SO3Uniform&) {},
                 [](const SO3Curve&) {},
             },
             spec);
}

ManifoldPoint so3_curve_point(SO3CurveFamily family, double u) {
  const double c = std::cos(u);
  const double s = std::sin(u);
  Eigen::Matrix3d r;
  if (family == SO3CurveFamily::P) {
    // clang-format off
    r << c,   s,  0.0,
         0.0, 0.0, 1.0,
         s,  -c,  0.0;
  } else {
    r << -c,  -s,  0.0,
         -s,   c,  0.0,
          0.0, 0.0, -1.0;
    // clang-format on
  }
  return ManifoldPoint::so3(r);
}

Eigen::Matrix3d sample_uniform_rotation(Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::Vector3d axis;
  do {
    axis << normal(rng), normal(rng), normal(rng);
  } while (axis.norm() < 1e-12);
  axis.normalize();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double angle = haar_angle_from_quantile(u(rng));
  return rodrigues(angle * axis);
}

ManifoldPoint sample_one(const DistributionSpec& spec, Rng& rng) {
  return std::visit(
      overloaded{
          [&](const CircleUniform&) { return ManifoldPoint::circle(uniform_angle(rng)); },
          [&](const CircleModGaussian& g) {
            std::normal_distribution<double> normal(0.0, 1.0);
            return ManifoldPoint::circle(g.mean + g.stddev * normal(rng));
          },
          [&](const CircleMixture& mix) {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            double r = u(rng);
            std::size_t k = 0;
            while (k + 1 < mix.components.size() && r >= mix.components[k].weight) {
              r -= mix.components[k].weight;
              ++k;
            }
            std::normal_distribution<double> normal(0.0, 1.0);
            const auto& c = mix.components[k];
            return ManifoldPoint::circle(c.mean + c.stddev * normal(rng));
          },
          [&](const SE2BoxUniform& b) {
            const double x = uniform_in(b.x_min, b.x_max, rng);
            const double y = uniform_in(b.y_min, b.y_max, rng);
            return ManifoldPoint::se2(x, y, uniform_angle(rng));
          },
          [&](const SO3Uniform&) { return ManifoldPoint::so3(sample_uniform_rotation(rng)); },
          [&](const SO3Curve& c) { return so3_curve_point(c.family, uniform_angle(rng)); },
      },
      spec);
}

std::vector<ManifoldPoint> sample(const DistributionSpec& spec, std::size_t count, Rng& rng) {
  if (count < 1) throw ContractError("sample count must be at least 1");
  validate(spec);
  std::vector<ManifoldPoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(sample_one(spec, rng));
  return out;
}

Rng seeded_stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), 0x6d6f7431u};
  return Rng(seq);
}

}  // namespace manifold_ot
