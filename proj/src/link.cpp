#include "pathtemper/link.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "pathtemper/error.hpp"

namespace pathtemper {

LinkFunction::LinkFunction(double a_min, double a_max) : a_min_(a_min), a_max_(a_max) {
  if (!(a_min > 0.0 && a_min < 1.0)) throw ValidationError("a_min", "must lie in (0, 1)");
  if (!(a_max > a_min && a_max < 1.0)) throw ValidationError("a_max", "must lie in (a_min, 1)");
}

LinkFunction::Value LinkFunction::eval(double a) const {
  if (!(a >= 0.0 && a <= 2.0))
    throw DomainError("link argument " + std::to_string(a) + " outside [0, 2]");
  const bool mirrored = a > 1.0;
  const double x = mirrored ? 2.0 - a : a;
  if (x <= a_min_) return {0.0, 0.0};
  if (x >= a_max_) return {1.0, 0.0};
  const double w = a_max_ - a_min_;
  const double t = (x - a_min_) / w;
  const double lambda = t * t * (3.0 - 2.0 * t);
  const double d = 6.0 * t * (1.0 - t) / w;
  return {lambda, mirrored ? -d : d};
}

double LinkFunction::inverse(double lambda) const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda outside [0, 1]");
  // Root of -2t^3 + 3t^2 = lambda on [0, 1].
  const double t = 0.5 - std::sin(std::asin(1.0 - 2.0 * lambda) / 3.0);
  return a_min_ + t * (a_max_ - a_min_);
}

AuxCoordinate aux_from_u(double u) noexcept {
  const double sp_pos = u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
  const double sp_neg = sp_pos - u;  // softplus(-u)
  const double s = u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
  return {2.0 * s, std::numbers::ln2 - sp_neg - sp_pos, 1.0 - 2.0 * s, 2.0 * s * (1.0 - s)};
}

double u_from_a(double a) {
  if (!(a > 0.0 && a < 2.0)) throw DomainError("a must lie strictly inside (0, 2)");
  const double p = a / 2.0;
  return std::log(p) - std::log1p(-p);
}

}  // namespace pathtemper
