#pragma once

namespace pathtemper {

/// C¹ piecewise-cubic map lambda = f(a) on [0, 2], symmetric about a = 1.
///
///   f = 0 on [0, a_min] and [2 - a_min, 2]
///   f = 1 on [a_max, 2 - a_max]
///   smoothstep in between
class LinkFunction {
 public:
  struct Value {
    double lambda;
    double dlambda;
  };

  LinkFunction() : LinkFunction(0.1, 0.8) {}
  LinkFunction(double a_min, double a_max);

  double a_min() const noexcept { return a_min_; }
  double a_max() const noexcept { return a_max_; }

  Value eval(double a) const;

  /// Smallest a in [a_min, a_max] with f(a) = lambda.
  double inverse(double lambda) const;

  bool in_target_plateau(double a) const noexcept { return a >= a_max_ && a <= 2.0 - a_max_; }
  bool in_base_plateau(double a) const noexcept { return a <= a_min_ || a >= 2.0 - a_min_; }

 private:
  double a_min_;
  double a_max_;
};

/// a = 2·sigmoid(u) and its log-Jacobian.
struct AuxCoordinate {
  double a;
  double log_jacobian;
  double dlog_jacobian;  // d/du log|da/du|
  double da_du;
};

AuxCoordinate aux_from_u(double u) noexcept;
double u_from_a(double a);

}  // namespace pathtemper
