#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "pathtemper/draws.hpp"
#include "pathtemper/joint.hpp"
#include "pathtemper/pseudo_prior.hpp"

namespace pathtemper {

enum class GradientMode { logz, marginal };

/// Sorted unique abscissae with tie-averaged gradients.
struct OrderedGradients {
  std::vector<double> a;
  std::vector<double> u;
  std::vector<std::size_t> multiplicity;
};

/// Sorts (x, g) pairs by x and averages g over exact ties.
OrderedGradients order_gradients(std::span<const double> x, std::span<const double> g);

/// Count-weighted means of a and U within bins [k·width, (k+1)·width).
/// Exact for U linear in a.
OrderedGradients bin_gradients(const OrderedGradients& og, double width);

constexpr double kGradientBinWidth = 0.0025;

/// U = f'(a)·(log q - log psi), minus f'(a)·(d log c/d lambda) in marginal mode.
/// Every a must already be flipped into [0, 1].
OrderedGradients compute_pointwise_gradients(const DrawStore& store, const JointPathModel& jpm,
                                             GradientMode mode);

/// Cumulative trapezoid of tie-averaged gradients from 0. Below the first
/// and above the last support point U is held constant; between support
/// points it is linear.
class PathIntegral {
 public:
  explicit PathIntegral(OrderedGradients og, double origin = 0.0);

  /// Integral from the origin to x.
  double operator()(double x) const;
  const OrderedGradients& gradients() const noexcept { return og_; }

 private:
  OrderedGradients og_;
  double origin_;
  std::vector<double> cumulative_;  // integral from origin to og_.a[i]
};

/// log z(f(a*)) - log z(f(0)); a* in [0, 1].
double path_integrate(const OrderedGradients& og, double a_star);

/// log c := log z, optionally tilted by a target density p(a) over [0, 2].
using LogDensity1D = std::function<double(double)>;
PseudoPrior update_pseudo_prior(const PseudoPrior& beta_z, const LinkFunction& link,
                                const std::optional<LogDensity1D>& prior_target = std::nullopt,
                                std::size_t grid_size = 100);

/// Estimated marginal of a on [0, 2] (symmetric), normalized so that
/// 2·integral_0^1 p(a) da = 1.
struct MarginalEstimate {
  PathIntegral integral;
  double log_norm;  // subtracted from the raw integral
  double log_p(double a) const;
  std::vector<double> grid_a;
  std::vector<double> grid_log_p;
};

/// Raises InsufficientCoverage with fewer than 10 unique a values. Gradients
/// are binned with kGradientBinWidth before integration.
MarginalEstimate estimate_marginal(const DrawStore& flipped_current, const JointPathModel& jpm,
                                   std::size_t grid_size = 201);

/// log of the mean importance ratio exp(log q - log psi).
double is_init_slope(std::span<const double> log_q, std::span<const double> log_psi);

struct PathEstimate {
  std::vector<double> grid_lambda;
  std::vector<double> logz_raw;
  PseudoPrior fit;
  std::vector<double> logz_fit;
};

/// Raw log z on lambda_i = i/I and its basis fit, integrating gradients
/// binned with kGradientBinWidth.
PathEstimate estimate_logz(const OrderedGradients& og, const LinkFunction& link,
                           std::size_t grid_size = 100, KernelFamily family = KernelFamily::mixed,
                           std::size_t j = 10);

}  // namespace pathtemper
