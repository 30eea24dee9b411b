#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pathtemper/draws.hpp"
#include "pathtemper/hmc.hpp"
#include "pathtemper/model.hpp"
#include "pathtemper/path_estimator.hpp"
#include "pathtemper/pseudo_prior.hpp"

namespace pathtemper {

/// Normalized density of one coordinate tabulated on an even grid.
struct MarginalDensity {
  std::vector<double> grid;
  std::vector<double> log_density;
  double log_norm = 0.0;  // log trapezoid integral of the unnormalized values

  /// Linear interpolation of the log density; clamped to the end values.
  double log_pdf(double x) const;
  /// Trapezoid integral of exp(log_density); 1 up to rounding.
  double integral() const;
  /// Same density for exp(x) on the grid exp(grid_i) (log Jacobian -x).
  MarginalDensity exp_transformed() const;
};

/// Normalizes raw log values on an even grid by their trapezoid integral.
MarginalDensity normalize_on_grid(std::vector<double> grid, std::vector<double> log_values);

/// Even grid lo..hi with n points.
std::vector<double> even_grid(double lo, double hi, std::size_t n);

/// Successive estimates whose log ratios on the current draws span less than
/// this pass the k-hat check outright (k-hat reported as -inf).
constexpr double kStableLogRatio = 0.05;

enum class MarginTarget { fixed, adaptive_optimal };

struct IdcConfig {
  std::size_t margin_index = 0;
  MarginTarget target = MarginTarget::adaptive_optimal;
  /// Log density of the desired margin (needed when target is fixed).
  std::optional<LogDensity1D> fixed_target;
  double grid_lo = -8.0;
  double grid_hi = 8.0;
  std::size_t grid_size = 201;
  std::size_t max_adaptations = 10;
  /// Adaptations run before a passing k-hat may stop the loop.
  std::size_t min_adaptations = 1;
  /// Sampler iterations per adaptation summed over chains; half are warmup.
  std::size_t draws_per_adaptation = 8000;
  double khat_threshold = 0.7;
  SamplerConfig sampler;
  /// Smoothing basis over the grid mapped onto [0, 1].
  KernelFamily kernel_family = KernelFamily::gaussian;
  std::size_t kernels = 20;
};

void validate(const IdcConfig& cfg, std::size_t joint_dim);

struct IdcAdaptation {
  std::size_t index = 0;
  double khat = 0.0;  // +inf for the first adaptation
  bool khat_pass = false;
  bool uniform_fallback = false;  // optimal target not estimable; uniform used
  double sampled_lo = 0.0;  // range of the margin among the current draws
  double sampled_hi = 0.0;
  std::size_t grad_evals = 0;
  std::size_t divergences = 0;
  MarginalDensity estimate;  // pooled estimate after this adaptation
  MarginalDensity target;    // desired margin for the next adaptation
};

struct IdcResult {
  MarginalDensity marginal;
  /// Every kept draw; a holds the margin coordinate, log_psi the bias in
  /// force while it was drawn and log_q the unbiased joint log density.
  DrawStore draws;
  bool converged = false;
  std::size_t adaptations_used = 0;
  std::vector<IdcAdaptation> history;
  std::size_t total_grad_evals = 0;
  /// Fraction of pooled draws outside the grid.
  double outside_grid = 0.0;
};

/// Iteratively biases the joint by log p_target(tau) - log p_hat(tau) and
/// re-estimates the original margin from all draws by path sampling over tau.
IdcResult run_idc(const ModelSpec& joint, const IdcConfig& cfg);

constexpr double kUnderflowLogDensity = -700.0;

/// Raises NumericalError when log p_hat drops below kUnderflowLogDensity at a
/// grid point inside [lo, hi]; a sign the grid does not fit the posterior.
void check_no_underflow(const MarginalDensity& md, double lo, double hi);

/// log p_hat on the grid from margin values and d/dtau log q at the draws:
/// gradients averaged in bins of one grid spacing, trapezoid from grid[0],
/// decaying at least at unit rate beyond the occupied bins, then
/// basis-smoothed and normalized.
MarginalDensity estimate_margin_density(std::span<const double> tau, std::span<const double> u,
                                        std::span<const double> grid, KernelFamily family,
                                        std::size_t kernels);

/// sqrt of the windowed mean of U^2 (window 5 grid spacings), floored at
/// 1e-6 of its maximum and normalized. Needs at least 500 draws; raises
/// InsufficientCoverage when more than half of the windows are empty.
MarginalDensity estimate_optimal_target(std::span<const double> tau, std::span<const double> u,
                                        std::span<const double> grid);
MarginalDensity estimate_optimal_target(const DrawStore& store, const ModelSpec& joint,
                                        std::size_t margin_index, std::span<const double> grid);

enum class MomentMethod { quadrature, importance };
enum class MarginScale { identity, exp };

/// E[h(tau)] with h = x^m, x = tau (identity) or exp(tau) (exp).
/// quadrature: trapezoid of h·p_hat on the grid. importance: self-normalized
/// weights exp(-log_psi) over the draws of the last adaptation in `store`.
double moment_estimate(const MarginalDensity& md, double m, MomentMethod method,
                       const DrawStore* store = nullptr, MarginScale scale = MarginScale::identity);

/// Inverse of the trapezoid CDF, linear within the bracketing cell.
double quantile_estimate(const MarginalDensity& md, double prob);

}  // namespace pathtemper
