#include "pathtemper/path_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pathtemper/error.hpp"
#include "pathtemper/simd.hpp"

namespace pathtemper {

OrderedGradients order_gradients(std::span<const double> x, std::span<const double> g) {
  if (x.size() != g.size()) throw ValidationError("gradients", "length mismatch");
  if (x.empty()) throw ValidationError("draws", "no draws to order");
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });

  OrderedGradients og;
  for (std::size_t k = 0; k < idx.size();) {
    const double v = x[idx[k]];
    double total = 0.0;
    std::size_t m = 0;
    for (; k < idx.size() && x[idx[k]] == v; ++k, ++m) total += g[idx[k]];
    og.a.push_back(v);
    og.u.push_back(total / static_cast<double>(m));
    og.multiplicity.push_back(m);
  }
  return og;
}

OrderedGradients bin_gradients(const OrderedGradients& og, double width) {
  if (!(width > 0.0)) throw ValidationError("width", "must be positive");
  OrderedGradients out;
  for (std::size_t i = 0; i < og.a.size();) {
    const double bin = std::floor(og.a[i] / width);
    double sa = 0.0, su = 0.0;
    std::size_t n = 0;
    for (; i < og.a.size() && std::floor(og.a[i] / width) == bin; ++i) {
      const double m = static_cast<double>(og.multiplicity[i]);
      sa += m * og.a[i];
      su += m * og.u[i];
      n += og.multiplicity[i];
    }
    out.a.push_back(sa / static_cast<double>(n));
    out.u.push_back(su / static_cast<double>(n));
    out.multiplicity.push_back(n);
  }
  return out;
}

OrderedGradients compute_pointwise_gradients(const DrawStore& store, const JointPathModel& jpm,
                                             GradientMode mode) {
  if (store.empty()) throw ValidationError("store", "empty draw store");
  const std::size_t n = store.size();
  std::vector<double> slope(n), u(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (store.a[i] > 1.0)
      throw DomainError("draw with a > 1 passed to gradient estimation; flip first");
    slope[i] = jpm.link.eval(store.a[i]).dlambda;
  }
  simd::scaled_difference(1.0, store.log_q, store.log_psi, u);
  simd::mul(u, slope, u);
  if (mode == GradientMode::marginal && !jpm.pseudo_prior.is_zero()) {
    for (std::size_t i = 0; i < n; ++i)
      if (slope[i] != 0.0)
        u[i] -= slope[i] * jpm.pseudo_prior.dlog_c(jpm.link.eval(store.a[i]).lambda);
  }
  // Plateau draws carry exactly zero gradient even when log q or log psi is infinite.
  for (std::size_t i = 0; i < n; ++i)
    if (slope[i] == 0.0) u[i] = 0.0;
  return order_gradients(store.a, u);
}

PathIntegral::PathIntegral(OrderedGradients og, double origin)
    : og_(std::move(og)), origin_(origin) {
  if (og_.a.empty()) throw ValidationError("gradients", "empty gradient set");
  cumulative_.resize(og_.a.size());
  // Constant extrapolation from the origin to the first support point.
  cumulative_[0] = (og_.a[0] - origin_) * og_.u[0];
  for (std::size_t i = 1; i < og_.a.size(); ++i)
    cumulative_[i] =
        cumulative_[i - 1] + 0.5 * (og_.a[i] - og_.a[i - 1]) * (og_.u[i] + og_.u[i - 1]);
}

double PathIntegral::operator()(double x) const {
  const auto& a = og_.a;
  const auto& u = og_.u;
  if (x <= a.front()) return (x - origin_) * u.front();
  const auto it = std::upper_bound(a.begin(), a.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - a.begin());
  if (hi == a.size()) return cumulative_.back() + (x - a.back()) * u.back();
  const std::size_t lo = hi - 1;
  const double w = (x - a[lo]) / (a[hi] - a[lo]);
  const double ux = u[lo] + w * (u[hi] - u[lo]);
  return cumulative_[lo] + 0.5 * (x - a[lo]) * (u[lo] + ux);
}

double path_integrate(const OrderedGradients& og, double a_star) {
  if (!(a_star >= 0.0 && a_star <= 1.0)) throw DomainError("a_star outside [0, 1]");
  if (og.a.empty()) throw ValidationError("gradients", "empty gradient set");
  if (a_star == 0.0) return 0.0;
  return PathIntegral(og)(a_star);
}

PseudoPrior update_pseudo_prior(const PseudoPrior& beta_z, const LinkFunction& link,
                                const std::optional<LogDensity1D>& prior_target,
                                std::size_t grid_size) {
  if (!prior_target) return beta_z;

  // Positivity over the whole of [0, 2].
  constexpr std::size_t kCheck = 2001;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < kCheck; ++i) {
    const double a = 2.0 * static_cast<double>(i) / (kCheck - 1);
    const double lp = (*prior_target)(a);
    if (!std::isfinite(lp)) throw DomainError("prior target is not positive on [0, 2]");
    lo = std::min(lo, lp);
    hi = std::max(hi, lp);
  }
  if (hi - lo < 1e-12) return beta_z;

  const auto grid = standard_grid(grid_size);
  std::vector<double> data(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i)
    data[i] = beta_z.log_c(grid[i]) - (*prior_target)(link.inverse(grid[i]));
  // Remove the mean: the target density is only known up to a constant.
  const double mean = std::accumulate(data.begin(), data.end(), 0.0) / static_cast<double>(grid_size);
  for (double& v : data) v -= mean;
  return fit_basis(grid, data, beta_z.family, beta_z.j);
}

double MarginalEstimate::log_p(double a) const {
  const double x = a > 1.0 ? 2.0 - a : a;
  return integral(x) - log_norm;
}

MarginalEstimate estimate_marginal(const DrawStore& flipped_current, const JointPathModel& jpm,
                                   std::size_t grid_size) {
  OrderedGradients og =
      compute_pointwise_gradients(flipped_current, jpm, GradientMode::marginal);
  if (og.a.size() < 10)
    throw InsufficientCoverage("only " + std::to_string(og.a.size()) +
                               " distinct a values; need at least 10");
  PathIntegral integral(bin_gradients(og, kGradientBinWidth));

  std::vector<double> grid_a(grid_size), raw(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) {
    grid_a[i] = static_cast<double>(i) / static_cast<double>(grid_size - 1);
    raw[i] = integral(grid_a[i]);
  }
  // Trapezoid of exp(raw) on [0, 1], doubled for the mirrored half.
  const double m = *std::max_element(raw.begin(), raw.end());
  double area = 0.0;
  for (std::size_t i = 1; i < grid_size; ++i)
    area += 0.5 * (grid_a[i] - grid_a[i - 1]) * (std::exp(raw[i] - m) + std::exp(raw[i - 1] - m));
  const double log_norm = m + std::log(2.0 * area);

  MarginalEstimate out{std::move(integral), log_norm, std::move(grid_a), {}};
  out.grid_log_p.resize(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) out.grid_log_p[i] = raw[i] - log_norm;
  return out;
}

double is_init_slope(std::span<const double> log_q, std::span<const double> log_psi) {
  if (log_q.size() != log_psi.size()) throw ValidationError("draws", "length mismatch");
  if (log_q.empty()) throw ValidationError("draws", "no base draws");
  std::vector<double> ratio(log_q.size());
  simd::scaled_difference(1.0, log_q, log_psi, ratio);
  const double b0 = simd::log_mean_exp(ratio);
  if (!(b0 > -std::numeric_limits<double>::infinity()))
    throw NumericalError("all importance ratios are zero: target and base supports are disjoint");
  return b0;
}

PathEstimate estimate_logz(const OrderedGradients& og, const LinkFunction& link,
                           std::size_t grid_size, KernelFamily family, std::size_t j) {
  const PathIntegral integral(bin_gradients(og, kGradientBinWidth));
  PathEstimate est;
  est.grid_lambda = standard_grid(grid_size);
  est.logz_raw.resize(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i)
    est.logz_raw[i] = integral(link.inverse(est.grid_lambda[i]));
  // log z(0) = 0 is known exactly; anchoring it keeps the base-plateau mass in check.
  std::vector<double> x{0.0}, y{0.0};
  x.insert(x.end(), est.grid_lambda.begin(), est.grid_lambda.end());
  y.insert(y.end(), est.logz_raw.begin(), est.logz_raw.end());
  est.fit = fit_basis(x, y, family, j);
  est.logz_fit.resize(grid_size);
  for (std::size_t i = 0; i < grid_size; ++i) est.logz_fit[i] = est.fit.log_c(est.grid_lambda[i]);
  return est;
}

}  // namespace pathtemper
