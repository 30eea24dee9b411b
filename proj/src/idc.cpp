#include "pathtemper/idc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pathtemper/diagnostics.hpp"
#include "pathtemper/error.hpp"

namespace pathtemper {

namespace {

double log_trapezoid(std::span<const double> x, std::span<const double> logy) {
  const double m = *std::max_element(logy.begin(), logy.end());
  if (!std::isfinite(m)) throw NumericalError("density is zero or non-finite on the whole grid");
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i)
    s += 0.5 * (x[i] - x[i - 1]) * (std::exp(logy[i] - m) + std::exp(logy[i - 1] - m));
  return m + std::log(s);
}

void check_grid(std::span<const double> grid) {
  if (grid.size() < 2) throw ValidationError("grid", "need at least two points");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw ValidationError("grid", "must be strictly increasing");
}

// Smooth function of the margin: a basis fit over the grid mapped onto [0, 1],
// held at its end values outside the grid.
struct GridCurve {
  PseudoPrior fit = PseudoPrior::zero(KernelFamily::gaussian, 1);
  double lo = 0.0;
  double width = 1.0;

  double value(double t) const { return fit.log_c(std::clamp((t - lo) / width, 0.0, 1.0)); }
  double derivative(double t) const {
    const double s = (t - lo) / width;
    if (s < 0.0 || s > 1.0) return 0.0;
    return fit.dlog_c(s) / width;
  }
};

GridCurve fit_curve(std::span<const double> grid, std::span<const double> values,
                    KernelFamily family, std::size_t kernels) {
  GridCurve c;
  c.lo = grid.front();
  c.width = grid.back() - grid.front();
  std::vector<double> s(grid.size()), y(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    s[i] = (grid[i] - c.lo) / c.width;
    y[i] = values[i] - values[0];
  }
  c.fit = fit_basis(s, y, family, kernels);
  return c;
}

}  // namespace

double MarginalDensity::log_pdf(double x) const {
  if (x <= grid.front()) return log_density.front();
  if (x >= grid.back()) return log_density.back();
  const auto it = std::upper_bound(grid.begin(), grid.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - grid.begin());
  const std::size_t lo = hi - 1;
  const double w = (x - grid[lo]) / (grid[hi] - grid[lo]);
  return log_density[lo] + w * (log_density[hi] - log_density[lo]);
}

double MarginalDensity::integral() const { return std::exp(log_trapezoid(grid, log_density)); }

MarginalDensity MarginalDensity::exp_transformed() const {
  std::vector<double> g(grid.size()), v(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    g[i] = std::exp(grid[i]);
    v[i] = log_density[i] - grid[i];
  }
  return normalize_on_grid(std::move(g), std::move(v));
}

MarginalDensity normalize_on_grid(std::vector<double> grid, std::vector<double> log_values) {
  check_grid(grid);
  if (grid.size() != log_values.size()) throw ValidationError("grid", "length mismatch");
  MarginalDensity md;
  md.log_norm = log_trapezoid(grid, log_values);
  for (double& v : log_values) v -= md.log_norm;
  md.grid = std::move(grid);
  md.log_density = std::move(log_values);
  return md;
}

std::vector<double> even_grid(double lo, double hi, std::size_t n) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(hi > lo))
    throw ValidationError("grid", "bounds must be finite with lo < hi");
  if (n < 2) throw ValidationError("grid", "need at least two points");
  std::vector<double> g(n);
  const double h = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) g[i] = lo + h * static_cast<double>(i);
  g.back() = hi;
  return g;
}

void validate(const IdcConfig& cfg, std::size_t joint_dim) {
  if (cfg.margin_index >= joint_dim) throw ValidationError("margin_index", "outside the joint");
  if (!std::isfinite(cfg.grid_lo) || !std::isfinite(cfg.grid_hi) || !(cfg.grid_hi > cfg.grid_lo))
    throw ValidationError("grid", "bounds must be finite with lo < hi");
  if (cfg.grid_size < 50) throw ValidationError("grid", "need at least 50 points");
  if (cfg.grid_size < cfg.kernels + 1) throw ValidationError("grid", "must exceed J");
  if (cfg.max_adaptations == 0) throw ValidationError("max_adaptations", "must be positive");
  if (cfg.min_adaptations > cfg.max_adaptations)
    throw ValidationError("min_adaptations", "exceeds max_adaptations");
  if (cfg.draws_per_adaptation < 2 * cfg.sampler.chains)
    throw ValidationError("draws_per_adaptation", "fewer than two iterations per chain");
  if (!(cfg.khat_threshold > 0.0 && cfg.khat_threshold <= 1.0))
    throw ValidationError("khat_threshold", "must lie in (0, 1]");
  if (cfg.target == MarginTarget::fixed && !cfg.fixed_target)
    throw ValidationError("fixed_target", "required for a fixed target");
  validate(cfg.sampler);
}

void check_no_underflow(const MarginalDensity& md, double lo, double hi) {
  for (std::size_t i = 0; i < md.grid.size(); ++i)
    if (md.grid[i] >= lo && md.grid[i] <= hi && md.log_density[i] < kUnderflowLogDensity)
      throw NumericalError("estimated margin underflows on the sampled range; check the grid");
}

MarginalDensity estimate_margin_density(std::span<const double> tau, std::span<const double> u,
                                        std::span<const double> grid, KernelFamily family,
                                        std::size_t kernels) {
  if (tau.size() != u.size()) throw ValidationError("gradients", "length mismatch");
  check_grid(grid);
  const std::size_t n = grid.size();
  const double h = (grid.back() - grid.front()) / static_cast<double>(n - 1);
  std::vector<double> sum(n, 0.0);
  std::vector<std::size_t> count(n, 0);
  for (std::size_t s = 0; s < tau.size(); ++s) {
    const double pos = std::round((tau[s] - grid.front()) / h);
    if (!(pos >= 0.0 && pos < static_cast<double>(n))) continue;
    const auto b = static_cast<std::size_t>(pos);
    sum[b] += u[s];
    ++count[b];
  }
  OrderedGradients og;
  for (std::size_t b = 0; b < n; ++b)
    if (count[b] > 0) {
      og.a.push_back(grid[b]);
      og.u.push_back(sum[b] / static_cast<double>(count[b]));
      og.multiplicity.push_back(count[b]);
    }
  if (og.a.size() < 2) throw InsufficientCoverage("fewer than two occupied margin bins");
  // Beyond the occupied bins log p_hat decays at least at unit rate. Edge
  // gradients of a poorly mixing sampler can point the wrong way, and a
  // decaying guess pulls the next round outward.
  const double first = og.a.front(), last = og.a.back();
  const double rise = std::max(og.u.front(), 1.0);
  const double fall = std::min(og.u.back(), -1.0);
  const PathIntegral pi(std::move(og), grid.front());
  const double at_first = pi(first), at_last = pi(last);
  std::vector<double> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (grid[i] < first)
      raw[i] = at_first - rise * (first - grid[i]);
    else if (grid[i] > last)
      raw[i] = at_last + fall * (grid[i] - last);
    else
      raw[i] = pi(grid[i]);
  }
  const GridCurve smooth = fit_curve(grid, raw, family, kernels);
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = smooth.value(grid[i]);
  return normalize_on_grid(std::vector<double>(grid.begin(), grid.end()), std::move(v));
}

MarginalDensity estimate_optimal_target(std::span<const double> tau, std::span<const double> u,
                                        std::span<const double> grid) {
  if (tau.size() != u.size()) throw ValidationError("gradients", "length mismatch");
  if (tau.size() < 500) throw ValidationError("draws", "need at least 500 draws");
  check_grid(grid);
  const std::size_t n = grid.size();
  const double half = 2.5 * (grid.back() - grid.front()) / static_cast<double>(n - 1);

  std::vector<std::size_t> idx(tau.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return tau[i] < tau[j]; });
  std::vector<double> sorted(tau.size()), prefix(tau.size() + 1, 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    sorted[k] = tau[idx[k]];
    prefix[k + 1] = prefix[k] + u[idx[k]] * u[idx[k]];
  }

  std::vector<double> rms(n, std::numeric_limits<double>::quiet_NaN());
  std::size_t empty = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto b = std::lower_bound(sorted.begin(), sorted.end(), grid[i] - half) - sorted.begin();
    const auto e = std::upper_bound(sorted.begin(), sorted.end(), grid[i] + half) - sorted.begin();
    if (e == b) {
      ++empty;
      continue;
    }
    rms[i] = std::sqrt((prefix[static_cast<std::size_t>(e)] - prefix[static_cast<std::size_t>(b)]) /
                       static_cast<double>(e - b));
  }
  if (2 * empty > n) throw InsufficientCoverage("more than half of the margin windows are empty");

  // Empty windows copy the nearest occupied one.
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isnan(rms[i])) continue;
    for (std::size_t d = 1; d < n; ++d) {
      if (i >= d && !std::isnan(rms[i - d])) {
        rms[i] = rms[i - d];
        break;
      }
      if (i + d < n && !std::isnan(rms[i + d])) {
        rms[i] = rms[i + d];
        break;
      }
    }
  }
  const double top = *std::max_element(rms.begin(), rms.end());
  if (!(top > 0.0) || !std::isfinite(top)) {
    // U vanishes everywhere: every margin value is equally cheap.
    std::fill(rms.begin(), rms.end(), 1.0);
  }
  const double floor = 1e-6 * (top > 0.0 && std::isfinite(top) ? top : 1.0);
  std::vector<double> lv(n);
  for (std::size_t i = 0; i < n; ++i) lv[i] = std::log(std::max(rms[i], floor));
  return normalize_on_grid(std::vector<double>(grid.begin(), grid.end()), std::move(lv));
}

MarginalDensity estimate_optimal_target(const DrawStore& store, const ModelSpec& joint,
                                        std::size_t margin_index, std::span<const double> grid) {
  if (store.theta_dim != joint.dim) throw ValidationError("store", "dimension differs from joint");
  if (margin_index >= joint.dim) throw ValidationError("margin_index", "outside the joint");
  std::vector<double> tau(store.size()), u(store.size()), g(joint.dim);
  for (std::size_t i = 0; i < store.size(); ++i) {
    eval_into(joint, store.theta_row(i), 1.0, g);
    tau[i] = store.theta_row(i)[margin_index];
    u[i] = g[margin_index];
  }
  return estimate_optimal_target(tau, u, grid);
}

IdcResult run_idc(const ModelSpec& joint, const IdcConfig& cfg) {
  validate(cfg, joint.dim);
  const std::size_t idx = cfg.margin_index;
  const std::vector<double> grid = even_grid(cfg.grid_lo, cfg.grid_hi, cfg.grid_size);

  const std::size_t per_chain = cfg.draws_per_adaptation / cfg.sampler.chains;
  SamplerConfig scfg = cfg.sampler;
  scfg.warmup_draws = per_chain / 2;
  scfg.kept_draws = per_chain - scfg.warmup_draws;

  std::vector<double> fixed_target;
  if (cfg.target == MarginTarget::fixed) {
    fixed_target.resize(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) fixed_target[i] = (*cfg.fixed_target)(grid[i]);
  }

  IdcResult result;
  result.draws.theta_dim = joint.dim;
  std::vector<double> tau_all, u_all;
  GridCurve bias;
  bias.lo = grid.front();
  bias.width = grid.back() - grid.front();
  bool biased = false;

  for (std::size_t t = 0; t < cfg.max_adaptations; ++t) {
    const GradientFn fn = [&](std::span<const double> x, std::span<double> g) {
      double lp = eval_into(joint, x, 1.0, g);
      if (biased) {
        lp += bias.value(x[idx]);
        g[idx] += bias.derivative(x[idx]);
      }
      return lp;
    };
    scfg.stream = t;
    const SampleResult sr = sample(fn, joint.dim, scfg);

    IdcAdaptation rec;
    rec.index = t;
    rec.grad_evals = sr.total_grad_evals();
    result.total_grad_evals += rec.grad_evals;
    std::vector<double> tau_cur;
    std::vector<double> g(joint.dim);
    for (const ChainResult& ch : sr.chains) {
      const std::size_t rows = ch.divergent.size();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::span<const double> x(ch.draws.data() + r * joint.dim, joint.dim);
        const double lq = eval_into(joint, x, 1.0, g);
        const double b = biased ? bias.value(x[idx]) : 0.0;
        result.draws.push_back(static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(ch.chain),
                               x[idx], x, lq, b, ch.divergent[r] != 0);
        tau_cur.push_back(x[idx]);
        tau_all.push_back(x[idx]);
        u_all.push_back(g[idx]);
        rec.divergences += ch.divergent[r];
      }
    }
    const auto [mn, mx] = std::minmax_element(tau_cur.begin(), tau_cur.end());
    rec.sampled_lo = *mn;
    rec.sampled_hi = *mx;

    rec.estimate = estimate_margin_density(tau_all, u_all, grid, cfg.kernel_family, cfg.kernels);
    const auto [pmn, pmx] = std::minmax_element(tau_all.begin(), tau_all.end());
    check_no_underflow(rec.estimate, *pmn, *pmx);

    if (t == 0) {
      rec.khat = std::numeric_limits<double>::infinity();
    } else {
      const MarginalDensity& prev = result.history.back().estimate;
      std::vector<double> lr(tau_cur.size());
      for (std::size_t s = 0; s < tau_cur.size(); ++s)
        lr[s] = rec.estimate.log_pdf(tau_cur[s]) - prev.log_pdf(tau_cur[s]);
      const auto [lo, hi] = std::minmax_element(lr.begin(), lr.end());
      // Ratios this flat carry no tail; k-hat would only fit rounding noise.
      rec.khat = *hi - *lo < kStableLogRatio ? -std::numeric_limits<double>::infinity()
                                             : pareto_khat_log(lr, cfg.khat_threshold).khat;
    }
    rec.khat_pass = rec.khat < cfg.khat_threshold;

    if (cfg.target == MarginTarget::fixed) {
      rec.target = normalize_on_grid(grid, fixed_target);
    } else {
      try {
        rec.target = estimate_optimal_target(tau_all, u_all, grid);
      } catch (const InsufficientCoverage&) {
        // Too little of the grid seen yet: spread evenly so the next round explores it.
        rec.target = normalize_on_grid(grid, std::vector<double>(grid.size(), 0.0));
        rec.uniform_fallback = true;
      }
    }
    std::vector<double> b(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
      b[i] = rec.target.log_density[i] - rec.estimate.log_density[i];
    bias = fit_curve(grid, b, cfg.kernel_family, cfg.kernels);
    biased = true;

    result.marginal = rec.estimate;
    result.history.push_back(std::move(rec));
    result.adaptations_used = t + 1;
    result.converged = result.history.back().khat_pass;
    if (result.converged && t + 1 >= cfg.min_adaptations) break;
  }

  std::size_t outside = 0;
  for (double v : tau_all)
    if (v < grid.front() || v > grid.back()) ++outside;
  result.outside_grid = static_cast<double>(outside) / static_cast<double>(tau_all.size());
  return result;
}

double moment_estimate(const MarginalDensity& md, double m, MomentMethod method,
                       const DrawStore* store, MarginScale scale) {
  const auto h = [&](double x) {
    return scale == MarginScale::exp ? std::exp(m * x) : std::pow(x, m);
  };
  if (method == MomentMethod::quadrature) {
    double s = 0.0;
    for (std::size_t i = 1; i < md.grid.size(); ++i)
      s += 0.5 * (md.grid[i] - md.grid[i - 1]) *
           (h(md.grid[i]) * std::exp(md.log_density[i]) +
            h(md.grid[i - 1]) * std::exp(md.log_density[i - 1]));
    return s;
  }
  if (store == nullptr || store->empty())
    throw ValidationError("store", "importance moments need draws");
  const std::uint32_t last = *std::max_element(store->adaptation.begin(), store->adaptation.end());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < store->size(); ++i)
    if (store->adaptation[i] == last) top = std::max(top, -store->log_psi[i]);
  if (!std::isfinite(top)) throw NumericalError("importance weights are all zero");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < store->size(); ++i) {
    if (store->adaptation[i] != last) continue;
    const double w = std::exp(-store->log_psi[i] - top);
    num += w * h(store->a[i]);
    den += w;
  }
  if (!(den > 0.0)) throw NumericalError("importance weights are all zero");
  return num / den;
}

double quantile_estimate(const MarginalDensity& md, double prob) {
  if (!(prob > 0.0 && prob < 1.0)) throw DomainError("probability must lie in (0, 1)");
  const std::size_t n = md.grid.size();
  std::vector<double> cdf(n, 0.0);
  for (std::size_t i = 1; i < n; ++i)
    cdf[i] = cdf[i - 1] + 0.5 * (md.grid[i] - md.grid[i - 1]) *
                              (std::exp(md.log_density[i]) + std::exp(md.log_density[i - 1]));
  const double target = prob * cdf.back();
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
  if (it == cdf.begin()) return md.grid.front();
  if (it == cdf.end()) return md.grid.back();
  const std::size_t hi = static_cast<std::size_t>(it - cdf.begin());
  const std::size_t lo = hi - 1;
  const double w = (target - cdf[lo]) / (cdf[hi] - cdf[lo]);
  return md.grid[lo] + w * (md.grid[hi] - md.grid[lo]);
}

}  // namespace pathtemper
