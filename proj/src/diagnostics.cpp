#include "pathtemper/diagnostics.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>

#include "pathtemper/error.hpp"
#include "pathtemper/simd.hpp"

namespace pathtemper {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double coefficient_of_variation(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = simd::sum(x) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / n);
  if (mean == 0.0) return sd == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return sd / std::abs(mean);
}

ChainMatrix truncate_common(const ChainMatrix& chains) {
  if (chains.size() < 2) throw ValidationError("chains", "need at least two chains");
  std::size_t n = std::numeric_limits<std::size_t>::max();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) throw ValidationError("chains", "need at least four draws per chain");
  ChainMatrix out;
  out.reserve(chains.size());
  for (const auto& c : chains) out.emplace_back(c.begin(), c.begin() + static_cast<long>(n));
  return out;
}

ChainMatrix split(const ChainMatrix& chains) {
  ChainMatrix out;
  for (const auto& c : chains) {
    const std::size_t half = c.size() / 2;
    // Odd lengths drop the middle draw.
    out.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
    out.emplace_back(c.end() - static_cast<long>(half), c.end());
  }
  return out;
}

ChainMatrix rank_normalize(const ChainMatrix& chains) {
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  const std::size_t s = pooled.size();
  std::vector<std::size_t> idx(s);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t i, std::size_t j) { return pooled[i] < pooled[j]; });
  std::vector<double> rank(s);
  for (std::size_t k = 0; k < s;) {
    std::size_t e = k;
    while (e + 1 < s && pooled[idx[e + 1]] == pooled[idx[k]]) ++e;
    const double avg = 0.5 * static_cast<double>(k + e) + 1.0;  // 1-based average rank
    for (std::size_t t = k; t <= e; ++t) rank[idx[t]] = avg;
    k = e + 1;
  }
  ChainMatrix out = chains;
  std::size_t pos = 0;
  const double denom = static_cast<double>(s) - 0.75 + 1.0;
  for (auto& c : out)
    for (double& v : c) v = normal_quantile((rank[pos++] - 0.375) / denom);
  return out;
}

double classic_rhat(const ChainMatrix& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    const double mu = simd::sum(c) / n;
    double ss = 0.0;
    for (double v : c) ss += (v - mu) * (v - mu);
    means.push_back(mu);
    vars.push_back(ss / (n - 1.0));
  }
  const double w = std::accumulate(vars.begin(), vars.end(), 0.0) / m;
  if (!(w > 0.0)) throw NumericalError("within-chain variance is zero: R-hat undefined");
  const double grand = std::accumulate(means.begin(), means.end(), 0.0) / m;
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

double quantile_type7(std::vector<double> x, double p) {
  std::sort(x.begin(), x.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("normal quantile needs p in (0, 1)");
  return std::numbers::sqrt2 * boost::math::erf_inv(2.0 * p - 1.0);
}

GpdFit gpd_fit(std::span<const double> exceedances, bool weak_prior) {
  const std::size_t n = exceedances.size();
  if (n < 5) throw ValidationError("tail_sample", "need at least 5 values");
  std::vector<double> x(exceedances.begin(), exceedances.end());
  for (double v : x)
    if (!(v >= 0.0) || !std::isfinite(v))
      throw DomainError("generalized Pareto fit needs finite nonnegative values");
  if (coefficient_of_variation(x) < 1e-10) return {kNegInf, 0.0, true};
  std::sort(x.begin(), x.end());
  if (x.back() <= 0.0) return {kNegInf, 0.0, true};

  const double prior = 3.0;
  const std::size_t m = 30 + static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n))));
  // First quartile; skip leading zeros so the grid stays finite.
  std::size_t q = static_cast<std::size_t>(std::floor(static_cast<double>(n) / 4.0 + 0.5));
  q = q == 0 ? 0 : q - 1;
  while (q < n && x[q] <= 0.0) ++q;
  const double xstar = x[q];

  std::vector<double> theta(m), loglik(m);
  for (std::size_t j = 0; j < m; ++j) {
    theta[j] = 1.0 / x.back() +
               (1.0 - std::sqrt(static_cast<double>(m) / (static_cast<double>(j) + 0.5))) /
                   prior / xstar;
    const double b = -theta[j];
    double kk = 0.0;
    for (double v : x) kk += std::log1p(b * v);
    kk /= static_cast<double>(n);
    loglik[j] = static_cast<double>(n) * (std::log(b / kk) - kk - 1.0);
    if (std::isnan(loglik[j])) loglik[j] = kNegInf;
  }
  const double lse = simd::log_sum_exp(loglik);
  double theta_hat = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const double w = std::exp(loglik[j] - lse);
    if (std::isfinite(w)) theta_hat += theta[j] * w;
  }
  double k = 0.0;
  for (double v : x) k += std::log1p(-theta_hat * v);
  k /= static_cast<double>(n);
  const double sigma = -k / theta_hat;
  if (weak_prior) {
    const double nn = static_cast<double>(n);
    k = (nn * k + 5.0) / (nn + 10.0);
  }
  if (std::isnan(k)) k = std::numeric_limits<double>::infinity();
  return {k, sigma, false};
}

std::size_t pareto_tail_size(std::size_t s) noexcept {
  const double sd = static_cast<double>(s);
  return static_cast<std::size_t>(std::min(std::ceil(0.2 * sd), std::ceil(3.0 * std::sqrt(sd))));
}

KhatResult pareto_khat_log(std::span<const double> log_ratios, double threshold) {
  const std::size_t s = log_ratios.size();
  if (s < 25) throw ValidationError("ratios", "need at least 25 ratios, got " + std::to_string(s));
  for (double v : log_ratios)
    if (!std::isfinite(v)) throw DomainError("ratios must be positive and finite");

  std::vector<double> lw(log_ratios.begin(), log_ratios.end());
  std::sort(lw.begin(), lw.end());
  const double top = lw.back();
  for (double& v : lw) v -= top;

  const std::size_t m = std::min(pareto_tail_size(s), s - 1);
  const double cutoff = lw[s - m - 1];
  std::vector<double> exceed(m);
  for (std::size_t i = 0; i < m; ++i) exceed[i] = std::exp(lw[s - m + i]) - std::exp(cutoff);

  const GpdFit fit = gpd_fit(exceed);
  return {fit.k, fit.sigma, m, fit.k < threshold};
}

KhatResult pareto_khat(std::span<const double> ratios, double threshold) {
  std::vector<double> lr(ratios.size());
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    if (!(ratios[i] > 0.0)) throw DomainError("ratios must be positive");
    lr[i] = std::log(ratios[i]);
  }
  return pareto_khat_log(lr, threshold);
}

double ess_raw(const ChainMatrix& input) {
  const ChainMatrix chains = truncate_common(input);
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();

  std::vector<std::vector<double>> centered(m);
  std::vector<double> chain_mean(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    chain_mean[c] = simd::sum(chains[c]) / static_cast<double>(n);
    centered[c].resize(n);
    for (std::size_t i = 0; i < n; ++i) centered[c][i] = chains[c][i] - chain_mean[c];
  }
  // Biased (1/n) autocovariance averaged over chains, computed on demand.
  const auto mean_acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t c = 0; c < m; ++c)
      total += simd::dot(std::span<const double>(centered[c]).first(n - lag),
                         std::span<const double>(centered[c]).subspan(lag)) /
               static_cast<double>(n);
    return total / static_cast<double>(m);
  };
  const double acov0 = mean_acov(0);
  for (std::size_t c = 0; c < m; ++c)
    chain_var[c] = simd::dot(centered[c], centered[c]) / static_cast<double>(n - 1);
  const double mean_var = std::accumulate(chain_var.begin(), chain_var.end(), 0.0) / static_cast<double>(m);
  double var_plus = mean_var * static_cast<double>(n - 1) / static_cast<double>(n);
  if (m > 1) {
    const double gm = std::accumulate(chain_mean.begin(), chain_mean.end(), 0.0) / static_cast<double>(m);
    double b = 0.0;
    for (double mu : chain_mean) b += (mu - gm) * (mu - gm);
    var_plus += b / static_cast<double>(m - 1);
  }
  if (!(var_plus > 0.0) || !(acov0 > 0.0))
    throw NumericalError("zero variance across draws: ESS undefined");

  std::vector<double> rho(n, 0.0);
  const auto rho_at = [&](std::size_t lag) { return 1.0 - (mean_var - mean_acov(lag)) / var_plus; };
  std::size_t t = 0;
  double rho_even = 1.0;
  rho[0] = rho_even;
  double rho_odd = n > 1 ? rho_at(1) : 0.0;
  if (n > 1) rho[1] = rho_odd;
  while (t + 5 < n && rho_even + rho_odd > 0.0) {
    t += 2;
    rho_even = rho_at(t);
    rho_odd = rho_at(t + 1);
    if (rho_even + rho_odd >= 0.0) {
      rho[t] = rho_even;
      rho[t + 1] = rho_odd;
    }
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho[max_t] = rho_even;

  // Initial monotone sequence on consecutive pairs.
  for (std::size_t p = 2; p + 3 <= max_t; p += 2) {
    const double prev = rho[p - 2] + rho[p - 1];
    if (rho[p] + rho[p + 1] > prev) {
      rho[p] = prev / 2.0;
      rho[p + 1] = prev / 2.0;
    }
  }
  const double total = static_cast<double>(m * n);
  double tau = -1.0;
  for (std::size_t i = 0; i < max_t; ++i) tau += 2.0 * rho[i];
  tau += rho[max_t];
  tau = std::max(tau, 1.0 / std::log10(total));
  return std::min(total / tau, 1.5 * total);
}

double split_rhat(const ChainMatrix& chains) {
  return classic_rhat(rank_normalize(split(truncate_common(chains))));
}

double ess_bulk(const ChainMatrix& chains) {
  return ess_raw(rank_normalize(split(truncate_common(chains))));
}

double ess_tail(const ChainMatrix& chains) {
  const ChainMatrix base = split(truncate_common(chains));
  std::vector<double> pooled;
  for (const auto& c : base) pooled.insert(pooled.end(), c.begin(), c.end());
  if (coefficient_of_variation(pooled) == 0.0 &&
      std::adjacent_find(pooled.begin(), pooled.end(), std::not_equal_to<>()) == pooled.end())
    throw NumericalError("constant chains: tail ESS undefined");
  double best = std::numeric_limits<double>::infinity();
  for (double p : {0.05, 0.95}) {
    const double q = quantile_type7(pooled, p);
    ChainMatrix ind = base;
    for (auto& c : ind)
      for (double& v : c) v = v <= q ? 1.0 : 0.0;
    best = std::min(best, ess_raw(ind));
  }
  return best;
}

}  // namespace pathtemper
