#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace pathtemper {

struct GpdFit {
  double k;
  double sigma;
  bool degenerate;  // constant sample; k is -inf
};

/// Profile-likelihood (Zhang–Stephens) fit of a generalized Pareto to
/// nonnegative exceedances, with the usual weakly informative shrinkage of k
/// toward 0.5 (weight 10 pseudo-observations).
GpdFit gpd_fit(std::span<const double> exceedances, bool weak_prior = true);

struct KhatResult {
  double khat;
  double sigma;
  std::size_t tail_size;
  bool pass;
};

constexpr double kKhatThreshold = 0.7;

/// Tail size min(ceil(0.2 S), ceil(3 sqrt(S))).
std::size_t pareto_tail_size(std::size_t s) noexcept;

KhatResult pareto_khat(std::span<const double> ratios, double threshold = kKhatThreshold);
/// Same diagnostic on log ratios; avoids overflow for very heavy tails.
KhatResult pareto_khat_log(std::span<const double> log_ratios, double threshold = kKhatThreshold);

/// chains[c][i]: draw i of chain c. Chains may differ in length only for
/// callers that truncate first; all functions use the common minimum length.
using ChainMatrix = std::vector<std::vector<double>>;

/// Rank-normalized split R-hat.
double split_rhat(const ChainMatrix& chains);

/// ESS of the rank-normalized split chains.
double ess_bulk(const ChainMatrix& chains);

/// min ESS of the 5% and 95% quantile indicators.
double ess_tail(const ChainMatrix& chains);

/// Geyer initial-monotone ESS of the given chains as-is (no splitting).
double ess_raw(const ChainMatrix& chains);

/// Standard normal quantile.
double normal_quantile(double p);

}  // namespace pathtemper
