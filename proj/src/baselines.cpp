#include "pathtemper/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pathtemper/error.hpp"
#include "pathtemper/hmc.hpp"
#include "pathtemper/rng.hpp"
#include "pathtemper/simd.hpp"

namespace pathtemper {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log of the Simpson integral of exp(f) on [lo, hi] with n (even) panels.
double log_simpson(const ModelSpec& model, double lambda, double lo, double hi, std::size_t n) {
  const double h = (hi - lo) / static_cast<double>(n);
  std::vector<double> terms(n + 1);
  std::vector<double> grad(1);
  for (std::size_t i = 0; i <= n; ++i) {
    const double x = lo + h * static_cast<double>(i);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    terms[i] = model.evaluator(std::span<const double>(&x, 1), lambda, grad) + std::log(w);
  }
  return simd::log_sum_exp(terms) + std::log(h / 3.0);
}

bool close(double a, double b, double rel) {
  if (a == b) return true;
  return std::abs(std::expm1(a - b)) < rel;
}

}  // namespace

double beta_binomial_logz(double alpha, double beta, double y, double n, double lambda) {
  if (n < y) throw ValidationError("n", "must be at least y");
  if (!(alpha > 0 && beta > 0)) throw ValidationError("alpha/beta", "must be positive");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda outside [0, 1]");
  const double log_choose = std::lgamma(n + 1) - std::lgamma(y + 1) - std::lgamma(n - y + 1);
  return lambda * log_choose + std::lgamma(alpha + beta) - std::lgamma(alpha) - std::lgamma(beta) +
         std::lgamma(lambda * y + alpha) + std::lgamma(lambda * (n - y) + beta) -
         std::lgamma(lambda * n + alpha + beta);
}

double quadrature_logz(const ModelSpec& model, double lambda, double center) {
  if (model.dim != 1) throw ValidationError("model", "quadrature needs a one-dimensional model");
  constexpr double kTol = 1e-10;
  int doublings = 0;
  const auto at_width = [&](double w) {
    std::size_t n = 256;
    double prev = log_simpson(model, lambda, center - w, center + w, n);
    while (true) {
      n *= 2;
      if (++doublings > 60) throw NumericalError("quadrature did not converge in 60 doublings");
      const double cur = log_simpson(model, lambda, center - w, center + w, n);
      if (close(cur, prev, kTol)) return cur;
      prev = cur;
    }
  };
  double w = 4.0;
  double prev = at_width(w);
  while (true) {
    w *= 2.0;
    if (++doublings > 60) throw NumericalError("quadrature window did not converge");
    const double cur = at_width(w);
    if (std::isfinite(cur) && close(cur, prev, kTol)) return cur;
    prev = cur;
  }
}

double importance_log_ratio(std::span<const double> log_weights) {
  if (log_weights.empty()) throw ValidationError("draws", "no draws");
  const double r = simd::log_mean_exp(log_weights);
  if (r == kNegInf) throw NumericalError("all importance ratios are zero");
  return r;
}

double importance_z_ratio(std::span<const double> theta_draws, const ModelSpec& model,
                          double lambda, double lambda_next) {
  if (model.dim != 1) throw ValidationError("model", "expects scalar theta draws");
  if (lambda_next == lambda) return 0.0;
  std::vector<double> lw(theta_draws.size());
  std::vector<double> grad(1);
  for (std::size_t s = 0; s < theta_draws.size(); ++s) {
    const auto x = theta_draws.subspan(s, 1);
    lw[s] = model.evaluator(x, lambda_next, grad) - model.evaluator(x, lambda, grad);
  }
  return importance_log_ratio(lw);
}

DiscreteLadder DiscreteLadder::even(std::size_t rungs) {
  if (rungs < 2) throw ValidationError("rungs", "need at least two");
  DiscreteLadder l;
  for (std::size_t k = 0; k < rungs; ++k)
    l.lambda.push_back(static_cast<double>(k) / static_cast<double>(rungs - 1));
  l.log_c.assign(rungs, 0.0);
  return l;
}

void DiscreteLadder::validate() const {
  if (lambda.size() < 2) throw ValidationError("ladder", "need K >= 1");
  if (lambda.front() != 0.0 || lambda.back() != 1.0)
    throw ValidationError("ladder", "must start at 0 and end at 1");
  for (std::size_t k = 1; k < lambda.size(); ++k)
    if (!(lambda[k] > lambda[k - 1])) throw ValidationError("ladder", "must be strictly increasing");
  if (log_c.size() != lambda.size()) throw ValidationError("ladder", "mass count mismatch");
  for (double v : log_c)
    if (!std::isfinite(v)) throw ValidationError("ladder", "masses must be positive");
}

std::vector<double> rao_blackwell_mass(std::span<const double> log_q, std::size_t rungs,
                                       std::span<const double> log_c,
                                       std::span<const double> weights) {
  if (rungs == 0 || log_q.size() % rungs != 0) throw ValidationError("log_q", "shape mismatch");
  const std::size_t s = log_q.size() / rungs;
  if (s == 0) throw ValidationError("draws", "no draws");
  if (!weights.empty() && weights.size() != s) throw ValidationError("weights", "length mismatch");
  std::vector<double> mass(rungs, 0.0), row(rungs);
  double total_w = 0.0;
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t k = 0; k < rungs; ++k) row[k] = log_q[i * rungs + k] - log_c[k];
    const double lse = simd::log_sum_exp(row);
    const double w = weights.empty() ? 1.0 : weights[i];
    for (std::size_t k = 0; k < rungs; ++k) mass[k] += w * std::exp(row[k] - lse);
    total_w += w;
  }
  for (double& m : mass) m /= total_w;
  return mass;
}

std::vector<double> logz_from_mass(std::span<const double> mass, std::span<const double> log_c) {
  std::vector<double> out(mass.size());
  for (std::size_t k = 0; k < mass.size(); ++k) out[k] = std::log(mass[k]) + log_c[k];
  const double ref = out[0];
  for (double& v : out) v -= ref;
  return out;
}

namespace {

// One simulated-tempering chain: current rung, state and per-rung HMC tuning.
struct RungChain {
  Philox rng;
  PhasePoint z;
  std::size_t k = 0;
  std::vector<HmcKernel> kernels;
  std::vector<StepsizeAdapter> adapters;
  std::vector<bool> initialised;
  std::size_t grad_evals = 0;
  std::vector<double> logq_rows;  // kept draws x rungs, current adaptation
  std::vector<double> counts;
};

}  // namespace

DiscreteRun discrete_tempering_run(const ModelSpec& target, const ModelSpec& base,
                                   DiscreteLadder ladder, DiscreteEstimator estimator,
                                   const DiscreteBudget& budget, std::uint64_t seed) {
  ladder.validate();
  if (target.dim != base.dim) throw ValidationError("base", "dimension differs from target");
  if (budget.adaptations == 0 || budget.lambda_draws < 2 || budget.hmc_updates == 0 ||
      budget.chains == 0)
    throw ValidationError("budget", "adaptations, lambda_draws, hmc_updates and chains must be positive");
  const std::size_t rungs = ladder.lambda.size();
  const std::size_t d = target.dim;

  const auto log_q_at = [&ladder](double lq, double lpsi, std::size_t r) {
    const double lam = ladder.lambda[r];
    return (lam > 0.0 ? lam * lq : 0.0) + (lam < 1.0 ? (1.0 - lam) * lpsi : 0.0);
  };

  std::vector<GradientFn> fns;
  fns.reserve(rungs);
  for (std::size_t k = 0; k < rungs; ++k) {
    const double lam = ladder.lambda[k];
    fns.emplace_back([&target, &base, lam, d](std::span<const double> q, std::span<double> g) {
      thread_local std::vector<double> gb;
      gb.resize(d);
      double lp = 0.0;
      std::fill(g.begin(), g.end(), 0.0);
      if (lam > 0.0) {
        lp += lam * target.evaluator(q, 1.0, gb);
        for (std::size_t i = 0; i < d; ++i) g[i] += lam * gb[i];
      }
      if (lam < 1.0) {
        lp += (1.0 - lam) * base.evaluator(q, 0.0, gb);
        for (std::size_t i = 0; i < d; ++i) g[i] += (1.0 - lam) * gb[i];
      }
      return lp;
    });
  }

  std::vector<RungChain> chains;
  chains.reserve(budget.chains);
  for (std::size_t c = 0; c < budget.chains; ++c) {
    RungChain ch{Philox(seed, Philox::substream(0x64697363ull, c)), {}, 0, {}, {}, {}, 0, {}, {}};
    for (std::size_t k = 0; k < rungs; ++k)
      ch.kernels.emplace_back(fns[k], std::vector<double>(d, 1.0), 1.0,
                              Trajectory::static_jittered, 1, budget.leapfrog_steps);
    ch.adapters.assign(rungs, StepsizeAdapter(0.8));
    ch.initialised.assign(rungs, false);
    // Start at the base rung from a finite point.
    ch.z.q.resize(d);
    ch.z.grad.resize(d);
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      for (double& v : ch.z.q) v = 4.0 * ch.rng.uniform() - 2.0;
      ch.z.logp = fns[0](ch.z.q, ch.z.grad);
      ++ch.grad_evals;
      ok = std::isfinite(ch.z.logp);
    }
    if (!ok) throw InitializationError("discrete tempering: no finite starting point");
    chains.push_back(std::move(ch));
  }

  const std::size_t warm = budget.lambda_draws / 2;
  const auto run_chain = [&](RungChain& ch) {
    std::vector<double> gtmp(d);
    const auto endpoint_logs = [&](double& lq, double& lpsi) {
      lq = target.evaluator(ch.z.q, 1.0, gtmp);
      lpsi = base.evaluator(ch.z.q, 0.0, gtmp);
    };
    ch.logq_rows.clear();
    ch.counts.assign(rungs, 0.0);
    for (std::size_t j = 0; j < budget.lambda_draws; ++j) {
      // Rung move: propose a neighbour, Metropolis on q_k(theta)/c_k.
      double lq, lpsi;
      endpoint_logs(lq, lpsi);
      const std::size_t k = ch.k;
      const bool up = ch.rng.uniform() < 0.5;
      const std::size_t prop = up ? (k + 1 == rungs ? k : k + 1) : (k == 0 ? k : k - 1);
      if (prop != k) {
        const double log_acc = (log_q_at(lq, lpsi, prop) - ladder.log_c[prop]) -
                               (log_q_at(lq, lpsi, k) - ladder.log_c[k]);
        if (std::log(ch.rng.uniform_open()) < log_acc) ch.k = prop;
      }
      ch.z.logp = fns[ch.k](ch.z.q, ch.z.grad);
      ++ch.grad_evals;

      HmcKernel& kern = ch.kernels[ch.k];
      StepsizeAdapter& adapter = ch.adapters[ch.k];
      if (!ch.initialised[ch.k]) {
        const double eps = kern.find_reasonable_stepsize(ch.z, ch.rng, ch.grad_evals);
        kern.set_stepsize(eps);
        adapter.set_mu(std::log(10.0 * eps));
        ch.initialised[ch.k] = true;
      }
      const bool warmup = j < warm;
      if (!warmup && adapter.learned()) kern.set_stepsize(adapter.final_stepsize());
      for (std::size_t m = 0; m < budget.hmc_updates; ++m) {
        const TransitionInfo info = kern.transition(ch.z, ch.rng);
        ch.grad_evals += info.n_leapfrog;
        if (warmup) {
          kern.set_stepsize(adapter.learn(info.accept_stat));
          continue;
        }
        endpoint_logs(lq, lpsi);
        for (std::size_t r = 0; r < rungs; ++r) ch.logq_rows.push_back(log_q_at(lq, lpsi, r));
        ch.counts[ch.k] += 1.0;
      }
    }
  };

  DiscreteRun run;
  std::vector<std::exception_ptr> errors(chains.size());
  for (std::size_t t = 0; t < budget.adaptations; ++t) {
    parallel_for(chains.size(), [&](std::size_t c) {
      try {
        run_chain(chains[c]);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);

    std::vector<double> logq_rows, counts(rungs, 0.0);
    for (const RungChain& ch : chains) {
      logq_rows.insert(logq_rows.end(), ch.logq_rows.begin(), ch.logq_rows.end());
      for (std::size_t r = 0; r < rungs; ++r) counts[r] += ch.counts[r];
    }
    const std::size_t kept = logq_rows.size() / rungs;

    std::vector<double> mass(rungs);
    if (estimator == DiscreteEstimator::rao_blackwell) {
      mass = rao_blackwell_mass(logq_rows, rungs, ladder.log_c);
    } else {
      const double total = static_cast<double>(kept);
      for (std::size_t r = 0; r < rungs; ++r) {
        mass[r] = counts[r] / total;
        if (counts[r] == 0.0) {
          mass[r] = 1.0 / (2.0 * total);
          ++run.starvation_warnings;
          run.warnings.push_back("adaptation " + std::to_string(t) + ": rung " + std::to_string(r) +
                                 " never visited");
        }
      }
    }
    const std::vector<double> logz = logz_from_mass(mass, ladder.log_c);
    run.logz.push_back(logz);
    ladder.log_c = logz;
  }
  for (const RungChain& ch : chains) run.grad_evals += ch.grad_evals;
  return run;
}

}  // namespace pathtemper
