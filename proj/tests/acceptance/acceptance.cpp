// Acceptance criteria AC1-AC7. One PASS/FAIL line per criterion; exit 1 on any FAIL.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "properties.hpp"
#include "pathtemper/baselines.hpp"
#include "pathtemper/diagnostics.hpp"
#include "pathtemper/idc.hpp"
#include "pathtemper/model.hpp"
#include "pathtemper/temper.hpp"

using namespace pathtemper;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

std::function<double(double)> analytic_logz(const Fixture& fx) {
  const Params& p = fx.target.params;
  return [a = p.at("alpha"), b = p.at("beta"), y = p.at("y"), n = p.at("n")](double lambda) {
    return beta_binomial_logz(a, b, y, n, lambda);
  };
}

// Mean absolute error of the fitted curve over lambda_i = i/100.
double grid_mae(const PathEstimate& est, const std::function<double(double)>& truth) {
  double s = 0.0;
  for (std::size_t i = 0; i < est.grid_lambda.size(); ++i) s += std::abs(est.logz_fit[i] - truth(est.grid_lambda[i]));
  return s / static_cast<double>(est.grid_lambda.size());
}

// RMS error over the rungs k/10, k = 1..10.
double ladder_l2(const std::function<double(double)>& est, const std::function<double(double)>& truth) {
  double s = 0.0;
  for (int k = 1; k <= 10; ++k) s += std::pow(est(k / 10.0) - truth(k / 10.0), 2);
  return std::sqrt(s / 10.0);
}

double type7_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = static_cast<double>(v.size() - 1) * p;
  const auto i = static_cast<std::size_t>(h);
  const std::size_t j = std::min(i + 1, v.size() - 1);
  return v[i] + (h - static_cast<double>(i)) * (v[j] - v[i]);
}

GradientFn plain_fn(const ModelSpec& m) {
  return [&m](std::span<const double> x, std::span<double> g) { return eval_into(m, x, 1.0, g); };
}

// Plain NUTS with at least `budget` gradient evaluations: a first run sized by
// a pilot's cost per iteration, rescaled once if it fell short.
SampleResult plain_at_budget(const ModelSpec& m, std::size_t chains, std::size_t budget, std::uint64_t seed) {
  const GradientFn fn = plain_fn(m);
  SamplerConfig pilot;
  pilot.chains = chains;
  pilot.seed = seed + 5000;
  pilot.warmup_draws = 200;
  pilot.kept_draws = 200;
  const SampleResult pr = sample(fn, m.dim, pilot);
  double per_iter = static_cast<double>(pr.total_grad_evals()) / static_cast<double>(chains * 400);
  SampleResult out;
  for (int attempt = 0; attempt < 4; ++attempt) {
    const auto iters = static_cast<std::size_t>(std::ceil(static_cast<double>(budget) / per_iter /
                                                          static_cast<double>(chains)));
    SamplerConfig sc;
    sc.chains = chains;
    sc.seed = seed;
    sc.warmup_draws = iters / 2;
    sc.kept_draws = iters - iters / 2;
    out = sample(fn, m.dim, sc);
    if (out.total_grad_evals() >= budget) break;
    per_iter *= static_cast<double>(out.total_grad_evals()) / static_cast<double>(budget) * 0.98;
  }
  return out;
}

Outcome ac1() {
  const auto t0 = Clock::now();
  const Fixture fx = make_fixture("beta_binomial_easy");
  const auto truth = analytic_logz(fx);
  TemperConfig cfg;
  cfg.draws_per_adaptation = 3000;
  cfg.max_adaptations = 20;
  cfg.stop_on_convergence = false;
  cfg.sampler.seed = 1;
  const TemperResult r = run_continuous_tempering(fx.target, fx.base, cfg);
  std::size_t first = 0;
  std::string curve;
  for (const auto& h : r.history) {
    const double mae = grid_mae(h.logz, truth);
    if (h.index < 5) curve += fmt::format(" {:.3f}", mae);
    if (first == 0 && mae < 0.1) first = h.index + 1;
  }
  const double secs = seconds_since(t0);
  return {first > 0 && secs <= 300.0,
          fmt::format("grid MAE < 0.1 first at adaptation {} (MAE by adaptation:{} ...), k-hat first passed at {}, {:.1f} s",
                      first, curve, r.first_pass, secs)};
}

Outcome ac2() {
  const Fixture fx = make_fixture("beta_binomial_hard");
  const auto truth = analytic_logz(fx);
  TemperConfig cfg;
  cfg.max_adaptations = 20;
  cfg.stop_on_convergence = false;
  cfg.sampler.seed = 1;
  const TemperResult r = run_continuous_tempering(fx.target, fx.base, cfg);
  const auto l2_at = [&](std::size_t t) {
    const PseudoPrior& fit = r.history[t].logz.fit;
    return ladder_l2([&](double l) { return fit.log_c(l); }, truth);
  };
  const double mae = grid_mae(r.history.back().logz, truth);
  const double l2_2 = l2_at(1), l2_20 = l2_at(r.history.size() - 1);
  return {r.first_pass > 0 && mae < 1.0 && l2_20 < l2_2,
          fmt::format("k-hat < 0.7 first at adaptation {}, final grid MAE {:.3f}, L2 {:.3f} (adaptation 2) -> {:.3f} "
                      "(adaptation 20)",
                      r.first_pass, mae, l2_2, l2_20)};
}

Outcome ac3() {
  const Fixture fx = make_fixture("beta_binomial_hard");
  const auto truth = analytic_logz(fx);
  int wins = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TemperConfig cfg;
    cfg.max_adaptations = 20;
    cfg.stop_on_convergence = false;
    cfg.sampler.seed = seed;
    const TemperResult path = run_continuous_tempering(fx.target, fx.base, cfg);
    const PseudoPrior& fit = path.history.back().logz.fit;
    const double e_path = ladder_l2([&](double l) { return fit.log_c(l); }, truth);

    DiscreteBudget b;
    b.chains = 4;
    const DiscreteLadder ladder = DiscreteLadder::even(11);
    double e[2];
    std::size_t evals = 0;
    for (int m = 0; m < 2; ++m) {
      const DiscreteRun run = discrete_tempering_run(
          fx.target, fx.base, ladder, m == 0 ? DiscreteEstimator::rao_blackwell : DiscreteEstimator::empirical_is,
          b, seed);
      const auto& z = run.logz.back();
      e[m] = ladder_l2([&](double l) { return z[static_cast<std::size_t>(std::lround(l * 10.0))]; }, truth);
      evals = run.grad_evals;
    }
    const bool ok = e_path < e[0] && e[0] < e[1] && path.total_grad_evals <= evals;
    wins += ok;
    rows += fmt::format(" s{}:{:.2f}/{:.2f}/{:.2f}{}", seed, e_path, e[0], e[1], ok ? "" : "x");
  }
  return {wins >= 8, fmt::format("path < RB < IS in {}/10 (L2 path/RB/IS:{})", wins, rows)};
}

Outcome ac4() {
  const Fixture fx = make_fixture("gaussian_mixture");
  int temper_ok = 0, plain_stuck = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TemperConfig cfg;
    cfg.sampler.seed = seed;
    cfg.sampler.chains = 1;
    const TemperResult r = run_continuous_tempering(fx.target, fx.base, cfg);
    double pos = 0.0;
    for (std::size_t i = 0; i < r.target_draws.size(); ++i) pos += r.target_draws.theta_row(i)[0] > 0.0;
    const double f_t = r.target_draws.empty() ? 0.0 : pos / static_cast<double>(r.target_draws.size());
    temper_ok += r.converged && f_t >= 0.4 && f_t <= 0.6;

    const SampleResult pr = plain_at_budget(fx.target, 1, r.total_grad_evals, 100 + seed);
    double ppos = 0.0, n = 0.0;
    for (const auto& ch : pr.chains)
      for (std::size_t i = 0; i < ch.divergent.size(); ++i, n += 1.0) ppos += ch.draws[i * fx.target.dim] > 0.0;
    const double f_p = ppos / n;
    plain_stuck += f_p < 0.25 || f_p > 0.75;
    rows += fmt::format(" {:.2f}/{:.2f}", f_t, f_p);
  }
  return {temper_ok == 10 && plain_stuck >= 8,
          fmt::format("tempering in [0.4, 0.6] {}/10, plain HMC outside [0.25, 0.75] {}/10 (fractions:{})",
                      temper_ok, plain_stuck, rows)};
}

double max_rhat_2d(const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& y) {
  return std::max(split_rhat(x), split_rhat(y));
}

Outcome ac5() {
  const Fixture fx = make_fixture("flower");
  int wins = 0;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    TemperConfig cfg;
    cfg.sampler.seed = seed;
    cfg.production_draws = 30000;
    const TemperResult r = run_continuous_tempering(fx.target, fx.base, cfg);
    ChainMatrix tx(cfg.sampler.chains), ty(cfg.sampler.chains);
    for (std::size_t i = 0; i < r.target_draws.size(); ++i) {
      const auto row = r.target_draws.theta_row(i);
      tx[r.target_draws.chain[i]].push_back(row[0]);
      ty[r.target_draws.chain[i]].push_back(row[1]);
    }
    const double rt = max_rhat_2d(tx, ty);
    const SampleResult pr = plain_at_budget(fx.target, 4, r.total_grad_evals, seed);
    ChainMatrix px(4), py(4);
    for (const auto& ch : pr.chains)
      for (std::size_t i = 0; i < ch.divergent.size(); ++i) {
        px[ch.chain].push_back(ch.draws[2 * i]);
        py[ch.chain].push_back(ch.draws[2 * i + 1]);
      }
    const double rp = max_rhat_2d(px, py);
    const bool ok = rt < 1.05 && rp > 1.05;
    wins += ok;
    rows += fmt::format(" {:.3f}/{:.3f}{}", rt, rp, ok ? "" : "x");
  }
  return {wins >= 8, fmt::format("tempering R-hat < 1.05 while plain HMC > 1.05 in {}/10 (tempering/plain:{})", wins,
                                 rows)};
}

Outcome ac6() {
  const ModelSpec nc = make_builtin_model("eight_schools_noncentered");
  SamplerConfig rc;
  rc.seed = 99;
  rc.warmup_draws = 1000;
  rc.kept_draws = 250000;
  const SampleResult ref = sample(plain_fn(nc), nc.dim, rc);
  double r1 = 0.0, r2 = 0.0;
  std::vector<double> rt;
  for (const auto& ch : ref.chains)
    for (std::size_t i = 0; i < ch.divergent.size(); ++i) {
      const double t = std::exp(ch.draws[i * nc.dim + 1]);
      r1 += t;
      r2 += t * t;
      rt.push_back(t);
    }
  r1 /= static_cast<double>(rt.size());
  r2 /= static_cast<double>(rt.size());
  const double rq = type7_quantile(rt, 0.01);

  const ModelSpec centered = make_builtin_model("eight_schools_centered");
  int w1 = 0, w2 = 0, wq = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SamplerConfig sc;
    sc.seed = 1000 + seed;
    sc.warmup_draws = 1000;
    sc.kept_draws = 1000;
    const SampleResult hmc = sample(plain_fn(centered), centered.dim, sc);
    std::vector<double> taus;
    double c1 = 0.0, c2 = 0.0;
    for (const auto& ch : hmc.chains)
      for (std::size_t i = 0; i < ch.divergent.size(); ++i) {
        const double t = std::exp(ch.draws[i * centered.dim + 1]);
        c1 += t;
        c2 += t * t;
        taus.push_back(t);
      }
    c1 /= static_cast<double>(taus.size());
    c2 /= static_cast<double>(taus.size());
    const double cq = type7_quantile(taus, 0.01);

    IdcConfig cfg;
    cfg.margin_index = 1;
    cfg.grid_lo = -6.0;
    cfg.grid_hi = 4.5;
    cfg.grid_size = 200;
    cfg.min_adaptations = 10;
    cfg.max_adaptations = 10;
    cfg.sampler.seed = seed;
    cfg.sampler.target_accept = 0.95;
    const IdcResult r = run_idc(centered, cfg);
    const double e1 = moment_estimate(r.marginal, 1, MomentMethod::quadrature, nullptr, MarginScale::exp);
    const double e2 = moment_estimate(r.marginal, 2, MomentMethod::quadrature, nullptr, MarginScale::exp);
    const double eq = std::exp(quantile_estimate(r.marginal, 0.01));
    w1 += std::abs(e1 - r1) < std::abs(c1 - r1);
    w2 += std::abs(e2 - r2) < std::abs(c2 - r2);
    wq += std::abs(eq - rq) < std::abs(cq - rq);
  }
  return {w1 >= 8 && w2 >= 8 && wq >= 8,
          fmt::format("IDC beats centered HMC: E[tau] {}/10, E[tau^2] {}/10, 0.01 quantile {}/10 (reference "
                      "E[tau] {:.4f}, E[tau^2] {:.3f}, q01 {:.5f} from {} draws)",
                      w1, w2, wq, r1, r2, rq, rt.size())};
}

Outcome ac7() {
  const auto t0 = Clock::now();
  int passed = 0;
  std::string failed;
  const auto results = testing::run_property_suite();
  for (const auto& r : results) {
    if (r.pass)
      ++passed;
    else
      failed += " [" + r.name + ": " + r.detail + "]";
  }
  const double secs = seconds_since(t0);
  return {passed == static_cast<int>(results.size()) && secs <= 600.0,
          fmt::format("{}/{} properties green in {:.1f} s{}", passed, results.size(), secs, failed)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"AC1", ac1}, {"AC2", ac2}, {"AC3", ac3}, {"AC4", ac4}, {"AC5", ac5}, {"AC6", ac6}, {"AC7", ac7}};
  bool all = true;
  for (const auto& [name, fn] : criteria) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s %s: %s [%.1f s]\n", name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
