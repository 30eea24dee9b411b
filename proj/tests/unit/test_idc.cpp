#include <doctest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "pathtemper/error.hpp"
#include "pathtemper/idc.hpp"

using namespace pathtemper;

namespace {

double normal_logpdf(double x, double sd) {
  return -0.5 * (x / sd) * (x / sd) - std::log(sd) - 0.5 * std::log(2.0 * M_PI);
}

MarginalDensity std_normal_density() {
  const auto grid = even_grid(-8.0, 8.0, 1601);
  std::vector<double> lp(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) lp[i] = normal_logpdf(grid[i], 1.0);
  return normalize_on_grid(grid, lp);
}

IdcConfig fixed_config(double target_sd, std::uint64_t seed) {
  IdcConfig cfg;
  cfg.margin_index = 1;
  cfg.target = MarginTarget::fixed;
  cfg.fixed_target = [target_sd](double x) { return normal_logpdf(x, target_sd); };
  cfg.sampler.seed = seed;
  return cfg;
}

std::vector<double> last_adaptation_tau(const IdcResult& r) {
  std::vector<double> out;
  const std::uint32_t last = static_cast<std::uint32_t>(r.adaptations_used - 1);
  for (std::size_t i = 0; i < r.draws.size(); ++i)
    if (r.draws.adaptation[i] == last) out.push_back(r.draws.a[i]);
  return out;
}

double max_deviation_on(const MarginalDensity& md, double lo, double hi, double sd) {
  double worst = 0.0;
  for (std::size_t i = 0; i < md.grid.size(); ++i)
    if (md.grid[i] >= lo && md.grid[i] <= hi)
      worst = std::max(worst, std::abs(md.log_density[i] - normal_logpdf(md.grid[i], sd)));
  return worst;
}

}  // namespace

TEST_CASE("normalization on the grid") {
  const MarginalDensity md = std_normal_density();
  CHECK(std::abs(md.integral() - 1.0) <= 1e-8);
  const MarginalDensity ex = md.exp_transformed();
  CHECK(std::abs(ex.integral() - 1.0) <= 1e-8);
  CHECK(md.log_pdf(0.0) == doctest::Approx(normal_logpdf(0.0, 1.0)).epsilon(1e-6));
  CHECK(md.log_pdf(100.0) == md.log_density.back());
}

TEST_CASE("quadrature moments and quantiles of a standard normal") {
  const MarginalDensity md = std_normal_density();
  CHECK(std::abs(moment_estimate(md, 1, MomentMethod::quadrature)) < 1e-3);
  CHECK(std::abs(moment_estimate(md, 2, MomentMethod::quadrature) - 1.0) < 1e-2);
  CHECK(std::abs(quantile_estimate(md, 0.5)) < 1e-3);
  CHECK(std::abs(quantile_estimate(md, 0.001) - -3.0902) < 0.01);
  CHECK_THROWS_AS(quantile_estimate(md, 1.5), DomainError);
  CHECK_THROWS_AS(quantile_estimate(md, 0.0), DomainError);
  CHECK_THROWS_AS(moment_estimate(md, 1, MomentMethod::importance), ValidationError);
  // exp scale: E[exp(x)] = exp(1/2)
  CHECK(moment_estimate(md, 1, MomentMethod::quadrature, nullptr, MarginScale::exp) ==
        doctest::Approx(std::exp(0.5)).epsilon(1e-3));
}

TEST_CASE("optimal target examples") {
  const auto grid = even_grid(0.0, 3.0, 61);
  Philox rng(14, 0);
  std::vector<double> tau(2000), u(2000);
  SUBCASE("constant gradient gives a uniform density") {
    for (std::size_t s = 0; s < tau.size(); ++s) {
      tau[s] = 3.0 * rng.uniform();
      u[s] = -2.5;
    }
    const MarginalDensity md = estimate_optimal_target(tau, u, grid);
    for (double v : md.log_density) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-9));
  }
  SUBCASE("constant second moment gives a uniform density") {
    for (std::size_t s = 0; s < tau.size(); ++s) {
      tau[s] = 3.0 * rng.uniform();
      u[s] = rng.uniform() < 0.5 ? -1.5 : 1.5;
    }
    const MarginalDensity md = estimate_optimal_target(tau, u, grid);
    for (double v : md.log_density) CHECK(v == doctest::Approx(-std::log(3.0)).epsilon(1e-9));
  }
  SUBCASE("U = tau on [1, 2] is proportional to tau") {
    const auto g12 = even_grid(1.0, 2.0, 51);
    for (std::size_t s = 0; s < tau.size(); ++s) {
      tau[s] = 1.0 + rng.uniform();
      u[s] = tau[s];
    }
    const MarginalDensity md = estimate_optimal_target(tau, u, g12);
    for (std::size_t i = 0; i < g12.size(); ++i) {
      const double expected = g12[i] / 1.5;  // tau normalized on [1, 2]
      CHECK(std::abs(std::exp(md.log_density[i]) / expected - 1.0) < 0.1);
    }
  }
  SUBCASE("errors") {
    const std::vector<double> few(100, 1.0);
    CHECK_THROWS_AS(estimate_optimal_target(few, few, grid), ValidationError);
    for (std::size_t s = 0; s < tau.size(); ++s) {
      tau[s] = 0.2 * rng.uniform();
      u[s] = 1.0;
    }
    CHECK_THROWS_AS(estimate_optimal_target(tau, u, grid), InsufficientCoverage);
  }
}

TEST_CASE("margin density from gradients of a known density") {
  const auto grid = even_grid(-6.0, 6.0, 121);
  Philox rng(15, 0);
  std::vector<double> tau(20000), u(20000);
  for (std::size_t s = 0; s < tau.size(); ++s) {
    tau[s] = rng.normal();
    u[s] = -tau[s];
  }
  const MarginalDensity md = estimate_margin_density(tau, u, grid, KernelFamily::gaussian, 20);
  CHECK(std::abs(md.integral() - 1.0) <= 1e-8);
  CHECK(max_deviation_on(md, -3.0, 3.0, 1.0) < 0.05);
}

TEST_CASE("independent normal joint with the true margin as target") {
  const ModelSpec joint = make_builtin_model("std_normal", {{"dim", 2}});
  const IdcResult r = run_idc(joint, fixed_config(1.0, 3));
  CHECK(r.converged);
  CHECK(r.adaptations_used <= 2);
  const auto tau = last_adaptation_tau(r);
  const auto [lo, hi] = std::minmax_element(tau.begin(), tau.end());
  CHECK(max_deviation_on(r.marginal, *lo, *hi, 1.0) < 0.2);
  CHECK(std::abs(r.marginal.integral() - 1.0) <= 1e-8);
  for (const auto& h : r.history) {
    CHECK(std::abs(h.estimate.integral() - 1.0) <= 1e-8);
    CHECK(std::abs(h.target.integral() - 1.0) <= 1e-8);
  }
}

TEST_CASE("wider target reshapes sampling but not the estimated margin") {
  const ModelSpec joint = make_builtin_model("std_normal", {{"dim", 2}});
  IdcConfig cfg = fixed_config(2.0, 4);
  cfg.min_adaptations = 4;
  cfg.max_adaptations = 4;
  const IdcResult r = run_idc(joint, cfg);
  const auto tau = last_adaptation_tau(r);
  const double ks = testing::ks_statistic(tau, [](double x) { return testing::normal_cdf(x / 2.0); });
  CHECK(ks < 0.05);
  CHECK(max_deviation_on(r.marginal, -3.0, 3.0, 1.0) < 0.2);
}

TEST_CASE("quadrature and importance moments agree across replications") {
  const ModelSpec joint = make_builtin_model("std_normal", {{"dim", 2}});
  std::vector<double> quad, imp;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    IdcConfig cfg = fixed_config(2.0, 50 + seed);
    cfg.draws_per_adaptation = 4000;
    cfg.min_adaptations = 3;
    cfg.max_adaptations = 3;
    const IdcResult r = run_idc(joint, cfg);
    quad.push_back(moment_estimate(r.marginal, 2, MomentMethod::quadrature));
    imp.push_back(moment_estimate(r.marginal, 2, MomentMethod::importance, &r.draws));
  }
  auto mean_se = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::pair{m, std::sqrt(ss / (v.size() - 1) / v.size())};
  };
  const auto [mq, sq] = mean_se(quad);
  const auto [mi, si] = mean_se(imp);
  CHECK(std::abs(mq - mi) < 3.0 * std::sqrt(sq * sq + si * si));
}

TEST_CASE("conditional of the other coordinate is stable across adaptations") {
  const ModelSpec joint = make_builtin_model("std_normal", {{"dim", 2}});
  IdcConfig cfg = fixed_config(2.0, 6);
  cfg.min_adaptations = 3;
  cfg.max_adaptations = 3;
  const IdcResult r = run_idc(joint, cfg);
  std::vector<double> first, last;
  for (std::size_t i = 0; i < r.draws.size(); ++i) {
    if (std::abs(r.draws.a[i]) > 0.25) continue;
    const double x = r.draws.theta_row(i)[0];
    if (r.draws.adaptation[i] == 0) first.push_back(x);
    if (r.draws.adaptation[i] == 2) last.push_back(x);
  }
  REQUIRE(first.size() > 100);
  REQUIRE(last.size() > 100);
  CHECK(testing::ks_statistic(first, last) < testing::ks_critical_01(first.size(), last.size()));
}

TEST_CASE("eight schools centered converges with a positive margin") {
  const Fixture fx = make_fixture("eight_schools");
  IdcConfig cfg;
  cfg.margin_index = 1;
  cfg.grid_lo = -6.0;
  cfg.grid_hi = 4.5;
  cfg.grid_size = 200;
  cfg.max_adaptations = 10;
  cfg.min_adaptations = 10;
  cfg.sampler.target_accept = 0.95;
  cfg.sampler.seed = 1;
  const IdcResult r = run_idc(fx.target, cfg);
  CHECK(r.converged);
  const auto tau = last_adaptation_tau(r);
  const auto [lo, hi] = std::minmax_element(tau.begin(), tau.end());
  for (std::size_t i = 0; i < r.marginal.grid.size(); ++i)
    if (r.marginal.grid[i] >= *lo && r.marginal.grid[i] <= *hi)
      CHECK(std::exp(r.marginal.log_density[i]) > 0.0);
  CHECK(std::abs(r.marginal.integral() - 1.0) <= 1e-8);
}

TEST_CASE("configuration validation") {
  IdcConfig cfg;
  cfg.margin_index = 2;
  CHECK_THROWS_AS(validate(cfg, 2), ValidationError);
  cfg = {};
  cfg.grid_size = 49;
  CHECK_THROWS_AS(validate(cfg, 2), ValidationError);
  cfg = {};
  cfg.target = MarginTarget::fixed;
  CHECK_THROWS_AS(validate(cfg, 2), ValidationError);
  cfg = {};
  cfg.min_adaptations = 11;
  CHECK_THROWS_AS(validate(cfg, 2), ValidationError);
  cfg = {};
  cfg.grid_lo = 1.0;
  cfg.grid_hi = 1.0;
  CHECK_THROWS_AS(validate(cfg, 2), ValidationError);
}

TEST_CASE("underflow on the sampled range is an error") {
  const auto grid = even_grid(-40.0, 40.0, 801);
  std::vector<double> lp(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) lp[i] = -0.5 * grid[i] * grid[i];
  const MarginalDensity md = normalize_on_grid(grid, lp);
  CHECK_NOTHROW(check_no_underflow(md, -37.0, 37.0));
  CHECK_THROWS_AS(check_no_underflow(md, -38.0, 0.0), NumericalError);
  CHECK_THROWS_AS(check_no_underflow(md, 0.0, 40.0), NumericalError);
}
