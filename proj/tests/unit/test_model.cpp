#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "pathtemper/baselines.hpp"
#include "pathtemper/error.hpp"
#include "pathtemper/model.hpp"

using namespace pathtemper;

namespace {

struct Case {
  std::string family;
  Params params;
  double radius;
};

const std::vector<Case>& builtin_cases() {
  static const std::vector<Case> cases{
      {"std_normal", {{"dim", 3}}, 4.0},
      {"normal", {{"dim", 2}, {"mean", 1.5}, {"sd", 0.7}}, 4.0},
      {"beta_binomial", {}, 4.0},
      {"beta_binomial", {{"alpha", 9}, {"beta", 0.75}, {"y", 115}, {"n", 550}}, 4.0},
      {"gaussian_mixture", {}, 8.0},
      {"gaussian_mixture", {{"dim", 10}, {"components", 10}}, 12.0},
      {"flower", {}, 12.0},
      {"cauchy_mixture", {}, 8.0},
      {"eight_schools_centered", {}, 3.0},
      {"eight_schools_noncentered", {}, 3.0},
  };
  return cases;
}

}  // namespace

TEST_CASE("std_normal at the mode") {
  const ModelSpec m = make_builtin_model("std_normal", {{"dim", 1}});
  const std::vector<double> x{0.0};
  const Evaluation ev = eval_model(m, x);
  CHECK(ev.logdensity == doctest::Approx(-0.5 * std::log(2.0 * M_PI)).epsilon(1e-15));
  CHECK(ev.gradient[0] == 0.0);
}

TEST_CASE("beta_binomial fixtures are lambda dependent and one dimensional") {
  const ModelSpec easy = make_builtin_model("beta_binomial");
  CHECK(easy.lambda_dependent);
  CHECK(easy.dim == 1);
  const ModelSpec hard = make_builtin_model(
      "beta_binomial", {{"alpha", 9}, {"beta", 0.75}, {"y", 115}, {"n", 550}});
  CHECK(hard.dim == 1);
}

TEST_CASE("symmetric mixture has zero gradient at the origin and mirrored density") {
  const ModelSpec m = make_builtin_model("gaussian_mixture");
  const std::vector<double> zero{0.0};
  CHECK(std::abs(eval_model(m, zero).gradient[0]) < 1e-14);
  Philox rng(3, 0);
  for (int i = 0; i < 100; ++i) {
    const double x = -10.0 + 20.0 * rng.uniform();
    const std::vector<double> p{x}, n{-x};
    CHECK(std::abs(eval_model(m, p).logdensity - eval_model(m, n).logdensity) <= 1e-12);
  }
}

TEST_CASE("every builtin matches finite differences at 100 random points") {
  Philox rng(11, 0);
  for (const Case& c : builtin_cases()) {
    const ModelSpec m = make_builtin_model(c.family, c.params);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      std::vector<double> x(m.dim);
      for (double& v : x) v = c.radius * (2.0 * rng.uniform() - 1.0);
      const double lambda = m.lambda_dependent ? rng.uniform() : 1.0;
      worst = std::max(worst, testing::max_relative_gradient_error(m, x, lambda));
    }
    INFO(c.family);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("evaluation is deterministic") {
  const ModelSpec m = make_builtin_model("flower");
  const std::vector<double> x{1.3, -7.2};
  const Evaluation a = eval_model(m, x);
  const Evaluation b = eval_model(m, x);
  CHECK(a.logdensity == b.logdensity);
  CHECK(a.gradient == b.gradient);
}

TEST_CASE("beta_binomial prior integrates to one on the unconstrained line") {
  for (const auto& p : {Params{}, Params{{"alpha", 9}, {"beta", 0.75}, {"y", 115}, {"n", 550}}}) {
    const ModelSpec m = make_builtin_model("beta_binomial", p);
    CHECK(std::abs(std::exp(quadrature_logz(m, 0.0)) - 1.0) < 1e-6);
  }
}

TEST_CASE("invalid inputs are rejected") {
  CHECK_THROWS_AS(make_builtin_model("no_such_model"), FixtureNotFound);
  CHECK_THROWS_AS(make_builtin_model("beta_binomial", {{"y", 90}, {"n", 80}}), ValidationError);
  CHECK_THROWS_AS(make_builtin_model("cauchy_mixture", {{"scale", 0.0}}), ValidationError);
  const ModelSpec m = make_builtin_model("std_normal", {{"dim", 2}});
  const std::vector<double> short_x{0.0};
  CHECK_THROWS_AS(eval_model(m, short_x), ValidationError);
  const std::vector<double> nan_x{0.0, std::nan("")};
  CHECK_THROWS_AS(eval_model(m, nan_x), DomainError);
}

TEST_CASE("catalog entries build under their defaults") {
  for (const auto& entry : fixture_catalog()) {
    INFO(entry.name);
    CHECK_NOTHROW(make_fixture(entry.name));
  }
  CHECK_THROWS_AS(make_fixture("missing"), FixtureNotFound);
}

TEST_CASE("eight schools fixture file matches the embedded data") {
  const EightSchoolsData file = load_eight_schools_csv(PATHTEMPER_FIXTURE_DIR "/eight_schools.csv");
  CHECK(file.y == eight_schools_data().y);
  CHECK(file.sigma == eight_schools_data().sigma);
}

TEST_CASE("shipped mixture centers are reproduced by the generator") {
  std::ifstream in(PATHTEMPER_FIXTURE_DIR "/gaussian_mixture_md_centers.csv");
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  const auto centers = mixture_centers(10, 10, 2020);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    for (std::size_t d = 0; d < 10; ++d) {
      std::getline(ss, cell, ',');
      CHECK(std::stod(cell) == centers[row][d]);
    }
    ++row;
  }
  CHECK(row == 10);
}
