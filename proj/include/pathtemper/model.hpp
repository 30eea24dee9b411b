#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace pathtemper {

/// Writes the gradient into `grad` (same length as `x`) and returns log density.
using LogDensityFn =
    std::function<double(std::span<const double> x, double lambda, std::span<double> grad)>;

using Params = std::map<std::string, double>;

/// Log density on unconstrained space. Evaluation must be pure and reentrant.
struct ModelSpec {
  std::string name;
  std::size_t dim = 0;
  bool lambda_dependent = false;
  LogDensityFn evaluator;
  Params params;
};

struct Evaluation {
  double logdensity;
  std::vector<double> gradient;
};

/// Checked entry point: validates dimension, finiteness and lambda range.
Evaluation eval_model(const ModelSpec& model, std::span<const double> x, double lambda = 1.0);

/// Unchecked hot-path evaluation.
inline double eval_into(const ModelSpec& model, std::span<const double> x, double lambda,
                        std::span<double> grad) {
  return model.evaluator(x, lambda, grad);
}

/// Families: beta_binomial, gaussian_mixture, flower, cauchy_mixture,
/// eight_schools_centered, eight_schools_noncentered, std_normal, normal.
/// Missing parameters take the family defaults listed by `default_params`.
ModelSpec make_builtin_model(const std::string& name, const Params& params = {});

Params default_params(const std::string& family);

/// Fixes lambda of a lambda-dependent model, yielding a plain density.
ModelSpec at_lambda(const ModelSpec& model, double lambda);

/// Wraps a value-only log density with central finite-difference gradients.
/// Costs 2·dim extra evaluations per call.
ModelSpec finite_difference_model(std::string name, std::size_t dim,
                                  std::function<double(std::span<const double>)> logdensity);

/// Component centers of the multi-dimensional Gaussian mixture fixture.
std::vector<std::vector<double>> mixture_centers(std::size_t dim, std::size_t components,
                                                 std::uint64_t seed);

struct EightSchoolsData {
  std::vector<double> y;
  std::vector<double> sigma;
};

/// Embedded copy of the fixture file.
const EightSchoolsData& eight_schools_data();

/// Two-column CSV (y, sigma) with a header row.
EightSchoolsData load_eight_schools_csv(const std::string& path);

/// Eight-schools model on (mu, log tau, theta_1..J) with explicit data.
ModelSpec eight_schools_model(const EightSchoolsData& data, bool centered);

/// Target/base pair for a path run.
struct Fixture {
  std::string name;
  ModelSpec target;
  ModelSpec base;
  bool reference_logz_available = false;
};

struct FixtureCatalogEntry {
  std::string name;
  std::string family;
  Params parameters;
  bool reference_logz_available;
};

const std::vector<FixtureCatalogEntry>& fixture_catalog();

/// Builds a catalog fixture; throws FixtureNotFound for unknown names.
Fixture make_fixture(const std::string& name, const Params& overrides = {});

}  // namespace pathtemper
