#include "pathtemper/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "pathtemper/error.hpp"
#include "pathtemper/rng.hpp"

namespace pathtemper {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double param(const Params& p, const std::string& key) {
  const auto it = p.find(key);
  if (it == p.end()) throw ValidationError(key, "missing parameter");
  if (!std::isfinite(it->second)) throw ValidationError(key, "must be finite");
  return it->second;
}

void require_positive(const Params& p, const std::string& key) {
  if (!(param(p, key) > 0.0)) throw ValidationError(key, "must be positive");
}

std::size_t require_count(const Params& p, const std::string& key) {
  const double v = param(p, key);
  if (v < 1.0 || v != std::floor(v)) throw ValidationError(key, "must be a positive integer");
  return static_cast<std::size_t>(v);
}

Params merged(const std::string& family, const Params& given) {
  Params out = default_params(family);
  for (const auto& [k, v] : given) {
    if (!out.contains(k)) throw ValidationError(k, "not a parameter of " + family);
    out[k] = v;
  }
  return out;
}

// log(1 + exp(x)) without overflow
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

ModelSpec beta_binomial(const Params& p) {
  require_positive(p, "alpha");
  require_positive(p, "beta");
  const double y = param(p, "y");
  const double n = param(p, "n");
  if (n < 0 || n != std::floor(n)) throw ValidationError("n", "must be a nonnegative integer");
  if (y < 0 || y != std::floor(y)) throw ValidationError("y", "must be a nonnegative integer");
  if (n < y) throw ValidationError("n", "must be at least y");
  const double a = param(p, "alpha");
  const double b = param(p, "beta");
  const double log_choose = std::lgamma(n + 1) - std::lgamma(y + 1) - std::lgamma(n - y + 1);
  const double log_beta_fn = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);

  ModelSpec m;
  m.name = "beta_binomial";
  m.dim = 1;
  m.lambda_dependent = true;
  m.params = p;
  m.evaluator = [=](std::span<const double> x, double lambda, std::span<double> grad) {
    const double xi = x[0];
    const double log_t = -softplus(-xi);
    const double log_1mt = -softplus(xi);
    const double t = sigmoid(xi);
    const double loglik = log_choose + y * log_t + (n - y) * log_1mt;
    // Beta prior density in theta plus log|dtheta/dxi| = log t + log(1-t).
    const double logprior = a * log_t + b * log_1mt - log_beta_fn;
    grad[0] = lambda * (y - n * t) + a * (1.0 - t) - b * t;
    return lambda * loglik + logprior;
  };
  return m;
}

ModelSpec normal(const Params& p) {
  const std::size_t dim = require_count(p, "dim");
  require_positive(p, "sd");
  const double mean = param(p, "mean");
  const double sd = param(p, "sd");
  const double log_norm = -static_cast<double>(dim) * (kHalfLog2Pi + std::log(sd));
  ModelSpec m;
  m.name = "normal";
  m.dim = dim;
  m.params = p;
  m.evaluator = [=](std::span<const double> x, double, std::span<double> grad) {
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = (x[i] - mean) / sd;
      ss += z * z;
      grad[i] = -z / sd;
    }
    return log_norm - 0.5 * ss;
  };
  return m;
}

ModelSpec std_normal(const Params& p) {
  const std::size_t dim = require_count(p, "dim");
  ModelSpec m = normal({{"dim", static_cast<double>(dim)}, {"mean", 0.0}, {"sd", 1.0}});
  m.name = "std_normal";
  m.params = p;
  return m;
}

ModelSpec gaussian_mixture(const Params& p) {
  const std::size_t dim = require_count(p, "dim");
  const std::size_t k = require_count(p, "components");
  require_positive(p, "separation");
  require_positive(p, "scale");
  const double seed = param(p, "seed");
  if (seed < 0) throw ValidationError("seed", "must be nonnegative");

  std::vector<std::vector<double>> centers;
  double sd = param(p, "scale");
  if (dim == 1 && k == 2) {
    const double sep = param(p, "separation");
    centers = {{-sep}, {sep}};
  } else {
    if (k < 2) throw ValidationError("components", "need at least two components");
    centers = mixture_centers(dim, k, static_cast<std::uint64_t>(seed));
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j) {
        double d2 = 0.0;
        for (std::size_t d = 0; d < dim; ++d) d2 += std::pow(centers[i][d] - centers[j][d], 2);
        min_dist = std::min(min_dist, std::sqrt(d2));
      }
    sd = std::sqrt(min_dist / 10.0);
  }
  const double log_norm =
      -static_cast<double>(dim) * (kHalfLog2Pi + std::log(sd)) - std::log(static_cast<double>(k));

  ModelSpec m;
  m.name = "gaussian_mixture";
  m.dim = dim;
  m.params = p;
  m.evaluator = [=](std::span<const double> x, double, std::span<double> grad) {
    std::vector<double> logc(centers.size());
    for (std::size_t c = 0; c < centers.size(); ++c) {
      double ss = 0.0;
      for (std::size_t d = 0; d < x.size(); ++d) ss += std::pow((x[d] - centers[c][d]) / sd, 2);
      logc[c] = -0.5 * ss;
    }
    const double mx = *std::max_element(logc.begin(), logc.end());
    double total = 0.0;
    for (double& l : logc) {
      l = std::exp(l - mx);
      total += l;
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t c = 0; c < centers.size(); ++c) {
      const double w = logc[c] / total;
      for (std::size_t d = 0; d < x.size(); ++d) grad[d] -= w * (x[d] - centers[c][d]) / (sd * sd);
    }
    return log_norm + mx + std::log(total);
  };
  return m;
}

ModelSpec flower(const Params& p) {
  require_positive(p, "sigma");
  require_positive(p, "r");
  const double sigma = param(p, "sigma");
  const double r = param(p, "r");
  const double amp = param(p, "A");
  const double omega = param(p, "omega");
  ModelSpec m;
  m.name = "flower";
  m.dim = 2;
  m.params = p;
  m.evaluator = [=](std::span<const double> x, double, std::span<double> grad) {
    const double rho = std::hypot(x[0], x[1]);
    const double phi = std::atan2(x[1], x[0]);
    const double resid = rho - r - amp * std::cos(omega * phi);
    const double s2 = sigma * sigma;
    if (rho == 0.0) {
      grad[0] = grad[1] = 0.0;
    } else {
      // d rho = (x, y)/rho ; d phi = (-y, x)/rho^2
      const double d_resid_d_phi = amp * omega * std::sin(omega * phi);
      const double rho2 = rho * rho;
      grad[0] = -resid / s2 * (x[0] / rho - d_resid_d_phi * x[1] / rho2);
      grad[1] = -resid / s2 * (x[1] / rho + d_resid_d_phi * x[0] / rho2);
    }
    return -0.5 * resid * resid / s2;
  };
  return m;
}

ModelSpec cauchy_mixture(const Params& p) {
  require_positive(p, "scale");
  const double gap = param(p, "gap");
  const double s = param(p, "scale");
  const double log_norm = -2.0 * std::log(std::numbers::pi * s);
  ModelSpec m;
  m.name = "cauchy_mixture";
  m.dim = 1;
  m.params = p;
  m.evaluator = [=](std::span<const double> x, double, std::span<double> grad) {
    const double z1 = (gap - x[0]) / s;
    const double z2 = (-gap - x[0]) / s;
    grad[0] = 2.0 * z1 / (s * (1.0 + z1 * z1)) + 2.0 * z2 / (s * (1.0 + z2 * z2));
    return log_norm - std::log1p(z1 * z1) - std::log1p(z2 * z2);
  };
  return m;
}

}  // namespace

Params default_params(const std::string& family) {
  if (family == "beta_binomial") return {{"alpha", 2}, {"beta", 1}, {"y", 60}, {"n", 80}};
  if (family == "gaussian_mixture")
    return {{"dim", 1}, {"components", 2}, {"separation", 5}, {"scale", 1}, {"seed", 2020}};
  if (family == "flower") return {{"sigma", 1}, {"r", 10}, {"A", 6}, {"omega", 6}};
  if (family == "cauchy_mixture") return {{"gap", 10}, {"scale", 0.2}};
  if (family == "eight_schools_centered" || family == "eight_schools_noncentered") return {};
  if (family == "std_normal") return {{"dim", 1}};
  if (family == "normal") return {{"dim", 1}, {"mean", 0}, {"sd", 1}};
  throw FixtureNotFound(family);
}

ModelSpec make_builtin_model(const std::string& name, const Params& params) {
  const Params p = merged(name, params);
  if (name == "beta_binomial") return beta_binomial(p);
  if (name == "gaussian_mixture") return gaussian_mixture(p);
  if (name == "flower") return flower(p);
  if (name == "cauchy_mixture") return cauchy_mixture(p);
  if (name == "eight_schools_centered") return eight_schools_model(eight_schools_data(), true);
  if (name == "eight_schools_noncentered") return eight_schools_model(eight_schools_data(), false);
  if (name == "std_normal") return std_normal(p);
  if (name == "normal") return normal(p);
  throw FixtureNotFound(name);
}

Evaluation eval_model(const ModelSpec& model, std::span<const double> x, double lambda) {
  if (x.size() != model.dim)
    throw ValidationError("x", "expected dimension " + std::to_string(model.dim) + ", got " +
                                   std::to_string(x.size()));
  for (double v : x)
    if (!std::isfinite(v)) throw DomainError("non-finite coordinate passed to " + model.name);
  if (model.lambda_dependent && !(lambda >= 0.0 && lambda <= 1.0))
    throw DomainError("lambda must lie in [0, 1]");
  Evaluation out{0.0, std::vector<double>(model.dim)};
  out.logdensity = model.evaluator(x, lambda, out.gradient);
  return out;
}

ModelSpec at_lambda(const ModelSpec& model, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw DomainError("lambda must lie in [0, 1]");
  ModelSpec m = model;
  m.lambda_dependent = false;
  m.name = model.name + "@" + std::to_string(lambda);
  m.evaluator = [inner = model.evaluator, lambda](std::span<const double> x, double,
                                                 std::span<double> grad) {
    return inner(x, lambda, grad);
  };
  return m;
}

ModelSpec finite_difference_model(std::string name, std::size_t dim,
                                  std::function<double(std::span<const double>)> logdensity) {
  ModelSpec m;
  m.name = std::move(name);
  m.dim = dim;
  m.evaluator = [f = std::move(logdensity)](std::span<const double> x, double,
                                            std::span<double> grad) {
    std::vector<double> work(x.begin(), x.end());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double h = 1e-6 * (1.0 + std::abs(x[i]));
      work[i] = x[i] + h;
      const double up = f(work);
      work[i] = x[i] - h;
      const double down = f(work);
      work[i] = x[i];
      grad[i] = (up - down) / (2.0 * h);
    }
    return f(x);
  };
  return m;
}

std::vector<std::vector<double>> mixture_centers(std::size_t dim, std::size_t components,
                                                 std::uint64_t seed) {
  Philox rng(seed, 0x6d69787475726573ull);
  std::vector<std::vector<double>> centers(components, std::vector<double>(dim));
  for (auto& c : centers)
    for (double& v : c) v = -10.0 + 20.0 * rng.uniform();
  return centers;
}

const EightSchoolsData& eight_schools_data() {
  static const EightSchoolsData data{{28, 8, -3, 7, -1, 1, 18, 12},
                                     {15, 10, 16, 11, 9, 11, 10, 18}};
  return data;
}

EightSchoolsData load_eight_schools_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  EightSchoolsData data;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double y, s;
    if (!(row >> y >> s)) throw ValidationError(path, "malformed row '" + line + "'");
    if (!(s > 0)) throw ValidationError("sigma", "must be positive");
    data.y.push_back(y);
    data.sigma.push_back(s);
  }
  if (data.y.empty()) throw ValidationError(path, "no data rows");
  return data;
}

ModelSpec eight_schools_model(const EightSchoolsData& data, bool centered) {
  // mu ~ N(0, 5), tau ~ half-Cauchy(0, 5); coordinates (mu, log tau, theta or theta_raw).
  constexpr double mu_sd = 5.0;
  constexpr double tau_scale = 5.0;
  const std::size_t j = data.y.size();
  ModelSpec m;
  m.name = centered ? "eight_schools_centered" : "eight_schools_noncentered";
  m.dim = j + 2;
  m.evaluator = [=, y = data.y, s = data.sigma](std::span<const double> x, double,
                                                std::span<double> grad) {
    const double mu = x[0];
    const double eta = x[1];
    const double tau = std::exp(eta);
    double lp = -kHalfLog2Pi - std::log(mu_sd) - 0.5 * mu * mu / (mu_sd * mu_sd);
    grad[0] = -mu / (mu_sd * mu_sd);
    const double u = tau / tau_scale;
    lp += std::log(2.0 / (std::numbers::pi * tau_scale)) - std::log1p(u * u) + eta;
    grad[1] = -2.0 * u * u / (1.0 + u * u) + 1.0;
    for (std::size_t i = 0; i < j; ++i) {
      if (centered) {
        const double th = x[2 + i];
        const double z = (th - mu) / tau;
        lp += -kHalfLog2Pi - eta - 0.5 * z * z;
        grad[0] += z / tau;
        grad[1] += -1.0 + z * z;
        const double e = (y[i] - th) / s[i];
        lp += -kHalfLog2Pi - std::log(s[i]) - 0.5 * e * e;
        grad[2 + i] = -z / tau + e / s[i];
      } else {
        const double raw = x[2 + i];
        const double th = mu + tau * raw;
        lp += -kHalfLog2Pi - 0.5 * raw * raw;
        const double e = (y[i] - th) / s[i];
        lp += -kHalfLog2Pi - std::log(s[i]) - 0.5 * e * e;
        const double de = e / s[i];  // d lp / d theta
        grad[0] += de;
        grad[1] += de * tau * raw;
        grad[2 + i] = -raw + de * tau;
      }
    }
    return lp;
  };
  return m;
}

const std::vector<FixtureCatalogEntry>& fixture_catalog() {
  static const std::vector<FixtureCatalogEntry> catalog{
      {"beta_binomial_easy", "beta_binomial", {{"alpha", 2}, {"beta", 1}, {"y", 60}, {"n", 80}},
       true},
      {"beta_binomial_hard", "beta_binomial", {{"alpha", 9}, {"beta", 0.75}, {"y", 115}, {"n", 550}},
       true},
      {"gaussian_mixture", "gaussian_mixture", default_params("gaussian_mixture"), false},
      {"gaussian_mixture_md", "gaussian_mixture",
       {{"dim", 10}, {"components", 10}, {"separation", 5}, {"scale", 1}, {"seed", 2020}}, false},
      {"flower", "flower", default_params("flower"), false},
      {"flower40", "flower", {{"sigma", 1}, {"r", 10}, {"A", 6}, {"omega", 40}}, false},
      {"cauchy_mixture", "cauchy_mixture", default_params("cauchy_mixture"), false},
      {"eight_schools", "eight_schools_centered", {}, false},
      {"eight_schools_noncentered", "eight_schools_noncentered", {}, false},
      {"std_normal", "std_normal", {{"dim", 1}}, true},
  };
  return catalog;
}

Fixture make_fixture(const std::string& name, const Params& overrides) {
  const auto& cat = fixture_catalog();
  const auto it = std::find_if(cat.begin(), cat.end(), [&](const auto& e) { return e.name == name; });
  if (it == cat.end()) throw FixtureNotFound(name);
  Params p = it->parameters;
  for (const auto& [k, v] : overrides) p[k] = v;

  Fixture fx;
  fx.name = name;
  fx.reference_logz_available = it->reference_logz_available;
  const ModelSpec model = make_builtin_model(it->family, p);
  const auto base_normal = [&](double sd) {
    return make_builtin_model(
        "normal", {{"dim", static_cast<double>(model.dim)}, {"mean", 0.0}, {"sd", sd}});
  };
  if (it->family == "beta_binomial") {
    fx.target = at_lambda(model, 1.0);
    fx.base = at_lambda(model, 0.0);
  } else if (it->family == "gaussian_mixture") {
    fx.target = model;
    fx.base = base_normal(model.dim == 1 ? 5.0 : 10.0);
  } else if (it->family == "flower") {
    fx.target = model;
    fx.base = base_normal(8.0);
  } else if (it->family == "cauchy_mixture") {
    fx.target = model;
    fx.base = base_normal(5.0);
  } else if (it->family == "std_normal") {
    fx.target = model;
    fx.base = model;
  } else {
    fx.target = model;
    fx.base = base_normal(5.0);
  }
  return fx;
}

}  // namespace pathtemper
