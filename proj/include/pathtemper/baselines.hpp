#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pathtemper/model.hpp"

namespace pathtemper {

/// Closed-form log z(lambda) of Binomial(y | theta, n)^lambda · Beta(theta | a, b).
double beta_binomial_logz(double alpha, double beta, double y, double n, double lambda);

/// log of the integral of exp(log density) over the real line for a 1D
/// model: composite Simpson on [-W, W], refined in N and widened in W until
/// both change the result by less than 1e-10 (relative).
double quadrature_logz(const ModelSpec& model, double lambda = 1.0, double center = 0.0);

/// log of mean_s exp(log_weight_s).
double importance_log_ratio(std::span<const double> log_weights);

/// log z(lambda_next)/z(lambda) from theta draws of a lambda-dependent model at lambda.
double importance_z_ratio(std::span<const double> theta_draws, const ModelSpec& model,
                          double lambda, double lambda_next);

/// Discrete ladder 0 = lambda_0 < ... < lambda_K = 1 with log masses log c_k.
struct DiscreteLadder {
  std::vector<double> lambda;
  std::vector<double> log_c;

  static DiscreteLadder even(std::size_t rungs);
  void validate() const;
};

/// mass_k = sum_s w_s p(k | theta_s) / sum_s w_s, with p(k | theta) ∝ q_k(theta)/c_k.
/// log_q is row-major draws x rungs. Empty weights mean equal weights.
std::vector<double> rao_blackwell_mass(std::span<const double> log_q, std::size_t rungs,
                                       std::span<const double> log_c,
                                       std::span<const double> weights = {});

/// log z_k - log z_0 recovered from masses: log mass_k + log c_k, re-referenced.
std::vector<double> logz_from_mass(std::span<const double> mass, std::span<const double> log_c);

enum class DiscreteEstimator { empirical_is, rao_blackwell };

struct DiscreteBudget {
  std::size_t adaptations = 20;
  std::size_t lambda_draws = 150;  // per adaptation; first half is warmup
  std::size_t hmc_updates = 100;   // per lambda draw
  int leapfrog_steps = 10;
  std::size_t chains = 1;  // independent chains pooled for estimation
};

struct DiscreteRun {
  /// logz[t][k]: estimate after adaptation t at rung k (rung 0 is 0).
  std::vector<std::vector<double>> logz;
  std::size_t grad_evals = 0;
  std::size_t starvation_warnings = 0;
  std::vector<std::string> warnings;
};

/// Simulated tempering on the geometric path psi^(1-lambda) q^lambda with a
/// Gibbs sweep of nearest-neighbour Metropolis rung moves and fixed-length
/// HMC theta updates (per-rung dual-averaged step size).
DiscreteRun discrete_tempering_run(const ModelSpec& target, const ModelSpec& base,
                                   DiscreteLadder ladder, DiscreteEstimator estimator,
                                   const DiscreteBudget& budget, std::uint64_t seed);

}  // namespace pathtemper
