#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "pathtemper/draws.hpp"
#include "pathtemper/hmc.hpp"
#include "pathtemper/path_estimator.hpp"

namespace pathtemper {

struct TemperConfig {
  std::size_t max_adaptations = 20;
  /// Sampler iterations per adaptation summed over chains; half are warmup.
  std::size_t draws_per_adaptation = 3000;
  double khat_threshold = 0.7;
  /// Desired marginal of a over [0, 2] (log density); uniform when empty.
  std::optional<LogDensity1D> prior_target;
  /// chains/seed/target_accept/depth/trajectory; warmup and kept counts are derived.
  SamplerConfig sampler;
  LinkFunction link;
  KernelFamily kernel_family = KernelFamily::mixed;
  std::size_t kernels = 10;
  std::size_t grid_size = 100;
  /// false: run every adaptation even after k-hat passes (learning-curve studies).
  bool stop_on_convergence = true;
  /// Extra sampler iterations (summed over chains) run with the final pseudo-prior after the
  /// adaptations; when nonzero, target and base draws come from this run.
  std::size_t production_draws = 0;
};

void validate(const TemperConfig& cfg);

/// Draws with f(a) at or below this count as stuck at the base.
constexpr double kMovedLambda = 0.01;

struct AdaptationRecord {
  std::size_t index = 0;
  double khat = 0.0;
  bool khat_pass = false;
  bool insufficient_coverage = false;
  bool slope_fallback = false;
  double moved_fraction = 0.0;  // share of draws with f(a) > kMovedLambda
  PseudoPrior sampled_with;     // pseudo-prior used while sampling
  PathEstimate logz;            // pooled estimate after this adaptation
  std::size_t grad_evals = 0;
  std::size_t divergences = 0;
  std::size_t target_draws = 0;
};

struct TemperResult {
  DrawStore target_draws;
  DrawStore base_draws;
  PathEstimate path_estimate;
  std::vector<double> marginal_a;
  std::vector<double> marginal_log_p;
  PseudoPrior final_pseudo_prior;
  std::size_t adaptations_used = 0;
  bool converged = false;
  /// Adaptation count at which k-hat first passed; 0 if it never did.
  std::size_t first_pass = 0;
  bool empty_target_warning = false;
  DrawStore full_store;
  std::vector<AdaptationRecord> history;
  std::size_t total_grad_evals = 0;
  std::size_t production_grad_evals = 0;
};

TemperResult run_continuous_tempering(const ModelSpec& target, const ModelSpec& base,
                                      const TemperConfig& cfg);

struct ConditionalDraws {
  std::vector<std::size_t> indices;  // positions in the input store
  DrawStore draws;
  bool empty_warning = false;
};

/// lambda_value 1: a in [a_max, 2 - a_max]; 0: a in the two base plateaus.
/// Only the last adaptation present in the store is used.
ConditionalDraws extract_conditional_draws(const DrawStore& store, const LinkFunction& link,
                                           int lambda_value);

}  // namespace pathtemper
