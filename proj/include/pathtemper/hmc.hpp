#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "pathtemper/rng.hpp"

namespace pathtemper {

/// Log density with gradient; must be reentrant (called from several threads).
using GradientFn = std::function<double(std::span<const double> q, std::span<double> grad)>;

enum class Trajectory { nuts, static_jittered };

struct SamplerConfig {
  std::size_t chains = 4;
  std::size_t warmup_draws = 1000;
  std::size_t kept_draws = 1000;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  std::uint64_t seed = 1;
  /// Distinguishes independent runs that share a seed (e.g. adaptations).
  std::uint64_t stream = 0;
  Trajectory trajectory = Trajectory::nuts;
  /// Nominal step count for the static mode; jittered in [ceil(L/2), ceil(3L/2)].
  int static_steps = 10;
  double init_radius = 2.0;
};

void validate(const SamplerConfig& cfg);

/// One leapfrog step with diagonal mass matrix M. `grad`/`logp` hold the
/// gradient and log density at `position` on entry and at the new point on
/// return. Returns false when the new density or gradient is not finite.
bool leapfrog_step(std::span<double> position, std::span<double> momentum, double stepsize,
                   std::span<const double> mass_diag, const GradientFn& fn, std::span<double> grad,
                   double& logp);

/// Stan-style dual averaging of log step size.
class StepsizeAdapter {
 public:
  explicit StepsizeAdapter(double target_accept) : delta_(target_accept) {}
  void set_mu(double mu) noexcept { mu_ = mu; }
  void restart() noexcept {
    counter_ = 0;
    s_bar_ = 0;
    x_bar_ = 0;
  }
  /// Returns the new step size after observing one acceptance statistic.
  double learn(double accept_stat) noexcept;
  double final_stepsize() const noexcept;
  bool learned() const noexcept { return counter_ > 0; }

 private:
  double delta_;
  double mu_ = 0.0;
  double counter_ = 0;
  double s_bar_ = 0;
  double x_bar_ = 0;
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
};

struct PhasePoint {
  std::vector<double> q;
  std::vector<double> grad;
  double logp = 0.0;
};

struct TransitionInfo {
  double accept_stat = 0.0;
  bool divergent = false;
  std::size_t n_leapfrog = 0;
  int depth = 0;
};

/// A single HMC transition kernel with fixed step size and inverse metric.
class HmcKernel {
 public:
  HmcKernel(const GradientFn& fn, std::vector<double> inv_metric, double stepsize,
            Trajectory kind, int max_tree_depth, int static_steps);

  TransitionInfo transition(PhasePoint& z, Philox& rng) const;

  /// Doubling/halving heuristic targeting an acceptance of 0.8 for one step.
  double find_reasonable_stepsize(const PhasePoint& z, Philox& rng, std::size_t& grad_evals) const;

  void set_stepsize(double eps) noexcept { eps_ = eps; }
  double stepsize() const noexcept { return eps_; }
  void set_inv_metric(std::vector<double> inv_metric);
  const std::vector<double>& inv_metric() const noexcept { return inv_metric_; }

 private:
  struct Tree;
  TransitionInfo nuts(PhasePoint& z, Philox& rng) const;
  TransitionInfo static_hmc(PhasePoint& z, Philox& rng) const;
  double hamiltonian(const PhasePoint& z, std::span<const double> p) const;
  bool evolve(PhasePoint& z, std::span<double> p, double eps) const;
  void sample_momentum(std::span<double> p, Philox& rng) const;

  const GradientFn& fn_;
  std::vector<double> inv_metric_;
  std::vector<double> mass_;
  double eps_;
  Trajectory kind_;
  int max_depth_;
  int static_steps_;
};

struct ChainResult {
  std::size_t chain = 0;
  /// kept_draws x dim, row-major
  std::vector<double> draws;
  std::vector<double> logp;
  std::vector<std::uint8_t> divergent;
  std::vector<double> accept_stat;
  double stepsize = 0.0;
  std::vector<double> inv_metric;
  std::size_t grad_evals = 0;
  std::size_t warmup_divergences = 0;
};

struct SampleResult {
  std::size_t dim = 0;
  std::vector<ChainResult> chains;
  std::size_t total_grad_evals() const noexcept;
};

/// Runs cfg.chains chains concurrently (capped by PATHTEMPER_THREADS) and
/// merges results in chain order. Optional inits override the random start.
SampleResult sample(const GradientFn& fn, std::size_t dim, const SamplerConfig& cfg,
                    std::span<const std::vector<double>> inits = {});

/// Worker count for chain parallelism.
std::size_t thread_cap() noexcept;

/// Runs body(0..n-1) on up to thread_cap() threads; body must not throw.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace pathtemper
