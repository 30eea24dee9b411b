#include "pathtemper/temper.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pathtemper/diagnostics.hpp"
#include "pathtemper/error.hpp"

namespace pathtemper {

void validate(const TemperConfig& cfg) {
  if (cfg.max_adaptations == 0) throw ValidationError("max_adaptations", "must be positive");
  if (cfg.draws_per_adaptation < 100)
    throw ValidationError("draws_per_adaptation", "must be at least 100");
  if (!(cfg.khat_threshold > 0.0 && cfg.khat_threshold <= 1.0))
    throw ValidationError("khat_threshold", "must lie in (0, 1]");
  if (cfg.grid_size < cfg.kernels + 1) throw ValidationError("grid_size", "must exceed J");
  if (cfg.production_draws > 0 && cfg.production_draws < 2 * cfg.sampler.chains)
    throw ValidationError("production_draws", "fewer than two iterations per chain");
  if (cfg.draws_per_adaptation < 2 * cfg.sampler.chains)
    throw ValidationError("draws_per_adaptation", "fewer than two iterations per chain");
  validate(cfg.sampler);
}

ConditionalDraws extract_conditional_draws(const DrawStore& store, const LinkFunction& link,
                                           int lambda_value) {
  if (lambda_value != 0 && lambda_value != 1)
    throw ValidationError("lambda", "conditional draws exist only at 0 and 1");
  ConditionalDraws out;
  out.draws.theta_dim = store.theta_dim;
  if (store.empty()) {
    out.empty_warning = true;
    return out;
  }
  const std::uint32_t last = *std::max_element(store.adaptation.begin(), store.adaptation.end());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (store.adaptation[i] != last) continue;
    const bool keep = lambda_value == 1 ? link.in_target_plateau(store.a[i])
                                        : link.in_base_plateau(store.a[i]);
    if (!keep) continue;
    out.indices.push_back(i);
    out.draws.push_back(store.adaptation[i], store.chain[i], store.a[i], store.theta_row(i),
                        store.log_q[i], store.log_psi[i], store.divergent[i] != 0);
  }
  out.empty_warning = out.indices.empty();
  return out;
}

TemperResult run_continuous_tempering(const ModelSpec& target, const ModelSpec& base,
                                      const TemperConfig& cfg) {
  validate(cfg);
  if (target.dim != base.dim) throw ValidationError("base", "dimension differs from target");

  const std::size_t per_chain = cfg.draws_per_adaptation / cfg.sampler.chains;
  SamplerConfig scfg = cfg.sampler;
  scfg.warmup_draws = per_chain / 2;
  scfg.kept_draws = per_chain - scfg.warmup_draws;

  TemperResult result;
  result.full_store.theta_dim = target.dim;
  PseudoPrior c = PseudoPrior::zero(cfg.kernel_family, cfg.kernels);

  for (std::size_t t = 0; t < cfg.max_adaptations; ++t) {
    const JointPathModel jpm = make_joint(target, base, cfg.link, c);
    const GradientFn fn = [&jpm](std::span<const double> q, std::span<double> g) {
      double lq, lpsi;
      return jpm.evaluate(q, g, lq, lpsi);
    };
    scfg.stream = t;
    const SampleResult sr = sample(fn, target.dim + 1, scfg);
    const DrawStore current = joint_draws(sr, jpm, static_cast<std::uint32_t>(t));
    result.full_store.append(current);

    AdaptationRecord rec;
    rec.index = t;
    rec.sampled_with = c;
    rec.grad_evals = sr.total_grad_evals();
    result.total_grad_evals += rec.grad_evals;
    for (std::uint8_t d : current.divergent) rec.divergences += d;

    // Pooled log z over every adaptation so far.
    const DrawStore pooled = result.full_store.flipped();
    const OrderedGradients og = compute_pointwise_gradients(pooled, jpm, GradientMode::logz);
    rec.logz = estimate_logz(og, cfg.link, cfg.grid_size, cfg.kernel_family, cfg.kernels);

    const DrawStore cur = current.flipped();
    std::size_t moved = 0;
    for (double a : cur.a)
      if (cfg.link.eval(a).lambda > kMovedLambda) ++moved;
    rec.moved_fraction = static_cast<double>(moved) / static_cast<double>(cur.size());
    for (double a : current.a)
      if (cfg.link.in_target_plateau(a)) ++rec.target_draws;

    // k-hat of 1/p(a) over the current draws.
    try {
      const MarginalEstimate me = estimate_marginal(cur, jpm);
      std::vector<double> log_ratio(cur.size());
      for (std::size_t i = 0; i < cur.size(); ++i) log_ratio[i] = -me.log_p(cur.a[i]);
      const KhatResult kr = pareto_khat_log(log_ratio, cfg.khat_threshold);
      rec.khat = kr.khat;
      result.marginal_a = me.grid_a;
      result.marginal_log_p = me.grid_log_p;
    } catch (const InsufficientCoverage&) {
      rec.insufficient_coverage = true;
      rec.khat = std::numeric_limits<double>::infinity();
    }

    if (rec.moved_fraction < 0.01) {
      // Stuck at the base: move the slope to an importance estimate of log z(1).
      std::vector<double> lq, lpsi;
      for (std::size_t i = 0; i < cur.size(); ++i)
        if (cfg.link.in_base_plateau(cur.a[i])) {
          lq.push_back(cur.log_q[i]);
          lpsi.push_back(cur.log_psi[i]);
        }
      rec.slope_fallback = true;
      rec.khat = std::numeric_limits<double>::infinity();
      c = PseudoPrior::zero(cfg.kernel_family, cfg.kernels);
      if (!lq.empty()) c.beta0 = is_init_slope(lq, lpsi);
    } else {
      c = update_pseudo_prior(rec.logz.fit, cfg.link, cfg.prior_target, cfg.grid_size);
    }
    rec.khat_pass = rec.khat < cfg.khat_threshold;

    result.path_estimate = rec.logz;
    result.history.push_back(std::move(rec));
    result.adaptations_used = t + 1;
    result.converged = result.history.back().khat_pass;
    if (result.converged && result.first_pass == 0) result.first_pass = t + 1;
    if (result.converged && cfg.stop_on_convergence) break;
  }

  result.final_pseudo_prior = c;
  const DrawStore* source = &result.full_store;
  DrawStore production;
  if (cfg.production_draws > 0) {
    // Keep the pseudo-prior k-hat certified; otherwise use the latest fit.
    const PseudoPrior& prod_c = result.converged ? result.history.back().sampled_with : c;
    const JointPathModel jpm = make_joint(target, base, cfg.link, prod_c);
    const GradientFn fn = [&jpm](std::span<const double> q, std::span<double> g) {
      double lq, lpsi;
      return jpm.evaluate(q, g, lq, lpsi);
    };
    const std::size_t per = cfg.production_draws / cfg.sampler.chains;
    scfg.warmup_draws = per / 2;
    scfg.kept_draws = per - scfg.warmup_draws;
    scfg.stream = cfg.max_adaptations;
    const SampleResult sr = sample(fn, target.dim + 1, scfg);
    production = joint_draws(sr, jpm, static_cast<std::uint32_t>(result.adaptations_used));
    result.production_grad_evals = sr.total_grad_evals();
    result.total_grad_evals += result.production_grad_evals;
    source = &production;
  }
  auto tgt = extract_conditional_draws(*source, cfg.link, 1);
  auto bse = extract_conditional_draws(*source, cfg.link, 0);
  result.target_draws = std::move(tgt.draws);
  result.base_draws = std::move(bse.draws);
  result.empty_target_warning = tgt.empty_warning;
  return result;
}

}  // namespace pathtemper
