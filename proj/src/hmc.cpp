#include "pathtemper/hmc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <string>
#include <thread>

#include "pathtemper/error.hpp"
#include "pathtemper/simd.hpp"

namespace pathtemper {
namespace {

constexpr double kMaxDeltaH = 1000.0;
constexpr double kInf = std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool finite_all(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

// Gradient-free welford accumulator for the metric windows.
class VarianceEstimator {
 public:
  explicit VarianceEstimator(std::size_t dim) : mean_(dim, 0.0), m2_(dim, 0.0) {}
  void add(std::span<const double> q) {
    ++n_;
    for (std::size_t i = 0; i < q.size(); ++i) {
      const double delta = q[i] - mean_[i];
      mean_[i] += delta / static_cast<double>(n_);
      m2_[i] += delta * (q[i] - mean_[i]);
    }
  }
  std::size_t count() const noexcept { return n_; }
  std::vector<double> variance() const {
    std::vector<double> v(m2_.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m2_[i] / static_cast<double>(n_ - 1);
    return v;
  }
  void restart() {
    n_ = 0;
    std::fill(mean_.begin(), mean_.end(), 0.0);
    std::fill(m2_.begin(), m2_.end(), 0.0);
  }

 private:
  std::size_t n_ = 0;
  std::vector<double> mean_, m2_;
};

// Warmup schedule: fast initial buffer, doubling metric windows, fast final buffer.
class WindowSchedule {
 public:
  explicit WindowSchedule(std::size_t num_warmup) : num_warmup_(num_warmup) {
    if (num_warmup < 20) {
      enabled_ = false;
      return;
    }
    if (init_buffer_ + base_window_ + term_buffer_ > num_warmup) {
      init_buffer_ = static_cast<std::size_t>(0.15 * static_cast<double>(num_warmup));
      term_buffer_ = static_cast<std::size_t>(0.1 * static_cast<double>(num_warmup));
      base_window_ = num_warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + window_size_ - 1;
  }

  bool in_window() const noexcept {
    return enabled_ && counter_ >= init_buffer_ && counter_ < num_warmup_ - term_buffer_ &&
           counter_ != num_warmup_;
  }
  bool window_end() const noexcept {
    return enabled_ && counter_ == next_window_ && counter_ != num_warmup_;
  }
  void advance_window() {
    if (next_window_ == num_warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != num_warmup_ - term_buffer_ - 1) {
      const std::size_t boundary = next_window_ + 2 * window_size_;
      if (boundary >= num_warmup_ - term_buffer_) next_window_ = num_warmup_ - term_buffer_ - 1;
    }
  }
  void tick() noexcept { ++counter_; }

 private:
  std::size_t num_warmup_;
  bool enabled_ = true;
  std::size_t init_buffer_ = 75;
  std::size_t term_buffer_ = 50;
  std::size_t base_window_ = 25;
  std::size_t window_size_ = 25;
  std::size_t next_window_ = 0;
  std::size_t counter_ = 0;
};

}  // namespace

void validate(const SamplerConfig& cfg) {
  if (cfg.chains == 0) throw ValidationError("chains", "must be positive");
  if (cfg.kept_draws == 0) throw ValidationError("kept_draws", "must be positive");
  if (!(cfg.target_accept > 0.0 && cfg.target_accept < 1.0))
    throw ValidationError("target_accept", "must lie in (0, 1)");
  if (cfg.max_tree_depth <= 0) throw ValidationError("max_tree_depth", "must be positive");
  if (cfg.static_steps <= 0) throw ValidationError("static_steps", "must be positive");
  if (!(cfg.init_radius > 0.0)) throw ValidationError("init_radius", "must be positive");
}

bool leapfrog_step(std::span<double> position, std::span<double> momentum, double stepsize,
                   std::span<const double> mass_diag, const GradientFn& fn, std::span<double> grad,
                   double& logp) {
  simd::axpy(0.5 * stepsize, grad, momentum);
  for (std::size_t i = 0; i < position.size(); ++i)
    position[i] += stepsize * momentum[i] / mass_diag[i];
  logp = fn(position, grad);
  simd::axpy(0.5 * stepsize, grad, momentum);
  return std::isfinite(logp) && finite_all(grad);
}

double StepsizeAdapter::learn(double accept_stat) noexcept {
  counter_ += 1.0;
  accept_stat = std::min(1.0, accept_stat);
  const double eta = 1.0 / (counter_ + kT0);
  s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
  const double x = mu_ - s_bar_ * std::sqrt(counter_) / kGamma;
  const double x_eta = std::pow(counter_, -kKappa);
  x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
  return std::exp(x);
}

double StepsizeAdapter::final_stepsize() const noexcept { return std::exp(x_bar_); }

HmcKernel::HmcKernel(const GradientFn& fn, std::vector<double> inv_metric, double stepsize,
                     Trajectory kind, int max_tree_depth, int static_steps)
    : fn_(fn), eps_(stepsize), kind_(kind), max_depth_(max_tree_depth),
      static_steps_(static_steps) {
  set_inv_metric(std::move(inv_metric));
}

void HmcKernel::set_inv_metric(std::vector<double> inv_metric) {
  inv_metric_ = std::move(inv_metric);
  mass_.resize(inv_metric_.size());
  for (std::size_t i = 0; i < mass_.size(); ++i) mass_[i] = 1.0 / inv_metric_[i];
}

double HmcKernel::hamiltonian(const PhasePoint& z, std::span<const double> p) const {
  double kinetic = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) kinetic += p[i] * p[i] * inv_metric_[i];
  const double h = -z.logp + 0.5 * kinetic;
  return std::isnan(h) ? kInf : h;
}

bool HmcKernel::evolve(PhasePoint& z, std::span<double> p, double eps) const {
  return leapfrog_step(z.q, p, eps, mass_, fn_, z.grad, z.logp);
}

void HmcKernel::sample_momentum(std::span<double> p, Philox& rng) const {
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = rng.normal() * std::sqrt(mass_[i]);
}

double HmcKernel::find_reasonable_stepsize(const PhasePoint& z0, Philox& rng,
                                           std::size_t& grad_evals) const {
  const std::size_t d = z0.q.size();
  std::vector<double> p(d);
  const double threshold = std::log(0.8);
  double eps = eps_;
  const auto delta_h = [&](double step) {
    PhasePoint z = z0;
    sample_momentum(p, rng);
    const double h0 = hamiltonian(z, p);
    evolve(z, p, step);
    ++grad_evals;
    return h0 - hamiltonian(z, p);
  };
  const int direction = delta_h(eps) > threshold ? 1 : -1;
  for (int iter = 0; iter < 100; ++iter) {
    const double dh = delta_h(eps);
    if (direction == 1 && !(dh > threshold)) break;
    if (direction == -1 && !(dh < threshold)) break;
    eps = direction == 1 ? 2.0 * eps : 0.5 * eps;
    if (eps > 1e7 || eps < 1e-12) break;
  }
  return std::clamp(eps, 1e-12, 1e7);
}

TransitionInfo HmcKernel::transition(PhasePoint& z, Philox& rng) const {
  return kind_ == Trajectory::nuts ? nuts(z, rng) : static_hmc(z, rng);
}

TransitionInfo HmcKernel::static_hmc(PhasePoint& z, Philox& rng) const {
  const std::size_t d = z.q.size();
  std::vector<double> p(d);
  sample_momentum(p, rng);
  const double h0 = hamiltonian(z, p);
  const auto lo = static_cast<std::uint64_t>(std::ceil(0.5 * static_steps_));
  const auto hi = static_cast<std::uint64_t>(std::ceil(1.5 * static_steps_));
  const std::uint64_t steps = lo + rng.below(hi - lo + 1);

  PhasePoint prop = z;
  TransitionInfo info;
  bool ok = true;
  for (std::uint64_t s = 0; s < steps && ok; ++s) {
    ok = evolve(prop, p, eps_);
    ++info.n_leapfrog;
  }
  const double h = ok ? hamiltonian(prop, p) : kInf;
  info.divergent = !(h - h0 <= kMaxDeltaH);
  info.accept_stat = h0 - h > 0 ? 1.0 : std::exp(h0 - h);
  if (!info.divergent && rng.uniform() < info.accept_stat) z = std::move(prop);
  return info;
}

struct HmcKernel::Tree {
  const HmcKernel& k;
  Philox& rng;
  double h0;
  std::size_t n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  bool divergent = false;

  static bool criterion(std::span<const double> p_sharp_minus, std::span<const double> p_sharp_plus,
                        std::span<const double> rho) {
    return simd::dot(p_sharp_plus, rho) > 0 && simd::dot(p_sharp_minus, rho) > 0;
  }

  void sharp(std::span<const double> p, std::span<double> out) const {
    simd::mul(p, k.inv_metric_, out);
  }

  // z/p evolve in place; outputs mirror Stan's base_nuts::build_tree.
  bool build(int depth, PhasePoint& z, std::vector<double>& p, PhasePoint& z_propose,
             std::vector<double>& p_sharp_beg, std::vector<double>& p_sharp_end,
             std::vector<double>& rho, std::vector<double>& p_beg, std::vector<double>& p_end,
             double sign, double& log_sum_weight) {
    const std::size_t d = p.size();
    if (depth == 0) {
      const bool ok = k.evolve(z, p, sign * k.eps_);
      ++n_leapfrog;
      const double h = ok ? k.hamiltonian(z, p) : kInf;
      if (!(h - h0 <= kMaxDeltaH)) divergent = true;
      log_sum_weight = log_add(log_sum_weight, h0 - h);
      sum_metro_prob += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      z_propose = z;
      sharp(p, p_sharp_beg);
      p_sharp_end = p_sharp_beg;
      simd::axpy(1.0, p, rho);
      p_beg = p;
      p_end = p;
      return !divergent;
    }

    double lsw_init = -kInf;
    std::vector<double> p_init_end(d), p_sharp_init_end(d), rho_init(d, 0.0);
    if (!build(depth - 1, z, p, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
               p_init_end, sign, lsw_init))
      return false;

    PhasePoint z_propose_final = z;
    double lsw_final = -kInf;
    std::vector<double> p_final_beg(d), p_sharp_final_beg(d), rho_final(d, 0.0);
    if (!build(depth - 1, z, p, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
               p_final_beg, p_end, sign, lsw_final))
      return false;

    const double lsw_subtree = log_add(lsw_init, lsw_final);
    log_sum_weight = log_add(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree) {
      z_propose = std::move(z_propose_final);
    } else if (rng.uniform() < std::exp(lsw_final - lsw_subtree)) {
      z_propose = std::move(z_propose_final);
    }

    std::vector<double> rho_subtree(rho_init);
    simd::axpy(1.0, rho_final, rho_subtree);
    simd::axpy(1.0, rho_subtree, rho);

    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    std::vector<double> rho_ext(rho_init);
    simd::axpy(1.0, p_final_beg, rho_ext);
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_ext);
    rho_ext = rho_final;
    simd::axpy(1.0, p_init_end, rho_ext);
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_ext);
    return persist;
  }
};

TransitionInfo HmcKernel::nuts(PhasePoint& z0, Philox& rng) const {
  const std::size_t d = z0.q.size();
  std::vector<double> p(d);
  sample_momentum(p, rng);

  PhasePoint z_fwd = z0, z_bck = z0, z_sample = z0, z_propose = z0;
  std::vector<double> p_fwd = p, p_bck = p;
  std::vector<double> p_fwd_fwd = p, p_fwd_bck = p, p_bck_fwd = p, p_bck_bck = p;
  std::vector<double> p_sharp(d);
  simd::mul(p, inv_metric_, p_sharp);
  std::vector<double> p_sharp_fwd_fwd = p_sharp, p_sharp_fwd_bck = p_sharp,
                      p_sharp_bck_fwd = p_sharp, p_sharp_bck_bck = p_sharp;
  std::vector<double> rho = p;
  double log_sum_weight = 0.0;

  Tree tree{*this, rng, hamiltonian(z0, p)};
  int depth = 0;
  while (depth < max_depth_) {
    std::vector<double> rho_fwd(d, 0.0), rho_bck(d, 0.0);
    double lsw_subtree = -kInf;
    bool valid;
    if (rng.uniform() > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_fwd;
      p_sharp_bck_fwd = p_sharp_fwd_fwd;
      PhasePoint z = z_fwd;
      std::vector<double> pz = p_fwd;
      valid = tree.build(depth, z, pz, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd,
                         p_fwd_bck, p_fwd_fwd, 1.0, lsw_subtree);
      z_fwd = std::move(z);
      p_fwd = std::move(pz);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_bck;
      p_sharp_fwd_bck = p_sharp_bck_bck;
      PhasePoint z = z_bck;
      std::vector<double> pz = p_bck;
      valid = tree.build(depth, z, pz, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck,
                         p_bck_fwd, p_bck_bck, -1.0, lsw_subtree);
      z_bck = std::move(z);
      p_bck = std::move(pz);
    }
    if (!valid) break;
    ++depth;

    if (lsw_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (rng.uniform() < std::exp(lsw_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_add(log_sum_weight, lsw_subtree);

    rho = rho_bck;
    simd::axpy(1.0, rho_fwd, rho);
    bool persist = Tree::criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    std::vector<double> rho_ext(rho_bck);
    simd::axpy(1.0, p_fwd_bck, rho_ext);
    persist = persist && Tree::criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_ext);
    rho_ext = rho_fwd;
    simd::axpy(1.0, p_bck_fwd, rho_ext);
    persist = persist && Tree::criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_ext);
    if (!persist) break;
  }

  TransitionInfo info;
  info.n_leapfrog = tree.n_leapfrog;
  info.divergent = tree.divergent;
  info.depth = depth;
  info.accept_stat = tree.n_leapfrog > 0 ? tree.sum_metro_prob / static_cast<double>(tree.n_leapfrog) : 0.0;
  z0 = std::move(z_sample);
  return info;
}

std::size_t SampleResult::total_grad_evals() const noexcept {
  std::size_t n = 0;
  for (const auto& c : chains) n += c.grad_evals;
  return n;
}

std::size_t thread_cap() noexcept {
  std::size_t cap = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PATHTEMPER_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) cap = static_cast<std::size_t>(v);
  }
  return cap;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  const std::size_t workers = std::min(n, thread_cap());
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) body(i);
    });
  for (auto& t : pool) t.join();
}

namespace {

ChainResult run_one_chain(const GradientFn& fn, std::size_t dim, const SamplerConfig& cfg,
                          std::size_t chain, const std::vector<double>* init) {
  Philox rng(cfg.seed, Philox::substream(cfg.stream, chain));
  ChainResult out;
  out.chain = chain;

  PhasePoint z;
  z.q.resize(dim);
  z.grad.resize(dim);
  bool ok = false;
  for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
    if (init && attempt == 0) {
      z.q = *init;
    } else {
      for (double& v : z.q) v = cfg.init_radius * (2.0 * rng.uniform() - 1.0);
    }
    z.logp = fn(z.q, z.grad);
    ++out.grad_evals;
    ok = std::isfinite(z.logp) && finite_all(z.grad);
  }
  if (!ok)
    throw InitializationError("no finite log density at 100 random initializations (chain " +
                              std::to_string(chain) + ")");

  HmcKernel kernel(fn, std::vector<double>(dim, 1.0), 1.0, cfg.trajectory, cfg.max_tree_depth,
                   cfg.static_steps);
  StepsizeAdapter adapter(cfg.target_accept);
  const auto reinit_stepsize = [&] {
    const double eps = kernel.find_reasonable_stepsize(z, rng, out.grad_evals);
    kernel.set_stepsize(eps);
    adapter.set_mu(std::log(10.0 * eps));
    adapter.restart();
  };
  if (cfg.warmup_draws > 0) reinit_stepsize();

  WindowSchedule windows(cfg.warmup_draws);
  VarianceEstimator var(dim);
  for (std::size_t it = 0; it < cfg.warmup_draws; ++it) {
    const TransitionInfo info = kernel.transition(z, rng);
    out.grad_evals += info.n_leapfrog;
    if (info.divergent) ++out.warmup_divergences;
    kernel.set_stepsize(adapter.learn(info.accept_stat));

    if (windows.in_window()) var.add(z.q);
    if (windows.window_end()) {
      windows.advance_window();
      std::vector<double> v = var.variance();
      const double n = static_cast<double>(var.count());
      for (double& x : v) x = (n / (n + 5.0)) * x + 1e-3 * (5.0 / (n + 5.0));
      kernel.set_inv_metric(std::move(v));
      var.restart();
      reinit_stepsize();
    }
    windows.tick();
  }
  if (cfg.warmup_draws > 0) {
    kernel.set_stepsize(adapter.final_stepsize());
    if (2 * out.warmup_divergences > cfg.warmup_draws)
      throw DivergenceError("chain " + std::to_string(chain) + ": " +
                            std::to_string(out.warmup_divergences) + " of " +
                            std::to_string(cfg.warmup_draws) +
                            " warmup transitions diverged; raise target_accept to force a "
                            "smaller step size");
  }

  out.draws.reserve(cfg.kept_draws * dim);
  for (std::size_t it = 0; it < cfg.kept_draws; ++it) {
    const TransitionInfo info = kernel.transition(z, rng);
    out.grad_evals += info.n_leapfrog;
    out.draws.insert(out.draws.end(), z.q.begin(), z.q.end());
    out.logp.push_back(z.logp);
    out.divergent.push_back(info.divergent ? 1 : 0);
    out.accept_stat.push_back(info.accept_stat);
  }
  out.stepsize = kernel.stepsize();
  out.inv_metric = kernel.inv_metric();
  return out;
}

}  // namespace

SampleResult sample(const GradientFn& fn, std::size_t dim, const SamplerConfig& cfg,
                    std::span<const std::vector<double>> inits) {
  validate(cfg);
  if (dim == 0) throw ValidationError("dim", "must be positive");
  if (!inits.empty() && inits.size() != cfg.chains)
    throw ValidationError("inits", "need one initial point per chain");
  for (const auto& init : inits)
    if (init.size() != dim) throw ValidationError("inits", "dimension mismatch");

  SampleResult result;
  result.dim = dim;
  result.chains.resize(cfg.chains);
  std::vector<std::exception_ptr> errors(cfg.chains);

  parallel_for(cfg.chains, [&](std::size_t c) {
    try {
      result.chains[c] = run_one_chain(fn, dim, cfg, c, inits.empty() ? nullptr : &inits[c]);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  });
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

}  // namespace pathtemper
