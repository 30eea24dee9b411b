#include "pathtemper/draws.hpp"

#include "pathtemper/error.hpp"

namespace pathtemper {

void DrawStore::push_back(std::uint32_t adapt, std::uint32_t chain_id, double a_value,
                          std::span<const double> row, double lq, double lpsi, bool div) {
  if (row.size() != theta_dim) throw ValidationError("theta", "dimension mismatch in DrawStore");
  adaptation.push_back(adapt);
  chain.push_back(chain_id);
  a.push_back(a_value);
  theta.insert(theta.end(), row.begin(), row.end());
  log_q.push_back(lq);
  log_psi.push_back(lpsi);
  divergent.push_back(div ? 1 : 0);
}

void DrawStore::append(const DrawStore& other) {
  if (other.empty()) return;
  if (empty() && theta_dim == 0) theta_dim = other.theta_dim;
  if (other.theta_dim != theta_dim) throw ValidationError("theta", "dimension mismatch on append");
  const auto cat = [](auto& dst, const auto& src) { dst.insert(dst.end(), src.begin(), src.end()); };
  cat(adaptation, other.adaptation);
  cat(chain, other.chain);
  cat(a, other.a);
  cat(theta, other.theta);
  cat(log_q, other.log_q);
  cat(log_psi, other.log_psi);
  cat(divergent, other.divergent);
}

DrawStore DrawStore::adaptation_slice(std::uint32_t adapt) const {
  DrawStore out;
  out.theta_dim = theta_dim;
  for (std::size_t i = 0; i < size(); ++i)
    if (adaptation[i] == adapt)
      out.push_back(adaptation[i], chain[i], a[i], theta_row(i), log_q[i], log_psi[i],
                    divergent[i] != 0);
  return out;
}

DrawStore DrawStore::flipped() const {
  DrawStore out = *this;
  for (double& v : out.a)
    if (v > 1.0) v = 2.0 - v;
  return out;
}

std::vector<double> DrawStore::theta_column(std::size_t k) const {
  std::vector<double> col(size());
  for (std::size_t i = 0; i < size(); ++i) col[i] = theta[i * theta_dim + k];
  return col;
}

DrawStore joint_draws(const SampleResult& result, const JointPathModel& jpm,
                      std::uint32_t adaptation) {
  const std::size_t d = jpm.theta_dim();
  if (result.dim != d + 1) throw ValidationError("result", "state is not (u, theta)");
  DrawStore store;
  store.theta_dim = d;
  std::vector<double> grad(d);
  for (const auto& ch : result.chains) {
    const std::size_t n = ch.logp.size();
    for (std::size_t i = 0; i < n; ++i) {
      const auto state = std::span<const double>(ch.draws).subspan(i * (d + 1), d + 1);
      const auto theta = state.subspan(1);
      const double a = aux_from_u(state[0]).a;
      const double lq = jpm.target.evaluator(theta, 1.0, grad);
      const double lpsi = jpm.base.evaluator(theta, 0.0, grad);
      store.push_back(adaptation, static_cast<std::uint32_t>(ch.chain), a, theta, lq, lpsi,
                      ch.divergent[i] != 0);
    }
  }
  return store;
}

DrawStore plain_draws(const SampleResult& result, const ModelSpec& model,
                      std::uint32_t adaptation) {
  const std::size_t d = model.dim;
  if (result.dim != d) throw ValidationError("result", "dimension mismatch");
  DrawStore store;
  store.theta_dim = d;
  for (const auto& ch : result.chains) {
    for (std::size_t i = 0; i < ch.logp.size(); ++i) {
      const auto theta = std::span<const double>(ch.draws).subspan(i * d, d);
      store.push_back(adaptation, static_cast<std::uint32_t>(ch.chain), 1.0, theta, ch.logp[i],
                      0.0, ch.divergent[i] != 0);
    }
  }
  return store;
}

}  // namespace pathtemper
