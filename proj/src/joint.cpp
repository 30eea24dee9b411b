#include "pathtemper/joint.hpp"

#include <cmath>

#include "pathtemper/error.hpp"
#include "pathtemper/simd.hpp"

namespace pathtemper {

JointPathModel make_joint(ModelSpec target, ModelSpec base, LinkFunction link,
                          PseudoPrior pseudo_prior) {
  if (target.dim != base.dim)
    throw ValidationError("base", "dimension " + std::to_string(base.dim) +
                                      " differs from target dimension " +
                                      std::to_string(target.dim));
  return JointPathModel{std::move(target), std::move(base), link, std::move(pseudo_prior)};
}

double JointPathModel::evaluate(std::span<const double> state, std::span<double> grad,
                                double& log_q, double& log_psi) const {
  const std::size_t d = target.dim;
  thread_local std::vector<double> gq, gpsi;
  gq.resize(d);
  gpsi.resize(d);

  const auto theta = state.subspan(1, d);
  const AuxCoordinate aux = aux_from_u(state[0]);
  const auto [lambda, dlambda] = link.eval(aux.a);

  log_q = target.evaluator(theta, 1.0, gq);
  log_psi = base.evaluator(theta, 0.0, gpsi);

  auto grad_theta = grad.subspan(1, d);
  double value = aux.log_jacobian - pseudo_prior.log_c(lambda);
  // Skip zero-weighted terms so an infinite endpoint density cannot produce 0·inf.
  if (lambda == 0.0) {
    value += log_psi;
    std::copy(gpsi.begin(), gpsi.end(), grad_theta.begin());
  } else if (lambda == 1.0) {
    value += log_q;
    std::copy(gq.begin(), gq.end(), grad_theta.begin());
  } else {
    value += lambda * log_q + (1.0 - lambda) * log_psi;
    for (std::size_t i = 0; i < d; ++i) grad_theta[i] = (1.0 - lambda) * gpsi[i];
    simd::axpy(lambda, gq, grad_theta);
  }
  double gu = aux.dlog_jacobian;
  if (dlambda != 0.0)
    gu += aux.da_du * dlambda * (log_q - log_psi - pseudo_prior.dlog_c(lambda));
  grad[0] = gu;
  return value;
}

JointPathModel::Value JointPathModel::joint_logdensity(double u,
                                                       std::span<const double> theta) const {
  if (!std::isfinite(u)) throw DomainError("non-finite u");
  if (theta.size() != target.dim) throw ValidationError("theta", "dimension mismatch");
  for (double v : theta)
    if (!std::isfinite(v)) throw DomainError("non-finite theta");
  std::vector<double> state(theta.size() + 1), grad(theta.size() + 1);
  state[0] = u;
  std::copy(theta.begin(), theta.end(), state.begin() + 1);
  Value out{};
  out.value = evaluate(state, grad, out.log_q, out.log_psi);
  out.grad_u = grad[0];
  out.grad_theta.assign(grad.begin() + 1, grad.end());
  return out;
}

}  // namespace pathtemper
