#pragma once

#include <span>
#include <vector>

#include "pathtemper/link.hpp"
#include "pathtemper/model.hpp"
#include "pathtemper/pseudo_prior.hpp"

namespace pathtemper {

/// Joint density over (u, theta) with a = 2·sigmoid(u), lambda = f(a):
///   f·log q + (1 - f)·log psi - log c(f) + log|da/du|
/// Immutable; a new instance is built whenever the pseudo-prior changes.
struct JointPathModel {
  ModelSpec target;
  ModelSpec base;
  LinkFunction link;
  PseudoPrior pseudo_prior;

  std::size_t theta_dim() const noexcept { return target.dim; }

  struct Value {
    double value;
    double grad_u;
    std::vector<double> grad_theta;
    double log_q;
    double log_psi;
  };

  /// Checked evaluation.
  Value joint_logdensity(double u, std::span<const double> theta) const;

  /// Hot-path form on the packed state (u, theta...). grad has the same length.
  double evaluate(std::span<const double> state, std::span<double> grad, double& log_q,
                  double& log_psi) const;
};

JointPathModel make_joint(ModelSpec target, ModelSpec base, LinkFunction link = {},
                          PseudoPrior pseudo_prior = PseudoPrior::zero());

}  // namespace pathtemper
