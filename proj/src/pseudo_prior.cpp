#include "pathtemper/pseudo_prior.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "pathtemper/error.hpp"

namespace pathtemper {

KernelBasis::KernelBasis(KernelFamily family, std::size_t j) : family_(family) {
  if (j == 0) throw ValidationError("J", "must be positive");
  if (family == KernelFamily::mixed && j % 2 != 0)
    throw ValidationError("J", "mixed kernels need an even count");
  width_ = 1.0 / static_cast<double>(j);
  const auto add = [&](bool gaussian, std::size_t count) {
    for (std::size_t k = 1; k <= count; ++k) {
      kinds_.push_back(gaussian);
      centers_.push_back(static_cast<double>(k) / static_cast<double>(j + 1));
    }
  };
  switch (family) {
    case KernelFamily::gaussian:
      add(true, j);
      break;
    case KernelFamily::logit:
      add(false, j);
      break;
    case KernelFamily::mixed:
      add(true, j / 2);
      add(false, j / 2);
      break;
  }
}

void KernelBasis::values(double lambda, std::span<double> out) const {
  for (std::size_t k = 0; k < kinds_.size(); ++k) {
    const double z = (lambda - centers_[k]) / width_;
    out[k] = kinds_[k] ? std::exp(-0.5 * z * z) : 1.0 / (1.0 + std::exp(-z));
  }
}

void KernelBasis::derivatives(double lambda, std::span<double> out) const {
  for (std::size_t k = 0; k < kinds_.size(); ++k) {
    const double z = (lambda - centers_[k]) / width_;
    if (kinds_[k]) {
      out[k] = -z / width_ * std::exp(-0.5 * z * z);
    } else {
      const double s = 1.0 / (1.0 + std::exp(-z));
      out[k] = s * (1.0 - s) / width_;
    }
  }
}

PseudoPrior PseudoPrior::zero(KernelFamily family, std::size_t j) {
  KernelBasis check(family, j);
  return PseudoPrior{family, j, 0.0, std::vector<double>(j, 0.0)};
}

namespace {

// Kernel k of a (family, J) basis evaluated without allocating; mirrors KernelBasis.
void kernel_at(KernelFamily family, std::size_t j, std::size_t k, double lambda, double& value,
               double& deriv) {
  bool gaussian = family == KernelFamily::gaussian;
  std::size_t idx = k;
  if (family == KernelFamily::mixed) {
    const std::size_t count = j / 2;
    gaussian = k < count;
    idx = gaussian ? k : k - count;
  }
  const double width = 1.0 / static_cast<double>(j);
  const double center = static_cast<double>(idx + 1) / static_cast<double>(j + 1);
  const double z = (lambda - center) / width;
  if (gaussian) {
    value = std::exp(-0.5 * z * z);
    deriv = -z / width * value;
  } else {
    value = 1.0 / (1.0 + std::exp(-z));
    deriv = value * (1.0 - value) / width;
  }
}

}  // namespace

double PseudoPrior::log_c(double lambda) const {
  double v = beta0 * lambda;
  for (std::size_t k = 0; k < j; ++k) {
    if (beta[k] == 0.0) continue;
    double g, dg;
    kernel_at(family, j, k, lambda, g, dg);
    v += beta[k] * g;
  }
  return v;
}

double PseudoPrior::dlog_c(double lambda) const {
  double v = beta0;
  for (std::size_t k = 0; k < j; ++k) {
    if (beta[k] == 0.0) continue;
    double g, dg;
    kernel_at(family, j, k, lambda, g, dg);
    v += beta[k] * dg;
  }
  return v;
}

bool PseudoPrior::is_zero() const noexcept {
  return beta0 == 0.0 && std::all_of(beta.begin(), beta.end(), [](double b) { return b == 0.0; });
}

std::vector<double> PseudoPrior::coefficients() const {
  std::vector<double> c{beta0};
  c.insert(c.end(), beta.begin(), beta.end());
  return c;
}

std::vector<double> standard_grid(std::size_t size) {
  std::vector<double> g(size);
  for (std::size_t i = 0; i < size; ++i)
    g[i] = static_cast<double>(i + 1) / static_cast<double>(size);
  return g;
}

PseudoPrior fit_basis(std::span<const double> x, std::span<const double> y, KernelFamily family,
                      std::size_t j) {
  if (x.size() != y.size()) throw ValidationError("grid", "abscissa/value length mismatch");
  if (x.size() < j + 1) throw ValidationError("grid", "need at least J+1 grid values");
  for (double v : y)
    if (!std::isfinite(v)) throw NumericalError("non-finite grid value in least-squares fit");

  const KernelBasis basis(family, j);
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto p = static_cast<Eigen::Index>(j + 1);
  // Ridge as extra rows: [X; sqrt(ridge) I] beta = [y; 0].
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n + p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + p);
  std::vector<double> g(j);
  for (Eigen::Index i = 0; i < n; ++i) {
    basis.values(x[static_cast<std::size_t>(i)], g);
    design(i, 0) = x[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < j; ++k) design(i, static_cast<Eigen::Index>(k + 1)) = g[k];
    rhs(i) = y[static_cast<std::size_t>(i)];
  }
  const double r = std::sqrt(kRidge);
  for (Eigen::Index k = 0; k < p; ++k) design(n + k, k) = r;

  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
  PseudoPrior out{family, j, coef(0), std::vector<double>(j)};
  for (std::size_t k = 0; k < j; ++k) out.beta[k] = coef(static_cast<Eigen::Index>(k + 1));
  return out;
}

PseudoPrior fit_log_z(std::span<const double> grid_values, KernelFamily family, std::size_t j) {
  const auto grid = standard_grid(grid_values.size());
  return fit_basis(grid, grid_values, family, j);
}

}  // namespace pathtemper
