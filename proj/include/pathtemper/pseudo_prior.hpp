#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace pathtemper {

enum class KernelFamily { gaussian, logit, mixed };

/// Regression basis {gamma_1, ..., gamma_J} on [0, 1]. Kernel width is 1/J.
///   gaussian: J kernels centered at j/(J+1)
///   logit:    J sigmoid steps at the same centers
///   mixed:    J/2 of each, sharing the first J/2 centers
class KernelBasis {
 public:
  KernelBasis(KernelFamily family, std::size_t j);

  KernelFamily family() const noexcept { return family_; }
  std::size_t size() const noexcept { return kinds_.size(); }

  void values(double lambda, std::span<double> out) const;
  void derivatives(double lambda, std::span<double> out) const;

 private:
  KernelFamily family_;
  std::vector<bool> kinds_;  // true: gaussian
  std::vector<double> centers_;
  double width_;
};

/// log c(lambda) = beta0·lambda + sum_j beta_j·gamma_j(lambda)
struct PseudoPrior {
  KernelFamily family = KernelFamily::mixed;
  std::size_t j = 10;
  double beta0 = 0.0;
  std::vector<double> beta = std::vector<double>(10, 0.0);

  static PseudoPrior zero(KernelFamily family = KernelFamily::mixed, std::size_t j = 10);

  double log_c(double lambda) const;
  double dlog_c(double lambda) const;
  bool is_zero() const noexcept;
  /// (beta0, beta_1..beta_J)
  std::vector<double> coefficients() const;
};

constexpr double kRidge = 1e-8;

/// Generic ridge least squares onto {lambda, gamma_1..gamma_J} at arbitrary
/// abscissae in [0, 1].
PseudoPrior fit_basis(std::span<const double> x, std::span<const double> y, KernelFamily family,
                      std::size_t j);

/// Fit on the standard grid lambda_i = i/I, i = 1..I (I = grid_values.size()).
PseudoPrior fit_log_z(std::span<const double> grid_values, KernelFamily family = KernelFamily::mixed,
                      std::size_t j = 10);

std::vector<double> standard_grid(std::size_t size);

}  // namespace pathtemper
