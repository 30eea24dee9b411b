#include <cmath>
#include <limits>

#include "pathtemper/simd.hpp"

namespace pathtemper::simd {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scaled_difference_scalar(double scale, const double* lhs, const double* rhs, double* out,
                              std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = scale * (lhs[i] - rhs[i]);
}

void mul_scalar(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

double sum_scalar(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

double max_scalar(const double* x, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(x[i])) return x[i];
    if (x[i] > m) m = x[i];
  }
  return m;
}

double sum_exp_shifted_scalar(const double* x, double shift, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::exp(x[i] - shift);
  return acc;
}

}  // namespace

const KernelTable& scalar_kernels() noexcept {
  static const KernelTable table{Isa::scalar,   dot_scalar, axpy_scalar, scaled_difference_scalar,
                                 mul_scalar,    sum_scalar, max_scalar,  sum_exp_shifted_scalar};
  return table;
}

}  // namespace pathtemper::simd
