#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Small numeric kernels on contiguous doubles. Every entry has a scalar
// reference implementation; AVX2 (x86-64) and NEON (aarch64) variants are
// selected once at startup. PATHTEMPER_SIMD=scalar forces the reference path.

namespace pathtemper::simd {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = scale * (lhs - rhs)
  void (*scaled_difference)(double scale, const double* lhs, const double* rhs, double* out,
                            std::size_t n);
  // out = x * y elementwise
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  // -inf for n == 0; NaN inputs propagate
  double (*max_value)(const double* x, std::size_t n);
  // sum_i exp(x_i - shift)
  double (*sum_exp_shifted)(const double* x, double shift, std::size_t n);
};

const KernelTable& scalar_kernels() noexcept;
/// nullptr when the variant was not compiled for this target.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

/// True when the running CPU can execute the given variant.
bool isa_supported(Isa isa) noexcept;

/// Table picked at first use (best supported variant unless overridden).
const KernelTable& active() noexcept;

std::string_view isa_name(Isa isa) noexcept;

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void scaled_difference(double scale, std::span<const double> lhs,
                              std::span<const double> rhs, std::span<double> out) {
  active().scaled_difference(scale, lhs.data(), rhs.data(), out.data(), out.size());
}
inline void mul(std::span<const double> x, std::span<const double> y, std::span<double> out) {
  active().mul(x.data(), y.data(), out.data(), out.size());
}
inline double sum(std::span<const double> x) { return active().sum(x.data(), x.size()); }
inline double max_value(std::span<const double> x) {
  return active().max_value(x.data(), x.size());
}

/// log(sum exp(x)); -inf on empty input or when every element is -inf.
double log_sum_exp(std::span<const double> x);

/// log(mean exp(x)).
double log_mean_exp(std::span<const double> x);

}  // namespace pathtemper::simd
