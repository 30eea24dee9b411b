#include "pathtemper/simd.hpp"

#if defined(__aarch64__)
#define PATHTEMPER_HAVE_NEON_KERNELS 1
#include <arm_neon.h>

#include <cmath>
#include <limits>
#endif

namespace pathtemper::simd {

#ifdef PATHTEMPER_HAVE_NEON_KERNELS
namespace {

double dot_neon(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scaled_difference_neon(double scale, const double* lhs, const double* rhs, double* out,
                            std::size_t n) {
  const float64x2_t s = vdupq_n_f64(scale);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2)
    vst1q_f64(out + i, vmulq_f64(s, vsubq_f64(vld1q_f64(lhs + i), vld1q_f64(rhs + i))));
  for (; i < n; ++i) out[i] = scale * (lhs[i] - rhs[i]);
}

void mul_neon(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

double sum_neon(const double* x, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vld1q_f64(x + i));
    acc1 = vaddq_f64(acc1, vld1q_f64(x + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}

double max_neon(const double* x, std::size_t n) {
  float64x2_t m = vdupq_n_f64(-std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  // vmaxq_f64 propagates NaN, matching the scalar contract.
  for (; i + 2 <= n; i += 2) m = vmaxq_f64(m, vld1q_f64(x + i));
  double best = vmaxvq_f64(m);
  if (std::isnan(best)) return best;
  for (; i < n; ++i) {
    if (std::isnan(x[i])) return x[i];
    if (x[i] > best) best = x[i];
  }
  return best;
}

inline float64x2_t pow2_integral(float64x2_t k) {
  const int64x2_t ki = vcvtq_s64_f64(k);
  return vreinterpretq_f64_s64(vshlq_n_s64(vaddq_s64(ki, vdupq_n_s64(1023)), 52));
}

inline float64x2_t exp_neon(float64x2_t x) {
  const float64x2_t lo_cut = vdupq_n_f64(-745.2);
  const float64x2_t hi_cut = vdupq_n_f64(709.79);
  const float64x2_t xc = vminq_f64(vmaxq_f64(x, lo_cut), hi_cut);
  const float64x2_t k = vrndnq_f64(vmulq_f64(xc, vdupq_n_f64(1.4426950408889634)));
  float64x2_t r = vfmsq_f64(xc, k, vdupq_n_f64(6.93145751953125e-1));
  r = vfmsq_f64(r, k, vdupq_n_f64(1.42860682030941723212e-6));

  static constexpr double inv_fact[14] = {
      1.0,           1.0,           1.0 / 2.0,        1.0 / 6.0,         1.0 / 24.0,
      1.0 / 120.0,   1.0 / 720.0,   1.0 / 5040.0,     1.0 / 40320.0,     1.0 / 362880.0,
      1.0 / 3628800.0, 1.0 / 39916800.0, 1.0 / 479001600.0, 1.0 / 6227020800.0,
  };
  float64x2_t p = vdupq_n_f64(inv_fact[13]);
  for (int j = 12; j >= 0; --j) p = vfmaq_f64(vdupq_n_f64(inv_fact[j]), p, r);

  const float64x2_t k1 = vrndmq_f64(vmulq_f64(k, vdupq_n_f64(0.5)));
  const float64x2_t k2 = vsubq_f64(k, k1);
  float64x2_t y = vmulq_f64(vmulq_f64(p, pow2_integral(k1)), pow2_integral(k2));

  y = vbslq_f64(vcltq_f64(x, lo_cut), vdupq_n_f64(0.0), y);
  y = vbslq_f64(vcgtq_f64(x, hi_cut), vdupq_n_f64(std::numeric_limits<double>::infinity()), y);
  const uint64x2_t is_num = vceqq_f64(x, x);
  return vbslq_f64(is_num, y, x);
}

double sum_exp_shifted_neon(const double* x, double shift, std::size_t n) {
  const float64x2_t s = vdupq_n_f64(shift);
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, exp_neon(vsubq_f64(vld1q_f64(x + i), s)));
  double total = vaddvq_f64(acc);
  for (; i < n; ++i) total += std::exp(x[i] - shift);
  return total;
}

}  // namespace

const KernelTable* neon_kernels() noexcept {
  static const KernelTable table{Isa::neon, dot_neon, axpy_neon, scaled_difference_neon,
                                 mul_neon,  sum_neon, max_neon,  sum_exp_shifted_neon};
  return &table;
}

#else

const KernelTable* neon_kernels() noexcept { return nullptr; }

#endif

}  // namespace pathtemper::simd
