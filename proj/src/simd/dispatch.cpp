#include <cmath>
#include <cstdlib>
#include <limits>
#include <string_view>

#include "pathtemper/simd.hpp"

namespace pathtemper::simd {

bool isa_supported(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
      return avx2_kernels() != nullptr && __builtin_cpu_supports("avx2") &&
             __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
      return neon_kernels() != nullptr;
  }
  return false;
}

namespace {

const KernelTable& choose() noexcept {
  if (const char* env = std::getenv("PATHTEMPER_SIMD")) {
    const std::string_view want{env};
    if (want == "scalar") return scalar_kernels();
    if (want == "avx2" && isa_supported(Isa::avx2)) return *avx2_kernels();
    if (want == "neon" && isa_supported(Isa::neon)) return *neon_kernels();
  }
  if (isa_supported(Isa::avx2)) return *avx2_kernels();
  if (isa_supported(Isa::neon)) return *neon_kernels();
  return scalar_kernels();
}

}  // namespace

const KernelTable& active() noexcept {
  static const KernelTable& table = choose();
  return table;
}

std::string_view isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
    case Isa::neon:
      return "neon";
  }
  return "unknown";
}

double log_sum_exp(std::span<const double> x) {
  const double m = max_value(x);
  if (std::isnan(m)) return m;
  if (m == -std::numeric_limits<double>::infinity()) return m;
  if (m == std::numeric_limits<double>::infinity()) return m;
  return m + std::log(active().sum_exp_shifted(x.data(), m, x.size()));
}

double log_mean_exp(std::span<const double> x) {
  return log_sum_exp(x) - std::log(static_cast<double>(x.size()));
}

}  // namespace pathtemper::simd
