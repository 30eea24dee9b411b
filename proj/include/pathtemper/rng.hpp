#pragma once

#include <array>
#include <cstdint>

namespace pathtemper {

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by (seed, stream id); the 128-bit counter is split
/// into a 64-bit block index and the 64-bit stream id, so distinct streams
/// never share a block. Output is fully determined by (seed, stream, number of
/// values drawn) on every platform.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint64_t next_u64() noexcept;

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform double in (0, 1); never returns 0.
  double uniform_open() noexcept;

  double normal() noexcept;

  /// Integer uniform on [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Derive an independent stream id from a parent id and a child index.
  static std::uint64_t substream(std::uint64_t parent, std::uint64_t child) noexcept;

 private:
  void refill() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int used_ = 4;
  bool has_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace pathtemper
