#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "pathtemper/hmc.hpp"
#include "pathtemper/joint.hpp"

namespace pathtemper {

/// Joint draws stored column-wise. theta is row-major (size() x theta_dim).
/// For plain (non-path) runs a is 1 and log_psi is 0.
struct DrawStore {
  std::size_t theta_dim = 0;
  std::vector<std::uint32_t> adaptation;
  std::vector<std::uint32_t> chain;
  std::vector<double> a;
  std::vector<double> theta;
  std::vector<double> log_q;
  std::vector<double> log_psi;
  std::vector<std::uint8_t> divergent;

  std::size_t size() const noexcept { return a.size(); }
  bool empty() const noexcept { return a.empty(); }

  std::span<const double> theta_row(std::size_t i) const {
    return std::span<const double>(theta).subspan(i * theta_dim, theta_dim);
  }

  void push_back(std::uint32_t adapt, std::uint32_t chain_id, double a_value,
                 std::span<const double> theta_row, double lq, double lpsi, bool div);
  void append(const DrawStore& other);

  /// Draws whose adaptation index equals `adapt`.
  DrawStore adaptation_slice(std::uint32_t adapt) const;

  /// Copy with every a > 1 replaced by 2 - a.
  DrawStore flipped() const;

  /// Coordinate `k` of theta for all draws.
  std::vector<double> theta_column(std::size_t k) const;
};

/// Converts sampler output on the packed (u, theta) state into joint draws,
/// recomputing log q and log psi at every kept draw.
DrawStore joint_draws(const SampleResult& result, const JointPathModel& jpm,
                      std::uint32_t adaptation);

/// Draws of a plain model (a = 1, log_psi = 0, log_q = model log density).
DrawStore plain_draws(const SampleResult& result, const ModelSpec& model,
                      std::uint32_t adaptation);

}  // namespace pathtemper
