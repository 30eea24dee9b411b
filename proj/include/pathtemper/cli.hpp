#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace pathtemper {

/// Everything needed to replay a CLI run. Serialized to config_resolved.json.
struct RunConfig {
  std::string command;
  std::string fixture;
  std::map<std::string, double> params;  // fixture parameter overrides
  std::string out;
  std::uint64_t seed = 1;
  std::size_t chains = 4;
  std::size_t draws = 3000;  // per adaptation, summed over chains
  std::size_t adaptations = 20;
  double target_accept = 0.8;
  int max_depth = 10;
  double a_min = 0.1;
  double a_max = 0.8;
  std::string kernel_family = "mixed";
  std::size_t kernels = 10;
  std::size_t grid_size = 100;
  double khat_threshold = 0.7;
  bool stop_on_convergence = true;
  std::size_t production_draws = 0;
  // idc
  std::string margin = "tau";
  std::string target = "optimal";
  double grid_lo = -6.0;
  double grid_hi = 4.5;
  std::size_t grid_n = 200;
  std::size_t min_adaptations = 1;
  // bench
  std::vector<std::string> methods{"path", "rb", "is"};
  std::size_t lambda_draws = 150;
  std::size_t hmc_updates = 100;
  // diagnose
  std::string input;
  bool emit_gnuplot = false;

  nlohmann::json to_json() const;
  /// Missing keys keep the defaults of `base`.
  static RunConfig from_json(const nlohmann::json& j, RunConfig base);
};

/// Exit codes: 0 success (including non-converged runs), 1 runtime failure,
/// 2 usage or validation error, 3 output directory or file error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Executes an already resolved configuration and writes its artifacts.
void execute(const RunConfig& cfg, std::ostream& log);

}  // namespace pathtemper
