#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "gneflex/central_oracle.hpp"
#include "gneflex/distributed_solver.hpp"
#include "gneflex/run_config.hpp"

namespace gneflex {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,
  kExitNotConverged = 2,
  kExitInfeasible = 3,
  kExitCompareGap = 4,
};

/// Command-line overrides applied on top of the config file.
struct CommandOptions {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<long> max_iter;
  bool force = false;
};

/// Bid gap above which `compare` reports disagreement.
inline constexpr double kCompareBidTolerance = 1e-4;

void apply_overrides(RunConfig& cfg, const CommandOptions& opts);

/// Each command writes its files into cfg.outputs.directory, prints a short
/// report to `out` and returns an ExitCode. Errors are reported on `err`.
int cmd_run(RunConfig cfg, const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_oracle(RunConfig cfg, const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_tune(RunConfig cfg, const CommandOptions& opts, std::ostream& out, std::ostream& err);
int cmd_compare(RunConfig cfg, const CommandOptions& opts, std::ostream& out, std::ostream& err);

/// Trajectory CSV text. The first line is a `#` comment with the config hash
/// and gains; then a header row and one row per record.
std::string trajectory_csv(const std::vector<TrajectoryRecord>& records, int num_agents, int rows,
                           const std::string& hash, const GainSet& gains);

/// Shortest round-trip decimal form of `v`.
std::string format_number(double v);

}  // namespace gneflex
