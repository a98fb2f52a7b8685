#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gneflex/comm_graph.hpp"
#include "gneflex/distributed_solver.hpp"
#include "gneflex/market_model.hpp"
#include "gneflex/tuning.hpp"

namespace gneflex {

struct GainSpec {
  enum class Mode { Auto, Explicit };
  Mode mode = Mode::Auto;
  /// Written back as the bare string "auto" when nothing else is set.
  bool shorthand = true;
  double safety = 0.95;
  std::optional<double> kappa;
  Eigen::VectorXd tau, upsilon, rho, delta, eta;  ///< explicit mode only

  bool operator==(const GainSpec&) const;
};

struct SolverSpec {
  double tol = 1e-8;
  long max_iter = 100000;
  long record_stride = 1;
  std::uint64_t seed = 0;
  InitKind init = InitKind::Zero;
  std::optional<SolverState> initial_state;  ///< InitKind::Explicit

  bool operator==(const SolverSpec&) const = default;
};

struct OutputSpec {
  std::string directory = "out";
  bool trajectory = true;

  bool operator==(const OutputSpec&) const = default;
};

struct RunConfig {
  std::string name;
  MarketInstance market;
  std::vector<std::string> line_names;
  std::vector<Edge> edges;  ///< 0-based; 1-based in the file
  /// Set when Pi / the graph were read from the `non_paper_data` section.
  bool pi_supplemental = false;
  bool graph_supplemental = false;
  std::string supplemental_note;
  GainSpec gains;
  SolverSpec solver;
  OutputSpec outputs;

  bool operator==(const RunConfig&) const;
};

/// Parses and validates a config document. `source` prefixes error messages.
/// Throws ConfigError naming the offending field (JSON path).
RunConfig parse_config(std::string_view text, std::string_view source = "config");
RunConfig load_config(const std::string& path);

std::string config_to_json(const RunConfig& cfg);
void write_config(const RunConfig& cfg, const std::string& path);

/// 16 hex digits of FNV-1a over the canonical serialization.
std::string config_hash(const RunConfig& cfg);

/// Gains for this config. Explicit gains that fail the Phi check raise
/// ConfigError unless `force` is set.
GainSet resolve_gains(const RunConfig& cfg, const FeasibleSet& fs, const CommGraph& g, bool force);

}  // namespace gneflex
