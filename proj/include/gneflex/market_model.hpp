#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace gneflex {

/// Private data of one aggregator.
///
/// Units: `a` currency/kWh^2, `b` currency/kWh, `e` and `xhat` kWh. The
/// pricing function offered to prosumers is q(x) = a x + b.
struct AggregatorParams {
  double a = 0.0;
  double b = 0.0;
  double e = 0.0;     ///< pre-scheduled net load
  double xhat = 0.0;  ///< load adjustment capacity

  bool operator==(const AggregatorParams&) const = default;
};

/// Data every aggregator is allowed to know: the broadcast requirement, the
/// price sensitivity and the admissible bid box.
struct PublicMarketData {
  int num_agents = 0;
  double r = 0.0;
  double alpha = 1.0;
  double beta_min = 0.0;
  double beta_max = 0.0;
};

/// Complete description of one demand-response market clearing problem.
struct MarketInstance {
  double r = 0.0;      ///< load adjustment requirement, kWh
  double alpha = 1.0;  ///< price sensitivity imposed by the utility
  double beta_min = 0.0;
  double beta_max = 0.0;
  std::vector<AggregatorParams> agents;
  Eigen::MatrixXd pi;    ///< H x N line-flow distribution factors
  Eigen::VectorXd fhat;  ///< H line capacities, kWh

  int num_agents() const { return static_cast<int>(agents.size()); }
  int num_lines() const { return static_cast<int>(fhat.size()); }
  PublicMarketData public_data() const;

  /// Throws InvalidModelError / DimensionError when an invariant fails.
  void validate() const;
};

/// Coupling constraints A~ beta <= d together with the bid box.
///
/// Row layout (M = 2N + 2H rows):
///   [0, N)          x_n <= xhat_n
///   [N, 2N)         x_n >= 0
///   [2N, 2N+H)      flow_l <= fhat_l
///   [2N+H, 2N+2H)   flow_l >= -fhat_l
/// where x = A beta + c and flow = Pi (e - x).
struct FeasibleSet {
  Eigen::MatrixXd a_tilde;  ///< M x N
  Eigen::VectorXd d;        ///< M
  Eigen::MatrixXd d_split;  ///< M x N; column n holds agent n's share d_n
  double beta_min = 0.0;
  double beta_max = 0.0;
  int num_lines = 0;

  int rows() const { return static_cast<int>(a_tilde.rows()); }
  int num_agents() const { return static_cast<int>(a_tilde.cols()); }
  std::string describe_row(int row) const;
};

struct FeasibilityReport {
  bool box_ok = true;
  bool coupling_ok = true;
  std::vector<int> box_violations;  ///< agent indices outside the box
  std::vector<int> violated_rows;   ///< rows of A~ beta <= d + tol that fail
  double max_violation = 0.0;

  bool feasible() const { return box_ok && coupling_ok; }
};

/// A = I - (1/N) 1 1^T.
Eigen::MatrixXd centering_matrix(int n);

/// p = (r - 1^T beta) / (alpha N).
double clearing_price(const MarketInstance& inst, const Eigen::VectorXd& beta);

/// x_n = (r - 1^T beta) / N + beta_n. Sums to r for every beta.
Eigen::VectorXd load_adjustment(const MarketInstance& inst, const Eigen::VectorXd& beta);

/// Line flows Pi (e - x) at the cleared allocation.
Eigen::VectorXd line_flows(const MarketInstance& inst, const Eigen::VectorXd& beta);

FeasibleSet build_feasible_set(const MarketInstance& inst);

FeasibilityReport check_feasibility(const FeasibleSet& fs, const Eigen::VectorXd& beta,
                                    double tol = 1e-9);

}  // namespace gneflex
