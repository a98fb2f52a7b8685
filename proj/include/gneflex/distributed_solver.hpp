#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "gneflex/comm_graph.hpp"
#include "gneflex/game_core.hpp"
#include "gneflex/tuning.hpp"

namespace gneflex {

/// Exact equality that tolerates differently sized operands.
template <typename A, typename B>
bool same_entries(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() && (a.size() == 0 || a == b);
}

/// Everything one aggregator stores between rounds.
struct AgentLocal {
  int id = 0;
  double beta = 0.0;   ///< bid, kWh
  double psi = 0.0;    ///< consensus auxiliary
  double sigma = 0.0;  ///< estimate of the average bid 1^T beta / N
  Eigen::VectorXd z;       ///< M-vector auxiliary
  Eigen::VectorXd lambda;  ///< M-vector multiplier estimate, >= 0

  bool operator==(const AgentLocal& o) const {
    return id == o.id && beta == o.beta && psi == o.psi && sigma == o.sigma && same_entries(z, o.z) &&
           same_entries(lambda, o.lambda);
  }
};

/// Data only agent n holds: its cost/capacity parameters, its column of A~,
/// its share d_n of the right-hand side, its step sizes and its neighbours.
struct AgentPrivate {
  AggregatorParams params;
  Eigen::VectorXd a_col;
  Eigen::VectorXd d_share;
  AgentGains gains;
  std::vector<Neighbor> neighbors;
};

/// Data shared by every agent: market scalars and the common gain kappa.
struct AgentContext {
  PublicMarketData market;
  double kappa = 0.0;
  int rows = 0;
};

/// First exchange of round k: (sigma^k, psi^k, z^k, lambda^k). No bids.
struct Phase1Message {
  int from = 0;
  double sigma = 0.0;
  double psi = 0.0;
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;
};

/// Second exchange of round k: (psi^{k+1}, z^{k+1}).
struct Phase2Message {
  int from = 0;
  double psi = 0.0;
  Eigen::VectorXd z;
};

/// beta, psi and z after phase one; sigma and lambda still at round k.
struct PartialUpdate {
  double beta = 0.0;
  double psi = 0.0;
  Eigen::VectorXd z;
};

struct SolverState {
  std::vector<AgentLocal> agents;
  long k = 0;

  bool operator==(const SolverState&) const = default;
};

/// Agent n's phase-one update. Reads only its own state and its inbox.
PartialUpdate agent_phase1(const AgentContext& ctx, const AgentPrivate& own, const AgentLocal& state,
                           std::span<const Phase1Message> inbox);

/// Agent n's phase-two update: sigma and lambda, completing round k -> k+1.
AgentLocal agent_phase2(const AgentContext& ctx, const AgentPrivate& own, const AgentLocal& state,
                        const PartialUpdate& partial, std::span<const Phase1Message> inbox1,
                        std::span<const Phase2Message> inbox2);

enum class InitKind { Zero, Random, Explicit };

struct InitSpec {
  InitKind kind = InitKind::Zero;
  std::uint64_t seed = 0;
  std::optional<SolverState> state;  ///< used when kind == Explicit
};

struct Residuals {
  double fixed_point = 0.0;       ///< ||omega^{k+1} - omega^k||_inf
  double sigma_consensus = 0.0;   ///< ||L sigma||_inf
  double lambda_consensus = 0.0;  ///< ||(L kron I) lambda||_inf
  double sigma_tracking = 0.0;    ///< ||sigma - mean(beta) 1||_inf
  double constraint_violation = 0.0;
  double kkt = 0.0;  ///< KKT residual of VI(K, F) at (beta, mean lambda)
};

struct RunOptions {
  double tol = 1e-8;
  long max_iter = 100000;
  /// Record every `record_stride`-th iterate; 0 disables recording.
  long record_stride = 0;
  /// Also keep the full stacked omega in each record.
  bool keep_states = false;
  /// Report the first iteration whose fixed-point residual drops below this.
  double milestone_tol = 1e-3;
};

enum class StopReason { Converged, MaxIterations };

struct TrajectoryRecord {
  long k = 0;
  Eigen::VectorXd beta;
  Eigen::VectorXd sigma;
  Eigen::VectorXd x;
  Eigen::MatrixXd lambda;  ///< M x N, column n is agent n's estimate
  Residuals residuals;
  Eigen::VectorXd omega;   ///< filled only with keep_states
};

struct RunResult {
  SolverState state;
  std::vector<TrajectoryRecord> trajectory;
  StopReason reason = StopReason::MaxIterations;
  long iterations = 0;
  double final_residual = 0.0;
  long milestone_iteration = -1;  ///< -1 when never reached
};

/// Round-synchronous simulation of the fully distributed v-GNE seeking
/// iteration. Each round has two exchange phases; agent updates read only an
/// immutable snapshot of the previous phase, so results do not depend on the
/// order agents are evaluated in.
class DistributedSolver {
 public:
  DistributedSolver(GameModel gm, CommGraph graph, GainSet gains);

  SolverState init(const InitSpec& spec = {}) const;
  SolverState step(const SolverState& state) const;
  RunResult run(SolverState state, const RunOptions& opts = {}) const;

  /// Diagnostics at `state`; fixed_point comes from one trial round.
  Residuals residuals(const SolverState& state) const;

  std::vector<Phase1Message> phase1_inbox(const SolverState& state, int n) const;

  const AgentContext& context() const { return ctx_; }
  const AgentPrivate& agent_private(int n) const { return privates_[static_cast<size_t>(n)]; }
  const GameModel& model() const { return gm_; }
  const CommGraph& graph() const { return graph_; }
  const GainSet& gains() const { return gains_; }
  int num_agents() const { return gm_.num_agents(); }
  int rows() const { return ctx_.rows; }

  /// Builds a record of `state` without touching the run loop.
  TrajectoryRecord make_record(const SolverState& state, double fixed_point, bool keep_state) const;

 private:
  void validate(const SolverState& state) const;
  Residuals state_residuals(const SolverState& state) const;

  GameModel gm_;
  CommGraph graph_;
  GainSet gains_;
  AgentContext ctx_;
  std::vector<AgentPrivate> privates_;
};

/// omega = col(beta, psi, sigma, z, lambda) with z and lambda agent-major.
Eigen::VectorXd stack_state(const SolverState& state);
SolverState unstack_state(const Eigen::VectorXd& omega, int num_agents, int rows, long k = 0);

/// ||a - b||_inf over every variable of every agent.
double state_distance(const SolverState& a, const SolverState& b);

const char* to_string(StopReason reason);

}  // namespace gneflex
