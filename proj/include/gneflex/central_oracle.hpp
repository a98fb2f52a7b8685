#pragma once

#include <Eigen/Dense>
#include <utility>

#include "gneflex/game_core.hpp"
#include "gneflex/polyhedral_projection.hpp"

namespace gneflex {

/// Certificate for a variational GNE: the bids, the shared multiplier of the
/// coupling constraints, and how far each aggregator is from its best response.
struct VgneCertificate {
  Eigen::VectorXd beta_star;
  Eigen::VectorXd gamma2;
  double kkt_residual = 0.0;
  Eigen::VectorXd best_response_gap;
  double natural_residual = 0.0;
  long iterations = 0;
};

struct OracleOptions {
  double tol = 1e-9;  ///< natural-residual tolerance ||beta - proj_K(beta - F(beta))||_inf
  long max_iter = 200000;
  double step_safety = 0.9;
  double active_tol = 1e-6;  ///< rows with |A~ beta - d| below this enter multiplier recovery
  ProjectionOptions projection;
};

struct KktBreakdown {
  double stationarity = 0.0;    ///< dist(-F - A~^T gamma, N_Omega(beta)), inf-norm
  double primal = 0.0;          ///< ||max(0, A~ beta - d)||_inf and box violation
  double complementarity = 0.0; ///< sum_i gamma_i |d_i - (A~ beta)_i|
  double dual = 0.0;            ///< ||min(gamma, 0)||_inf

  double value() const;
};

/// Extragradient on VI(K, F) with projections onto K. Throws
/// ConvergenceError when the iteration cap is hit, InfeasibleSetError when K
/// is empty or has no Slater point.
VgneCertificate solve_vgne(const GameModel& gm, const OracleOptions& opts = {});

KktBreakdown kkt_breakdown(const GameModel& gm, const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma2);
double kkt_residual(const GameModel& gm, const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma2);

/// Shared multiplier from stationarity on the active rows (NNLS).
Eigen::VectorXd recover_multiplier(const GameModel& gm, const Eigen::VectorXd& beta, double active_tol = 1e-6);

/// Interval K_n(beta_{-n}) of bids agent n can place given the others.
/// Entry n of `beta` is ignored. Throws InfeasibleSetError when empty.
std::pair<double, double> feasible_interval(const GameModel& gm, int n, const Eigen::VectorXd& beta);

/// Minimizer of J_n(., beta_{-n}) over K_n(beta_{-n}). Entry n of `beta` is ignored.
double best_response(const GameModel& gm, int n, const Eigen::VectorXd& beta);

/// Brute-force check (N <= 3) that no aggregator improves by more than
/// `tol_grid` on a grid of its feasible interval.
bool grid_certify(const GameModel& gm, const Eigen::VectorXd& beta_star, double grid_step, double tol_grid = 1e-9);

/// Natural residual ||beta - proj_K(beta - F(beta))||_inf.
double natural_residual(const GameModel& gm, const Eigen::VectorXd& beta, const ProjectionOptions& opts = {});

}  // namespace gneflex
