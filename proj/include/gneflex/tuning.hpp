#pragma once

#include <Eigen/Dense>

#include "gneflex/comm_graph.hpp"
#include "gneflex/market_model.hpp"

namespace gneflex {

/// Admissible open interval for the aggregate-tracking gain kappa.
///
/// `raw_lower`/`raw_upper` are (sqrt(max mu) - gamma, sqrt(min mu) + gamma).
/// The effective bounds additionally require kappa > 0 and, per agent,
/// kappa in ((sqrt(mu_n) - gamma)^2, (sqrt(mu_n) + gamma)^2), which is
/// exactly the condition for R_n + R_n^T to be positive definite.
struct KappaInterval {
  double raw_lower = 0.0;
  double raw_upper = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  bool contains(double kappa) const { return kappa > lower && kappa < upper; }
  double midpoint() const { return 0.5 * (lower + upper); }
};

struct CocoercivityReport {
  Eigen::VectorXd mu;
  Eigen::VectorXd ell;
  double gamma = 0.0;
  KappaInterval kappa_interval;
  double kappa = 0.0;
  Eigen::VectorXd eps_bar;    ///< lambda_min(R_n + R_n^T)
  Eigen::VectorXd eps_under;  ///< 2 lambda_max(R_n^T R_n)
  double eps_tilde = 0.0;
  double eps = 0.0;  ///< min(eps_tilde, 1 / lambda_max(L))
  double lambda_max_laplacian = 0.0;
  bool uniformity_ok = false;
};

struct AgentGains {
  double tau = 0.0;
  double upsilon = 0.0;
  double rho = 0.0;
  double delta = 0.0;
  double eta = 0.0;
};

struct GainSet {
  double kappa = 0.0;
  Eigen::VectorXd tau;
  Eigen::VectorXd upsilon;
  Eigen::VectorXd rho;
  Eigen::VectorXd delta;
  Eigen::VectorXd eta;
  double eps = 0.0;
  double xi = 0.0;     ///< eps / lambda_max(Phi^-1)
  double theta = 0.0;  ///< averagedness constant 1 / (2 - 1/(2 xi))

  int size() const { return static_cast<int>(tau.size()); }
  AgentGains agent(int n) const { return {tau(n), upsilon(n), rho(n), delta(n), eta(n)}; }
};

struct PreconditionerView {
  Eigen::MatrixXd phi;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  /// 1 / lambda_min when Phi is positive definite, +inf otherwise.
  double lambda_max_phi_inv = 0.0;
  bool positive_definite = false;
};

/// Smallest eigenvalues of the three blocks whose positivity is equivalent to
/// Phi - I/(2 eps) > 0.
struct SchurReport {
  double diagonal_margin = 0.0;  ///< min over tau^-1, upsilon^-1, delta^-1 of (x - 1/(2 eps))
  double consensus_block = 0.0;  ///< (rho^-1 - c) - L (upsilon^-1 - c)^-1 L
  double multiplier_block = 0.0; ///< (eta^-1 - c) - Abar (tau^-1 - c)^-1 Abar^T - L_lambda (delta^-1 - c)^-1 L_lambda
  double shifted_phi_min = 0.0;  ///< lambda_min(Phi - I/(2 eps))

  bool holds() const { return diagonal_margin > 0.0 && consensus_block > 0.0 && multiplier_block > 0.0; }
};

Eigen::VectorXd cocoercivity_mu(const MarketInstance& inst);
Eigen::VectorXd cocoercivity_ell(const MarketInstance& inst);
double cocoercivity_gamma(const MarketInstance& inst);

/// Throws TuningError when the cost curvatures are not uniform enough or the
/// resulting interval is empty.
KappaInterval kappa_interval(const MarketInstance& inst);

/// Throws TuningError("cocoercivity not guaranteed") for kappa outside the
/// effective interval.
CocoercivityReport cocoercivity_constants(const MarketInstance& inst, const CommGraph& g, double kappa);

/// ||Abar|| for Abar = blkdiag(A~_n): the largest column norm of A~.
double stacked_constraint_norm(const FeasibleSet& fs);

/// tau = upsilon = delta = safety * 2 eps and rho, eta at `safety` times the
/// reciprocal of their lower bounds on the inverses.
GainSet default_gains(const CocoercivityReport& rep, const FeasibleSet& fs, const CommGraph& g,
                      double safety = 0.95);

/// Fills xi and theta of caller-provided gains from the assembled Phi.
GainSet finalize_gains(GainSet gains, const FeasibleSet& fs, const CommGraph& g);

/// Dense preconditioner for the order (beta, psi, sigma, z, lambda); z and
/// lambda are stacked agent-major in blocks of M. Throws TuningError when Phi is singular.
PreconditionerView assemble_phi(const GainSet& gains, const FeasibleSet& fs, const CommGraph& g);

SchurReport schur_conditions(const GainSet& gains, const FeasibleSet& fs, const CommGraph& g);

/// True when Phi - I/(2 eps) is positive definite for these gains.
bool gains_are_admissible(const GainSet& gains, const FeasibleSet& fs, const CommGraph& g);

}  // namespace gneflex
