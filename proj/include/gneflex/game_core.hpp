#pragma once

#include <Eigen/Dense>

#include "gneflex/market_model.hpp"

namespace gneflex {

/// The aggregative game: market data plus its coupling constraints.
struct GameModel {
  MarketInstance inst;
  FeasibleSet fs;

  static GameModel from_instance(MarketInstance inst);
  int num_agents() const { return inst.num_agents(); }
};

/// F(beta) = matrix * beta + offset.
struct AffineForm {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd offset;

  Eigen::VectorXd apply(const Eigen::VectorXd& beta) const { return matrix * beta + offset; }
};

/// C_n(x) = (a x + b) x.
double cost(const AggregatorParams& p, double x);
/// C'_n(x) = 2 a x + b.
double marginal_cost(const AggregatorParams& p, double x);

/// Aggregator n's objective with price and allocation substituted:
/// C_n(x_n(beta)) - (r - 1^T beta + N beta_n)(r - 1^T beta) / (alpha N^2).
double objective(const GameModel& gm, int n, const Eigen::VectorXd& beta);

/// Pseudo-gradient F(beta) = col(dJ_n / dbeta_n).
Eigen::VectorXd pseudo_gradient(const GameModel& gm, const Eigen::VectorXd& beta);

/// f^_n(beta_n, sigma_n): f_n with the aggregate 1^T beta replaced by
/// N sigma_n. Needs only public data and agent n's own parameters.
double local_gradient(const PublicMarketData& pub, const AggregatorParams& own, double beta_n, double sigma_n);

Eigen::VectorXd extended_pseudo_gradient(const GameModel& gm, const Eigen::VectorXd& beta,
                                         const Eigen::VectorXd& sigma);

/// Closed form of the affine pseudo-gradient for quadratic costs.
AffineForm affine_form(const GameModel& gm);

/// d^2 J_n / d beta_n^2 = 2 a_n ((N-1)/N)^2 + (2N-2)/(alpha N^2).
double own_curvature(const MarketInstance& inst, int n);

}  // namespace gneflex
