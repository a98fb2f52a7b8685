#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "gneflex/comm_graph.hpp"
#include "gneflex/distributed_solver.hpp"
#include "gneflex/game_core.hpp"
#include "gneflex/market_model.hpp"
#include "gneflex/tuning.hpp"

namespace testing {

struct Case {
  gneflex::MarketInstance inst;
  std::vector<gneflex::Edge> edges;
};

double uniform(std::mt19937_64& rng, double lo, double hi);

/// Random market with N aggregators and H lines whose box midpoint is
/// strictly feasible, on a random connected graph. Instances that fail the
/// cocoercivity uniformity condition are redrawn.
Case random_case(std::mt19937_64& rng, int n, int h);

/// Fixture cases: t2, t2i, cs5 with their graphs.
Case t2_case();
Case t2i_case();
Case cs5_case();

/// Solver with default gains at the midpoint kappa.
gneflex::DistributedSolver make_solver(const Case& c);

/// Kron(m, I_k).
Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& m, int k);

/// One round of the compact iteration evaluated with dense global matrices:
/// Laplacian Kronecker products, the block-diagonal stacked constraint matrix
/// and elementwise step-size vectors.
Eigen::VectorXd dense_round(const gneflex::GameModel& gm, const gneflex::CommGraph& g, const gneflex::GainSet& gains,
                            const Eigen::VectorXd& omega);

/// Random state with beta in the box and lambda >= 0.
gneflex::SolverState random_state(std::mt19937_64& rng, const gneflex::GameModel& gm, double spread);

/// Central difference of f at x along coordinate i.
template <typename F>
double central_difference(F&& f, Eigen::VectorXd x, int i, double h) {
  x(i) += h;
  const double up = f(x);
  x(i) -= 2.0 * h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

}  // namespace testing
