#pragma once

#include <Eigen/Dense>

#include "gneflex/market_model.hpp"

namespace gneflex {

struct ProjectionOptions {
  /// Stopping tolerance, scaled by max(1, |v|_inf, |beta bounds|).
  double tol = 1e-10;
  int max_cycles = 100000;
  /// Re-solve the projection exactly on Dykstra's active set when the result
  /// certifies as optimal.
  bool polish = true;
};

struct ProjectionResult {
  Eigen::VectorXd point;
  int cycles = 0;
  bool converged = false;
  bool polished = false;
  double max_violation = 0.0;
};

/// Euclidean projection onto K = {beta in box : A~ beta <= d} by Dykstra's
/// alternating projections over the box and each half-space row.
/// Does not throw on non-convergence; inspect `converged`.
ProjectionResult project_onto_feasible_set(const FeasibleSet& fs, const Eigen::VectorXd& v,
                                           const ProjectionOptions& opts = {});

/// Closest feasible bids: argmin ||beta' - beta|| over K.
/// Throws InfeasibleSetError("empty feasible set") when K is empty.
Eigen::VectorXd modify_bids(const FeasibleSet& fs, const Eigen::VectorXd& beta,
                            const ProjectionOptions& opts = {});

/// Returns a point of K whose coupling slack is at least `margin` in every row.
/// Throws InfeasibleSetError when no such point exists.
Eigen::VectorXd find_slater_point(const FeasibleSet& fs, double margin = 1e-9);

}  // namespace gneflex
