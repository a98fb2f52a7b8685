#include "gneflex/polyhedral_projection.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include "gneflex/error.hpp"

namespace gneflex {

namespace {

constexpr double kZeroRow = 1e-14;

double problem_scale(const FeasibleSet& fs, const Eigen::VectorXd& v) {
  double s = 1.0;
  if (v.size() > 0) s = std::max(s, v.lpNorm<Eigen::Infinity>());
  s = std::max({s, std::abs(fs.beta_min), std::abs(fs.beta_max)});
  return s;
}

double violation(const FeasibleSet& fs, const Eigen::VectorXd& x, const Eigen::VectorXd& rhs) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    worst = std::max({worst, fs.beta_min - x(i), x(i) - fs.beta_max});
  }
  if (fs.rows() > 0) worst = std::max(worst, (fs.a_tilde * x - rhs).maxCoeff());
  return worst;
}

struct DykstraOutcome {
  Eigen::VectorXd x;
  Eigen::VectorXd box_increment;
  Eigen::VectorXd row_increment;  // multiple of the row normal
  int cycles = 0;
  bool converged = false;
};

DykstraOutcome dykstra(const FeasibleSet& fs, const Eigen::VectorXd& v, const Eigen::VectorXd& rhs,
                       double tol_abs, int max_cycles) {
  const int n = fs.num_agents();
  const int m = fs.rows();
  std::vector<int> live_rows;
  Eigen::VectorXd row_norm2(m);
  for (int j = 0; j < m; ++j) {
    row_norm2(j) = fs.a_tilde.row(j).squaredNorm();
    if (row_norm2(j) > kZeroRow) {
      live_rows.push_back(j);
    } else if (rhs(j) < -tol_abs) {
      // 0 <= rhs_j can never hold.
      std::ostringstream os;
      os << "empty feasible set: " << fs.describe_row(j) << " cannot be satisfied by any bid";
      throw InfeasibleSetError(os.str());
    }
  }

  DykstraOutcome out;
  out.x = v;
  out.box_increment = Eigen::VectorXd::Zero(n);
  out.row_increment = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd prev(n), prev_box(n), prev_row(m);
  for (int cycle = 1; cycle <= max_cycles; ++cycle) {
    prev = out.x;
    prev_box = out.box_increment;
    prev_row = out.row_increment;
    {
      const Eigen::VectorXd y = out.x + out.box_increment;
      out.x = y.cwiseMax(fs.beta_min).cwiseMin(fs.beta_max);
      out.box_increment = y - out.x;
    }
    for (int j : live_rows) {
      const auto a = fs.a_tilde.row(j).transpose();
      const Eigen::VectorXd y = out.x + out.row_increment(j) * a;
      const double excess = a.dot(y) - rhs(j);
      const double coeff = excess > 0.0 ? excess / row_norm2(j) : 0.0;
      out.x = y - coeff * a;
      out.row_increment(j) = coeff;
    }
    out.cycles = cycle;
    // x can stall for a cycle while the increments are still moving.
    const double moved = std::max({(out.x - prev).lpNorm<Eigen::Infinity>(),
                                   (out.box_increment - prev_box).lpNorm<Eigen::Infinity>(),
                                   m > 0 ? (out.row_increment - prev_row).cwiseProduct(row_norm2.cwiseSqrt())
                                               .lpNorm<Eigen::Infinity>()
                                         : 0.0});
    if (moved <= tol_abs && violation(fs, out.x, rhs) <= tol_abs) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// Solves the projection exactly with Dykstra's active set held as equalities
// and accepts the answer only if it satisfies every KKT condition.
bool polish(const FeasibleSet& fs, const Eigen::VectorXd& v, const Eigen::VectorXd& rhs,
            const DykstraOutcome& dk, double tol_abs, Eigen::VectorXd& result) {
  const int n = fs.num_agents();
  std::vector<int> fixed_lower, fixed_upper, free_vars, active_rows;
  for (int i = 0; i < n; ++i) {
    if (fs.beta_min == fs.beta_max || dk.box_increment(i) < 0.0) {
      fixed_lower.push_back(i);
    } else if (dk.box_increment(i) > 0.0) {
      fixed_upper.push_back(i);
    } else {
      free_vars.push_back(i);
    }
  }
  for (int j = 0; j < fs.rows(); ++j) {
    if (dk.row_increment(j) > 0.0) active_rows.push_back(j);
  }

  Eigen::VectorXd x = v;
  for (int i : fixed_lower) x(i) = fs.beta_min;
  for (int i : fixed_upper) x(i) = fs.beta_max;

  const int nf = static_cast<int>(free_vars.size());
  const int na = static_cast<int>(active_rows.size());
  Eigen::VectorXd mult = Eigen::VectorXd::Zero(fs.rows());
  if (na > 0) {
    Eigen::MatrixXd af(na, nf);
    Eigen::VectorXd target(na);
    for (int r = 0; r < na; ++r) {
      const int j = active_rows[static_cast<size_t>(r)];
      double fixed_part = 0.0;
      for (int i : fixed_lower) fixed_part += fs.a_tilde(j, i) * x(i);
      for (int i : fixed_upper) fixed_part += fs.a_tilde(j, i) * x(i);
      for (int c = 0; c < nf; ++c) af(r, c) = fs.a_tilde(j, free_vars[static_cast<size_t>(c)]);
      target(r) = rhs(j) - fixed_part;
    }
    Eigen::VectorXd vf(nf);
    for (int c = 0; c < nf; ++c) vf(c) = v(free_vars[static_cast<size_t>(c)]);
    // x_F = v_F - A_F^T mu with A_F x_F = target.
    const Eigen::MatrixXd gram = af * af.transpose();
    const Eigen::VectorXd mu = gram.completeOrthogonalDecomposition().solve(af * vf - target);
    const Eigen::VectorXd xf = vf - af.transpose() * mu;
    for (int c = 0; c < nf; ++c) x(free_vars[static_cast<size_t>(c)]) = xf(c);
    for (int r = 0; r < na; ++r) mult(active_rows[static_cast<size_t>(r)]) = mu(r);
  }

  const double sign_tol = 1e-12 * std::max(1.0, v.lpNorm<Eigen::Infinity>());
  if ((mult.array() < -sign_tol).any()) return false;
  if (violation(fs, x, rhs) > 1e-12 * std::max(1.0, rhs.size() ? rhs.lpNorm<Eigen::Infinity>() : 1.0)) return false;
  // Box multipliers: g = v - x - A~^T mult must point outward at fixed bounds.
  const Eigen::VectorXd g = v - x - fs.a_tilde.transpose() * mult;
  if (fs.beta_min != fs.beta_max) {
    for (int i : fixed_lower) {
      if (g(i) > sign_tol) return false;
    }
    for (int i : fixed_upper) {
      if (g(i) < -sign_tol) return false;
    }
  }
  if ((x - dk.x).lpNorm<Eigen::Infinity>() > std::max(1e-6, 1e3 * tol_abs)) return false;
  result = x;
  return true;
}

ProjectionResult project_with_rhs(const FeasibleSet& fs, const Eigen::VectorXd& v, const Eigen::VectorXd& rhs,
                                  const ProjectionOptions& opts) {
  if (v.size() != fs.num_agents()) throw DimensionError("projection input length does not match the feasible set");
  if (fs.beta_min > fs.beta_max) throw InfeasibleSetError("empty feasible set: bid box is empty");
  const double tol_abs = opts.tol * problem_scale(fs, v);
  DykstraOutcome dk = dykstra(fs, v, rhs, tol_abs, opts.max_cycles);

  ProjectionResult res;
  res.cycles = dk.cycles;
  res.converged = dk.converged;
  res.point = dk.x;
  if (opts.polish) {
    Eigen::VectorXd exact;
    if (polish(fs, v, rhs, dk, tol_abs, exact)) {
      res.point = exact;
      res.polished = true;
      res.converged = true;
    }
  }
  res.max_violation = std::max(0.0, violation(fs, res.point, rhs));
  return res;
}

}  // namespace

ProjectionResult project_onto_feasible_set(const FeasibleSet& fs, const Eigen::VectorXd& v,
                                           const ProjectionOptions& opts) {
  return project_with_rhs(fs, v, fs.d, opts);
}

Eigen::VectorXd modify_bids(const FeasibleSet& fs, const Eigen::VectorXd& beta, const ProjectionOptions& opts) {
  const ProjectionResult res = project_onto_feasible_set(fs, beta, opts);
  const double scale = problem_scale(fs, beta);
  if (!res.converged && res.max_violation > 1e3 * opts.tol * scale) {
    std::ostringstream os;
    os << "empty feasible set: projection stalled after " << res.cycles
       << " cycles with constraint violation " << res.max_violation;
    throw InfeasibleSetError(os.str());
  }
  return res.point;
}

Eigen::VectorXd find_slater_point(const FeasibleSet& fs, double margin) {
  const Eigen::VectorXd mid = Eigen::VectorXd::Constant(fs.num_agents(), 0.5 * (fs.beta_min + fs.beta_max));
  const Eigen::VectorXd shrunk = fs.d.array() - 2.0 * margin;
  ProjectionResult res;
  try {
    res = project_with_rhs(fs, mid, shrunk, {});
  } catch (const InfeasibleSetError&) {
    throw InfeasibleSetError("feasible set has no strictly feasible (Slater) point");
  }
  const double min_slack = fs.rows() > 0 ? (fs.d - fs.a_tilde * res.point).minCoeff() : margin;
  if (min_slack < margin) {
    std::ostringstream os;
    os << "feasible set has no strictly feasible (Slater) point; best coupling slack found " << min_slack;
    throw InfeasibleSetError(os.str());
  }
  return res.point;
}

}  // namespace gneflex
