#include "gneflex/central_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "gneflex/error.hpp"
#include "gneflex/nnls.hpp"

namespace gneflex {

namespace {

double bound_tol(double bound) { return 1e-8 * (1.0 + std::abs(bound)); }

bool at_lower(const FeasibleSet& fs, double b) { return b - fs.beta_min <= bound_tol(fs.beta_min); }
bool at_upper(const FeasibleSet& fs, double b) { return fs.beta_max - b <= bound_tol(fs.beta_max); }

Eigen::VectorXd project(const FeasibleSet& fs, const Eigen::VectorXd& v, const ProjectionOptions& opts) {
  return project_onto_feasible_set(fs, v, opts).point;
}

}  // namespace

double KktBreakdown::value() const { return std::max({stationarity, primal, complementarity, dual}); }

KktBreakdown kkt_breakdown(const GameModel& gm, const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma2) {
  const FeasibleSet& fs = gm.fs;
  if (beta.size() != fs.num_agents()) throw DimensionError("kkt: beta must have N entries");
  if (gamma2.size() != fs.rows()) throw DimensionError("kkt: gamma2 must have M entries");

  KktBreakdown out;
  const Eigen::VectorXd g = -(pseudo_gradient(gm, beta) + fs.a_tilde.transpose() * gamma2);
  for (Eigen::Index i = 0; i < beta.size(); ++i) {
    const bool lo = at_lower(fs, beta(i));
    const bool hi = at_upper(fs, beta(i));
    double dist = std::abs(g(i));
    if (lo && hi) {
      dist = 0.0;
    } else if (lo) {
      dist = std::max(g(i), 0.0);
    } else if (hi) {
      dist = std::max(-g(i), 0.0);
    }
    out.stationarity = std::max(out.stationarity, dist);
    out.primal = std::max({out.primal, fs.beta_min - beta(i), beta(i) - fs.beta_max});
  }
  if (fs.rows() > 0) {
    const Eigen::VectorXd slack = fs.d - fs.a_tilde * beta;
    out.primal = std::max(out.primal, (-slack).maxCoeff());
    out.complementarity = (gamma2.array() * slack.array().abs()).sum();
    out.dual = std::max(0.0, (-gamma2).maxCoeff());
  }
  return out;
}

double kkt_residual(const GameModel& gm, const Eigen::VectorXd& beta, const Eigen::VectorXd& gamma2) {
  return kkt_breakdown(gm, beta, gamma2).value();
}

Eigen::VectorXd recover_multiplier(const GameModel& gm, const Eigen::VectorXd& beta, double active_tol) {
  const FeasibleSet& fs = gm.fs;
  const int n = fs.num_agents();
  const int m = fs.rows();
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(m);
  if (m == 0) return gamma;

  const Eigen::VectorXd slack = fs.d - fs.a_tilde * beta;
  std::vector<int> active_rows;
  for (int i = 0; i < m; ++i) {
    if (std::abs(slack(i)) <= active_tol) active_rows.push_back(i);
  }
  if (active_rows.empty()) return gamma;

  std::vector<std::pair<int, double>> box_cols;
  for (int i = 0; i < n; ++i) {
    if (at_lower(fs, beta(i))) box_cols.emplace_back(i, -1.0);
    if (at_upper(fs, beta(i))) box_cols.emplace_back(i, 1.0);
  }

  const auto cols = static_cast<Eigen::Index>(active_rows.size() + box_cols.size());
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, cols);
  Eigen::Index c = 0;
  for (int row : active_rows) design.col(c++) = fs.a_tilde.row(row).transpose();
  for (const auto& [idx, sign] : box_cols) design(idx, c++) = sign;

  const NnlsResult sol = solve_nnls(design, -pseudo_gradient(gm, beta));
  for (size_t k = 0; k < active_rows.size(); ++k) gamma(active_rows[k]) = sol.x(static_cast<Eigen::Index>(k));
  return gamma;
}

std::pair<double, double> feasible_interval(const GameModel& gm, int n, const Eigen::VectorXd& beta) {
  const FeasibleSet& fs = gm.fs;
  if (n < 0 || n >= fs.num_agents()) throw DimensionError("agent index out of range");
  double lo = fs.beta_min;
  double hi = fs.beta_max;
  for (int i = 0; i < fs.rows(); ++i) {
    const double coef = fs.a_tilde(i, n);
    const double rhs = fs.d(i) - (fs.a_tilde.row(i).dot(beta) - coef * beta(n));
    const double scale = 1e-9 * (1.0 + std::abs(fs.d(i)));
    if (std::abs(coef) < 1e-14) {
      if (rhs < -scale) {
        std::ostringstream os;
        os << "feasible interval of aggregator " << n + 1 << " is empty (" << fs.describe_row(i) << ")";
        throw InfeasibleSetError(os.str());
      }
      continue;
    }
    if (coef > 0.0) {
      hi = std::min(hi, rhs / coef);
    } else {
      lo = std::max(lo, rhs / coef);
    }
  }
  if (lo > hi) {
    if (lo - hi > 1e-9 * (1.0 + std::max(std::abs(lo), std::abs(hi)))) {
      std::ostringstream os;
      os << "feasible interval of aggregator " << n + 1 << " is empty";
      throw InfeasibleSetError(os.str());
    }
    lo = hi = 0.5 * (lo + hi);
  }
  return {lo, hi};
}

double best_response(const GameModel& gm, int n, const Eigen::VectorXd& beta) {
  const auto [lo, hi] = feasible_interval(gm, n, beta);
  Eigen::VectorXd probe = beta;
  probe(n) = 0.0;
  const double slope = pseudo_gradient(gm, probe)(n);
  const double unconstrained = -slope / own_curvature(gm.inst, n);
  return std::clamp(unconstrained, lo, hi);
}

bool grid_certify(const GameModel& gm, const Eigen::VectorXd& beta_star, double grid_step, double tol_grid) {
  const int n_agents = gm.num_agents();
  if (n_agents > 3) throw DimensionError("grid certification is limited to N <= 3");
  if (!(grid_step > 0.0)) throw InvalidModelError("grid step must be positive");
  for (int n = 0; n < n_agents; ++n) {
    const auto [lo, hi] = feasible_interval(gm, n, beta_star);
    const double slack = 1e-9 * (1.0 + std::abs(beta_star(n)));
    if (beta_star(n) < lo - slack || beta_star(n) > hi + slack) return false;
    const double j_star = objective(gm, n, beta_star);
    Eigen::VectorXd trial = beta_star;
    const auto steps = static_cast<long>(std::floor((hi - lo) / grid_step));
    for (long k = 0; k <= steps + 1; ++k) {
      trial(n) = std::min(lo + static_cast<double>(k) * grid_step, hi);
      if (j_star > objective(gm, n, trial) + tol_grid) return false;
    }
  }
  return true;
}

double natural_residual(const GameModel& gm, const Eigen::VectorXd& beta, const ProjectionOptions& opts) {
  const Eigen::VectorXd p = project(gm.fs, beta - pseudo_gradient(gm, beta), opts);
  return (beta - p).lpNorm<Eigen::Infinity>();
}

VgneCertificate solve_vgne(const GameModel& gm, const OracleOptions& opts) {
  const FeasibleSet& fs = gm.fs;
  Eigen::VectorXd beta = find_slater_point(fs);

  const AffineForm af = affine_form(gm);
  const double lip = af.matrix.jacobiSvd().singularValues()(0);
  const double step = opts.step_safety / lip;

  VgneCertificate cert;
  double res = natural_residual(gm, beta, opts.projection);
  long k = 0;
  while (res > opts.tol) {
    if (k >= opts.max_iter) {
      std::ostringstream os;
      os << "extragradient did not converge in " << opts.max_iter << " iterations (natural residual " << res << ")";
      throw ConvergenceError(os.str());
    }
    const Eigen::VectorXd half = project(fs, beta - step * af.apply(beta), opts.projection);
    beta = project(fs, beta - step * af.apply(half), opts.projection);
    ++k;
    res = natural_residual(gm, beta, opts.projection);
  }

  cert.beta_star = beta;
  cert.iterations = k;
  cert.natural_residual = res;
  cert.gamma2 = recover_multiplier(gm, beta, opts.active_tol);
  cert.kkt_residual = kkt_residual(gm, beta, cert.gamma2);
  cert.best_response_gap.resize(gm.num_agents());
  for (int n = 0; n < gm.num_agents(); ++n) {
    cert.best_response_gap(n) = std::abs(beta(n) - best_response(gm, n, beta));
  }
  return cert;
}

}  // namespace gneflex
