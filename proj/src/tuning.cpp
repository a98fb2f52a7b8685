#include "gneflex/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "gneflex/error.hpp"

namespace gneflex {

namespace {

Eigen::MatrixXd kron_identity(const Eigen::MatrixXd& l, int m) {
  const Eigen::Index n = l.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n * m, n * m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (l(i, j) != 0.0) out.block(i * m, j * m, m, m).diagonal().setConstant(l(i, j));
    }
  }
  return out;
}

Eigen::MatrixXd stacked_constraints(const FeasibleSet& fs) {
  const int n = fs.num_agents();
  const int m = fs.rows();
  Eigen::MatrixXd abar = Eigen::MatrixXd::Zero(n * m, n);
  for (int k = 0; k < n; ++k) abar.block(k * m, k, m, 1) = fs.a_tilde.col(k);
  return abar;
}

double min_eigenvalue(const Eigen::MatrixXd& sym) {
  if (sym.rows() == 0) return std::numeric_limits<double>::infinity();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues()(0);
}

void require_gain_sizes(const GainSet& gains, int n) {
  if (gains.tau.size() != n || gains.upsilon.size() != n || gains.rho.size() != n || gains.delta.size() != n ||
      gains.eta.size() != n) {
    throw DimensionError("gain vectors must have one entry per aggregator");
  }
}

}  // namespace

Eigen::VectorXd cocoercivity_mu(const MarketInstance& inst) {
  const double nn = inst.num_agents();
  Eigen::VectorXd mu(inst.num_agents());
  for (int i = 0; i < inst.num_agents(); ++i) {
    mu(i) = 2.0 * inst.agents[static_cast<size_t>(i)].a * (nn - 1.0) / nn + 1.0 / (inst.alpha * nn);
  }
  return mu;
}

Eigen::VectorXd cocoercivity_ell(const MarketInstance& inst) {
  const double nn = inst.num_agents();
  Eigen::VectorXd ell(inst.num_agents());
  for (int i = 0; i < inst.num_agents(); ++i) {
    ell(i) = -2.0 * inst.agents[static_cast<size_t>(i)].a * (nn - 1.0) / nn + (nn - 2.0) / (inst.alpha * nn);
  }
  return ell;
}

double cocoercivity_gamma(const MarketInstance& inst) {
  const double nn = inst.num_agents();
  return std::sqrt((nn - 1.0) / (inst.alpha * nn));
}

KappaInterval kappa_interval(const MarketInstance& inst) {
  const Eigen::VectorXd mu = cocoercivity_mu(inst);
  const double gamma = cocoercivity_gamma(inst);
  const double root_max = std::sqrt(mu.maxCoeff());
  const double root_min = std::sqrt(mu.minCoeff());
  if (root_max - root_min > 2.0 * gamma) {
    std::ostringstream os;
    os << "cost curvatures are not uniform enough: sqrt(max mu) - sqrt(min mu) = " << root_max - root_min
       << " exceeds 2 gamma = " << 2.0 * gamma;
    throw TuningError(os.str());
  }
  KappaInterval iv;
  iv.raw_lower = root_max - gamma;
  iv.raw_upper = root_min + gamma;
  iv.lower = std::max(iv.raw_lower, 0.0);
  iv.upper = iv.raw_upper;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double s = std::sqrt(mu(i));
    iv.lower = std::max(iv.lower, (s - gamma) * (s - gamma));
    iv.upper = std::min(iv.upper, (s + gamma) * (s + gamma));
  }
  if (!(iv.lower < iv.upper)) {
    std::ostringstream os;
    os << "kappa interval is empty: (" << iv.lower << ", " << iv.upper << ")";
    throw TuningError(os.str());
  }
  return iv;
}

CocoercivityReport cocoercivity_constants(const MarketInstance& inst, const CommGraph& g, double kappa) {
  if (g.size() != inst.num_agents()) throw DimensionError("graph size does not match the number of aggregators");
  CocoercivityReport rep;
  rep.mu = cocoercivity_mu(inst);
  rep.ell = cocoercivity_ell(inst);
  rep.gamma = cocoercivity_gamma(inst);
  rep.uniformity_ok = std::sqrt(rep.mu.maxCoeff()) - std::sqrt(rep.mu.minCoeff()) <= 2.0 * rep.gamma;
  rep.kappa_interval = kappa_interval(inst);
  if (!rep.kappa_interval.contains(kappa)) {
    std::ostringstream os;
    os << "cocoercivity not guaranteed: kappa = " << kappa << " outside (" << rep.kappa_interval.lower << ", "
       << rep.kappa_interval.upper << ")";
    throw TuningError(os.str());
  }
  rep.kappa = kappa;
  const int n = inst.num_agents();
  rep.eps_bar.resize(n);
  rep.eps_under.resize(n);
  for (int i = 0; i < n; ++i) {
    const double mu = rep.mu(i);
    const double ell = rep.ell(i);
    rep.eps_bar(i) = kappa + mu - std::hypot(mu - kappa, ell - kappa);
    const double cross = kappa * kappa - mu * ell;
    rep.eps_under(i) = mu * mu + ell * ell + 2.0 * kappa * kappa +
                       std::sqrt((mu + ell) * (mu + ell) * (mu - ell) * (mu - ell) + 4.0 * cross * cross);
  }
  if (!(rep.eps_bar.minCoeff() > 0.0)) throw TuningError("cocoercivity not guaranteed: R_n + R_n^T is not positive definite");
  rep.eps_tilde = rep.eps_bar.minCoeff() / rep.eps_under.maxCoeff();
  rep.lambda_max_laplacian = g.lambda_max();
  rep.eps = std::min(rep.eps_tilde, 1.0 / g.lambda_max());
  return rep;
}

double stacked_constraint_norm(const FeasibleSet& fs) {
  double best = 0.0;
  for (int k = 0; k < fs.num_agents(); ++k) best = std::max(best, fs.a_tilde.col(k).norm());
  return best;
}

GainSet default_gains(const CocoercivityReport& rep, const FeasibleSet& fs, const CommGraph& g, double safety) {
  if (!(safety > 0.0 && safety < 1.0)) throw TuningError("safety factor must lie in (0, 1)");
  if (!(rep.eps > 0.0)) throw TuningError("cocoercivity constant must be positive");
  const int n = fs.num_agents();
  const double eps = rep.eps;
  const double c = 1.0 / (2.0 * eps);
  const double base = safety * 2.0 * eps;
  const double lmax = g.lambda_max();
  const double abar = stacked_constraint_norm(fs);

  GainSet gains;
  gains.kappa = rep.kappa;
  gains.eps = eps;
  gains.tau = Eigen::VectorXd::Constant(n, base);
  gains.upsilon = Eigen::VectorXd::Constant(n, base);
  gains.delta = Eigen::VectorXd::Constant(n, base);

  const double tau_gap = 1.0 / gains.tau.maxCoeff() - c;
  const double ups_gap = 1.0 / gains.upsilon.maxCoeff() - c;
  const double delta_gap = 1.0 / gains.delta.maxCoeff() - c;
  const double rho_inv_bound = lmax * lmax / ups_gap + c;
  const double eta_inv_bound = abar * abar / tau_gap + lmax * lmax / delta_gap + c;
  gains.rho = Eigen::VectorXd::Constant(n, safety / rho_inv_bound);
  gains.eta = Eigen::VectorXd::Constant(n, safety / eta_inv_bound);
  return finalize_gains(std::move(gains), fs, g);
}

GainSet finalize_gains(GainSet gains, const FeasibleSet& fs, const CommGraph& g) {
  const PreconditionerView view = assemble_phi(gains, fs, g);
  if (view.positive_definite) {
    gains.xi = gains.eps / view.lambda_max_phi_inv;
    gains.theta = 1.0 / (2.0 - 1.0 / (2.0 * gains.xi));
  } else {
    gains.xi = 0.0;
    gains.theta = std::numeric_limits<double>::quiet_NaN();
  }
  return gains;
}

PreconditionerView assemble_phi(const GainSet& gains, const FeasibleSet& fs, const CommGraph& g) {
  const int n = fs.num_agents();
  const int m = fs.rows();
  require_gain_sizes(gains, n);
  if ((gains.tau.array() <= 0).any() || (gains.upsilon.array() <= 0).any() || (gains.rho.array() <= 0).any() ||
      (gains.delta.array() <= 0).any() || (gains.eta.array() <= 0).any()) {
    throw TuningError("all step sizes must be positive");
  }
  const int dim = 3 * n + 2 * n * m;
  const int o_psi = n, o_sigma = 2 * n, o_z = 3 * n, o_lambda = 3 * n + n * m;
  const Eigen::MatrixXd& l = g.laplacian();
  const Eigen::MatrixXd l_lambda = kron_identity(l, m);
  const Eigen::MatrixXd abar = stacked_constraints(fs);

  PreconditionerView view;
  view.phi = Eigen::MatrixXd::Zero(dim, dim);
  auto& phi = view.phi;
  for (int k = 0; k < n; ++k) {
    phi(k, k) = 1.0 / gains.tau(k);
    phi(o_psi + k, o_psi + k) = 1.0 / gains.upsilon(k);
    phi(o_sigma + k, o_sigma + k) = 1.0 / gains.rho(k);
    for (int i = 0; i < m; ++i) {
      phi(o_z + k * m + i, o_z + k * m + i) = 1.0 / gains.delta(k);
      phi(o_lambda + k * m + i, o_lambda + k * m + i) = 1.0 / gains.eta(k);
    }
  }
  phi.block(0, o_lambda, n, n * m) = -abar.transpose();
  phi.block(o_lambda, 0, n * m, n) = -abar;
  phi.block(o_psi, o_sigma, n, n) = l;
  phi.block(o_sigma, o_psi, n, n) = l;
  phi.block(o_z, o_lambda, n * m, n * m) = l_lambda;
  phi.block(o_lambda, o_z, n * m, n * m) = l_lambda;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(phi, Eigen::EigenvaluesOnly);
  view.lambda_min = eig.eigenvalues()(0);
  view.lambda_max = eig.eigenvalues()(dim - 1);
  const double smallest_abs = eig.eigenvalues().cwiseAbs().minCoeff();
  if (smallest_abs <= 1e-13 * std::max(1.0, std::abs(view.lambda_max))) {
    throw TuningError("preconditioner Phi is singular");
  }
  view.positive_definite = view.lambda_min > 0.0;
  view.lambda_max_phi_inv =
      view.positive_definite ? 1.0 / view.lambda_min : std::numeric_limits<double>::infinity();
  return view;
}

SchurReport schur_conditions(const GainSet& gains, const FeasibleSet& fs, const CommGraph& g) {
  const int n = fs.num_agents();
  const int m = fs.rows();
  require_gain_sizes(gains, n);
  const double c = 1.0 / (2.0 * gains.eps);
  SchurReport rep;

  const Eigen::VectorXd tau_s = gains.tau.cwiseInverse().array() - c;
  const Eigen::VectorXd ups_s = gains.upsilon.cwiseInverse().array() - c;
  const Eigen::VectorXd delta_s = gains.delta.cwiseInverse().array() - c;
  rep.diagonal_margin = std::min({tau_s.minCoeff(), ups_s.minCoeff(), delta_s.minCoeff()});

  const Eigen::MatrixXd& l = g.laplacian();
  if (rep.diagonal_margin > 0.0) {
    const Eigen::MatrixXd rho_s = Eigen::MatrixXd((gains.rho.cwiseInverse().array() - c).matrix().asDiagonal());
    const Eigen::MatrixXd consensus = rho_s - l * ups_s.cwiseInverse().asDiagonal() * l;
    rep.consensus_block = min_eigenvalue(consensus);

    const Eigen::MatrixXd abar = stacked_constraints(fs);
    const Eigen::MatrixXd l_lambda = kron_identity(l, m);
    Eigen::VectorXd eta_s(n * m), delta_block(n * m);
    for (int k = 0; k < n; ++k) {
      eta_s.segment(k * m, m).setConstant(1.0 / gains.eta(k) - c);
      delta_block.segment(k * m, m).setConstant(1.0 / delta_s(k));
    }
    const Eigen::MatrixXd multiplier = Eigen::MatrixXd(eta_s.asDiagonal()) -
                                       abar * tau_s.cwiseInverse().asDiagonal() * abar.transpose() -
                                       l_lambda * delta_block.asDiagonal() * l_lambda;
    rep.multiplier_block = min_eigenvalue(multiplier);
  } else {
    rep.consensus_block = -std::numeric_limits<double>::infinity();
    rep.multiplier_block = -std::numeric_limits<double>::infinity();
  }

  const PreconditionerView view = assemble_phi(gains, fs, g);
  rep.shifted_phi_min = view.lambda_min - c;
  return rep;
}

bool gains_are_admissible(const GainSet& gains, const FeasibleSet& fs, const CommGraph& g) {
  if (!(gains.eps > 0.0)) return false;
  const PreconditionerView view = assemble_phi(gains, fs, g);
  return view.lambda_min > 1.0 / (2.0 * gains.eps);
}

}  // namespace gneflex
