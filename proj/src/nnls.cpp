#include "gneflex/nnls.hpp"

#include <algorithm>
#include <limits>
#include <vector>

#include "gneflex/error.hpp"

namespace gneflex {

namespace {

Eigen::VectorXd solve_passive(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const std::vector<bool>& passive) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    if (passive[static_cast<size_t>(j)]) idx.push_back(j);
  }
  Eigen::VectorXd z = Eigen::VectorXd::Zero(a.cols());
  if (idx.empty()) return z;
  Eigen::MatrixXd sub(a.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t c = 0; c < idx.size(); ++c) sub.col(static_cast<Eigen::Index>(c)) = a.col(idx[c]);
  const Eigen::VectorXd zs = sub.completeOrthogonalDecomposition().solve(b);
  for (size_t c = 0; c < idx.size(); ++c) z(idx[c]) = zs(static_cast<Eigen::Index>(c));
  return z;
}

}  // namespace

NnlsResult solve_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, int max_iter, double tol) {
  if (a.rows() != b.size()) throw DimensionError("nnls: row count of A must equal length of b");
  const Eigen::Index n = a.cols();
  if (max_iter <= 0) max_iter = 3 * static_cast<int>(std::max<Eigen::Index>(n, 1)) + 30;

  NnlsResult res;
  res.x = Eigen::VectorXd::Zero(n);
  std::vector<bool> passive(static_cast<size_t>(n), false);
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff() * std::max(1.0, b.cwiseAbs().maxCoeff()));

  for (int outer = 0; outer < max_iter; ++outer) {
    res.iterations = outer + 1;
    const Eigen::VectorXd w = a.transpose() * (b - a * res.x);
    Eigen::Index best = -1;
    double best_w = tol * scale;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!passive[static_cast<size_t>(j)] && w(j) > best_w) {
        best_w = w(j);
        best = j;
      }
    }
    if (best < 0) {
      res.converged = true;
      break;
    }
    passive[static_cast<size_t>(best)] = true;

    for (int inner = 0; inner < max_iter; ++inner) {
      const Eigen::VectorXd z = solve_passive(a, b, passive);
      bool all_positive = true;
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<size_t>(j)] && z(j) <= 0.0) all_positive = false;
      }
      if (all_positive) {
        res.x = z;
        break;
      }
      double step = std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<size_t>(j)] && z(j) <= 0.0) step = std::min(step, res.x(j) / (res.x(j) - z(j)));
      }
      res.x += step * (z - res.x);
      for (Eigen::Index j = 0; j < n; ++j) {
        if (passive[static_cast<size_t>(j)] && res.x(j) <= tol * scale) {
          passive[static_cast<size_t>(j)] = false;
          res.x(j) = 0.0;
        }
      }
    }
  }
  res.x = res.x.cwiseMax(0.0);
  res.residual_norm = (a * res.x - b).norm();
  return res;
}

}  // namespace gneflex
