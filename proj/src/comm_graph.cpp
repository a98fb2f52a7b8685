#include "gneflex/comm_graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "gneflex/error.hpp"

namespace gneflex {

CommGraph CommGraph::build(int num_nodes, std::span<const Edge> edges) {
  if (num_nodes < 1) throw InvalidModelError("communication graph needs at least one node");
  CommGraph g;
  g.num_nodes_ = num_nodes;
  g.adjacency_.resize(static_cast<size_t>(num_nodes));
  g.laplacian_ = Eigen::MatrixXd::Zero(num_nodes, num_nodes);

  std::set<std::pair<int, int>> seen;
  for (const Edge& e : edges) {
    std::ostringstream where;
    where << "edge {" << e.u + 1 << "," << e.v + 1 << "}: ";
    if (e.u < 0 || e.u >= num_nodes || e.v < 0 || e.v >= num_nodes) {
      throw InvalidModelError(where.str() + "node index out of range");
    }
    if (e.u == e.v) throw InvalidModelError(where.str() + "self loops are not allowed");
    if (!(e.weight > 0.0) || !std::isfinite(e.weight)) throw InvalidModelError(where.str() + "weight must be > 0");
    if (!seen.emplace(std::min(e.u, e.v), std::max(e.u, e.v)).second) {
      throw InvalidModelError(where.str() + "duplicate edge");
    }
    g.edges_.push_back(e);
    g.adjacency_[static_cast<size_t>(e.u)].push_back({e.v, e.weight});
    g.adjacency_[static_cast<size_t>(e.v)].push_back({e.u, e.weight});
    g.laplacian_(e.u, e.v) -= e.weight;
    g.laplacian_(e.v, e.u) -= e.weight;
    g.laplacian_(e.u, e.u) += e.weight;
    g.laplacian_(e.v, e.v) += e.weight;
  }
  for (auto& nbrs : g.adjacency_) {
    std::sort(nbrs.begin(), nbrs.end(), [](const Neighbor& a, const Neighbor& b) { return a.id < b.id; });
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.laplacian_, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd& ev = eig.eigenvalues();
  g.lambda_max_ = ev(num_nodes - 1);
  g.lambda_2_ = num_nodes > 1 ? ev(1) : 0.0;
  if (num_nodes > 1 && !(g.lambda_2_ > 1e-10)) {
    std::ostringstream os;
    os << "communication graph is disconnected (second-smallest Laplacian eigenvalue " << g.lambda_2_ << ")";
    throw DisconnectedGraphError(os.str());
  }
  return g;
}

bool CommGraph::adjacent(int a, int b) const {
  for (const Neighbor& nb : neighbors(a)) {
    if (nb.id == b) return true;
  }
  return false;
}

Eigen::MatrixXd neighbor_mix(const CommGraph& g, const Eigen::MatrixXd& values) {
  if (values.cols() != g.size()) throw DimensionError("neighbor_mix expects one column per node");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(values.rows(), values.cols());
  for (int n = 0; n < g.size(); ++n) {
    for (const Neighbor& nb : g.neighbors(n)) {
      out.col(n) += nb.weight * (values.col(n) - values.col(nb.id));
    }
  }
  return out;
}

Eigen::VectorXd neighbor_mix(const CommGraph& g, const Eigen::VectorXd& values) {
  if (values.size() != g.size()) throw DimensionError("neighbor_mix expects one value per node");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(values.size());
  for (int n = 0; n < g.size(); ++n) {
    for (const Neighbor& nb : g.neighbors(n)) out(n) += nb.weight * (values(n) - values(nb.id));
  }
  return out;
}

}  // namespace gneflex
