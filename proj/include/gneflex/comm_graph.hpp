#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

namespace gneflex {

/// Undirected weighted link between nodes `u` and `v` (0-based).
struct Edge {
  int u = 0;
  int v = 0;
  double weight = 1.0;

  bool operator==(const Edge&) const = default;
};

struct Neighbor {
  int id = 0;
  double weight = 0.0;
};

/// Connected, undirected, weighted communication graph. Immutable once built.
class CommGraph {
 public:
  /// Builds L = D - W and checks connectivity through the second-smallest
  /// Laplacian eigenvalue. Throws DisconnectedGraphError, InvalidModelError.
  static CommGraph build(int num_nodes, std::span<const Edge> edges);

  int size() const { return num_nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::span<const Neighbor> neighbors(int node) const { return adjacency_[static_cast<size_t>(node)]; }
  bool adjacent(int a, int b) const;

  const Eigen::MatrixXd& laplacian() const { return laplacian_; }
  double lambda_max() const { return lambda_max_; }
  double algebraic_connectivity() const { return lambda_2_; }

 private:
  int num_nodes_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
  Eigen::MatrixXd laplacian_;
  double lambda_max_ = 0.0;
  double lambda_2_ = 0.0;
};

/// Applies (L kron I_M) to per-node vectors stored as the columns of `values`
/// (M x N). Node n receives sum_m w_nm (v_n - v_m).
Eigen::MatrixXd neighbor_mix(const CommGraph& g, const Eigen::MatrixXd& values);

/// Scalar-per-node version of neighbor_mix.
Eigen::VectorXd neighbor_mix(const CommGraph& g, const Eigen::VectorXd& values);

}  // namespace gneflex
