#include "gneflex/game_core.hpp"

#include <utility>

#include "gneflex/error.hpp"

namespace gneflex {

namespace {

void require_agent(const GameModel& gm, int n) {
  if (n < 0 || n >= gm.num_agents()) throw DimensionError("agent index out of range");
}

void require_length(const GameModel& gm, const Eigen::VectorXd& v) {
  if (v.size() != gm.num_agents()) throw DimensionError("vector length does not match the number of aggregators");
}

}  // namespace

GameModel GameModel::from_instance(MarketInstance inst) {
  GameModel gm;
  gm.fs = build_feasible_set(inst);
  gm.inst = std::move(inst);
  return gm;
}

double cost(const AggregatorParams& p, double x) { return (p.a * x + p.b) * x; }

double marginal_cost(const AggregatorParams& p, double x) { return 2.0 * p.a * x + p.b; }

double objective(const GameModel& gm, int n, const Eigen::VectorXd& beta) {
  require_agent(gm, n);
  require_length(gm, beta);
  const auto& inst = gm.inst;
  const double nn = inst.num_agents();
  const double gap = inst.r - beta.sum();
  const double x_n = gap / nn + beta(n);
  return cost(inst.agents[static_cast<size_t>(n)], x_n) - (gap + nn * beta(n)) * gap / (inst.alpha * nn * nn);
}

double local_gradient(const PublicMarketData& pub, const AggregatorParams& own, double beta_n, double sigma_n) {
  const double nn = pub.num_agents;
  const double x_est = (pub.r - nn * sigma_n) / nn + beta_n;
  return (nn - 1.0) / nn * marginal_cost(own, x_est) +
         ((nn * sigma_n - pub.r) * (nn - 2.0) + nn * beta_n) / (pub.alpha * nn * nn);
}

Eigen::VectorXd pseudo_gradient(const GameModel& gm, const Eigen::VectorXd& beta) {
  require_length(gm, beta);
  const auto& inst = gm.inst;
  const int n = inst.num_agents();
  const double nn = n;
  const double total = beta.sum();
  Eigen::VectorXd f(n);
  for (int i = 0; i < n; ++i) {
    const double x_i = (inst.r - total) / nn + beta(i);
    f(i) = (nn - 1.0) / nn * marginal_cost(inst.agents[static_cast<size_t>(i)], x_i) +
           ((total - inst.r) * (nn - 2.0) + nn * beta(i)) / (inst.alpha * nn * nn);
  }
  return f;
}

Eigen::VectorXd extended_pseudo_gradient(const GameModel& gm, const Eigen::VectorXd& beta,
                                         const Eigen::VectorXd& sigma) {
  require_length(gm, beta);
  require_length(gm, sigma);
  const PublicMarketData pub = gm.inst.public_data();
  Eigen::VectorXd f(gm.num_agents());
  for (int i = 0; i < gm.num_agents(); ++i) {
    f(i) = local_gradient(pub, gm.inst.agents[static_cast<size_t>(i)], beta(i), sigma(i));
  }
  return f;
}

AffineForm affine_form(const GameModel& gm) {
  const auto& inst = gm.inst;
  const int n = inst.num_agents();
  const double nn = n;
  const double w = (nn - 1.0) / nn;
  const double price_cross = (nn - 2.0) / (inst.alpha * nn * nn);
  AffineForm af;
  af.matrix.resize(n, n);
  af.offset.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& p = inst.agents[static_cast<size_t>(i)];
    for (int j = 0; j < n; ++j) {
      // x_i depends on beta_j with coefficient (delta_ij - 1/N).
      const double dx = (i == j ? 1.0 : 0.0) - 1.0 / nn;
      af.matrix(i, j) = w * 2.0 * p.a * dx + price_cross + (i == j ? nn / (inst.alpha * nn * nn) : 0.0);
    }
    af.offset(i) = w * (2.0 * p.a * inst.r / nn + p.b) - inst.r * (nn - 2.0) / (inst.alpha * nn * nn);
  }
  return af;
}

double own_curvature(const MarketInstance& inst, int n) {
  const double nn = inst.num_agents();
  const double w = (nn - 1.0) / nn;
  return 2.0 * inst.agents[static_cast<size_t>(n)].a * w * w + (2.0 * nn - 2.0) / (inst.alpha * nn * nn);
}

}  // namespace gneflex
