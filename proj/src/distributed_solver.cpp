#include "gneflex/distributed_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <utility>

#include "gneflex/central_oracle.hpp"
#include "gneflex/error.hpp"

namespace gneflex {

namespace {

template <typename Message>
const Message& find_message(std::span<const Message> inbox, int from) {
  for (const Message& msg : inbox) {
    if (msg.from == from) return msg;
  }
  std::ostringstream os;
  os << "missing message from neighbour " << from + 1;
  throw Error(os.str());
}

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementations.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit_uniform(rng); }

}  // namespace

PartialUpdate agent_phase1(const AgentContext& ctx, const AgentPrivate& own, const AgentLocal& state,
                           std::span<const Phase1Message> inbox) {
  PartialUpdate out;
  const double grad = local_gradient(ctx.market, own.params, state.beta, state.sigma) + own.a_col.dot(state.lambda);
  out.beta = std::clamp(state.beta - own.gains.tau * grad, ctx.market.beta_min, ctx.market.beta_max);

  double sigma_mix = 0.0;
  Eigen::VectorXd lambda_mix = Eigen::VectorXd::Zero(ctx.rows);
  for (const Neighbor& nb : own.neighbors) {
    const Phase1Message& msg = find_message(inbox, nb.id);
    sigma_mix += nb.weight * (state.sigma - msg.sigma);
    lambda_mix += nb.weight * (state.lambda - msg.lambda);
  }
  out.psi = state.psi + own.gains.upsilon * sigma_mix;
  out.z = state.z + own.gains.delta * lambda_mix;
  return out;
}

AgentLocal agent_phase2(const AgentContext& ctx, const AgentPrivate& own, const AgentLocal& state,
                        const PartialUpdate& partial, std::span<const Phase1Message> inbox1,
                        std::span<const Phase2Message> inbox2) {
  double psi_mix = 0.0;
  Eigen::VectorXd lambda_mix = Eigen::VectorXd::Zero(ctx.rows);
  Eigen::VectorXd z_mix = Eigen::VectorXd::Zero(ctx.rows);
  for (const Neighbor& nb : own.neighbors) {
    const Phase1Message& old = find_message(inbox1, nb.id);
    const Phase2Message& fresh = find_message(inbox2, nb.id);
    psi_mix += nb.weight * (2.0 * (partial.psi - fresh.psi) - (state.psi - old.psi));
    lambda_mix += nb.weight * (state.lambda - old.lambda);
    z_mix += nb.weight * (2.0 * (partial.z - fresh.z) - (state.z - old.z));
  }

  AgentLocal next;
  next.id = state.id;
  next.beta = partial.beta;
  next.psi = partial.psi;
  next.z = partial.z;
  next.sigma = state.sigma + own.gains.rho * (ctx.kappa * (state.beta - state.sigma) - psi_mix);
  const Eigen::VectorXd drive =
      lambda_mix + own.d_share + own.a_col * (state.beta - 2.0 * partial.beta) + z_mix;
  next.lambda = (state.lambda - own.gains.eta * drive).cwiseMax(0.0);
  return next;
}

DistributedSolver::DistributedSolver(GameModel gm, CommGraph graph, GainSet gains)
    : gm_(std::move(gm)), graph_(std::move(graph)), gains_(std::move(gains)) {
  const int n = gm_.num_agents();
  if (graph_.size() != n) throw DimensionError("graph size does not match the number of aggregators");
  if (gains_.size() != n) throw DimensionError("gain set size does not match the number of aggregators");
  ctx_.market = gm_.inst.public_data();
  ctx_.kappa = gains_.kappa;
  ctx_.rows = gm_.fs.rows();
  privates_.resize(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    auto& p = privates_[static_cast<size_t>(k)];
    p.params = gm_.inst.agents[static_cast<size_t>(k)];
    p.a_col = gm_.fs.a_tilde.col(k);
    p.d_share = gm_.fs.d_split.col(k);
    p.gains = gains_.agent(k);
    auto nbrs = graph_.neighbors(k);
    p.neighbors.assign(nbrs.begin(), nbrs.end());
  }
}

void DistributedSolver::validate(const SolverState& state) const {
  const int n = num_agents();
  if (static_cast<int>(state.agents.size()) != n) throw DimensionError("state has the wrong number of agents");
  for (int k = 0; k < n; ++k) {
    const AgentLocal& a = state.agents[static_cast<size_t>(k)];
    if (a.id != k) throw DimensionError("agent states must be ordered by id");
    if (a.z.size() != rows() || a.lambda.size() != rows()) throw DimensionError("z and lambda must have M entries");
  }
}

SolverState DistributedSolver::init(const InitSpec& spec) const {
  const int n = num_agents();
  const int m = rows();
  SolverState s;
  switch (spec.kind) {
    case InitKind::Zero: {
      const double b0 = std::clamp(0.0, ctx_.market.beta_min, ctx_.market.beta_max);
      for (int k = 0; k < n; ++k) {
        s.agents.push_back({k, b0, 0.0, 0.0, Eigen::VectorXd::Zero(m), Eigen::VectorXd::Zero(m)});
      }
      break;
    }
    case InitKind::Random: {
      std::mt19937_64 rng(spec.seed);
      const double spread = std::max({1.0, std::abs(ctx_.market.beta_min), std::abs(ctx_.market.beta_max),
                                      ctx_.market.r / ctx_.market.num_agents});
      for (int k = 0; k < n; ++k) {
        AgentLocal a;
        a.id = k;
        a.beta = uniform(rng, ctx_.market.beta_min, ctx_.market.beta_max);
        a.psi = uniform(rng, -spread, spread);
        a.sigma = uniform(rng, -spread, spread);
        a.z.resize(m);
        a.lambda.resize(m);
        for (int i = 0; i < m; ++i) a.z(i) = uniform(rng, -1.0, 1.0);
        for (int i = 0; i < m; ++i) a.lambda(i) = uniform(rng, 0.0, 1.0);
        s.agents.push_back(std::move(a));
      }
      break;
    }
    case InitKind::Explicit: {
      if (!spec.state) throw Error("explicit initialisation requires a state");
      s = *spec.state;
      validate(s);
      for (const AgentLocal& a : s.agents) {
        if (a.beta < ctx_.market.beta_min || a.beta > ctx_.market.beta_max) {
          std::ostringstream os;
          os << "initial bid of aggregator " << a.id + 1 << " lies outside the admissible box";
          throw InvalidModelError(os.str());
        }
        if ((a.lambda.array() < 0.0).any()) throw InvalidModelError("initial multipliers must be nonnegative");
      }
      break;
    }
  }
  return s;
}

std::vector<Phase1Message> DistributedSolver::phase1_inbox(const SolverState& state, int n) const {
  std::vector<Phase1Message> inbox;
  for (const Neighbor& nb : graph_.neighbors(n)) {
    const AgentLocal& src = state.agents[static_cast<size_t>(nb.id)];
    inbox.push_back({nb.id, src.sigma, src.psi, src.z, src.lambda});
  }
  return inbox;
}

SolverState DistributedSolver::step(const SolverState& state) const {
  validate(state);
  const int n = num_agents();

  std::vector<PartialUpdate> partial(static_cast<size_t>(n));
  std::vector<std::vector<Phase1Message>> inbox1(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    inbox1[static_cast<size_t>(k)] = phase1_inbox(state, k);
    partial[static_cast<size_t>(k)] =
        agent_phase1(ctx_, privates_[static_cast<size_t>(k)], state.agents[static_cast<size_t>(k)],
                     inbox1[static_cast<size_t>(k)]);
  }

  SolverState next;
  next.k = state.k + 1;
  next.agents.reserve(static_cast<size_t>(n));
  for (int k = 0; k < n; ++k) {
    std::vector<Phase2Message> inbox2;
    for (const Neighbor& nb : graph_.neighbors(k)) {
      const PartialUpdate& src = partial[static_cast<size_t>(nb.id)];
      inbox2.push_back({nb.id, src.psi, src.z});
    }
    next.agents.push_back(agent_phase2(ctx_, privates_[static_cast<size_t>(k)], state.agents[static_cast<size_t>(k)],
                                       partial[static_cast<size_t>(k)], inbox1[static_cast<size_t>(k)], inbox2));
  }
  return next;
}

Residuals DistributedSolver::state_residuals(const SolverState& state) const {
  const int n = num_agents();
  const int m = rows();
  Eigen::VectorXd beta(n), sigma(n);
  Eigen::MatrixXd lambda(m, n);
  for (int k = 0; k < n; ++k) {
    const AgentLocal& a = state.agents[static_cast<size_t>(k)];
    beta(k) = a.beta;
    sigma(k) = a.sigma;
    lambda.col(k) = a.lambda;
  }
  Residuals r;
  r.sigma_consensus = neighbor_mix(graph_, sigma).lpNorm<Eigen::Infinity>();
  r.lambda_consensus = m > 0 ? neighbor_mix(graph_, lambda).lpNorm<Eigen::Infinity>() : 0.0;
  r.sigma_tracking = (sigma.array() - beta.mean()).abs().maxCoeff();
  r.constraint_violation = m > 0 ? std::max(0.0, (gm_.fs.a_tilde * beta - gm_.fs.d).maxCoeff()) : 0.0;
  const Eigen::VectorXd gamma = lambda.rowwise().mean();
  r.kkt = kkt_residual(gm_, beta, gamma);
  return r;
}

Residuals DistributedSolver::residuals(const SolverState& state) const {
  Residuals r = state_residuals(state);
  r.fixed_point = state_distance(step(state), state);
  return r;
}

TrajectoryRecord DistributedSolver::make_record(const SolverState& state, double fixed_point, bool keep_state) const {
  const int n = num_agents();
  TrajectoryRecord rec;
  rec.k = state.k;
  rec.beta.resize(n);
  rec.sigma.resize(n);
  rec.lambda.resize(rows(), n);
  for (int k = 0; k < n; ++k) {
    const AgentLocal& a = state.agents[static_cast<size_t>(k)];
    rec.beta(k) = a.beta;
    rec.sigma(k) = a.sigma;
    rec.lambda.col(k) = a.lambda;
  }
  rec.x = load_adjustment(gm_.inst, rec.beta);
  rec.residuals = state_residuals(state);
  rec.residuals.fixed_point = fixed_point;
  if (keep_state) rec.omega = stack_state(state);
  return rec;
}

RunResult DistributedSolver::run(SolverState state, const RunOptions& opts) const {
  validate(state);
  RunResult res;
  long done = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (true) {
    if (done >= opts.max_iter) {
      res.reason = StopReason::MaxIterations;
      break;
    }
    SolverState next = step(state);
    residual = state_distance(next, state);
    if (opts.record_stride > 0 && done % opts.record_stride == 0) {
      res.trajectory.push_back(make_record(state, residual, opts.keep_states));
    }
    state = std::move(next);
    ++done;
    if (res.milestone_iteration < 0 && residual <= opts.milestone_tol) res.milestone_iteration = done;
    if (residual <= opts.tol) {
      res.reason = StopReason::Converged;
      break;
    }
  }
  if (opts.record_stride > 0) {
    const double trailing = state_distance(step(state), state);
    res.trajectory.push_back(make_record(state, trailing, opts.keep_states));
  }
  res.iterations = done;
  res.final_residual = residual;
  res.state = std::move(state);
  return res;
}

Eigen::VectorXd stack_state(const SolverState& state) {
  const int n = static_cast<int>(state.agents.size());
  const int m = n > 0 ? static_cast<int>(state.agents[0].z.size()) : 0;
  Eigen::VectorXd w(3 * n + 2 * n * m);
  for (int k = 0; k < n; ++k) {
    const AgentLocal& a = state.agents[static_cast<size_t>(k)];
    w(k) = a.beta;
    w(n + k) = a.psi;
    w(2 * n + k) = a.sigma;
    w.segment(3 * n + k * m, m) = a.z;
    w.segment(3 * n + n * m + k * m, m) = a.lambda;
  }
  return w;
}

SolverState unstack_state(const Eigen::VectorXd& omega, int num_agents, int rows, long k) {
  const int n = num_agents;
  const int m = rows;
  if (omega.size() != 3 * n + 2 * n * m) throw DimensionError("stacked state has the wrong length");
  SolverState s;
  s.k = k;
  for (int i = 0; i < n; ++i) {
    s.agents.push_back({i, omega(i), omega(n + i), omega(2 * n + i), omega.segment(3 * n + i * m, m),
                        omega.segment(3 * n + n * m + i * m, m)});
  }
  return s;
}

double state_distance(const SolverState& a, const SolverState& b) {
  if (a.agents.size() != b.agents.size()) throw DimensionError("states have different agent counts");
  double d = 0.0;
  for (size_t k = 0; k < a.agents.size(); ++k) {
    const AgentLocal& x = a.agents[k];
    const AgentLocal& y = b.agents[k];
    d = std::max({d, std::abs(x.beta - y.beta), std::abs(x.psi - y.psi), std::abs(x.sigma - y.sigma)});
    if (x.z.size() > 0) {
      d = std::max(d, (x.z - y.z).lpNorm<Eigen::Infinity>());
      d = std::max(d, (x.lambda - y.lambda).lpNorm<Eigen::Infinity>());
    }
  }
  return d;
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::Converged:
      return "converged";
    case StopReason::MaxIterations:
      return "max_iterations";
  }
  return "unknown";
}

}  // namespace gneflex
