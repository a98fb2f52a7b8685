#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "gneflex/central_oracle.hpp"
#include "gneflex/distributed_solver.hpp"
#include "gneflex/error.hpp"
#include "test_support.hpp"

using namespace gneflex;

namespace {

Eigen::VectorXd bids(const SolverState& s) {
  Eigen::VectorXd b(static_cast<Eigen::Index>(s.agents.size()));
  for (size_t k = 0; k < s.agents.size(); ++k) b(static_cast<Eigen::Index>(k)) = s.agents[k].beta;
  return b;
}

AgentLocal poisoned(int id, int m) {
  const double junk = std::numeric_limits<double>::quiet_NaN();
  return {id, 1e300, junk, -1e300, Eigen::VectorXd::Constant(m, junk), Eigen::VectorXd::Constant(m, 1e300)};
}

}  // namespace

TEST_CASE("default initial state") {
  const DistributedSolver s = testing::make_solver(testing::t2_case());
  const SolverState st = s.init();
  CHECK(st.k == 0);
  for (const AgentLocal& a : st.agents) {
    CHECK(a.beta == 0.0);
    CHECK(a.sigma == 0.0);
    CHECK(a.psi == 0.0);
    CHECK(a.z.size() == 4);
    CHECK(a.lambda.size() == 4);
    CHECK(a.z.cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.lambda.cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK(bids(testing::make_solver(testing::t2i_case()).init()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("explicit and seeded initial states") {
  const DistributedSolver s = testing::make_solver(testing::cs5_case());
  std::mt19937_64 rng(41);
  const SolverState given = testing::random_state(rng, s.model(), 3.0);
  const SolverState st = s.init({InitKind::Explicit, 0, given});
  CHECK(st == given);

  SolverState outside = given;
  outside.agents[2].beta = 151.0;
  CHECK_THROWS_AS(s.init({InitKind::Explicit, 0, outside}), InvalidModelError);
  SolverState negative = given;
  negative.agents[1].lambda(0) = -1e-3;
  CHECK_THROWS_AS(s.init({InitKind::Explicit, 0, negative}), InvalidModelError);

  const SolverState a = s.init({InitKind::Random, 99, std::nullopt});
  const SolverState b = s.init({InitKind::Random, 99, std::nullopt});
  const SolverState c = s.init({InitKind::Random, 100, std::nullopt});
  CHECK(a == b);
  CHECK_FALSE(a == c);
  RunOptions opts;
  opts.max_iter = 200;
  opts.record_stride = 1;
  const RunResult ra = s.run(a, opts);
  const RunResult rb = s.run(b, opts);
  CHECK(ra.state == rb.state);
  REQUIRE(ra.trajectory.size() == rb.trajectory.size());
  for (size_t i = 0; i < ra.trajectory.size(); ++i) {
    CHECK(same_entries(ra.trajectory[i].beta, rb.trajectory[i].beta));
    CHECK(same_entries(ra.trajectory[i].lambda, rb.trajectory[i].lambda));
  }
}

TEST_CASE("first round on T2 by hand") {
  const DistributedSolver base = testing::make_solver(testing::t2_case());
  GainSet gains = base.gains();
  gains.eta.setConstant(0.1);
  const DistributedSolver s(base.model(), base.graph(), gains);
  const SolverState next = s.step(s.init());
  const AgentLocal& a = next.agents[0];
  CHECK(a.beta == 0.0);
  CHECK(a.sigma == 0.0);
  CHECK(a.psi == 0.0);
  CHECK(a.z.cwiseAbs().maxCoeff() == 0.0);
  CHECK(a.lambda(0) == 0.0);
  CHECK(a.lambda(1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(a.lambda(2) == 0.0);
  CHECK(a.lambda(3) == 0.0);
  CHECK(next.agents[1].beta == 0.0);
  CHECK(next.k == 1);
}

TEST_CASE("consensus start leaves psi unchanged") {
  const DistributedSolver s = testing::make_solver(testing::cs5_case());
  std::mt19937_64 rng(43);
  SolverState st = testing::random_state(rng, s.model(), 5.0);
  for (AgentLocal& a : st.agents) {
    a.sigma = 42.0;
    a.psi = 0.0;
  }
  const SolverState next = s.step(st);
  for (const AgentLocal& a : next.agents) CHECK(a.psi == 0.0);
}

TEST_CASE("round agrees with the dense compact iteration") {
  std::mt19937_64 rng(47);
  std::vector<testing::Case> cases{testing::t2_case(), testing::t2i_case(), testing::cs5_case()};
  for (int t = 0; t < 5; ++t) cases.push_back(testing::random_case(rng, 2 + t, t % 4));
  for (const auto& c : cases) {
    const DistributedSolver s = testing::make_solver(c);
    for (int t = 0; t < 20; ++t) {
      const SolverState st = testing::random_state(rng, s.model(), 10.0);
      const Eigen::VectorXd omega = stack_state(st);
      const Eigen::VectorXd dense = testing::dense_round(s.model(), s.graph(), s.gains(), omega);
      const Eigen::VectorXd got = stack_state(s.step(st));
      CHECK((dense - got).lpNorm<Eigen::Infinity>() <= 1e-12 * std::max(1.0, omega.lpNorm<Eigen::Infinity>()));
    }
  }
}

TEST_CASE("stack and unstack are inverse") {
  const DistributedSolver s = testing::make_solver(testing::cs5_case());
  std::mt19937_64 rng(53);
  const SolverState st = testing::random_state(rng, s.model(), 2.0);
  const Eigen::VectorXd w = stack_state(st);
  CHECK(w.size() == 3 * 5 + 2 * 5 * 18);
  CHECK(unstack_state(w, 5, 18) == st);
  CHECK_THROWS_AS(unstack_state(w.head(10), 5, 18), DimensionError);
}

TEST_CASE("agent updates see only neighbour payloads") {
  std::mt19937_64 rng(59);
  for (int t = 0; t < 30; ++t) {
    const auto c = testing::random_case(rng, 3 + t % 4, t % 4);
    const DistributedSolver s = testing::make_solver(c);
    const int n = s.num_agents();
    const int m = s.rows();
    const SolverState st = testing::random_state(rng, s.model(), 5.0);
    std::vector<PartialUpdate> partial;
    for (int k = 0; k < n; ++k) {
      partial.push_back(agent_phase1(s.context(), s.agent_private(k), st.agents[static_cast<size_t>(k)],
                                     s.phase1_inbox(st, k)));
    }
    const SolverState reference = s.step(st);
    for (int k = 0; k < n; ++k) {
      SolverState dirty = st;
      std::vector<Phase1Message> extra1;
      std::vector<Phase2Message> extra2;
      for (int j = 0; j < n; ++j) {
        if (j == k || s.graph().adjacent(k, j)) continue;
        dirty.agents[static_cast<size_t>(j)] = poisoned(j, m);
        extra1.push_back({j, 1e300, -1e300, Eigen::VectorXd::Constant(m, 7e200), Eigen::VectorXd::Constant(m, 1e300)});
        extra2.push_back({j, -1e300, Eigen::VectorXd::Constant(m, 3e250)});
      }
      std::vector<Phase1Message> inbox1 = s.phase1_inbox(dirty, k);
      std::vector<Phase2Message> inbox2;
      for (const Neighbor& nb : s.graph().neighbors(k)) {
        const PartialUpdate& p = partial[static_cast<size_t>(nb.id)];
        inbox2.push_back({nb.id, p.psi, p.z});
      }
      inbox1.insert(inbox1.begin(), extra1.begin(), extra1.end());
      inbox2.insert(inbox2.end(), extra2.begin(), extra2.end());
      const PartialUpdate p1 = agent_phase1(s.context(), s.agent_private(k), st.agents[static_cast<size_t>(k)], inbox1);
      CHECK(p1.beta == partial[static_cast<size_t>(k)].beta);
      CHECK(p1.psi == partial[static_cast<size_t>(k)].psi);
      CHECK(same_entries(p1.z, partial[static_cast<size_t>(k)].z));
      const AgentLocal out =
          agent_phase2(s.context(), s.agent_private(k), st.agents[static_cast<size_t>(k)], p1, inbox1, inbox2);
      CHECK(out == reference.agents[static_cast<size_t>(k)]);
    }
  }
}

TEST_CASE("missing neighbour message is an error") {
  const DistributedSolver s = testing::make_solver(testing::t2_case());
  const SolverState st = s.init();
  CHECK_THROWS_AS(agent_phase1(s.context(), s.agent_private(0), st.agents[0], {}), Error);
}

TEST_CASE("runs reach the equilibrium of T2 and T2i") {
  RunOptions opts;
  opts.tol = 1e-9;
  {
    const auto c = testing::t2_case();
    const DistributedSolver s = testing::make_solver(c);
    const RunResult r = s.run(s.init(), opts);
    CHECK(r.reason == StopReason::Converged);
    CHECK(bids(r.state).cwiseAbs().maxCoeff() <= 1e-4);
    CHECK(s.residuals(r.state).kkt <= 1e-6);
  }
  {
    const auto c = testing::t2i_case();
    const DistributedSolver s = testing::make_solver(c);
    const RunResult r = s.run(s.init(), opts);
    CHECK(r.reason == StopReason::Converged);
    CHECK((bids(r.state).array() + 2.0).abs().maxCoeff() <= 1e-4);
    const Residuals res = s.residuals(r.state);
    CHECK(res.kkt <= 1e-6);
    CHECK(res.sigma_tracking <= 1e-6);
  }
}

TEST_CASE("CS5 bids and multipliers match the oracle") {
  const auto c = testing::cs5_case();
  const DistributedSolver s = testing::make_solver(c);
  RunOptions opts;
  opts.tol = 1e-10;
  const RunResult r = s.run(s.init(), opts);
  REQUIRE(r.reason == StopReason::Converged);
  CHECK(r.milestone_iteration > 0);
  CHECK(r.milestone_iteration <= 3000);
  const VgneCertificate cert = solve_vgne(GameModel::from_instance(c.inst));
  CHECK((bids(r.state) - cert.beta_star).lpNorm<Eigen::Infinity>() <= 1e-4);
  for (const AgentLocal& a : r.state.agents) {
    CHECK((a.lambda - cert.gamma2).lpNorm<Eigen::Infinity>() <= 1e-3);
  }
  CHECK(cert.gamma2(3) == doctest::Approx(4.47537).epsilon(1e-5));
  CHECK(cert.gamma2(14) == doctest::Approx(6.65937).epsilon(1e-5));
}

TEST_CASE("iteration cap is reported, not thrown") {
  const DistributedSolver s = testing::make_solver(testing::cs5_case());
  RunOptions opts;
  opts.max_iter = 10;
  const RunResult r = s.run(s.init(), opts);
  CHECK(r.reason == StopReason::MaxIterations);
  CHECK(r.iterations == 10);
  CHECK(r.state.k == 10);
  CHECK(std::string(to_string(r.reason)) == "max_iterations");
}

TEST_CASE("residual diagnostics") {
  const DistributedSolver s = testing::make_solver(testing::t2i_case());
  RunOptions opts;
  opts.tol = 1e-13;
  opts.max_iter = 50000;
  const RunResult r = s.run(s.init(), opts);
  const Residuals res = s.residuals(r.state);
  CHECK(res.fixed_point <= 1e-8);
  CHECK(res.sigma_consensus <= 1e-8);
  CHECK(res.lambda_consensus <= 1e-8);
  CHECK(res.sigma_tracking <= 1e-8);
  CHECK(res.constraint_violation <= 1e-8);
  CHECK(res.kkt <= 1e-8);

  SolverState off = r.state;
  off.agents[0].sigma += 1.0;
  CHECK(s.residuals(off).sigma_consensus > 0.5);
}

TEST_CASE("every round keeps bids in the box and multipliers nonnegative") {
  std::mt19937_64 rng(61);
  for (int t = 0; t < 5; ++t) {
    const auto c = testing::random_case(rng, 2 + t, t % 4);
    const DistributedSolver s = testing::make_solver(c);
    SolverState st = s.init({InitKind::Random, static_cast<std::uint64_t>(t), std::nullopt});
    for (int k = 0; k < 300; ++k) {
      st = s.step(st);
      for (const AgentLocal& a : st.agents) {
        CHECK(a.beta >= c.inst.beta_min);
        CHECK(a.beta <= c.inst.beta_max);
        CHECK(a.lambda.minCoeff() >= 0.0);
      }
      const double total = load_adjustment(c.inst, bids(st)).sum();
      CHECK(std::abs(total - c.inst.r) <= 1e-12 * std::max(1.0, std::abs(c.inst.r)) * 10);
    }
  }
}

TEST_CASE("distance to the limit shrinks in the preconditioner norm") {
  const auto c = testing::t2i_case();
  const DistributedSolver s = testing::make_solver(c);
  const Eigen::MatrixXd phi = assemble_phi(s.gains(), s.model().fs, s.graph()).phi;
  RunOptions opts;
  opts.tol = 1e-14;
  opts.max_iter = 20000;
  opts.record_stride = 1;
  opts.keep_states = true;
  const SolverState start = s.init({InitKind::Random, 5, std::nullopt});
  const RunResult r = s.run(start, opts);
  const Eigen::VectorXd limit = stack_state(r.state);
  double previous = std::numeric_limits<double>::infinity();
  for (const TrajectoryRecord& rec : r.trajectory) {
    const Eigen::VectorXd diff = rec.omega - limit;
    const double dist = std::sqrt(diff.dot(phi * diff));
    CHECK(dist <= previous + 1e-10);
    previous = dist;
  }
}
