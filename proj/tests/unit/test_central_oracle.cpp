#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "gneflex/central_oracle.hpp"
#include "gneflex/error.hpp"
#include "gneflex/fixtures.hpp"
#include "gneflex/nnls.hpp"
#include "test_support.hpp"

using namespace gneflex;

namespace {

Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd v(2);
  v << a, b;
  return v;
}

double golden_section(const std::function<double(double)>& f, double lo, double hi) {
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - g * (b - a), d = a + g * (b - a);
  double fc = f(c), fd = f(d);
  for (int i = 0; i < 200 && b - a > 1e-13 * (1.0 + std::abs(a)); ++i) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace

TEST_CASE("nonnegative least squares") {
  Eigen::MatrixXd a(3, 2);
  a << 1, 0, 0, 1, 1, 1;
  Eigen::VectorXd b(3);
  b << 1, -1, 0;
  const NnlsResult r = solve_nnls(a, b);
  CHECK(r.converged);
  CHECK(r.x.minCoeff() >= 0.0);
  // Optimal: x2 = 0 and x1 minimizes (x1-1)^2 + x1^2.
  CHECK(r.x(0) == doctest::Approx(0.5));
  CHECK(r.x(1) == doctest::Approx(0.0));

  std::mt19937_64 rng(67);
  for (int t = 0; t < 50; ++t) {
    Eigen::MatrixXd m(6, 4);
    Eigen::VectorXd y(6);
    for (int i = 0; i < 6; ++i) {
      y(i) = testing::uniform(rng, -1, 1);
      for (int j = 0; j < 4; ++j) m(i, j) = testing::uniform(rng, -1, 1);
    }
    const NnlsResult s = solve_nnls(m, y);
    const Eigen::VectorXd grad = m.transpose() * (m * s.x - y);
    for (int j = 0; j < 4; ++j) {
      CHECK(s.x(j) >= 0.0);
      if (s.x(j) > 1e-12) {
        CHECK(std::abs(grad(j)) <= 1e-9);
      } else {
        CHECK(grad(j) >= -1e-9);
      }
    }
  }
}

TEST_CASE("T2 equilibrium at the lower bound") {
  const GameModel gm = GameModel::from_instance(fixtures::t2());
  const VgneCertificate c = solve_vgne(gm);
  CHECK(c.beta_star.cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(c.kkt_residual <= 1e-9);
  CHECK(c.gamma2.minCoeff() >= 0.0);
  CHECK(kkt_residual(gm, c.beta_star, c.gamma2) <= 1e-9);
  for (int n = 0; n < 2; ++n) CHECK(std::abs(best_response(gm, n, c.beta_star) - c.beta_star(n)) <= 1e-8);
  CHECK(grid_certify(gm, c.beta_star, 0.01));
  CHECK_FALSE(grid_certify(gm, c.beta_star + vec2(0.5, 0.0), 0.01));
}

TEST_CASE("T2i interior equilibrium") {
  const GameModel gm = GameModel::from_instance(fixtures::t2i());
  const VgneCertificate c = solve_vgne(gm);
  CHECK((c.beta_star.array() + 2.0).abs().maxCoeff() <= 1e-8);
  CHECK(pseudo_gradient(gm, c.beta_star).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(c.gamma2.cwiseAbs().maxCoeff() == 0.0);
  CHECK(grid_certify(gm, c.beta_star, 0.01));
  CHECK_FALSE(grid_certify(gm, c.beta_star + vec2(0.5, 0.0), 0.01));
  CHECK(c.best_response_gap.maxCoeff() <= 1e-8);
}

TEST_CASE("KKT residual detects violations") {
  const GameModel gm = GameModel::from_instance(fixtures::t2i());
  // Feasible point that is not an equilibrium.
  CHECK(kkt_residual(gm, vec2(1.0, 3.0), Eigen::VectorXd::Zero(4)) > 0.1);

  // Mass on a slack row costs at least mass times slack.
  const Eigen::VectorXd beta = vec2(-2.0, -2.0);
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(4);
  gamma(0) = 0.3;
  const double slack = gm.fs.d(0) - gm.fs.a_tilde.row(0).dot(beta);
  REQUIRE(slack > 0.0);
  const KktBreakdown kb = kkt_breakdown(gm, beta, gamma);
  CHECK(kb.complementarity == doctest::Approx(0.3 * slack));
  CHECK(kb.value() >= 0.3 * slack);

  gamma(0) = -0.2;
  CHECK(kkt_breakdown(gm, beta, gamma).dual == doctest::Approx(0.2));
  CHECK(kkt_breakdown(gm, vec2(11.0, 0.0), Eigen::VectorXd::Zero(4)).primal >= 1.0);
}

TEST_CASE("VI condition on random instances") {
  std::mt19937_64 rng(71);
  for (int t = 0; t < 6; ++t) {
    const auto c = testing::random_case(rng, 2 + t % 3, t % 4);
    const GameModel gm = GameModel::from_instance(c.inst);
    const VgneCertificate cert = solve_vgne(gm);
    CHECK(cert.kkt_residual <= 1e-7);
    const Eigen::VectorXd f = pseudo_gradient(gm, cert.beta_star);
    int sampled = 0;
    int attempts = 0;
    while (sampled < 10000 && attempts < 2000000) {
      ++attempts;
      Eigen::VectorXd x(gm.num_agents());
      for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = testing::uniform(rng, c.inst.beta_min, c.inst.beta_max);
      if (!check_feasibility(gm.fs, x, 0.0).feasible()) continue;
      ++sampled;
      CHECK((x - cert.beta_star).dot(f) >= -1e-7);
    }
    CHECK(sampled == 10000);
  }
}

TEST_CASE("best response") {
  // Wide box and loose coupling: the clamp is inactive.
  MarketInstance inst = fixtures::t2();
  inst.beta_min = -100.0;
  inst.beta_max = 100.0;
  inst.agents[0].xhat = 1e4;
  inst.agents[1].xhat = 1e4;
  const GameModel gm = GameModel::from_instance(inst);
  const Eigen::VectorXd beta = vec2(0.0, 3.0);
  const auto [lo, hi] = feasible_interval(gm, 0, beta);
  const double br = best_response(gm, 0, beta);
  CHECK(br > lo);
  CHECK(br < hi);
  const double gs = golden_section(
      [&](double b) {
        Eigen::VectorXd trial = beta;
        trial(0) = b;
        return objective(gm, 0, trial);
      },
      -50.0, 50.0);
  CHECK(std::abs(br - gs) <= 1e-6);
  // Golden section resolves the argument only to about sqrt(eps).
  Eigen::VectorXd at_br = beta, at_gs = beta;
  at_br(0) = br;
  at_gs(0) = gs;
  CHECK(objective(gm, 0, at_br) <= objective(gm, 0, at_gs) + 1e-10);

  // Entry n of beta does not matter.
  CHECK(best_response(gm, 0, vec2(42.0, 3.0)) == doctest::Approx(br).epsilon(1e-14));
}

TEST_CASE("empty feasible interval") {
  MarketInstance inst = fixtures::t2();
  inst.beta_min = -20.0;
  inst.beta_max = 20.0;
  inst.agents[0].xhat = 1.0;
  const GameModel gm = GameModel::from_instance(inst);
  // x_1 <= 1 forces b1 <= b2 - 8 = -27, below the box.
  CHECK_THROWS_AS(feasible_interval(gm, 0, vec2(0.0, -19.0)), InfeasibleSetError);
  CHECK_THROWS_AS(best_response(gm, 0, vec2(0.0, -19.0)), InfeasibleSetError);
}

TEST_CASE("oracle errors") {
  MarketInstance inst = fixtures::t2();
  inst.agents[0].xhat = 1.0;
  inst.agents[1].xhat = 1.0;
  CHECK_THROWS_AS(solve_vgne(GameModel::from_instance(inst)), InfeasibleSetError);

  OracleOptions opts;
  opts.max_iter = 2;
  CHECK_THROWS_AS(solve_vgne(GameModel::from_instance(fixtures::cs5()), opts), ConvergenceError);
}

TEST_CASE("CS5 certificate") {
  const GameModel gm = GameModel::from_instance(fixtures::cs5());
  const VgneCertificate c = solve_vgne(gm);
  CHECK(c.kkt_residual <= 1e-6);
  const Eigen::VectorXd x = load_adjustment(gm.inst, c.beta_star);
  CHECK(x.sum() == doctest::Approx(600.0));
  CHECK(x(3) == doctest::Approx(110.0).epsilon(1e-9));
  CHECK(c.gamma2(3) > 0.0);
  CHECK(c.best_response_gap.maxCoeff() <= 1e-6);
}
