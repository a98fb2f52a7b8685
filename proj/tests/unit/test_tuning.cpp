#include <doctest.h>

#include <cmath>
#include <random>

#include "gneflex/error.hpp"
#include "gneflex/fixtures.hpp"
#include "gneflex/game_core.hpp"
#include "gneflex/tuning.hpp"
#include "test_support.hpp"

using namespace gneflex;

namespace {

CommGraph graph_of(const testing::Case& c) { return CommGraph::build(c.inst.num_agents(), c.edges); }

Eigen::Matrix2d r_matrix(double mu, double ell, double kappa) {
  Eigen::Matrix2d r;
  r << mu, ell, -kappa, kappa;
  return r;
}

}  // namespace

TEST_CASE("T2 constants") {
  const auto c = testing::t2_case();
  const CocoercivityReport rep = cocoercivity_constants(c.inst, graph_of(c), 0.6);
  CHECK(rep.mu(0) == doctest::Approx(0.6));
  CHECK(rep.ell(0) == doctest::Approx(-0.1));
  CHECK(rep.gamma == doctest::Approx(std::sqrt(0.5)));
  CHECK(rep.eps_bar(0) == doctest::Approx(0.5));
  CHECK(rep.eps_under(0) == doctest::Approx(2.0));
  CHECK(rep.eps_tilde == doctest::Approx(0.25));
  CHECK(rep.eps == doctest::Approx(0.25));
  CHECK(rep.uniformity_ok);
}

TEST_CASE("CS5 constants and kappa interval") {
  const auto c = testing::cs5_case();
  const Eigen::VectorXd mu = cocoercivity_mu(c.inst);
  const double expected[] = {0.208, 0.2104, 0.2136, 0.2112, 0.2152};
  for (int i = 0; i < 5; ++i) CHECK(mu(i) == doctest::Approx(expected[i]).epsilon(1e-12));
  const double gamma = cocoercivity_gamma(c.inst);
  CHECK(2.0 * gamma == doctest::Approx(1.789).epsilon(1e-3));
  CHECK(std::sqrt(mu.maxCoeff()) - std::sqrt(mu.minCoeff()) == doctest::Approx(0.0078).epsilon(1e-2));

  const KappaInterval ki = kappa_interval(c.inst);
  CHECK(ki.raw_lower == doctest::Approx(-0.4305).epsilon(1e-3));
  CHECK(ki.raw_upper == doctest::Approx(1.3505).epsilon(1e-4));
  CHECK(ki.upper == doctest::Approx(1.3505).epsilon(1e-4));
  // The lower end is lifted so that every R_n + R_n^T stays positive definite.
  CHECK(ki.lower == doctest::Approx(0.19216).epsilon(1e-4));
}

TEST_CASE("T2 kappa interval") {
  const KappaInterval ki = kappa_interval(fixtures::t2());
  CHECK(ki.lower == doctest::Approx(std::sqrt(0.6) - std::sqrt(0.5)));
  CHECK(ki.upper == doctest::Approx(std::sqrt(0.6) + std::sqrt(0.5)));
  CHECK(ki.lower == doctest::Approx(0.0675).epsilon(1e-3));
  CHECK(ki.upper == doctest::Approx(1.4817).epsilon(1e-4));
}

TEST_CASE("symmetric agents give the symmetric interval") {
  MarketInstance inst = fixtures::cs5();
  for (auto& a : inst.agents) a.a = 0.007;
  const KappaInterval ki = kappa_interval(inst);
  const double mu = cocoercivity_mu(inst)(0);
  const double gamma = cocoercivity_gamma(inst);
  CHECK(ki.raw_lower == doctest::Approx(std::sqrt(mu) - gamma));
  CHECK(ki.raw_upper == doctest::Approx(std::sqrt(mu) + gamma));
  CHECK(ki.lower < ki.upper);
}

TEST_CASE("kappa errors") {
  const auto c = testing::t2_case();
  CHECK_THROWS_WITH_AS(cocoercivity_constants(c.inst, graph_of(c), 2.0), doctest::Contains("cocoercivity not guaranteed"),
                       TuningError);
  CHECK_THROWS_AS(cocoercivity_constants(c.inst, graph_of(c), 0.01), TuningError);

  MarketInstance wild = fixtures::t2();
  wild.alpha = 1e4;
  wild.agents[0].a = 1e-4;
  wild.agents[1].a = 50.0;
  CHECK_THROWS_AS(kappa_interval(wild), TuningError);
}

TEST_CASE("closed forms agree with the eigensolver") {
  std::mt19937_64 rng(31);
  std::vector<testing::Case> cases{testing::t2_case(), testing::t2i_case(), testing::cs5_case()};
  for (int t = 0; t < 20; ++t) cases.push_back(testing::random_case(rng, 2 + t % 5, t % 4));
  for (const auto& c : cases) {
    const KappaInterval ki = kappa_interval(c.inst);
    for (double frac : {0.05, 0.5, 0.95}) {
      const double kappa = ki.lower + frac * (ki.upper - ki.lower);
      const CocoercivityReport rep = cocoercivity_constants(c.inst, graph_of(c), kappa);
      for (int n = 0; n < c.inst.num_agents(); ++n) {
        const Eigen::Matrix2d r = r_matrix(rep.mu(n), rep.ell(n), kappa);
        const Eigen::Matrix2d sym = r + r.transpose();
        const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(sym).eigenvalues()(0);
        const double lmax = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(r.transpose() * r).eigenvalues()(1);
        CHECK(std::abs(lmin - rep.eps_bar(n)) <= 1e-10);
        CHECK(std::abs(lmax - rep.eps_under(n) / 2.0) <= 1e-10);
        CHECK(lmin > 0.0);
        CHECK(4.0 * rep.mu(n) * kappa - std::pow(rep.ell(n) - kappa, 2) > 0.0);
      }
    }
  }
}

TEST_CASE("T2 default gains") {
  const auto c = testing::t2_case();
  const CommGraph g = graph_of(c);
  const GameModel gm = GameModel::from_instance(c.inst);
  const CocoercivityReport rep = cocoercivity_constants(c.inst, g, 0.6);
  const GainSet gains = default_gains(rep, gm.fs, g, 0.95);
  for (int n = 0; n < 2; ++n) {
    CHECK(gains.tau(n) == doctest::Approx(0.475));
    CHECK(gains.upsilon(n) == doctest::Approx(0.475));
    CHECK(gains.delta(n) == doctest::Approx(0.475));
    CHECK(std::isfinite(gains.rho(n)));
    CHECK(gains.rho(n) > 0.0);
    CHECK(std::isfinite(gains.eta(n)));
    CHECK(gains.eta(n) > 0.0);
  }
  CHECK(stacked_constraint_norm(gm.fs) == doctest::Approx(gm.fs.a_tilde.colwise().norm().maxCoeff()));
  CHECK(gains.theta == doctest::Approx(1.0 / (2.0 - 1.0 / (2.0 * gains.xi))));
  CHECK(1.0 / (2.0 - 1.0 / (2.0 * 1.0)) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("preconditioner structure") {
  const auto c = testing::t2_case();
  const CommGraph g = graph_of(c);
  const GameModel gm = GameModel::from_instance(c.inst);
  const GainSet gains = default_gains(cocoercivity_constants(c.inst, g, 0.6), gm.fs, g);
  const PreconditionerView view = assemble_phi(gains, gm.fs, g);
  CHECK(view.phi.rows() == 22);
  CHECK((view.phi - view.phi.transpose()).cwiseAbs().maxCoeff() == 0.0);

  GainSet broken = gains;
  broken.eta(0) = -1.0;
  CHECK_THROWS_AS(assemble_phi(broken, gm.fs, g), TuningError);
}

TEST_CASE("default gains are admissible and satisfy the Schur conditions") {
  std::mt19937_64 rng(37);
  std::vector<testing::Case> cases{testing::t2_case(), testing::t2i_case(), testing::cs5_case()};
  for (int t = 0; t < 20; ++t) cases.push_back(testing::random_case(rng, 2 + t % 5, t % 4));
  for (const auto& c : cases) {
    const CommGraph g = graph_of(c);
    const GameModel gm = GameModel::from_instance(c.inst);
    const CocoercivityReport rep = cocoercivity_constants(c.inst, g, kappa_interval(c.inst).midpoint());
    const GainSet gains = default_gains(rep, gm.fs, g);
    const double shift = 1.0 / (2.0 * gains.eps);
    const PreconditionerView view = assemble_phi(gains, gm.fs, g);
    const Eigen::MatrixXd shifted = view.phi - shift * Eigen::MatrixXd::Identity(view.phi.rows(), view.phi.cols());
    const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(shifted).eigenvalues()(0);
    CHECK(lmin > 0.0);
    CHECK(gains.xi > 0.5);
    CHECK(gains.theta > 0.0);
    CHECK(gains.theta < 1.0);
    CHECK(gains_are_admissible(gains, gm.fs, g));
    CHECK((gains.delta.array() < 2.0 * gains.eps).all());
    CHECK((gains.tau.array() < 2.0 * gains.eps).all());

    const SchurReport schur = schur_conditions(gains, gm.fs, g);
    CHECK(schur.holds());
    CHECK(schur.shifted_phi_min == doctest::Approx(lmin).epsilon(1e-9));
  }
}

TEST_CASE("explicit gains that break the bound are rejected") {
  const auto c = testing::cs5_case();
  const CommGraph g = graph_of(c);
  const GameModel gm = GameModel::from_instance(c.inst);
  GainSet gains = default_gains(cocoercivity_constants(c.inst, g, kappa_interval(c.inst).midpoint()), gm.fs, g);
  gains.eta *= 50.0;
  gains = finalize_gains(gains, gm.fs, g);
  CHECK_FALSE(gains_are_admissible(gains, gm.fs, g));
  CHECK_FALSE(schur_conditions(gains, gm.fs, g).holds());
}
