#include "gneflex/fixtures.hpp"

namespace gneflex::fixtures {

MarketInstance t2() {
  MarketInstance inst;
  inst.r = 10.0;
  inst.alpha = 1.0;
  inst.beta_min = 0.0;
  inst.beta_max = 10.0;
  inst.agents = {{0.1, 1.0, 0.0, 10.0}, {0.1, 1.0, 0.0, 10.0}};
  inst.pi = Eigen::MatrixXd::Zero(0, 2);
  inst.fhat = Eigen::VectorXd::Zero(0);
  return inst;
}

MarketInstance t2i() {
  MarketInstance inst = t2();
  inst.beta_min = -5.0;
  return inst;
}

MarketInstance cs5() {
  MarketInstance inst;
  inst.r = 600.0;
  inst.alpha = 1.0;
  inst.beta_min = 0.0;
  inst.beta_max = 150.0;
  inst.agents = {
      {0.0050, 0.40, 1250.0, 250.0},
      {0.0065, 0.38, -1300.0, 200.0},
      {0.0085, 0.36, 1050.0, 250.0},
      {0.0070, 0.37, 1700.0, 110.0},
      {0.0095, 0.80, 1480.0, 220.0},
  };
  // Tie lines (3,19), (4,5), (7,26), (9,10); an entry is 1 when the area lies
  // downstream of the line as seen from the slack bus in area 1.
  inst.pi.resize(4, 5);
  inst.pi << 0, 1, 0, 0, 0,
             0, 0, 1, 1, 1,
             0, 0, 0, 1, 0,
             0, 0, 0, 0, 1;
  inst.fhat.resize(4);
  inst.fhat << 1400.0, 6000.0, 2000.0, 2000.0;
  return inst;
}

std::vector<Edge> t2_edges() { return {{0, 1, 1.0}}; }

std::vector<Edge> cs5_edges() { return {{0, 1, 1.0}, {1, 2, 1.0}, {2, 3, 1.0}, {3, 4, 1.0}, {4, 0, 1.0}}; }

}  // namespace gneflex::fixtures
