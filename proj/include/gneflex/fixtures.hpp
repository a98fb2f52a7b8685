#pragma once

#include <vector>

#include "gneflex/comm_graph.hpp"
#include "gneflex/market_model.hpp"

namespace gneflex::fixtures {

/// Two aggregators, no lines, bids in [0, 10]. Equilibrium at the lower bound.
MarketInstance t2();
/// t2() with the box widened to [-5, 10]; interior equilibrium at (-2, -2).
MarketInstance t2i();
/// Five-area case study on a 33-bus feeder with four tie lines.
MarketInstance cs5();

/// Single edge of weight 1.
std::vector<Edge> t2_edges();
/// Unit-weight ring 1-2-3-4-5-1.
std::vector<Edge> cs5_edges();

}  // namespace gneflex::fixtures
