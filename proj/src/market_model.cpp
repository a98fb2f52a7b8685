#include "gneflex/market_model.hpp"

#include <cmath>
#include <iostream>
#include <mutex>
#include <sstream>
#include <utility>

#include "gneflex/diagnostics.hpp"
#include "gneflex/error.hpp"

namespace gneflex {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

WarningSink& sink_slot() {
  static WarningSink sink = [](std::string_view msg) { std::clog << "gneflex: warning: " << msg << '\n'; };
  return sink;
}

void require_length(const MarketInstance& inst, const Eigen::VectorXd& beta) {
  if (beta.size() != inst.num_agents()) {
    std::ostringstream os;
    os << "bid vector has length " << beta.size() << ", expected " << inst.num_agents();
    throw DimensionError(os.str());
  }
}

}  // namespace

WarningSink set_warning_sink(WarningSink sink) {
  std::lock_guard lock(sink_mutex());
  return std::exchange(sink_slot(), std::move(sink));
}

void warn(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (sink_slot()) sink_slot()(message);
}

PublicMarketData MarketInstance::public_data() const {
  return {num_agents(), r, alpha, beta_min, beta_max};
}

void MarketInstance::validate() const {
  const int n = num_agents();
  if (n < 2) throw InvalidModelError("market needs at least 2 aggregators");
  if (!(r >= 0.0) || !std::isfinite(r)) throw InvalidModelError("requirement r must be finite and >= 0");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidModelError("alpha must be finite and > 0");
  if (!(beta_min <= beta_max)) throw InvalidModelError("bid box requires beta_min <= beta_max");
  for (int i = 0; i < n; ++i) {
    const auto& p = agents[static_cast<size_t>(i)];
    std::ostringstream where;
    where << "aggregator " << i + 1 << ": ";
    if (!(p.a > 0.0)) throw InvalidModelError(where.str() + "a must be > 0");
    if (!(p.b > 0.0)) throw InvalidModelError(where.str() + "b must be > 0");
    if (!(p.xhat >= 0.0)) throw InvalidModelError(where.str() + "xhat must be >= 0");
    if (!std::isfinite(p.e)) throw InvalidModelError(where.str() + "e must be finite");
  }
  if (pi.rows() != fhat.size()) throw DimensionError("Pi row count must equal the number of line capacities");
  if (fhat.size() > 0 && pi.cols() != n) throw DimensionError("every Pi row must have N entries");
  for (Eigen::Index l = 0; l < fhat.size(); ++l) {
    if (!(fhat(l) >= 0.0)) throw InvalidModelError("line capacities must be >= 0");
  }
  if (!pi.allFinite()) throw InvalidModelError("Pi must be finite");
}

std::string FeasibleSet::describe_row(int row) const {
  const int n = num_agents();
  const int h = num_lines;
  std::ostringstream os;
  if (row < 0 || row >= rows()) {
    os << "row " << row << " (out of range)";
  } else if (row < n) {
    os << "capacity upper bound of aggregator " << row + 1;
  } else if (row < 2 * n) {
    os << "capacity lower bound of aggregator " << row - n + 1;
  } else if (row < 2 * n + h) {
    os << "flow upper limit of line " << row - 2 * n + 1;
  } else {
    os << "flow lower limit of line " << row - 2 * n - h + 1;
  }
  return os.str();
}

Eigen::MatrixXd centering_matrix(int n) {
  return Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / n);
}

double clearing_price(const MarketInstance& inst, const Eigen::VectorXd& beta) {
  require_length(inst, beta);
  if ((beta.array() < inst.beta_min).any() || (beta.array() > inst.beta_max).any()) {
    warn("clearing_price evaluated at bids outside the admissible box");
  }
  return (inst.r - beta.sum()) / (inst.alpha * inst.num_agents());
}

Eigen::VectorXd load_adjustment(const MarketInstance& inst, const Eigen::VectorXd& beta) {
  require_length(inst, beta);
  const double share = (inst.r - beta.sum()) / inst.num_agents();
  return beta.array() + share;
}

Eigen::VectorXd line_flows(const MarketInstance& inst, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd x = load_adjustment(inst, beta);
  Eigen::VectorXd e(inst.num_agents());
  for (int i = 0; i < inst.num_agents(); ++i) e(i) = inst.agents[static_cast<size_t>(i)].e;
  if (inst.num_lines() == 0) return Eigen::VectorXd(0);
  return inst.pi * (e - x);
}

FeasibleSet build_feasible_set(const MarketInstance& inst) {
  inst.validate();
  const int n = inst.num_agents();
  const int h = inst.num_lines();
  const int m = 2 * n + 2 * h;

  const Eigen::MatrixXd a = centering_matrix(n);
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(n, inst.r / n);
  Eigen::VectorXd e(n), xhat(n);
  for (int i = 0; i < n; ++i) {
    e(i) = inst.agents[static_cast<size_t>(i)].e;
    xhat(i) = inst.agents[static_cast<size_t>(i)].xhat;
  }
  const Eigen::MatrixXd pi = h > 0 ? inst.pi : Eigen::MatrixXd(0, n);
  const Eigen::MatrixXd pia = pi * a;
  const Eigen::VectorXd pic = pi * c;

  FeasibleSet fs;
  fs.beta_min = inst.beta_min;
  fs.beta_max = inst.beta_max;
  fs.num_lines = h;
  fs.a_tilde.resize(m, n);
  fs.a_tilde << a, -a, -pia, pia;

  fs.d.resize(m);
  const Eigen::VectorXd pi_e_minus_c = pi * (e - c);
  fs.d << xhat - c, c, inst.fhat - pi_e_minus_c, inst.fhat + pi_e_minus_c;

  // Uniform share of the public part plus each agent's private terms.
  Eigen::VectorXd uniform(m);
  uniform << -c, c, inst.fhat + pic, inst.fhat - pic;
  uniform /= n;
  fs.d_split.resize(m, n);
  for (int k = 0; k < n; ++k) {
    Eigen::VectorXd dk = uniform;
    dk(k) += xhat(k);
    if (h > 0) {
      const Eigen::VectorXd pie = pi.col(k) * e(k);
      dk.segment(2 * n, h) -= pie;
      dk.segment(2 * n + h, h) += pie;
    }
    fs.d_split.col(k) = dk;
  }
  return fs;
}

FeasibilityReport check_feasibility(const FeasibleSet& fs, const Eigen::VectorXd& beta, double tol) {
  if (beta.size() != fs.num_agents()) throw DimensionError("bid vector length does not match the feasible set");
  FeasibilityReport rep;
  for (int i = 0; i < fs.num_agents(); ++i) {
    const double over = std::max(fs.beta_min - beta(i), beta(i) - fs.beta_max);
    if (over > tol) {
      rep.box_ok = false;
      rep.box_violations.push_back(i);
    }
    rep.max_violation = std::max(rep.max_violation, std::max(over, 0.0));
  }
  const Eigen::VectorXd excess = fs.a_tilde * beta - fs.d;
  for (int row = 0; row < fs.rows(); ++row) {
    if (excess(row) > tol) {
      rep.coupling_ok = false;
      rep.violated_rows.push_back(row);
    }
    rep.max_violation = std::max(rep.max_violation, std::max(excess(row), 0.0));
  }
  return rep;
}

}  // namespace gneflex
