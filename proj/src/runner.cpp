#include "gneflex/runner.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gneflex/error.hpp"
#include "gneflex/game_core.hpp"
#include "gneflex/tuning.hpp"

namespace gneflex {

namespace {

using ojson = nlohmann::ordered_json;

struct Setup {
  GameModel gm;
  CommGraph graph;
};

Setup make_setup(const RunConfig& cfg) {
  GameModel gm = GameModel::from_instance(cfg.market);
  CommGraph graph = CommGraph::build(cfg.market.num_agents(), cfg.edges);
  return {std::move(gm), std::move(graph)};
}

ojson to_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

ojson gains_json(const GainSet& g) {
  ojson j;
  j["kappa"] = g.kappa;
  j["eps"] = g.eps;
  j["xi"] = g.xi;
  j["theta"] = g.theta;
  j["tau"] = to_json(g.tau);
  j["upsilon"] = to_json(g.upsilon);
  j["rho"] = to_json(g.rho);
  j["delta"] = to_json(g.delta);
  j["eta"] = to_json(g.eta);
  return j;
}

std::string gains_line(const GainSet& g) {
  std::ostringstream os;
  os << "kappa=" << format_number(g.kappa) << " tau=" << format_number(g.tau.maxCoeff())
     << " upsilon=" << format_number(g.upsilon.maxCoeff()) << " rho=" << format_number(g.rho.maxCoeff())
     << " delta=" << format_number(g.delta.maxCoeff()) << " eta=" << format_number(g.eta.maxCoeff());
  return os.str();
}

ojson residuals_json(const Residuals& r) {
  return {{"fixed_point", r.fixed_point},       {"sigma_consensus", r.sigma_consensus},
          {"lambda_consensus", r.lambda_consensus}, {"sigma_tracking", r.sigma_tracking},
          {"constraint_violation", r.constraint_violation}, {"kkt", r.kkt}};
}

ojson active_rows_json(const FeasibleSet& fs, const Eigen::VectorXd& beta, double tol) {
  ojson a = ojson::array();
  if (fs.rows() == 0) return a;
  const Eigen::VectorXd slack = fs.d - fs.a_tilde * beta;
  for (int i = 0; i < fs.rows(); ++i) {
    if (std::abs(slack(i)) <= tol * (1.0 + std::abs(fs.d(i)))) a.push_back(fs.describe_row(i));
  }
  return a;
}

std::filesystem::path prepare_dir(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.outputs.directory);
  std::filesystem::create_directories(dir);
  return dir;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

void write_json(const std::filesystem::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

ojson base_summary(const RunConfig& cfg, const std::string& command) {
  ojson j;
  j["command"] = command;
  j["config_name"] = cfg.name;
  j["config_hash"] = config_hash(cfg);
  return j;
}

/// Runs `body`, mapping library errors to exit codes and writing a failure
/// summary so every invocation leaves a diagnostic behind.
template <typename Body>
int guarded(const RunConfig& cfg, const std::string& command, std::ostream& err, Body&& body) {
  auto failure = [&](int code, const std::string& kind, const std::string& what) {
    err << "gneflex " << command << ": " << what << "\n";
    try {
      ojson j = base_summary(cfg, command);
      j["status"] = kind;
      j["error"] = what;
      write_json(prepare_dir(cfg) / "summary.json", j);
    } catch (const std::exception&) {
    }
    return code;
  };
  try {
    return body();
  } catch (const InfeasibleSetError& e) {
    return failure(kExitInfeasible, "infeasible", e.what());
  } catch (const ConvergenceError& e) {
    return failure(kExitNotConverged, "not_converged", e.what());
  } catch (const Error& e) {
    return failure(kExitConfig, "error", e.what());
  }
}

std::string plot_manifest(const RunConfig& cfg, const GainSet& gains, int n, int m, const FeasibleSet& fs) {
  std::ostringstream os;
  os << "# config_hash=" << config_hash(cfg) << "\n";
  os << "# gains " << gains_line(gains) << "\n";
  os << "source: trajectory.csv\n";
  os << "x_axis: k | iteration\n\n";
  os << "figure: bids\ny_label: bid beta_n (kWh)\nseries:";
  for (int i = 1; i <= n; ++i) os << " beta_" << i;
  os << "\n\nfigure: aggregate estimates\ny_label: sigma_n (kWh)\nseries:";
  for (int i = 1; i <= n; ++i) os << " sigma_" << i;
  os << "\n\nfigure: load adjustment\ny_label: x_n (kWh)\nseries:";
  for (int i = 1; i <= n; ++i) os << " x_" << i;
  os << "\n\nfigure: multipliers\ny_label: lambda_n,i\n";
  for (int i = 0; i < m; ++i) {
    os << "group: " << fs.describe_row(i) << " |";
    for (int k = 1; k <= n; ++k) os << " lambda_" << k << "_" << i + 1;
    os << "\n";
  }
  os << "\nfigure: residuals\ny_label: residual\ny_scale: log\nseries: fixed_point sigma_consensus lambda_consensus "
        "sigma_tracking constraint_violation kkt\n";
  return os.str();
}

struct DistributedOutcome {
  RunResult result;
  Residuals final_residuals;
  Eigen::VectorXd beta;
  GainSet gains;
};

DistributedOutcome run_distributed(const RunConfig& cfg, const Setup& s, bool force) {
  GainSet gains = resolve_gains(cfg, s.gm.fs, s.graph, force);
  DistributedSolver solver(s.gm, s.graph, gains);
  InitSpec init{cfg.solver.init, cfg.solver.seed, cfg.solver.initial_state};
  RunOptions ro;
  ro.tol = cfg.solver.tol;
  ro.max_iter = cfg.solver.max_iter;
  ro.record_stride = cfg.outputs.trajectory ? cfg.solver.record_stride : 0;
  DistributedOutcome out;
  out.result = solver.run(solver.init(init), ro);
  out.final_residuals = solver.residuals(out.result.state);
  out.beta.resize(solver.num_agents());
  for (int k = 0; k < solver.num_agents(); ++k) out.beta(k) = out.result.state.agents[static_cast<size_t>(k)].beta;
  out.gains = std::move(gains);
  return out;
}

ojson run_section(const RunConfig& cfg, const Setup& s, const DistributedOutcome& d) {
  const int n = s.gm.num_agents();
  const int m = s.gm.fs.rows();
  Eigen::VectorXd sigma(n);
  Eigen::MatrixXd lambda(m, n);
  for (int k = 0; k < n; ++k) {
    sigma(k) = d.result.state.agents[static_cast<size_t>(k)].sigma;
    lambda.col(k) = d.result.state.agents[static_cast<size_t>(k)].lambda;
  }
  ojson j;
  j["stop_reason"] = to_string(d.result.reason);
  j["iterations"] = d.result.iterations;
  j["final_residual"] = d.result.final_residual;
  j["milestone_tol"] = RunOptions{}.milestone_tol;
  j["milestone_iteration"] = d.result.milestone_iteration;
  j["tol"] = cfg.solver.tol;
  j["beta"] = to_json(d.beta);
  j["sigma"] = to_json(sigma);
  j["x"] = to_json(load_adjustment(cfg.market, d.beta));
  j["price"] = clearing_price(cfg.market, d.beta);
  j["lambda_mean"] = to_json(m > 0 ? Eigen::VectorXd(lambda.rowwise().mean()) : Eigen::VectorXd());
  j["residuals"] = residuals_json(d.final_residuals);
  j["active_constraints"] = active_rows_json(s.gm.fs, d.beta, 1e-6);
  return j;
}

ojson certificate_json(const VgneCertificate& c, const FeasibleSet& fs) {
  ojson j;
  j["beta_star"] = to_json(c.beta_star);
  j["gamma2"] = to_json(c.gamma2);
  j["kkt_residual"] = c.kkt_residual;
  j["natural_residual"] = c.natural_residual;
  j["best_response_gap"] = to_json(c.best_response_gap);
  j["iterations"] = c.iterations;
  j["active_constraints"] = active_rows_json(fs, c.beta_star, 1e-6);
  return j;
}

std::optional<GainSet> try_gains(const RunConfig& cfg, const Setup& s, bool force) {
  try {
    return resolve_gains(cfg, s.gm.fs, s.graph, force);
  } catch (const Error&) {
    return std::nullopt;
  }
}

void write_trajectory_files(const RunConfig& cfg, const Setup& s, const DistributedOutcome& d,
                            const std::filesystem::path& dir, const std::string& hash) {
  if (!cfg.outputs.trajectory) return;
  const int n = s.gm.num_agents();
  const int m = s.gm.fs.rows();
  write_text(dir / "trajectory.csv", trajectory_csv(d.result.trajectory, n, m, hash, d.gains));
  write_text(dir / "plot_manifest.txt", plot_manifest(cfg, d.gains, n, m, s.gm.fs));
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string trajectory_csv(const std::vector<TrajectoryRecord>& records, int num_agents, int rows,
                           const std::string& hash, const GainSet& gains) {
  std::string out;
  out += "# config_hash=" + hash + " " + gains_line(gains) + "\n";
  out += "k";
  for (int i = 1; i <= num_agents; ++i) out += ",beta_" + std::to_string(i);
  for (int i = 1; i <= num_agents; ++i) out += ",sigma_" + std::to_string(i);
  out += ",fixed_point,sigma_consensus,lambda_consensus,sigma_tracking,constraint_violation,kkt";
  for (int i = 1; i <= num_agents; ++i) out += ",x_" + std::to_string(i);
  for (int k = 1; k <= num_agents; ++k) {
    for (int i = 1; i <= rows; ++i) out += ",lambda_" + std::to_string(k) + "_" + std::to_string(i);
  }
  out += "\n";
  for (const TrajectoryRecord& r : records) {
    out += std::to_string(r.k);
    auto put = [&out](double v) {
      out += ',';
      out += format_number(v);
    };
    for (int i = 0; i < num_agents; ++i) put(r.beta(i));
    for (int i = 0; i < num_agents; ++i) put(r.sigma(i));
    const Residuals& res = r.residuals;
    for (double v : {res.fixed_point, res.sigma_consensus, res.lambda_consensus, res.sigma_tracking,
                     res.constraint_violation, res.kkt}) {
      put(v);
    }
    for (int i = 0; i < num_agents; ++i) put(r.x(i));
    for (int k = 0; k < num_agents; ++k) {
      for (int i = 0; i < rows; ++i) put(r.lambda(i, k));
    }
    out += "\n";
  }
  return out;
}

void apply_overrides(RunConfig& cfg, const CommandOptions& opts) {
  if (opts.out_dir) cfg.outputs.directory = *opts.out_dir;
  if (opts.seed) cfg.solver.seed = *opts.seed;
  if (opts.tol) {
    if (!(*opts.tol > 0.0)) throw ConfigError("--tol must be > 0");
    cfg.solver.tol = *opts.tol;
  }
  if (opts.max_iter) {
    if (*opts.max_iter < 0) throw ConfigError("--max-iter must be >= 0");
    cfg.solver.max_iter = *opts.max_iter;
  }
}

int cmd_run(RunConfig cfg, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(cfg, "run", err, [&] {
    apply_overrides(cfg, opts);
    const Setup s = make_setup(cfg);
    find_slater_point(s.gm.fs);
    const DistributedOutcome d = run_distributed(cfg, s, opts.force);
    const std::string hash = config_hash(cfg);
    const auto dir = prepare_dir(cfg);

    ojson summary = base_summary(cfg, "run");
    const bool converged = d.result.reason == StopReason::Converged;
    summary["status"] = converged ? "converged" : "not_converged";
    summary["gains"] = gains_json(d.gains);
    summary["run"] = run_section(cfg, s, d);
    write_json(dir / "summary.json", summary);
    write_trajectory_files(cfg, s, d, dir, hash);

    out << "run: " << to_string(d.result.reason) << " after " << d.result.iterations << " iterations, residual "
        << format_number(d.result.final_residual) << ", kkt " << format_number(d.final_residuals.kkt) << "\n";
    out << "beta:";
    for (Eigen::Index i = 0; i < d.beta.size(); ++i) out << " " << format_number(d.beta(i));
    out << "\n";
    if (d.result.milestone_iteration >= 0) {
      out << "residual <= 1e-3 reached at iteration " << d.result.milestone_iteration << "\n";
    }
    return converged ? kExitOk : kExitNotConverged;
  });
}

int cmd_oracle(RunConfig cfg, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(cfg, "oracle", err, [&] {
    apply_overrides(cfg, opts);
    const Setup s = make_setup(cfg);
    OracleOptions oo;
    if (opts.tol) oo.tol = *opts.tol;
    const VgneCertificate c = solve_vgne(s.gm, oo);
    const auto dir = prepare_dir(cfg);

    ojson cert = base_summary(cfg, "oracle");
    const auto gains = try_gains(cfg, s, opts.force);
    cert["gains"] = gains ? gains_json(*gains) : ojson(nullptr);
    cert["certificate"] = certificate_json(c, s.gm.fs);
    write_json(dir / "certificate.json", cert);

    out << "oracle: " << c.iterations << " extragradient iterations, kkt " << format_number(c.kkt_residual) << "\n";
    out << "beta*:";
    for (Eigen::Index i = 0; i < c.beta_star.size(); ++i) out << " " << format_number(c.beta_star(i));
    out << "\n";
    return kExitOk;
  });
}

int cmd_tune(RunConfig cfg, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(cfg, "tune", err, [&] {
    apply_overrides(cfg, opts);
    const Setup s = make_setup(cfg);
    const KappaInterval ki = kappa_interval(cfg.market);
    const GainSet gains = resolve_gains(cfg, s.gm.fs, s.graph, opts.force);
    const CocoercivityReport rep = cocoercivity_constants(cfg.market, s.graph, gains.kappa);
    const PreconditionerView phi = assemble_phi(gains, s.gm.fs, s.graph);
    const SchurReport schur = schur_conditions(gains, s.gm.fs, s.graph);

    auto vec = [&out](const char* label, const Eigen::VectorXd& v) {
      out << label << ":";
      for (Eigen::Index i = 0; i < v.size(); ++i) out << " " << format_number(v(i));
      out << "\n";
    };
    out << "config_hash: " << config_hash(cfg) << "\n";
    out << "kappa_interval_raw: (" << format_number(ki.raw_lower) << ", " << format_number(ki.raw_upper) << ")\n";
    out << "kappa_interval_clipped: (" << format_number(std::max(0.0, ki.raw_lower)) << ", "
        << format_number(ki.raw_upper) << ")\n";
    out << "kappa_interval: (" << format_number(ki.lower) << ", " << format_number(ki.upper) << ")\n";
    out << "kappa: " << format_number(gains.kappa) << "\n";
    vec("mu", rep.mu);
    vec("ell", rep.ell);
    out << "gamma: " << format_number(rep.gamma) << "\n";
    vec("eps_bar", rep.eps_bar);
    vec("eps_under", rep.eps_under);
    out << "eps_tilde: " << format_number(rep.eps_tilde) << "\n";
    out << "lambda_max_laplacian: " << format_number(rep.lambda_max_laplacian) << "\n";
    out << "eps: " << format_number(gains.eps) << "\n";
    vec("tau", gains.tau);
    vec("upsilon", gains.upsilon);
    vec("rho", gains.rho);
    vec("delta", gains.delta);
    vec("eta", gains.eta);
    out << "lambda_min_phi: " << format_number(phi.lambda_min) << "\n";
    out << "half_inverse_eps: " << format_number(1.0 / (2.0 * gains.eps)) << "\n";
    out << "xi: " << format_number(gains.xi) << "\n";
    out << "theta: " << format_number(gains.theta) << "\n";
    out << "schur_diagonal_margin: " << format_number(schur.diagonal_margin) << "\n";
    out << "schur_consensus_block: " << format_number(schur.consensus_block) << "\n";
    out << "schur_multiplier_block: " << format_number(schur.multiplier_block) << "\n";
    out << "admissible: " << (gains_are_admissible(gains, s.gm.fs, s.graph) ? "yes" : "no") << "\n";
    return kExitOk;
  });
}

int cmd_compare(RunConfig cfg, const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(cfg, "compare", err, [&] {
    apply_overrides(cfg, opts);
    const Setup s = make_setup(cfg);
    find_slater_point(s.gm.fs);
    const DistributedOutcome d = run_distributed(cfg, s, opts.force);
    const VgneCertificate c = solve_vgne(s.gm);
    const std::string hash = config_hash(cfg);
    const auto dir = prepare_dir(cfg);

    double multiplier_gap = 0.0;
    for (const AgentLocal& a : d.result.state.agents) {
      if (a.lambda.size() > 0) multiplier_gap = std::max(multiplier_gap, (a.lambda - c.gamma2).lpNorm<Eigen::Infinity>());
    }
    const double bid_gap = (d.beta - c.beta_star).lpNorm<Eigen::Infinity>();
    const bool converged = d.result.reason == StopReason::Converged;
    const bool agree = bid_gap <= kCompareBidTolerance;

    ojson summary = base_summary(cfg, "compare");
    summary["status"] = !converged ? "not_converged" : (agree ? "agree" : "disagree");
    summary["gains"] = gains_json(d.gains);
    summary["run"] = run_section(cfg, s, d);
    summary["agreement"] = {{"bid_gap_inf", bid_gap},
                            {"bid_tolerance", kCompareBidTolerance},
                            {"multiplier_gap_inf", multiplier_gap},
                            {"kkt_distributed", d.final_residuals.kkt},
                            {"kkt_oracle", c.kkt_residual}};
    write_json(dir / "summary.json", summary);

    ojson cert = base_summary(cfg, "compare");
    cert["gains"] = gains_json(d.gains);
    cert["certificate"] = certificate_json(c, s.gm.fs);
    write_json(dir / "certificate.json", cert);
    write_trajectory_files(cfg, s, d, dir, hash);

    out << "compare: bid gap " << format_number(bid_gap) << ", multiplier gap " << format_number(multiplier_gap)
        << ", kkt distributed " << format_number(d.final_residuals.kkt) << ", kkt oracle "
        << format_number(c.kkt_residual) << "\n";
    if (!converged) return kExitNotConverged;
    return agree ? kExitOk : kExitCompareGap;
  });
}

}  // namespace gneflex
