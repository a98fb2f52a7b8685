#include "gneflex/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gneflex/error.hpp"

namespace gneflex {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) { throw ConfigError(path + ": " + what); }

// Tracks which keys of an object were read so leftovers can be rejected.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  const json* optional(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& required(const std::string& key) {
    const json* v = optional(key);
    if (!v) fail(path_, "missing required field '" + key + "'");
    return *v;
  }

  std::string child(const std::string& key) const { return path_ + "." + key; }
  const std::string& path() const { return path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(path_, "unknown field '" + it.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  return j.get<double>();
}

long as_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) fail(path, "expected an integer");
  return j.get<long>();
}

std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) fail(path, "expected a string");
  return j.get<std::string>();
}

bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) fail(path, "expected true or false");
  return j.get<bool>();
}

Eigen::VectorXd as_vector(const json& j, const std::string& path, long expected) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  if (expected >= 0 && static_cast<long>(j.size()) != expected) {
    fail(path, "expected " + std::to_string(expected) + " entries, got " + std::to_string(j.size()));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = as_number(j[i], path + "[" + std::to_string(i) + "]");
  return v;
}

Eigen::MatrixXd as_rows(const json& j, const std::string& path, long rows, long cols) {
  if (!j.is_array()) fail(path, "expected an array of arrays");
  if (static_cast<long>(j.size()) != rows) {
    fail(path, "expected " + std::to_string(rows) + " rows, got " + std::to_string(j.size()));
  }
  Eigen::MatrixXd m(rows, cols);
  for (long r = 0; r < rows; ++r) {
    m.row(r) = as_vector(j[static_cast<size_t>(r)], path + "[" + std::to_string(r) + "]", cols).transpose();
  }
  return m;
}

std::vector<Edge> parse_edges(const json& j, const std::string& path, int n) {
  ObjectReader obj(j, path);
  const json& list = obj.required("edges");
  const std::string lpath = obj.child("edges");
  if (!list.is_array()) fail(lpath, "expected an array");
  std::vector<Edge> edges;
  for (size_t i = 0; i < list.size(); ++i) {
    ObjectReader e(list[i], lpath + "[" + std::to_string(i) + "]");
    const long from = as_integer(e.required("from"), e.child("from"));
    const long to = as_integer(e.required("to"), e.child("to"));
    const std::string label = "edge " + std::to_string(from) + "-" + std::to_string(to);
    const json* w = e.optional("weight");
    if (!w) fail(e.path(), label + " has no weight");
    const double weight = as_number(*w, e.child("weight"));
    e.finish();
    if (from < 1 || from > n || to < 1 || to > n) fail(e.path(), label + " references an aggregator outside 1.." + std::to_string(n));
    edges.push_back({static_cast<int>(from - 1), static_cast<int>(to - 1), weight});
  }
  obj.finish();
  return edges;
}

ojson edges_to_json(const std::vector<Edge>& edges) {
  ojson list = ojson::array();
  for (const Edge& e : edges) list.push_back({{"from", e.u + 1}, {"to", e.v + 1}, {"weight", e.weight}});
  return ojson{{"edges", list}};
}

ojson vector_to_json(const Eigen::VectorXd& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

GainSpec parse_gains(const json& j, const std::string& path, int n) {
  GainSpec g;
  if (j.is_string()) {
    if (j.get<std::string>() != "auto") fail(path, "expected \"auto\" or an object");
    return g;
  }
  g.shorthand = false;
  ObjectReader obj(j, path);
  const std::string mode = as_string(obj.required("mode"), obj.child("mode"));
  if (const json* k = obj.optional("kappa")) g.kappa = as_number(*k, obj.child("kappa"));
  if (mode == "auto") {
    if (const json* s = obj.optional("safety")) g.safety = as_number(*s, obj.child("safety"));
    if (!(g.safety > 0.0 && g.safety < 1.0)) fail(obj.child("safety"), "must lie in (0, 1)");
  } else if (mode == "explicit") {
    g.mode = GainSpec::Mode::Explicit;
    if (!g.kappa) fail(path, "explicit gains need 'kappa'");
    g.tau = as_vector(obj.required("tau"), obj.child("tau"), n);
    g.upsilon = as_vector(obj.required("upsilon"), obj.child("upsilon"), n);
    g.rho = as_vector(obj.required("rho"), obj.child("rho"), n);
    g.delta = as_vector(obj.required("delta"), obj.child("delta"), n);
    g.eta = as_vector(obj.required("eta"), obj.child("eta"), n);
  } else {
    fail(obj.child("mode"), "expected \"auto\" or \"explicit\"");
  }
  obj.finish();
  return g;
}

SolverState parse_initial_state(const json& j, const std::string& path, int n, int m) {
  ObjectReader obj(j, path);
  const Eigen::VectorXd beta = as_vector(obj.required("beta"), obj.child("beta"), n);
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sigma = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, m);
  Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(n, m);
  if (const json* v = obj.optional("psi")) psi = as_vector(*v, obj.child("psi"), n);
  if (const json* v = obj.optional("sigma")) sigma = as_vector(*v, obj.child("sigma"), n);
  if (const json* v = obj.optional("z")) z = as_rows(*v, obj.child("z"), n, m);
  if (const json* v = obj.optional("lambda")) lambda = as_rows(*v, obj.child("lambda"), n, m);
  obj.finish();
  SolverState s;
  for (int k = 0; k < n; ++k) {
    s.agents.push_back({k, beta(k), psi(k), sigma(k), z.row(k).transpose(), lambda.row(k).transpose()});
  }
  return s;
}

SolverSpec parse_solver(const json& j, const std::string& path, int n, int m) {
  SolverSpec s;
  ObjectReader obj(j, path);
  if (const json* v = obj.optional("tol")) s.tol = as_number(*v, obj.child("tol"));
  if (const json* v = obj.optional("max_iter")) s.max_iter = as_integer(*v, obj.child("max_iter"));
  if (const json* v = obj.optional("record_stride")) s.record_stride = as_integer(*v, obj.child("record_stride"));
  if (const json* v = obj.optional("seed")) {
    if (!v->is_number_unsigned()) fail(obj.child("seed"), "expected a nonnegative integer");
    s.seed = v->get<std::uint64_t>();
  }
  if (const json* v = obj.optional("init")) {
    if (v->is_string()) {
      const std::string kind = v->get<std::string>();
      if (kind == "zero") {
        s.init = InitKind::Zero;
      } else if (kind == "random") {
        s.init = InitKind::Random;
      } else {
        fail(obj.child("init"), "expected \"zero\", \"random\" or an explicit state object");
      }
    } else {
      s.init = InitKind::Explicit;
      s.initial_state = parse_initial_state(*v, obj.child("init"), n, m);
    }
  }
  obj.finish();
  if (!(s.tol > 0.0)) fail(path + ".tol", "must be > 0");
  if (s.max_iter < 0) fail(path + ".max_iter", "must be >= 0");
  if (s.record_stride < 0) fail(path + ".record_stride", "must be >= 0");
  return s;
}

RunConfig parse_document(const json& doc) {
  RunConfig cfg;
  ObjectReader root(doc, "$");
  if (const json* v = root.optional("name")) cfg.name = as_string(*v, root.child("name"));

  ObjectReader market(root.required("market"), root.child("market"));
  MarketInstance& inst = cfg.market;
  inst.r = as_number(market.required("r_kwh"), market.child("r_kwh"));
  inst.alpha = as_number(market.required("alpha"), market.child("alpha"));
  inst.beta_min = as_number(market.required("beta_min_kwh"), market.child("beta_min_kwh"));
  inst.beta_max = as_number(market.required("beta_max_kwh"), market.child("beta_max_kwh"));

  const json& agents = market.required("agents");
  const std::string apath = market.child("agents");
  if (!agents.is_array()) fail(apath, "expected an array");
  for (size_t i = 0; i < agents.size(); ++i) {
    ObjectReader a(agents[i], apath + "[" + std::to_string(i) + "]");
    AggregatorParams p;
    p.a = as_number(a.required("a_per_kwh2"), a.child("a_per_kwh2"));
    p.b = as_number(a.required("b_per_kwh"), a.child("b_per_kwh"));
    p.e = as_number(a.required("e_kwh"), a.child("e_kwh"));
    p.xhat = as_number(a.required("xhat_kwh"), a.child("xhat_kwh"));
    a.finish();
    inst.agents.push_back(p);
  }
  const int n = inst.num_agents();
  if (n < 2) fail(apath, "at least 2 aggregators are required");

  std::vector<std::optional<Eigen::VectorXd>> line_pi;
  std::vector<double> fhat;
  if (const json* lines = market.optional("lines")) {
    const std::string lpath = market.child("lines");
    if (!lines->is_array()) fail(lpath, "expected an array");
    for (size_t i = 0; i < lines->size(); ++i) {
      ObjectReader l((*lines)[i], lpath + "[" + std::to_string(i) + "]");
      std::string name = "line" + std::to_string(i + 1);
      if (const json* v = l.optional("name")) name = as_string(*v, l.child("name"));
      fhat.push_back(as_number(l.required("fhat_kwh"), l.child("fhat_kwh")));
      std::optional<Eigen::VectorXd> row;
      if (const json* v = l.optional("pi")) row = as_vector(*v, l.child("pi"), n);
      l.finish();
      cfg.line_names.push_back(name);
      line_pi.push_back(row);
    }
  }
  market.finish();
  const int h = static_cast<int>(fhat.size());

  std::optional<Eigen::MatrixXd> np_pi;
  std::optional<std::vector<Edge>> np_edges;
  if (const json* np = root.optional("non_paper_data")) {
    ObjectReader obj(*np, root.child("non_paper_data"));
    if (const json* v = obj.optional("note")) cfg.supplemental_note = as_string(*v, obj.child("note"));
    if (const json* v = obj.optional("pi")) np_pi = as_rows(*v, obj.child("pi"), h, n);
    if (const json* v = obj.optional("graph")) np_edges = parse_edges(*v, obj.child("graph"), n);
    obj.finish();
  }

  inst.fhat = Eigen::Map<const Eigen::VectorXd>(fhat.data(), h);
  inst.pi = Eigen::MatrixXd::Zero(h, n);
  for (int l = 0; l < h; ++l) {
    const std::string where = "$.market.lines[" + std::to_string(l) + "]";
    if (line_pi[static_cast<size_t>(l)] && np_pi) fail(where, "Pi row given both inline and in non_paper_data");
    if (line_pi[static_cast<size_t>(l)]) {
      inst.pi.row(l) = line_pi[static_cast<size_t>(l)]->transpose();
    } else if (np_pi) {
      inst.pi.row(l) = np_pi->row(l);
    } else {
      fail(where, "missing 'pi' (inline or under non_paper_data.pi)");
    }
  }
  cfg.pi_supplemental = np_pi.has_value() && h > 0;

  const json* graph = root.optional("graph");
  if (graph && np_edges) fail("$.graph", "graph given both here and in non_paper_data");
  if (!graph && !np_edges) fail("$", "missing required field 'graph'");
  if (graph) {
    cfg.edges = parse_edges(*graph, root.child("graph"), n);
  } else {
    cfg.edges = *np_edges;
    cfg.graph_supplemental = true;
  }

  if (const json* g = root.optional("gains")) cfg.gains = parse_gains(*g, root.child("gains"), n);
  const int m = 2 * n + 2 * h;
  if (const json* s = root.optional("solver")) cfg.solver = parse_solver(*s, root.child("solver"), n, m);
  if (const json* o = root.optional("outputs")) {
    ObjectReader obj(*o, root.child("outputs"));
    if (const json* v = obj.optional("directory")) cfg.outputs.directory = as_string(*v, obj.child("directory"));
    if (const json* v = obj.optional("trajectory")) cfg.outputs.trajectory = as_bool(*v, obj.child("trajectory"));
    obj.finish();
  }
  root.finish();

  try {
    inst.validate();
    CommGraph::build(n, cfg.edges);
  } catch (const DisconnectedGraphError&) {
    throw;
  } catch (const Error& e) {
    fail("$", e.what());
  }
  return cfg;
}

ojson to_document(const RunConfig& cfg, bool include_outputs_directory) {
  const MarketInstance& inst = cfg.market;
  ojson doc;
  if (!cfg.name.empty()) doc["name"] = cfg.name;

  ojson market;
  market["r_kwh"] = inst.r;
  market["alpha"] = inst.alpha;
  market["beta_min_kwh"] = inst.beta_min;
  market["beta_max_kwh"] = inst.beta_max;
  ojson agents = ojson::array();
  for (const AggregatorParams& p : inst.agents) {
    agents.push_back({{"a_per_kwh2", p.a}, {"b_per_kwh", p.b}, {"e_kwh", p.e}, {"xhat_kwh", p.xhat}});
  }
  market["agents"] = agents;
  if (inst.num_lines() > 0) {
    ojson lines = ojson::array();
    for (int l = 0; l < inst.num_lines(); ++l) {
      ojson line;
      line["name"] = l < static_cast<int>(cfg.line_names.size()) ? cfg.line_names[static_cast<size_t>(l)]
                                                                 : "line" + std::to_string(l + 1);
      line["fhat_kwh"] = inst.fhat(l);
      if (!cfg.pi_supplemental) line["pi"] = vector_to_json(inst.pi.row(l).transpose());
      lines.push_back(line);
    }
    market["lines"] = lines;
  }
  doc["market"] = market;

  if (cfg.pi_supplemental || cfg.graph_supplemental || !cfg.supplemental_note.empty()) {
    ojson np;
    if (!cfg.supplemental_note.empty()) np["note"] = cfg.supplemental_note;
    if (cfg.pi_supplemental) {
      ojson rows = ojson::array();
      for (int l = 0; l < inst.num_lines(); ++l) rows.push_back(vector_to_json(inst.pi.row(l).transpose()));
      np["pi"] = rows;
    }
    if (cfg.graph_supplemental) np["graph"] = edges_to_json(cfg.edges);
    doc["non_paper_data"] = np;
  }
  if (!cfg.graph_supplemental) doc["graph"] = edges_to_json(cfg.edges);

  const GainSpec& g = cfg.gains;
  if (g.mode == GainSpec::Mode::Auto && g.shorthand && !g.kappa && g.safety == 0.95) {
    doc["gains"] = "auto";
  } else {
    ojson gj;
    gj["mode"] = g.mode == GainSpec::Mode::Auto ? "auto" : "explicit";
    if (g.kappa) gj["kappa"] = *g.kappa;
    if (g.mode == GainSpec::Mode::Auto) {
      gj["safety"] = g.safety;
    } else {
      gj["tau"] = vector_to_json(g.tau);
      gj["upsilon"] = vector_to_json(g.upsilon);
      gj["rho"] = vector_to_json(g.rho);
      gj["delta"] = vector_to_json(g.delta);
      gj["eta"] = vector_to_json(g.eta);
    }
    doc["gains"] = gj;
  }

  const SolverSpec& s = cfg.solver;
  ojson sj;
  sj["tol"] = s.tol;
  sj["max_iter"] = s.max_iter;
  sj["record_stride"] = s.record_stride;
  sj["seed"] = s.seed;
  if (s.init == InitKind::Explicit && s.initial_state) {
    ojson st;
    ojson beta = ojson::array(), psi = ojson::array(), sigma = ojson::array(), z = ojson::array(),
          lambda = ojson::array();
    for (const AgentLocal& a : s.initial_state->agents) {
      beta.push_back(a.beta);
      psi.push_back(a.psi);
      sigma.push_back(a.sigma);
      z.push_back(vector_to_json(a.z));
      lambda.push_back(vector_to_json(a.lambda));
    }
    st["beta"] = beta;
    st["psi"] = psi;
    st["sigma"] = sigma;
    st["z"] = z;
    st["lambda"] = lambda;
    sj["init"] = st;
  } else {
    sj["init"] = s.init == InitKind::Random ? "random" : "zero";
  }
  doc["solver"] = sj;

  ojson oj;
  if (include_outputs_directory) oj["directory"] = cfg.outputs.directory;
  oj["trajectory"] = cfg.outputs.trajectory;
  doc["outputs"] = oj;
  return doc;
}

}  // namespace

bool GainSpec::operator==(const GainSpec& o) const {
  return mode == o.mode && shorthand == o.shorthand && safety == o.safety && kappa == o.kappa &&
         same_entries(tau, o.tau) && same_entries(upsilon, o.upsilon) && same_entries(rho, o.rho) &&
         same_entries(delta, o.delta) && same_entries(eta, o.eta);
}

bool RunConfig::operator==(const RunConfig& o) const {
  const MarketInstance& a = market;
  const MarketInstance& b = o.market;
  const bool market_same = a.r == b.r && a.alpha == b.alpha && a.beta_min == b.beta_min && a.beta_max == b.beta_max &&
                           a.agents == b.agents && same_entries(a.pi, b.pi) && same_entries(a.fhat, b.fhat);
  return name == o.name && market_same && line_names == o.line_names && edges == o.edges &&
         pi_supplemental == o.pi_supplemental && graph_supplemental == o.graph_supplemental &&
         supplemental_note == o.supplemental_note && gains == o.gains && solver == o.solver && outputs == o.outputs;
}

RunConfig parse_config(std::string_view text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  try {
    return parse_document(doc);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::string config_to_json(const RunConfig& cfg) { return to_document(cfg, true).dump(2) + "\n"; }

void write_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path + ": cannot write file");
  out << config_to_json(cfg);
}

std::string config_hash(const RunConfig& cfg) {
  // The output directory is excluded so relocated runs stay byte-identical.
  const std::string canonical = to_document(cfg, false).dump();
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

GainSet resolve_gains(const RunConfig& cfg, const FeasibleSet& fs, const CommGraph& g, bool force) {
  const MarketInstance& inst = cfg.market;
  const GainSpec& spec = cfg.gains;
  const double kappa = spec.kappa ? *spec.kappa : kappa_interval(inst).midpoint();
  const CocoercivityReport rep = cocoercivity_constants(inst, g, kappa);
  if (spec.mode == GainSpec::Mode::Auto) return default_gains(rep, fs, g, spec.safety);

  GainSet gains;
  gains.kappa = kappa;
  gains.eps = rep.eps;
  gains.tau = spec.tau;
  gains.upsilon = spec.upsilon;
  gains.rho = spec.rho;
  gains.delta = spec.delta;
  gains.eta = spec.eta;
  gains = finalize_gains(std::move(gains), fs, g);
  if (!force && !gains_are_admissible(gains, fs, g)) {
    throw ConfigError("explicit gains violate Phi - I/(2 eps) > 0; pass --force to run anyway");
  }
  return gains;
}

}  // namespace gneflex
