#include "scenario.hpp"

#include <fstream>
#include <memory>
#include <set>
#include <sstream>

namespace hylb::cli {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

void expect_keys(const YAML::Node& n, const std::set<std::string>& allowed, const std::string& where) {
  if (!n.IsMap()) config_error(where + " must be a mapping");
  for (const auto& kv : n) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + where);
  }
}

template <class T>
T read(const YAML::Node& n, const std::string& where) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    config_error("bad value for " + where);
  }
}

template <class T>
void read_into(const YAML::Node& parent, const char* key, T& out, const std::string& where) {
  if (parent[key]) out = read<T>(parent[key], where + "." + key);
}

template <class T>
void read_into(const YAML::Node& parent, const char* key, std::optional<T>& out, const std::string& where) {
  if (parent[key]) out = read<T>(parent[key], where + "." + key);
}

Vector read_vector(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence()) config_error(where + " must be a list of numbers");
  const auto v = read<std::vector<double>>(n, where);
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<Vector> read_points(const YAML::Node& n, const std::string& where) {
  if (!n.IsSequence()) config_error(where + " must be a list of points");
  std::vector<Vector> out;
  for (std::size_t i = 0; i < n.size(); ++i) out.push_back(read_vector(n[i], where + "[" + std::to_string(i) + "]"));
  return out;
}

AxisBox read_box(const YAML::Node& n, const std::string& where) {
  expect_keys(n, {"lo", "hi"}, where);
  if (!n["lo"] || !n["hi"]) config_error(where + " needs lo and hi");
  AxisBox b{read_vector(n["lo"], where + ".lo"), read_vector(n["hi"], where + ".hi")};
  if (b.lo.size() != b.hi.size()) config_error(where + ": lo and hi differ in length");
  return b;
}

YAML::Node vector_node(const Vector& v) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (Eigen::Index i = 0; i < v.size(); ++i) n.push_back(v[i]);
  n.SetStyle(YAML::EmitterStyle::Flow);
  return n;
}

YAML::Node box_node(const AxisBox& b) {
  YAML::Node n;
  n["lo"] = vector_node(b.lo);
  n["hi"] = vector_node(b.hi);
  return n;
}

YAML::Node points_node(const std::vector<Vector>& pts) {
  YAML::Node n(YAML::NodeType::Sequence);
  for (const auto& p : pts) n.push_back(vector_node(p));
  return n;
}

// ------------------------------------------------------------------ sets

SetDecl read_set(const YAML::Node& n, const std::string& where) {
  if (!n.IsMap() || n.size() != 1) config_error(where + " must be a mapping with exactly one set kind");
  const auto kind = n.begin()->first.as<std::string>();
  const YAML::Node body = n.begin()->second;
  const std::string at = where + "." + kind;
  SetDecl d;
  d.kind = kind;
  if (kind == "ball") {
    expect_keys(body, {"center", "radius"}, at);
    if (!body["center"] || !body["radius"]) config_error(at + " needs center and radius");
    d.center = read_vector(body["center"], at + ".center");
    d.radius = read<double>(body["radius"], at + ".radius");
  } else if (kind == "box") {
    const AxisBox b = read_box(body, at);
    d.lo = b.lo;
    d.hi = b.hi;
  } else if (kind == "whole") {
    d.dim = read<int>(body, at);
  } else if (kind == "empty") {
  } else if (kind == "half_spaces") {
    if (!body.IsSequence()) config_error(at + " must be a list of {normal, offset}");
    for (std::size_t i = 0; i < body.size(); ++i) {
      const std::string fi = at + "[" + std::to_string(i) + "]";
      expect_keys(body[i], {"normal", "offset"}, fi);
      if (!body[i]["normal"] || !body[i]["offset"]) config_error(fi + " needs normal and offset");
      d.faces.emplace_back(read_vector(body[i]["normal"], fi + ".normal"), read<double>(body[i]["offset"], fi + ".offset"));
    }
  } else if (kind == "union" || kind == "intersection") {
    if (!body.IsSequence()) config_error(at + " must be a list of sets");
    for (std::size_t i = 0; i < body.size(); ++i) d.parts.push_back(read_set(body[i], at + "[" + std::to_string(i) + "]"));
  } else if (kind == "complement") {
    d.parts.push_back(read_set(body, at));
  } else if (kind == "inflate") {
    expect_keys(body, {"set", "radius"}, at);
    if (!body["set"] || !body["radius"]) config_error(at + " needs set and radius");
    d.parts.push_back(read_set(body["set"], at + ".set"));
    d.radius = read<double>(body["radius"], at + ".radius");
  } else if (kind == "implicit") {
    expect_keys(body, {"expr", "bbox"}, at);
    if (!body["expr"] || !body["bbox"]) config_error(at + " needs expr and bbox");
    d.expr = read<std::string>(body["expr"], at + ".expr");
    const AxisBox b = read_box(body["bbox"], at + ".bbox");
    d.lo = b.lo;
    d.hi = b.hi;
  } else {
    config_error("unknown set kind '" + kind + "' in " + where);
  }
  return d;
}

YAML::Node set_node(const SetDecl& d) {
  YAML::Node body;
  if (d.kind == "ball") {
    body["center"] = vector_node(d.center);
    body["radius"] = d.radius;
  } else if (d.kind == "box") {
    body = box_node(AxisBox{d.lo, d.hi});
  } else if (d.kind == "whole") {
    body = d.dim;
  } else if (d.kind == "empty") {
    body = YAML::Node(YAML::NodeType::Map);
  } else if (d.kind == "half_spaces") {
    body = YAML::Node(YAML::NodeType::Sequence);
    for (const auto& [a, b] : d.faces) {
      YAML::Node f;
      f["normal"] = vector_node(a);
      f["offset"] = b;
      body.push_back(f);
    }
  } else if (d.kind == "union" || d.kind == "intersection") {
    body = YAML::Node(YAML::NodeType::Sequence);
    for (const auto& p : d.parts) body.push_back(set_node(p));
  } else if (d.kind == "complement") {
    body = set_node(d.parts.at(0));
  } else if (d.kind == "inflate") {
    body["set"] = set_node(d.parts.at(0));
    body["radius"] = d.radius;
  } else if (d.kind == "implicit") {
    body["expr"] = d.expr;
    body["bbox"] = box_node(AxisBox{d.lo, d.hi});
  }
  YAML::Node n;
  n[d.kind] = body;
  return n;
}

// ------------------------------------------------------------------ sections

SystemDecl read_system(const YAML::Node& n) {
  SystemDecl s;
  if (n["example"]) {
    expect_keys(n, {"example", "params", "constants"}, "system");
    s.example = read<std::string>(n["example"], "system.example");
    read_into(n, "constants", s.constants, "system");
    if (s.example != "bouncing-ball" && s.example != "moore-greitzer") {
      config_error("unknown example '" + s.example + "'");
    }
    if (n["params"]) {
      expect_keys(n["params"], {"a", "restitution", "x0", "unsafe_height", "target_height", "settle_deadline", "lc",
                                "iota", "theta", "a_coef", "zeta", "r", "unsafe_center", "unsafe_half_width", "sigma",
                                "gamma0", "period", "v_max", "gamma_min", "gamma_max", "gamma_rate", "horizon"},
                  "system.params");
      for (const auto& kv : n["params"]) s.params[kv.first.as<std::string>()] = YAML::Clone(kv.second);
    }
    return s;
  }
  expect_keys(n, {"variables", "constants", "flow_set", "flow", "jump_set", "jump", "bounds"}, "system");
  for (const char* key : {"variables", "flow_set", "flow", "jump_set", "jump", "bounds"}) {
    if (!n[key]) config_error(std::string("inline system needs system.") + key);
  }
  s.variables = read<std::vector<std::string>>(n["variables"], "system.variables");
  read_into(n, "constants", s.constants, "system");
  s.flow_set = read_set(n["flow_set"], "system.flow_set");
  s.jump_set = read_set(n["jump_set"], "system.jump_set");
  s.flow = read<std::vector<std::string>>(n["flow"], "system.flow");
  s.jump = read<std::vector<std::string>>(n["jump"], "system.jump");
  s.bounds = read_box(n["bounds"], "system.bounds");
  return s;
}

YAML::Node system_node(const SystemDecl& s) {
  YAML::Node n;
  if (!s.example.empty()) {
    n["example"] = s.example;
    for (const auto& [k, v] : s.constants) n["constants"][k] = v;
    if (!s.params.empty()) {
      for (const auto& [k, v] : s.params) n["params"][k] = v;
    }
    return n;
  }
  n["variables"] = s.variables;
  n["variables"].SetStyle(YAML::EmitterStyle::Flow);
  for (const auto& [k, v] : s.constants) n["constants"][k] = v;
  n["flow_set"] = set_node(s.flow_set);
  n["flow"] = s.flow;
  n["jump_set"] = set_node(s.jump_set);
  n["jump"] = s.jump;
  if (s.bounds) n["bounds"] = box_node(*s.bounds);
  return n;
}

InitialDecl read_initial(const YAML::Node& n, const std::string& where) {
  InitialDecl d;
  if (n.IsSequence()) {
    d.points = read_points(n, where);
  } else {
    d.set = read_set(n, where);
  }
  return d;
}

YAML::Node initial_node(const InitialDecl& d) { return d.set ? set_node(*d.set) : points_node(d.points); }

SpecDecl read_spec(const YAML::Node& n) {
  expect_keys(n, {"kind", "x0", "unsafe", "target", "attractor", "settle_deadline", "eps", "bisection_steps"}, "spec");
  SpecDecl s;
  s.kind = read<std::string>(n["kind"], "spec.kind");
  if (s.kind != "ras" && s.kind != "stability-safety") config_error("spec.kind must be ras or stability-safety");
  if (!n["x0"] || !n["unsafe"]) config_error("spec needs x0 and unsafe");
  s.x0 = read_initial(n["x0"], "spec.x0");
  s.unsafe = read_set(n["unsafe"], "spec.unsafe");
  if (s.kind == "ras") {
    if (!n["target"]) config_error("ras spec needs a target");
    s.target = read_set(n["target"], "spec.target");
  } else {
    if (!n["attractor"]) config_error("stability-safety spec needs an attractor");
    s.attractor = read_set(n["attractor"], "spec.attractor");
  }
  if (n["target"] && s.kind != "ras") s.target = read_set(n["target"], "spec.target");
  if (n["attractor"] && s.kind == "ras") s.attractor = read_set(n["attractor"], "spec.attractor");
  read_into(n, "settle_deadline", s.settle_deadline, "spec");
  read_into(n, "eps", s.eps, "spec");
  read_into(n, "bisection_steps", s.bisection_steps, "spec");
  return s;
}

YAML::Node spec_node(const SpecDecl& s) {
  YAML::Node n;
  n["kind"] = s.kind;
  n["x0"] = initial_node(s.x0);
  n["unsafe"] = set_node(s.unsafe);
  n["target"] = set_node(s.target);
  n["attractor"] = set_node(s.attractor);
  n["settle_deadline"] = s.settle_deadline;
  n["eps"] = s.eps;
  n["eps"].SetStyle(YAML::EmitterStyle::Flow);
  n["bisection_steps"] = s.bisection_steps;
  return n;
}

CertDecl read_certs(const YAML::Node& n) {
  expect_keys(n, {"V", "B", "rho", "region", "omega"}, "certificates");
  CertDecl c;
  read_into(n, "V", c.V, "certificates");
  read_into(n, "B", c.B, "certificates");
  read_into(n, "rho", c.rho, "certificates");
  if (n["region"]) c.region = read_set(n["region"], "certificates.region");
  if (n["omega"]) {
    expect_keys(n["omega"], {"target", "domain"}, "certificates.omega");
    if (!n["omega"]["target"] || !n["omega"]["domain"]) config_error("certificates.omega needs target and domain");
    c.omega_target = read_set(n["omega"]["target"], "certificates.omega.target");
    c.omega_domain = read_set(n["omega"]["domain"], "certificates.omega.domain");
  }
  return c;
}

YAML::Node certs_node(const CertDecl& c) {
  YAML::Node n(YAML::NodeType::Map);
  if (!c.V.empty()) n["V"] = c.V;
  if (!c.B.empty()) n["B"] = c.B;
  if (!c.rho.empty()) n["rho"] = c.rho;
  if (c.region) n["region"] = set_node(*c.region);
  if (c.omega_target) {
    n["omega"]["target"] = set_node(*c.omega_target);
    n["omega"]["domain"] = set_node(*c.omega_domain);
  }
  return n;
}

SimDecl read_sim(const YAML::Node& n) {
  expect_keys(n, {"step", "horizon", "max_jumps", "event_tol", "priority", "disturbance", "zeno_gap", "zeno_snap",
                  "workers"},
              "sim");
  SimDecl s;
  read_into(n, "step", s.step, "sim");
  read_into(n, "horizon", s.horizon, "sim");
  read_into(n, "max_jumps", s.max_jumps, "sim");
  read_into(n, "event_tol", s.event_tol, "sim");
  read_into(n, "priority", s.priority, "sim");
  read_into(n, "disturbance", s.disturbance, "sim");
  read_into(n, "zeno_gap", s.zeno_gap, "sim");
  read_into(n, "zeno_snap", s.zeno_snap, "sim");
  read_into(n, "workers", s.workers, "sim");
  if (s.priority != "jump-first" && s.priority != "flow-first") config_error("sim.priority must be jump-first or flow-first");
  if (s.disturbance != "none" && s.disturbance != "random") config_error("sim.disturbance must be none or random");
  if (s.workers < 1) config_error("sim.workers must be >= 1");
  return s;
}

YAML::Node sim_node(const SimDecl& s) {
  YAML::Node n(YAML::NodeType::Map);
  if (s.step) n["step"] = *s.step;
  if (s.horizon) n["horizon"] = *s.horizon;
  if (s.max_jumps) n["max_jumps"] = *s.max_jumps;
  if (s.event_tol) n["event_tol"] = *s.event_tol;
  n["priority"] = s.priority;
  n["disturbance"] = s.disturbance;
  if (s.zeno_gap) n["zeno_gap"] = *s.zeno_gap;
  if (!s.zeno_snap.empty()) n["zeno_snap"] = s.zeno_snap;
  n["workers"] = s.workers;
  return n;
}

CheckDecl read_check(const YAML::Node& n) {
  expect_keys(n, {"grid", "n_init", "n_dist", "budget", "condition", "invariant_set"}, "check");
  CheckDecl c;
  if (const auto g = n["grid"]) {
    expect_keys(g, {"counts", "box", "refinement_depth", "refine_top", "exclude_radius", "tol"}, "check.grid");
    read_into(g, "counts", c.counts, "check.grid");
    if (g["box"]) c.box = read_box(g["box"], "check.grid.box");
    read_into(g, "refinement_depth", c.refinement_depth, "check.grid");
    read_into(g, "refine_top", c.refine_top, "check.grid");
    read_into(g, "exclude_radius", c.exclude_radius, "check.grid");
    read_into(g, "tol", c.tol, "check.grid");
  }
  read_into(n, "n_init", c.n_init, "check");
  read_into(n, "n_dist", c.n_dist, "check");
  read_into(n, "budget", c.budget, "check");
  read_into(n, "condition", c.condition, "check");
  if (n["invariant_set"]) c.invariant_set = read_set(n["invariant_set"], "check.invariant_set");
  if (c.n_init < 1 || c.n_dist < 1) config_error("check.n_init and check.n_dist must be >= 1");
  return c;
}

YAML::Node check_node(const CheckDecl& c) {
  YAML::Node n;
  YAML::Node g(YAML::NodeType::Map);
  if (!c.counts.empty()) {
    g["counts"] = c.counts;
    g["counts"].SetStyle(YAML::EmitterStyle::Flow);
  }
  if (c.box) g["box"] = box_node(*c.box);
  g["refinement_depth"] = c.refinement_depth;
  g["refine_top"] = c.refine_top;
  if (c.exclude_radius) g["exclude_radius"] = *c.exclude_radius;
  g["tol"] = c.tol;
  n["grid"] = g;
  n["n_init"] = c.n_init;
  n["n_dist"] = c.n_dist;
  n["budget"] = c.budget;
  if (!c.condition.empty()) n["condition"] = c.condition;
  if (c.invariant_set) n["invariant_set"] = set_node(*c.invariant_set);
  return n;
}

// ------------------------------------------------------------------ compile helpers

using Consts = std::map<std::string, double>;

std::shared_ptr<const Expression> make_expr(const std::string& text, const std::vector<std::string>& vars,
                                            const Consts& consts) {
  return std::make_shared<const Expression>(text, vars, consts);
}

ScalarField field(const std::string& text, const std::vector<std::string>& vars, const Consts& consts) {
  auto e = make_expr(text, vars, consts);
  return ScalarField{[e](const Vector& x) { return (*e)(x); }, [e](const Vector& x) { return e->gradient(x); }};
}

FlowMap vector_field(const std::vector<std::string>& exprs, const std::vector<std::string>& vars,
                     const Consts& consts) {
  std::vector<std::shared_ptr<const Expression>> parts;
  for (const auto& t : exprs) parts.push_back(make_expr(t, vars, consts));
  return [parts](const Vector& x) {
    Vector out(static_cast<Eigen::Index>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i) out[static_cast<Eigen::Index>(i)] = (*parts[i])(x);
    return out;
  };
}

void require_size(const Vector& v, std::size_t n, const std::string& what) {
  if (static_cast<std::size_t>(v.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, what + " has " + std::to_string(v.size()) + " entries, expected " +
                                                  std::to_string(n));
  }
}

double param_double(const SystemDecl& s, const std::string& key, double fallback) {
  const auto it = s.params.find(key);
  return it == s.params.end() ? fallback : read<double>(it->second, "system.params." + key);
}

Vector param_vector(const SystemDecl& s, const std::string& key, const Vector& fallback) {
  const auto it = s.params.find(key);
  return it == s.params.end() ? fallback : read_vector(it->second, "system.params." + key);
}

void reject_params(const SystemDecl& s, const std::set<std::string>& allowed) {
  for (const auto& [k, v] : s.params) {
    if (!allowed.count(k)) config_error("parameter '" + k + "' does not apply to example " + s.example);
  }
}

}  // namespace

BouncingBallParams ball_params(const SystemDecl& s) {
  reject_params(s, {"a", "restitution", "x0", "unsafe_height", "target_height", "settle_deadline", "horizon"});
  BouncingBallParams p;
  p.a = param_double(s, "a", p.a);
  p.restitution = param_double(s, "restitution", p.restitution);
  p.x0 = param_vector(s, "x0", p.x0);
  require_size(p.x0, 3, "system.params.x0");
  p.unsafe_height = param_double(s, "unsafe_height", p.unsafe_height);
  p.target_height = param_double(s, "target_height", p.target_height);
  p.settle_deadline = param_double(s, "settle_deadline", p.settle_deadline);
  return p;
}

MooreGreitzerParams mg_params(const SystemDecl& s) {
  reject_params(s, {"lc", "iota", "theta", "a_coef", "zeta", "r", "unsafe_center", "unsafe_half_width", "sigma",
                    "gamma0", "period", "v_max", "gamma_min", "gamma_max", "gamma_rate", "horizon"});
  MooreGreitzerParams p;
  p.lc = param_double(s, "lc", p.lc);
  p.iota = param_double(s, "iota", p.iota);
  p.theta = param_double(s, "theta", p.theta);
  p.a_coef = param_double(s, "a_coef", p.a_coef);
  p.zeta = param_vector(s, "zeta", p.zeta);
  p.r = param_double(s, "r", p.r);
  p.unsafe_center = param_vector(s, "unsafe_center", p.unsafe_center);
  p.unsafe_half_width = param_double(s, "unsafe_half_width", p.unsafe_half_width);
  p.sigma = param_double(s, "sigma", p.sigma);
  p.gamma0 = param_double(s, "gamma0", p.gamma0);
  p.period = param_double(s, "period", p.period);
  p.v_max = param_double(s, "v_max", p.v_max);
  p.gamma_min = param_double(s, "gamma_min", p.gamma_min);
  p.gamma_max = param_double(s, "gamma_max", p.gamma_max);
  p.gamma_rate = param_double(s, "gamma_rate", p.gamma_rate);
  p.horizon = param_double(s, "horizon", p.horizon);
  require_size(p.zeta, 2, "system.params.zeta");
  require_size(p.unsafe_center, 2, "system.params.unsafe_center");
  if (!(p.period > 0.0)) throw Error(ErrorCode::InvalidArgument, "period must be > 0");
  return p;
}

Scenario parse_scenario(const YAML::Node& root) {
  if (!root || !root.IsMap()) config_error("scenario must be a mapping");
  expect_keys(root, {"system", "delta", "x0", "sim", "spec", "certificates", "check", "seed"}, "scenario");
  if (!root["system"]) config_error("scenario needs a system section");
  Scenario s;
  s.system = read_system(root["system"]);
  read_into(root, "delta", s.delta, "scenario");
  if (!(s.delta >= 0.0)) config_error("delta must be >= 0");
  if (root["x0"]) s.x0 = read_points(root["x0"], "x0");
  if (root["sim"]) s.sim = read_sim(root["sim"]);
  if (root["spec"]) s.spec = read_spec(root["spec"]);
  if (root["certificates"]) s.certificates = read_certs(root["certificates"]);
  if (root["check"]) s.check = read_check(root["check"]);
  read_into(root, "seed", s.seed, "scenario");
  return s;
}

YAML::Node scenario_to_yaml(const Scenario& s) {
  YAML::Node n;
  n["system"] = system_node(s.system);
  n["delta"] = s.delta;
  if (!s.x0.empty()) n["x0"] = points_node(s.x0);
  n["sim"] = sim_node(s.sim);
  if (!s.spec.kind.empty()) n["spec"] = spec_node(s.spec);
  const YAML::Node certs = certs_node(s.certificates);
  if (certs.size() > 0) n["certificates"] = certs;
  n["check"] = check_node(s.check);
  if (s.seed) n["seed"] = *s.seed;
  return n;
}

std::string emit_scenario(const Scenario& s) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << scenario_to_yaml(s);
  return std::string(out.c_str()) + "\n";
}

void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) config_error("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    config_error("override '" + key + "': " + e.what());
  }
  std::vector<std::string> path;
  std::stringstream ss(key);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) config_error("override key '" + key + "' has an empty segment");
    path.push_back(part);
  }
  // Node handles alias their storage, so walking by assignment edits root in place.
  std::vector<YAML::Node> trail{root};
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    YAML::Node child = trail.back()[path[i]];
    if (!child.IsDefined() || child.IsNull()) {
      trail.back()[path[i]] = YAML::Node(YAML::NodeType::Map);
      child = trail.back()[path[i]];
    } else if (!child.IsMap()) {
      config_error("override '" + key + "': '" + path[i] + "' is not a section");
    }
    trail.push_back(child);
  }
  trail.back()[path.back()] = value;
}

namespace {

YAML::Node load_with_overrides(YAML::Node root, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) apply_override(root, o);
  return root;
}

}  // namespace

Scenario load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) config_error("cannot read scenario '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return scenario_from_text(buf.str(), overrides);
}

Scenario scenario_from_text(const std::string& text, const std::vector<std::string>& overrides) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    config_error(std::string("malformed YAML: ") + e.what());
  }
  return parse_scenario(load_with_overrides(root, overrides));
}

SetRegion build_set(const SetDecl& d, const std::vector<std::string>& vars, const Consts& consts) {
  if (d.kind == "ball") return SetRegion::ball(d.center, d.radius);
  if (d.kind == "box") return SetRegion::box(d.lo, d.hi);
  if (d.kind == "whole") return SetRegion::whole(d.dim);
  if (d.kind == "empty") return SetRegion::empty();
  if (d.kind == "half_spaces") {
    std::vector<HalfSpace> faces;
    for (const auto& [a, b] : d.faces) faces.push_back(HalfSpace{a, b});
    return SetRegion::half_spaces(std::move(faces));
  }
  std::vector<SetRegion> parts;
  for (const auto& p : d.parts) parts.push_back(build_set(p, vars, consts));
  if (d.kind == "union") return SetRegion::unite(std::move(parts));
  if (d.kind == "intersection") return SetRegion::intersect(std::move(parts));
  if (d.kind == "complement") return SetRegion::complement(parts.at(0));
  if (d.kind == "inflate") return SetRegion::inflated(parts.at(0), d.radius);
  if (d.kind == "implicit") {
    if (static_cast<std::size_t>(d.lo.size()) != vars.size()) {
      throw Error(ErrorCode::DimensionMismatch, "implicit set bbox differs from the number of variables");
    }
    auto e = make_expr(d.expr, vars, consts);
    return SetRegion::implicit([e](const Vector& x) { return (*e)(x) <= 0.0; }, AxisBox{d.lo, d.hi});
  }
  config_error("unknown set kind '" + d.kind + "'");
}

namespace {

/// Lifts a plant-space set to the sample-hold state (x, u, tau).
SetRegion lift_box(const AxisBox& b, int extra) {
  const int n = b.dim();
  Vector lo = Vector::Constant(n + extra, -kInf), hi = Vector::Constant(n + extra, kInf);
  lo.head(n) = b.lo;
  hi.head(n) = b.hi;
  return SetRegion::box(lo, hi);
}

SetRegion lift_ball(const Vector& c, double r, int extra) {
  const Eigen::Index n = c.size();
  AxisBox bb{Vector::Constant(n + extra, -kInf), Vector::Constant(n + extra, kInf)};
  bb.lo.head(n) = c.array() - r;
  bb.hi.head(n) = c.array() + r;
  return SetRegion::implicit([c, r, n](const Vector& z) { return (z.head(n) - c).norm() <= r; }, bb,
                             [c, r, n](const Vector& z) { return (z.head(n) - c).norm() - r; });
}

void example_system(const Scenario& s, Compiled& out) {
  if (s.system.example == "bouncing-ball") {
    const auto ball = bouncing_ball(ball_params(s.system));
    out.variables = {"x", "y", "z"};
    out.system = ball.system;
    out.sim = ball.sim;
    out.sim.horizon = param_double(s.system, "horizon", ball.sim.horizon);
    out.x0 = {ball.params.x0};
    out.ras = ball.spec;
    out.stability = ball.stability;
    out.cert = ball.cert;
    out.grid.counts = {3, 31, 31};
    out.grid.box = ball.operating_box;
    out.grid.exclude_radius = 0.05;
    return;
  }
  const auto mg = moore_greitzer(mg_params(s.system));
  out.variables = {"phi", "psi", "v", "gamma", "tau"};
  const DecisionFn decide = mg.decision_fn();
  out.system = augment_sample_hold(mg.plant, [decide](const Vector& x, const Vector& up) { return decide(x, up).u; },
                                   mg.hold);
  out.sim.horizon = mg.params.horizon;
  out.sim.max_jumps = static_cast<int>(mg.params.horizon / mg.params.period) + 10;
  Vector z0(5);
  z0 << mg_equilibrium(mg.params.gamma0, mg.params), 0.0, mg.params.gamma0, mg.params.period;
  out.x0 = {z0};
  const Vector c = mg.params.unsafe_center;
  const double r = mg.params.unsafe_half_width;
  // Every decision is a jump, so the deadline in t + j covers the jump budget too.
  out.ras = RASSpec{std::vector<Vector>{z0}, lift_box(AxisBox{c.array() - r, c.array() + r}, 3),
                    lift_ball(mg.params.zeta, mg.params.r, 3), out.sim.horizon + out.sim.max_jumps};
}

}  // namespace

Compiled compile(const Scenario& s) {
  Compiled out;
  const auto& sys = s.system;
  Consts consts = sys.constants;
  if (!sys.example.empty()) {
    example_system(s, out);
  } else {
    const std::size_t n = sys.variables.size();
    if (n == 0) config_error("system.variables is empty");
    if (sys.flow.size() != n || sys.jump.size() != n) {
      throw Error(ErrorCode::DimensionMismatch, "flow and jump need one expression per variable");
    }
    out.variables = sys.variables;
    require_size(sys.bounds->lo, n, "system.bounds");
    const auto dim = static_cast<int>(n);
    FlowMap F = vector_field(sys.flow, out.variables, consts);
    FlowMap G1 = vector_field(sys.jump, out.variables, consts);
    JumpMap G = [G1](const Vector& x) { return std::vector<Vector>{G1(x)}; };
    out.system = make_system(dim, build_set(sys.flow_set, out.variables, consts), std::move(F),
                             build_set(sys.jump_set, out.variables, consts), std::move(G), *sys.bounds);
  }
  const auto& vars = out.variables;
  const int dim = out.system.dim;

  if (s.delta > 0.0) out.system = perturb(out.system, s.delta);

  const auto& sd = s.sim;
  if (sd.step) out.sim.step = *sd.step;
  if (sd.horizon) out.sim.horizon = *sd.horizon;
  if (sd.max_jumps) out.sim.max_jumps = *sd.max_jumps;
  if (sd.event_tol) out.sim.event_tol = *sd.event_tol;
  if (sd.zeno_gap) out.sim.zeno_gap = *sd.zeno_gap;
  out.sim.priority = sd.priority == "flow-first" ? Priority::FlowFirst : Priority::JumpFirst;
  out.sim.workers = sd.workers;
  out.sim.seed = s.seed.value_or(0);
  if (sd.disturbance == "random") out.sim.disturbance = Disturbance::random_ball(s.seed.value_or(0));
  if (!sd.zeno_snap.empty()) {
    if (sd.zeno_snap.size() != static_cast<std::size_t>(dim)) {
      throw Error(ErrorCode::DimensionMismatch, "sim.zeno_snap needs one expression per variable");
    }
    out.sim.zeno_snap = vector_field(sd.zeno_snap, vars, consts);
  }

  if (!s.x0.empty()) {
    for (const auto& p : s.x0) require_size(p, static_cast<std::size_t>(dim), "x0 point");
    out.x0 = s.x0;
  }

  if (!s.spec.kind.empty()) {
    const auto& sp = s.spec;
    InitialSet x0;
    if (sp.x0.set) {
      x0 = build_set(*sp.x0.set, vars, consts);
    } else {
      for (const auto& p : sp.x0.points) require_size(p, static_cast<std::size_t>(dim), "spec.x0 point");
      x0 = sp.x0.points;
    }
    const SetRegion unsafe = build_set(sp.unsafe, vars, consts);
    if (sp.kind == "ras") {
      out.ras = RASSpec{x0, unsafe, build_set(sp.target, vars, consts), sp.settle_deadline};
      out.stability.reset();
      if (sp.attractor.kind != "empty") {
        out.stability = StabSafeSpec{x0, unsafe, build_set(sp.attractor, vars, consts), sp.eps, sp.bisection_steps};
      }
    } else {
      out.stability = StabSafeSpec{x0, unsafe, build_set(sp.attractor, vars, consts), sp.eps, sp.bisection_steps};
      out.ras.reset();
      if (sp.target.kind != "empty") {
        out.ras = RASSpec{x0, unsafe, build_set(sp.target, vars, consts), sp.settle_deadline};
      }
    }
  }

  const auto& cd = s.certificates;
  if (!cd.V.empty()) {
    CertificatePair cert;
    cert.V = field(cd.V, vars, consts);
    if (!cd.B.empty()) cert.B = field(cd.B, vars, consts);
    if (!cd.rho.empty()) {
      auto e = make_expr(cd.rho, {"r"}, consts);
      cert.rho = [e](double r) {
        Vector v(1);
        v[0] = r;
        return (*e)(v);
      };
    }
    cert.region = cd.region ? build_set(*cd.region, vars, consts) : SetRegion::box(out.system.bounds);
    out.cert = std::move(cert);
  } else if (!cd.B.empty() || !cd.rho.empty()) {
    config_error("certificates.B and certificates.rho need certificates.V");
  } else if (out.cert && cd.region) {
    out.cert->region = build_set(*cd.region, vars, consts);
  }
  if (cd.omega_target) {
    if (!out.cert) config_error("certificates.omega needs certificates.V");
    out.cert->omega = make_proper_indicator(build_set(*cd.omega_target, vars, consts),
                                            build_set(*cd.omega_domain, vars, consts));
  }

  const auto& ck = s.check;
  if (!ck.counts.empty()) out.grid.counts = ck.counts;
  if (out.grid.counts.empty()) out.grid.counts.assign(static_cast<std::size_t>(dim), 21);
  if (out.grid.counts.size() != static_cast<std::size_t>(dim)) {
    throw Error(ErrorCode::DimensionMismatch, "check.grid.counts needs one count per variable");
  }
  if (ck.box) out.grid.box = ck.box;
  out.grid.refinement_depth = ck.refinement_depth;
  out.grid.refine_top = ck.refine_top;
  if (ck.exclude_radius) out.grid.exclude_radius = *ck.exclude_radius;
  out.grid.tol = ck.tol;
  if (ck.invariant_set) out.invariant_set = build_set(*ck.invariant_set, vars, consts);
  return out;
}

bool random_mode_active(const Scenario& s, const std::string& mode) {
  if (s.delta > 0.0 && s.sim.disturbance == "random") return true;
  if (mode == "falsify" || mode == "stability-safety" || mode == "invariance") return true;
  if (mode == "ras" && (s.check.n_dist > 1 || s.spec.x0.set)) return true;
  return false;
}

}  // namespace hylb::cli
