#include "commands.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <unistd.h>

namespace hylb::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void write_atomic(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::ConfigError, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::ConfigError, "write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorCode::ConfigError, "cannot rename onto '" + path.string() + "': " + ec.message());
  }
}

int exit_code_for(ErrorCode code) { return code == ErrorCode::BadInitialCondition ? 2 : kExitError; }

std::string error_json(const std::string& code, const std::string& message) {
  return json{{"error", code}, {"message", message}}.dump();
}

namespace {

int verdict_exit(Verdict v) {
  switch (v) {
    case Verdict::Pass: return 0;
    case Verdict::Fail: return 1;
    case Verdict::Inconclusive: return 3;
  }
  return kExitError;
}

std::string verdict_str(Verdict v) { return std::string(to_string(v)); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) {
    os_ << std::setprecision(17);
    for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
    os_ << '\n';
  }

  template <class... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((os_ << (first ? "" : ","), put(cells), first = false), ...);
    os_ << '\n';
  }

  std::string str() const { return os_.str(); }

 private:
  void put(const Vector& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) os_ << (i ? "," : "") << v[i];
  }
  void put(const std::string& s) { os_ << s; }
  void put(const char* s) { os_ << s; }
  void put(double v) { os_ << v; }
  void put(int v) { os_ << v; }
  void put(std::size_t v) { os_ << v; }

  std::ostringstream os_;
};

std::vector<std::string> with_columns(std::vector<std::string> head, const std::vector<std::string>& names,
                                      const std::string& prefix = "") {
  for (const auto& n : names) head.push_back(prefix + n);
  return head;
}

void prepare_out(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::ConfigError, "cannot create output directory '" + dir.string() + "'");
}

void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

void write_arc(const fs::path& dir, const std::string& stem, const HybridArc& arc) {
  std::ostringstream csv;
  write_arc_csv(csv, arc);
  write_atomic(dir / (stem + ".csv"), csv.str());
  write_json(dir / (stem + ".json"), arc_to_json(arc));
}

/// Scenario with the command-line seed folded in; throws when a random mode
/// runs without one.
Scenario resolve(const Options& opt, const std::string& mode) {
  Scenario s = load_scenario(opt.scenario, opt.overrides);
  if (opt.seed) s.seed = opt.seed;
  if (!s.seed && random_mode_active(s, mode)) {
    throw Error(ErrorCode::ConfigError, "mode '" + mode + "' draws random numbers; pass --seed or set seed");
  }
  return s;
}

std::string conditions_csv(const CheckReport& rep, const std::vector<std::string>& vars) {
  CsvWriter w(with_columns({"id", "verdict", "worst_margin", "samples", "witness_j", "witness_t"}, vars, "witness_"));
  auto emit = [&](const std::string& id, Verdict v, double margin, std::size_t samples, const std::optional<Witness>& wit) {
    if (wit) {
      w.row(id, verdict_str(v), margin, samples, wit->j, wit->t, wit->x);
    } else {
      std::string blanks;
      for (std::size_t i = 0; i < vars.size() + 2; ++i) blanks += i ? "," : "";
      w.row(id, verdict_str(v), margin, samples, blanks);
    }
  };
  if (rep.conditions.empty()) {
    std::optional<Witness> wit;
    if (!rep.counterexamples.empty()) wit = rep.counterexamples.front().witness;
    emit(rep.condition, rep.verdict, rep.stats.worst_margin, rep.stats.samples, wit);
  }
  for (const auto& c : rep.conditions) emit(c.id, c.verdict, c.worst_margin, c.samples, c.witness);
  return w.str();
}

std::string margin_text(double m) { return std::isfinite(m) ? fmt("%.6g", m) : (m > 0 ? "inf" : "-inf"); }

std::vector<Vector> simulation_points(const Compiled& c) {
  if (!c.x0.empty()) return c.x0;
  for (const auto* init : {c.ras ? &c.ras->x0 : nullptr, c.stability ? &c.stability->x0 : nullptr}) {
    if (init) {
      if (const auto* pts = std::get_if<std::vector<Vector>>(init); pts && !pts->empty()) return *pts;
    }
  }
  throw Error(ErrorCode::ConfigError, "simulate needs x0 points");
}

json solve_report_json(const SolveReport& r) {
  return json{{"termination", std::string(to_string(r.arc.termination))},
              {"flow_time", r.flow_time},
              {"jump_count", r.jump_count},
              {"zeno_snapped", r.zeno_snapped},
              {"initial", vector_to_json(r.arc.initial())},
              {"final", {{"t", r.arc.final_time().t}, {"j", r.arc.final_time().j}, {"x", vector_to_json(r.arc.final_state())}}}};
}

struct CheckRun {
  CheckReport report;
  std::string mode;
};

CheckRun check_mode(const Scenario& s, const Compiled& c, std::string mode) {
  if (mode.empty()) mode = s.spec.kind;
  if (mode.empty()) throw Error(ErrorCode::ConfigError, "check needs --mode or a spec section");
  const auto& ck = s.check;
  if (mode == "ras") {
    if (!c.ras) throw Error(ErrorCode::ConfigError, "mode ras needs a ras spec");
    return {check_ras(c.system, *c.ras, ck.n_init, ck.n_dist, c.sim), mode};
  }
  if (mode == "stability-safety") {
    if (!c.stability) throw Error(ErrorCode::ConfigError, "mode stability-safety needs an attractor");
    return {check_stability_safety(c.system, *c.stability, ck.n_init, c.sim), mode};
  }
  if (mode == "single-v" || mode == "pair-vb") {
    if (!c.cert) throw Error(ErrorCode::ConfigError, "mode " + mode + " needs certificates");
    if (mode == "single-v") return {check_single_V(c.system, *c.cert, c.grid), mode};
    if (!c.stability) throw Error(ErrorCode::ConfigError, "mode pair-vb needs an attractor and an unsafe set");
    return {check_pair_VB(c.system, *c.cert, *c.stability, c.grid), mode};
  }
  if (mode == "invariance") {
    if (!c.invariant_set) throw Error(ErrorCode::ConfigError, "mode invariance needs check.invariant_set");
    return {check_forward_invariance(c.system, *c.invariant_set, ck.n_init, c.sim), mode};
  }
  throw Error(ErrorCode::ConfigError, "unknown check mode '" + mode + "'");
}

Scenario example_scenario(const std::string& name, const Options& opt) {
  if (name != "bouncing-ball" && name != "moore-greitzer") {
    throw Error(ErrorCode::ConfigError, "unknown example '" + name + "'");
  }
  YAML::Node root;
  root["system"]["example"] = name;
  for (const auto& o : opt.overrides) {
    const auto eq = o.find('=');
    const std::string key = eq == std::string::npos ? o : o.substr(0, eq);
    const bool flat = key.find('.') == std::string::npos && key != "delta" && key != "seed" && key != "x0";
    apply_override(root, flat ? "system.params." + o : o);
  }
  Scenario s = parse_scenario(root);
  s.seed = opt.seed.value_or(s.seed.value_or(0));
  return s;
}

Outcome bouncing_ball_example(const Scenario& s, const Options& opt) {
  const Compiled c = compile(s);
  const auto ball = bouncing_ball(ball_params(s.system));
  const SolveReport sol = solve(c.system, c.x0.front(), c.sim);
  write_arc(opt.out, "arc", sol.arc);
  write_json(opt.out / "solve_report.json", solve_report_json(sol));

  const CheckReport pair = check_pair_VB(c.system, *c.cert, *c.stability, c.grid);
  write_json(opt.out / "report.json", report_to_json(pair));
  write_atomic(opt.out / "conditions.csv", conditions_csv(pair, c.variables));
  const CheckReport ras = check_ras(c.system, *c.ras, s.check.n_init, s.check.n_dist, c.sim);
  write_json(opt.out / "ras_report.json", report_to_json(ras));

  CsvWriter series({"j", "t", "B", "V", "energy"});
  sol.arc.for_each_sample([&](int j, double t, const Vector& x) {
    series.row(j, t, (*c.cert->B)(x), c.cert->V(x), ball.energy(x));
  });
  write_atomic(opt.out / "barrier_series.csv", series.str());
  write_atomic(opt.out / "scenario.yaml", emit_scenario(s));

  const Verdict worst = pair.verdict == Verdict::Pass ? ras.verdict : pair.verdict;
  std::string summary = "example bouncing-ball: pair-vb " + verdict_str(pair.verdict) + ", ras " +
                        verdict_str(ras.verdict);
  if (ras.passed() && ras.stats.settle_time) summary += fmt(" (settled by t+j=%.4g)", *ras.stats.settle_time);
  summary += fmt(", %d jumps, %s", sol.jump_count, std::string(to_string(sol.arc.termination)).c_str());
  return {verdict_exit(worst), summary};
}

Outcome moore_greitzer_example(const Scenario& s, const Options& opt) {
  const Compiled c = compile(s);
  const auto mg = moore_greitzer(mg_params(s.system));
  SimConfig sim = c.sim;
  const ClosedLoopRun run = run_moore_greitzer(mg, sim);
  write_arc(opt.out, "arc", run.report.arc);
  write_json(opt.out / "solve_report.json", solve_report_json(run.report));

  CsvWriter log({"decision", "t", "phi", "psi", "v_prev", "gamma_prev", "v", "gamma", "v_row_margin", "b_row_margin",
                 "sigma", "level", "level_name"});
  int fallbacks = 0;
  for (const auto& r : run.log) {
    const auto& d = r.decision;
    if (d.level != 0) ++fallbacks;
    log.row(r.index, r.t, r.x, r.u_prev, d.u, 0.0 - d.v_slack, 0.0 - d.b_slack, d.sigma, d.level, level_name(d.level));
  }
  write_atomic(opt.out / "run_log.csv", log.str());

  CsvWriter traj({"j", "t", "phi", "psi", "v", "gamma", "V", "B", "h"});
  run.report.arc.for_each_sample([&](int j, double t, const Vector& z) {
    const Vector x = z.head(2);
    traj.row(j, t, x, Vector(z.segment(2, 2)), mg.cert.V(x), (*mg.cert.B)(x), mg.h(x));
  });
  write_atomic(opt.out / "trajectory.csv", traj.str());

  const CheckReport ras = check_ras(c.system, *c.ras, 1, 1, c.sim);
  json rep = report_to_json(ras);
  const Vector xf = run.report.arc.final_state().head(2);
  rep["stats"]["final_distance_to_setpoint"] = (xf - mg.params.zeta).norm();
  rep["stats"]["decisions"] = run.log.size();
  rep["stats"]["fallback_decisions"] = fallbacks;
  write_json(opt.out / "report.json", rep);
  write_atomic(opt.out / "scenario.yaml", emit_scenario(s));

  const std::string summary =
      "example moore-greitzer: ras " + verdict_str(ras.verdict) +
      fmt(", |x(T)-zeta|=%.3g, %zu decisions, %d off the nominal level", (xf - mg.params.zeta).norm(), run.log.size(), fallbacks);
  return {verdict_exit(ras.verdict), summary};
}

}  // namespace

Outcome run_simulate(const Options& opt) {
  const Scenario s = resolve(opt, "simulate");
  const Compiled c = compile(s);
  const auto points = simulation_points(c);
  prepare_out(opt.out);
  std::vector<SolveReport> reports;
  for (const auto& x0 : points) reports.push_back(solve(c.system, x0, c.sim));
  json all = json::array();
  for (std::size_t k = 0; k < reports.size(); ++k) {
    const std::string stem = reports.size() == 1 ? "arc" : "arc_" + std::to_string(k);
    write_arc(opt.out, stem, reports[k].arc);
    json r = solve_report_json(reports[k]);
    r["arc"] = stem;
    all.push_back(std::move(r));
  }
  write_json(opt.out / "solve_report.json", reports.size() == 1 ? all.front() : all);
  const auto& first = reports.front();
  std::string summary = fmt("simulate: %zu arc%s, first %s at t=%.6g j=%d", reports.size(),
                            reports.size() == 1 ? "" : "s", std::string(to_string(first.arc.termination)).c_str(),
                            first.arc.final_time().t, first.arc.final_time().j);
  return {0, summary};
}

Outcome run_check(const Options& opt) {
  const Scenario probe = load_scenario(opt.scenario, opt.overrides);
  const std::string mode = opt.mode.empty() ? probe.spec.kind : opt.mode;
  const Scenario s = resolve(opt, mode);
  const Compiled c = compile(s);
  prepare_out(opt.out);
  const CheckRun run = check_mode(s, c, mode);
  json rep = report_to_json(run.report);
  rep["mode"] = run.mode;
  write_json(opt.out / "report.json", rep);
  write_atomic(opt.out / "conditions.csv", conditions_csv(run.report, c.variables));
  std::string summary = "check " + run.mode + ": " + verdict_str(run.report.verdict) + " margin=" +
                        margin_text(run.report.stats.worst_margin);
  if (run.report.passed() && run.report.stats.settle_time) summary += fmt(" settle=%.6g", *run.report.stats.settle_time);
  if (!run.report.counterexamples.empty()) summary += " condition=" + run.report.counterexamples.front().condition;
  return {verdict_exit(run.report.verdict), summary};
}

Outcome run_falsify(const Options& opt) {
  const Scenario s = resolve(opt, "falsify");
  const std::string condition = opt.mode.empty() ? s.check.condition : opt.mode;
  if (condition.empty()) throw Error(ErrorCode::ConfigError, "falsify needs --mode <condition> or check.condition");
  const Compiled c = compile(s);
  if (!c.cert) throw Error(ErrorCode::ConfigError, "falsify needs certificates");
  prepare_out(opt.out);
  const SetRegion region = c.grid.box ? SetRegion::box(*c.grid.box) : c.cert->region;
  std::optional<SetRegion> attractor, unsafe;
  if (c.stability) {
    attractor = c.stability->attractor;
    unsafe = c.stability->unsafe;
  } else if (c.ras) {
    unsafe = c.ras->unsafe;
  }
  const auto found = falsify(c.system, *c.cert, condition, region, s.check.budget, *s.seed, c.grid.tol, attractor, unsafe);
  json out{{"condition", condition}, {"found", found.has_value()}, {"budget", s.check.budget}, {"seed", *s.seed}};
  if (found) {
    out["x"] = vector_to_json(found->x);
    out["margin"] = finite_or_null(found->margin);
    out["evaluations"] = found->evaluations;
  }
  write_json(opt.out / "counterexample.json", out);
  if (!found) return {0, "falsify " + condition + ": no counterexample within budget " + std::to_string(s.check.budget)};
  std::ostringstream x;
  x << std::setprecision(6) << found->x.transpose();
  return {1, "falsify " + condition + ": counterexample margin=" + margin_text(found->margin) + " at x=[" + x.str() + "]"};
}

Outcome run_example(const std::string& name, const Options& opt) {
  const Scenario s = example_scenario(name, opt);
  prepare_out(opt.out);
  return name == "bouncing-ball" ? bouncing_ball_example(s, opt) : moore_greitzer_example(s, opt);
}

}  // namespace hylb::cli
