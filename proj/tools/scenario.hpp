#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <yaml-cpp/yaml.h>

#include "hylb/hylb.hpp"

namespace hylb::cli {

/// A set by variant name and numeric parameters. Implicit sets hold
/// {x : expr(x) <= 0} over the system variables.
struct SetDecl {
  std::string kind = "empty";  // ball box whole empty half_spaces union intersection complement inflate implicit
  Vector center;
  double radius = 0.0;
  Vector lo, hi;
  int dim = 0;
  std::vector<std::pair<Vector, double>> faces;  // a . x <= b
  std::vector<SetDecl> parts;
  std::string expr;
};

struct InitialDecl {
  std::vector<Vector> points;
  std::optional<SetDecl> set;
};

struct SystemDecl {
  std::string example;  // empty for an inline declaration
  std::map<std::string, YAML::Node> params;  // example parameter overrides
  std::vector<std::string> variables;
  std::map<std::string, double> constants;
  SetDecl flow_set, jump_set;
  std::vector<std::string> flow, jump;
  std::optional<AxisBox> bounds;
};

struct SpecDecl {
  std::string kind;  // "", "ras" or "stability-safety"
  InitialDecl x0;
  SetDecl unsafe, target, attractor;
  double settle_deadline = 100.0;
  std::vector<double> eps{0.5, 1.0};
  int bisection_steps = 10;
};

struct CertDecl {
  std::string V, B, rho;  // expressions; rho is over the variable r
  std::optional<SetDecl> region, omega_target, omega_domain;
};

struct SimDecl {
  std::optional<double> step, horizon, event_tol, zeno_gap;
  std::optional<int> max_jumps;
  std::string priority = "jump-first";
  std::string disturbance = "none";  // none | random
  std::vector<std::string> zeno_snap;
  int workers = 1;
};

struct CheckDecl {
  std::vector<int> counts;
  std::optional<AxisBox> box;
  int refinement_depth = 0;
  int refine_top = 8;
  std::optional<double> exclude_radius;
  double tol = 1e-7;
  int n_init = 1;
  int n_dist = 1;
  int budget = 2000;
  std::string condition;
  std::optional<SetDecl> invariant_set;
};

struct Scenario {
  SystemDecl system;
  double delta = 0.0;
  std::vector<Vector> x0;
  SimDecl sim;
  SpecDecl spec;
  CertDecl certificates;
  CheckDecl check;
  std::optional<std::uint64_t> seed;
};

Scenario parse_scenario(const YAML::Node& root);
YAML::Node scenario_to_yaml(const Scenario& s);
std::string emit_scenario(const Scenario& s);

/// Sets `dotted.key` in the tree; the value is read as YAML.
void apply_override(YAML::Node& root, const std::string& assignment);

Scenario load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
Scenario scenario_from_text(const std::string& text, const std::vector<std::string>& overrides = {});

/// Executable form of a scenario.
struct Compiled {
  std::vector<std::string> variables;
  HybridSystem system;
  SimConfig sim;
  std::vector<Vector> x0;
  std::optional<RASSpec> ras;
  std::optional<StabSafeSpec> stability;
  std::optional<CertificatePair> cert;
  GridSpec grid;
  std::optional<SetRegion> invariant_set;
};

BouncingBallParams ball_params(const SystemDecl& s);
MooreGreitzerParams mg_params(const SystemDecl& s);

SetRegion build_set(const SetDecl& d, const std::vector<std::string>& vars, const std::map<std::string, double>& consts);
Compiled compile(const Scenario& s);

/// Whether the scenario draws random numbers under the given command mode.
bool random_mode_active(const Scenario& s, const std::string& mode);

}  // namespace hylb::cli
