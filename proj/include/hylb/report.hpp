#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hylb/arc_io.hpp"
#include "hylb/geometry.hpp"

namespace hylb {

enum class Verdict { Pass, Fail, Inconclusive };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::Inconclusive: return "INCONCLUSIVE";
  }
  return "UNKNOWN";
}

/// Where a violation was seen: a stored arc sample (arc >= 0) or a bare point.
struct Witness {
  int arc = -1;
  int j = 0;
  double t = 0.0;
  Vector x;
};

/// Margins are violation amounts: positive means the condition is violated.
struct Counterexample {
  std::string condition;
  double margin = 0.0;
  Witness witness;
  std::optional<Vector> origin;  // initial state of the offending arc
};

/// Result of one itemized condition inside a composite check.
struct ConditionResult {
  ConditionResult() = default;
  explicit ConditionResult(std::string name) : id(std::move(name)) {}

  std::string id;
  Verdict verdict = Verdict::Pass;
  double worst_margin = -kInf;
  std::size_t samples = 0;
  std::optional<Witness> witness;
  std::map<std::string, double> values;
};

struct CheckStats {
  std::size_t samples = 0;
  double worst_margin = -kInf;
  std::optional<double> settle_time;
  std::map<std::string, double> values;
};

struct CheckReport {
  Verdict verdict = Verdict::Pass;
  std::string condition;
  std::vector<Counterexample> counterexamples;
  std::vector<ConditionResult> conditions;
  CheckStats stats;
  std::vector<std::string> notes;

  bool passed() const { return verdict == Verdict::Pass; }

  void record(Counterexample c) {
    stats.worst_margin = std::max(stats.worst_margin, c.margin);
    verdict = Verdict::Fail;
    counterexamples.push_back(std::move(c));
  }

  const ConditionResult* find(std::string_view id) const {
    for (const auto& c : conditions) {
      if (c.id == id) return &c;
    }
    return nullptr;
  }
};

inline nlohmann::json finite_or_null(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

inline nlohmann::json witness_to_json(const Witness& w) {
  nlohmann::json out{{"j", w.j}, {"t", w.t}, {"x", vector_to_json(w.x)}};
  if (w.arc >= 0) out["arc"] = w.arc;
  return out;
}

inline nlohmann::json report_to_json(const CheckReport& r) {
  nlohmann::json out;
  out["verdict"] = std::string(to_string(r.verdict));
  out["condition"] = r.condition;
  out["margin"] = finite_or_null(r.stats.worst_margin);
  out["witness"] = r.counterexamples.empty() ? nlohmann::json(nullptr) : witness_to_json(r.counterexamples.front().witness);
  nlohmann::json stats{{"samples", r.stats.samples}, {"worst_margin", finite_or_null(r.stats.worst_margin)}};
  stats["settle_time"] = r.stats.settle_time ? nlohmann::json(*r.stats.settle_time) : nlohmann::json(nullptr);
  for (const auto& [k, v] : r.stats.values) stats[k] = finite_or_null(v);
  out["stats"] = std::move(stats);
  auto& cx = out["counterexamples"] = nlohmann::json::array();
  for (const auto& c : r.counterexamples) {
    nlohmann::json e{{"condition", c.condition}, {"margin", finite_or_null(c.margin)}, {"witness", witness_to_json(c.witness)}};
    if (c.origin) e["origin"] = vector_to_json(*c.origin);
    cx.push_back(std::move(e));
  }
  if (!r.conditions.empty()) {
    auto& conds = out["conditions"] = nlohmann::json::array();
    for (const auto& c : r.conditions) {
      nlohmann::json e{{"id", c.id},
                       {"verdict", std::string(to_string(c.verdict))},
                       {"worst_margin", finite_or_null(c.worst_margin)},
                       {"samples", c.samples}};
      e["witness"] = c.witness ? witness_to_json(*c.witness) : nlohmann::json(nullptr);
      for (const auto& [k, v] : c.values) e[k] = finite_or_null(v);
      conds.push_back(std::move(e));
    }
  }
  out["notes"] = r.notes;
  return out;
}

}  // namespace hylb
