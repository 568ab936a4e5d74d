#pragma once

#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "hylb/hybrid.hpp"

namespace hylb {

/// CSV: header "j,t,x1..xn", one row per sample, then comment footer records
/// "#termination,<name>" and, when present, "#zeno_snaps,<j;j;...>".
inline void write_arc_csv(std::ostream& os, const HybridArc& arc) {
  const int n = arc.dim();
  os << "j,t";
  for (int i = 1; i <= n; ++i) os << ",x" << i;
  os << '\n' << std::setprecision(17);
  arc.for_each_sample([&](int j, double t, const Vector& x) {
    os << j << ',' << t;
    for (int i = 0; i < n; ++i) os << ',' << x[i];
    os << '\n';
  });
  os << "#termination," << to_string(arc.termination) << '\n';
  if (!arc.snapped_jumps.empty()) {
    os << "#zeno_snaps,";
    bool first = true;
    for (int j : arc.snapped_jumps) {
      os << (first ? "" : ";") << j;
      first = false;
    }
    os << '\n';
  }
}

inline HybridArc read_arc_csv(std::istream& is) {
  HybridArc arc;
  std::string line;
  if (!std::getline(is, line)) throw Error(ErrorCode::InvalidArgument, "empty arc csv");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line.rfind("#termination,", 0) == 0) {
      arc.termination = termination_from_string(line.substr(13));
      continue;
    }
    if (line.rfind("#zeno_snaps,", 0) == 0) {
      std::stringstream ss(line.substr(12));
      std::string tok;
      while (std::getline(ss, tok, ';')) arc.snapped_jumps.insert(std::stoi(tok));
      continue;
    }
    std::stringstream ss(line);
    std::string tok;
    std::getline(ss, tok, ',');
    const int j = std::stoi(tok);
    std::getline(ss, tok, ',');
    const double t = std::stod(tok);
    std::vector<double> xs;
    while (std::getline(ss, tok, ',')) xs.push_back(std::stod(tok));
    if (j != static_cast<int>(arc.phases.size()) - 1) {
      if (j != static_cast<int>(arc.phases.size())) throw Error(ErrorCode::InvalidArgument, "arc csv skips a jump index");
      arc.phases.emplace_back();
    }
    arc.phases.back().t.push_back(t);
    arc.phases.back().x.push_back(Eigen::Map<Vector>(xs.data(), static_cast<Eigen::Index>(xs.size())));
  }
  return arc;
}

inline nlohmann::json vector_to_json(const Vector& x) { return std::vector<double>(x.data(), x.data() + x.size()); }

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline nlohmann::json arc_to_json(const HybridArc& arc) {
  nlohmann::json out;
  out["dim"] = arc.dim();
  out["termination"] = std::string(to_string(arc.termination));
  out["zeno_snaps"] = std::vector<int>(arc.snapped_jumps.begin(), arc.snapped_jumps.end());
  auto& dom = out["domain"] = nlohmann::json::array();
  for (const auto& [a, b] : arc.domain().intervals) dom.push_back({a, b});
  auto& phases = out["phases"] = nlohmann::json::array();
  for (std::size_t j = 0; j < arc.phases.size(); ++j) {
    nlohmann::json p;
    p["j"] = j;
    p["t"] = arc.phases[j].t;
    auto& xs = p["x"] = nlohmann::json::array();
    for (const auto& x : arc.phases[j].x) xs.push_back(vector_to_json(x));
    phases.push_back(std::move(p));
  }
  return out;
}

inline HybridArc arc_from_json(const nlohmann::json& in) {
  HybridArc arc;
  arc.termination = termination_from_string(in.at("termination").get<std::string>());
  for (int j : in.value("zeno_snaps", std::vector<int>{})) arc.snapped_jumps.insert(j);
  for (const auto& p : in.at("phases")) {
    Phase ph;
    ph.t = p.at("t").get<std::vector<double>>();
    for (const auto& x : p.at("x")) ph.x.push_back(vector_from_json(x));
    arc.phases.push_back(std::move(ph));
  }
  return arc;
}

}  // namespace hylb
