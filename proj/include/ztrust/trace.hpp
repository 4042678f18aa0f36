#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ztrust {

// Numbers in every emitted file use 9 significant digits.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline double round9(double v) {
  if (!std::isfinite(v)) return v;
  return std::stod(format_number(v));
}

struct TraceRecord {
  std::size_t stage = 0;
  std::string state;
  std::string agent_action, defender_action, evidence;
  std::vector<double> belief_defender;  // defender's belief over agent types
  std::vector<double> belief_agent;     // agent's belief over defender types
  double belief_good = 0.0;             // mass on the first trusted agent type
  double ts = 0.0;
  std::string verdict, authn, authz, network;
  double payoff_agent = 0.0, payoff_defender = 0.0;
  std::optional<double> performance;
  bool off_path = false;
};

struct SimulationTrace {
  std::string policy;
  std::string agent;
  std::uint64_t seed = 0;
  std::vector<TraceRecord> records;
  std::string outcome = "horizon";  // horizon | breached | completed | rejected
};

inline constexpr const char* kTraceHeader =
    "stage,state,agent_action,defender_action,evidence,belief_good,ts,verdict,authn,authz,network,payoff_agent,"
    "payoff_defender,performance";

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void write_trace_csv(std::ostream& os, const SimulationTrace& trace) {
  os << kTraceHeader << '\n';
  for (const auto& r : trace.records) {
    os << r.stage << ',' << csv_field(r.state) << ',' << csv_field(r.agent_action) << ','
       << csv_field(r.defender_action) << ',' << csv_field(r.evidence) << ',' << format_number(r.belief_good) << ','
       << format_number(r.ts) << ',' << r.verdict << ',' << r.authn << ',' << r.authz << ',' << r.network << ','
       << format_number(r.payoff_agent) << ',' << format_number(r.payoff_defender) << ','
       << (r.performance ? format_number(*r.performance) : std::string()) << '\n';
  }
}

// Sum of payoffs over all records, per player.
inline double cumulative_payoff(const SimulationTrace& trace, bool defender) {
  double s = 0.0;
  for (const auto& r : trace.records) s += defender ? r.payoff_defender : r.payoff_agent;
  return s;
}

}  // namespace ztrust
