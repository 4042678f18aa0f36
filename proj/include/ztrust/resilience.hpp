#pragma once

// (T, D)-resilience of a performance trajectory: onset t2 is the first sample
// below (1 - delta) * baseline, recovery t4 the first later sample that starts
// a run of `dwell` samples back at or above that level.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ztrust/error.hpp"
#include "ztrust/trace.hpp"

namespace ztrust {

struct PerformanceSample {
  double stage = 0.0;
  double value = 0.0;
};

struct PerformanceTrajectory {
  std::vector<PerformanceSample> samples;
  double baseline = 1.0;

  void validate(const std::string& path = "trajectory") const {
    require(!samples.empty(), path + ".samples", "trajectory is empty");
    require(std::isfinite(baseline) && baseline > 0.0, path + ".baseline", "must be positive");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      require(std::isfinite(samples[i].value) && samples[i].value >= 0.0, path + ".samples",
              "performance must be non-negative");
      require(i == 0 || samples[i].stage > samples[i - 1].stage, path + ".samples",
              "stages must be strictly increasing");
    }
  }
};

struct ResilienceLimits {
  double t_max = INFINITY;
  double d_max = INFINITY;
};

struct ResilienceReport {
  std::optional<double> t2, t4;
  double T = 0.0;
  double D = 0.0;
  bool resilient = true;
};

inline ResilienceReport assess(const PerformanceTrajectory& traj, double delta, std::size_t dwell,
                               const ResilienceLimits& limits = {}) {
  traj.validate();
  require(delta > 0.0 && delta < 1.0, "delta", "must lie in (0, 1)");
  require(dwell >= 1, "dwell", "must be a positive integer");
  const double level = (1.0 - delta) * traj.baseline;
  const auto& s = traj.samples;
  ResilienceReport r;
  std::size_t i2 = 0;
  while (i2 < s.size() && !(s[i2].value < level)) ++i2;
  if (i2 == s.size()) return r;

  r.t2 = s[i2].stage;
  std::size_t end = s.size();  // one past the last sample counted for D
  for (std::size_t i = i2; i + dwell <= s.size(); ++i) {
    bool held = true;
    for (std::size_t j = i; j < i + dwell && held; ++j) held = s[j].value >= level;
    if (held) {
      r.t4 = s[i].stage;
      end = i + 1;
      break;
    }
  }
  double lo = INFINITY;
  for (std::size_t i = i2; i < end; ++i) lo = std::min(lo, s[i].value);
  r.D = traj.baseline - lo;
  if (!r.t4) {
    r.resilient = false;
    return r;
  }
  r.T = *r.t4 - *r.t2;
  r.resilient = r.T <= limits.t_max && r.D <= limits.d_max;
  return r;
}

using PerformanceRule = std::function<double(const SimulationTrace&, const TraceRecord&)>;

// Baseline minus breach_loss once the session has reached a target, minus
// friction_loss at each stage where a legitimate session is challenged.
// Floored at zero.
inline PerformanceRule default_performance_rule(double baseline, double breach_loss, double friction_loss,
                                                std::string legitimate_label = "legitimate") {
  return [=](const SimulationTrace& t, const TraceRecord& r) {
    double v = baseline;
    if (r.state.size() >= 9 && r.state.compare(r.state.size() - 9, 9, ":breached") == 0) v -= breach_loss;
    if (t.agent == legitimate_label && r.defender_action == "challenge") v -= friction_loss;
    return std::max(0.0, v);
  };
}

inline PerformanceTrajectory trajectory_from_trace(const SimulationTrace& trace, const PerformanceRule& rule,
                                                   double baseline) {
  PerformanceTrajectory out;
  out.baseline = baseline;
  for (const auto& r : trace.records) out.samples.push_back({static_cast<double>(r.stage), rule(trace, r)});
  return out;
}

// Writes the rule's value into every record's performance column.
inline void annotate_performance(SimulationTrace& trace, const PerformanceRule& rule) {
  for (auto& r : trace.records) r.performance = rule(trace, r);
}

}  // namespace ztrust
