#pragma once

// Batch execution of a scenario: dispatch by mode, per-seed traces, and the
// JSON run report. Outputs go to a scratch directory that replaces the target
// only once everything has been written.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

#include "ztrust/authgraph.hpp"
#include "ztrust/json_io.hpp"
#include "ztrust/metagame.hpp"
#include "ztrust/parallel.hpp"
#include "ztrust/pbne.hpp"
#include "ztrust/resilience.hpp"
#include "ztrust/scenario.hpp"
#include "ztrust/trace.hpp"

namespace ztrust {

namespace fs = std::filesystem;

struct RunOptions {
  std::optional<std::vector<std::uint64_t>> seeds;
  std::optional<std::string> out;
  std::optional<std::size_t> grid;
  std::optional<std::size_t> window;
  std::size_t threads = 1;
};

namespace detail {

inline void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
  if (!out) throw Error("write failed: " + p.string());
}

inline void write_trace(const fs::path& p, const SimulationTrace& t) {
  std::ostringstream ss;
  write_trace_csv(ss, t);
  write_text(p, ss.str());
}

inline std::string file_token(std::string s) {
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

// Lower median; nullopt entries count as +infinity.
inline std::optional<double> lower_median(std::vector<std::optional<double>> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
    if (!a) return false;
    if (!b) return true;
    return *a < *b;
  });
  return v[(v.size() - 1) / 2];
}

inline json opt_num(const std::optional<double>& v) { return v ? num(*v) : json(nullptr); }

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline json run_trust(const Scenario& s, const fs::path& dir, json& files) {
  const auto& c = *s.trust;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ReplayEvent*>> by_entity;
  for (const auto& e : c.events) {
    if (!by_entity.count(e.entity_id)) order.push_back(e.entity_id);
    by_entity[e.entity_id].push_back(&e);
  }
  std::ostringstream csv;
  csv << "entity_id,step,stage,action,evidence,ts";
  for (const auto& l : c.types.labels) csv << ",pi_" << l;
  csv << '\n';
  json entities = json::array();
  for (const auto& id : order) {
    const auto& evs = by_entity[id];
    std::vector<TrustEvent> log;
    for (const auto* e : evs)
      log.push_back({index_of(c.strategy.actions, e->action, "action"), index_of(c.evidence.alphabet, e->evidence, "evidence")});
    const auto traj = replay_events(c.initial(id), log, c.strategy, c.evidence);
    json steps = json::array();
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const double ts = trust_score(traj[i], c.types).value;
      const ReplayEvent* e = i == 0 ? nullptr : evs[i - 1];
      csv << csv_field(id) << ',' << i << ',' << (e ? std::to_string(e->stage) : "") << ',' << (e ? csv_field(e->action) : "")
          << ',' << (e ? csv_field(e->evidence) : "") << ',' << format_number(ts);
      for (double p : traj[i].pi) csv << ',' << format_number(p);
      csv << '\n';
      json st = {{"step", i}, {"ts", num(ts)}, {"pi", nums(traj[i].pi)}};
      if (e) st["stage"] = e->stage, st["action"] = e->action, st["evidence"] = e->evidence;
      steps.push_back(st);
    }
    entities.push_back({{"entity_id", id},
                        {"events", evs.size()},
                        {"final_ts", num(trust_score(traj.back(), c.types).value)},
                        {"trajectory", steps}});
  }
  write_text(dir / "trust.csv", csv.str());
  files.push_back("trust.csv");
  return {{"entities", entities}};
}

inline json solved_policy_json(const GameDefinition& g, const SolvedPolicy& pol) {
  json j;
  j["game"] = pol.game_name;
  j["horizon"] = pol.horizon;
  j["grid_resolution"] = pol.grid_resolution;
  j["selection"] = pol.selection;
  j["epsilon"] = num(pol.epsilon);
  j["certified"] = pol.certified;
  j["max_stage_regret"] = num(pol.max_stage_regret);
  j["fallback_points"] = pol.fallback_points;
  j["types"] = {{"defender", g.types[0].labels}, {"agent", g.types[1].labels}};
  json joint = json::array();
  for (std::size_t t = 0; t < g.joint_types(); ++t)
    joint.push_back(g.types[0].labels[g.type_of(t, 0)] + "/" + g.types[1].labels[g.type_of(t, 1)]);
  j["joint_types"] = joint;
  json grid = json::array();
  for (std::size_t i = 0; i < pol.grid.size(); ++i) {
    const auto p = pol.grid.point(i);
    grid.push_back(nums(std::vector<double>(p.begin(), p.end())));
  }
  j["grid"] = grid;
  json stages = json::array();
  for (std::size_t k = 0; k < pol.horizon; ++k) {
    json states = json::array();
    for (std::size_t x = 0; x < g.num_states(k); ++x) {
      json profiles = json::array(), values = json::array();
      const std::size_t V = pol.joint_types() * 2;
      for (std::size_t i = 0; i < pol.grid.size(); ++i) {
        const auto p = pol.profile(k, x, i);
        profiles.push_back(nums(std::vector<double>(p.begin(), p.end())));
        values.push_back(nums(std::vector<double>(pol.values[k][x].begin() + static_cast<std::ptrdiff_t>(i * V),
                                                  pol.values[k][x].begin() + static_cast<std::ptrdiff_t>((i + 1) * V))));
      }
      states.push_back({{"state", g.states[k][x]}, {"profiles", profiles}, {"values", values}});
    }
    stages.push_back({{"stage", k},
                      {"actions", {{"defender", g.actions[k][0]}, {"agent", g.actions[k][1]}}},
                      {"profile_layout", "defender rows (type-major) then agent rows; values hold (defender, agent) per joint type"},
                      {"states", states}});
  }
  j["stages"] = stages;
  return j;
}

inline SolveOptions pbne_options(const Scenario& s, const RunOptions& o) {
  SolveOptions opt;
  opt.grid_resolution = o.grid.value_or(s.pbne->grid_resolution);
  require(opt.grid_resolution >= 1, "--grid", "must be a positive integer");
  opt.certify_samples = s.pbne->certify_samples;
  opt.threads = o.threads;
  return opt;
}

inline json run_pbne(const Scenario& s, const RunOptions& o, const std::vector<std::uint64_t>& seeds,
                     const fs::path& dir, json& files) {
  const auto& g = s.pbne->game;
  const auto pol = solve_pbne(g, pbne_options(s, o));
  const double range = payoff_range(g);
  json plays = json::array();
  for (const auto& play : s.pbne->plays) {
    const std::size_t th1 = g.types[0].index(play.defender_type), th2 = g.types[1].index(play.agent_type);
    std::vector<SimulationTrace> traces(seeds.size());
    const auto sub = fs::path("traces") / file_token(play.label());
    parallel_for(
        seeds.size(), o.threads,
        [&](std::size_t i) {
          traces[i] = simulate_play(g, pol, th1, th2, seeds[i]);
          write_trace(dir / sub / ("seed_" + std::to_string(seeds[i]) + ".csv"), traces[i]);
        },
        4);
    json per_seed = json::array();
    std::vector<double> pd, pa, ts;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      files.push_back((sub / ("seed_" + std::to_string(seeds[i]) + ".csv")).string());
      pd.push_back(cumulative_payoff(traces[i], true));
      pa.push_back(cumulative_payoff(traces[i], false));
      ts.push_back(traces[i].records.back().ts);
      per_seed.push_back({{"seed", seeds[i]},
                          {"payoff_defender", num(pd.back())},
                          {"payoff_agent", num(pa.back())},
                          {"final_ts", num(ts.back())},
                          {"final_state", traces[i].records.back().state}});
    }
    plays.push_back({{"group", play.label()},
                     {"defender_type", play.defender_type},
                     {"agent_type", play.agent_type},
                     {"runs", seeds.size()},
                     {"mean_payoff_defender", num(mean_of(pd))},
                     {"mean_payoff_agent", num(mean_of(pa))},
                     {"mean_final_ts", num(mean_of(ts))},
                     {"per_seed", per_seed}});
  }
  return {{"grid_resolution", pol.grid_resolution},
          {"epsilon", num(pol.epsilon)},
          {"certified", pol.certified},
          {"payoff_range", num(range)},
          {"epsilon_relative", num(range > 0.0 ? pol.epsilon / range : 0.0)},
          {"max_stage_regret", num(pol.max_stage_regret)},
          {"fallback_points", pol.fallback_points},
          {"selection", pol.selection},
          {"groups", plays}};
}

inline json flipit_json(const FlipItEquilibrium& e) {
  return {{"rate_attacker", num(e.rate_attacker)},
          {"rate_defender", num(e.rate_defender)},
          {"attacker_participates", e.attacker_participates},
          {"defender_participates", e.defender_participates},
          {"p", num(e.p)},
          {"regret", num(e.regret)},
          {"iterations", e.iterations},
          {"converged", e.converged}};
}

inline json signaling_json(const SignalingGame& g, const SignalingProfile& p) {
  json sender = json::object(), receiver = json::object(), post = json::object();
  sender["attacker"] = nums(p.sender[kSenderAttacker]);
  sender["defender"] = nums(p.sender[kSenderDefender]);
  for (std::size_t m = 0; m < g.num_messages(); ++m) {
    receiver[g.messages[m]] = nums(p.receiver[m]);
    post[g.messages[m]] = num(p.posterior[m]);
  }
  return {{"kind", p.kind},
          {"passive_off_path", p.passive_off_path},
          {"regret", num(p.regret)},
          {"sender", sender},
          {"receiver", receiver},
          {"posterior_defender", post}};
}

inline json run_meta(const Scenario& s, const fs::path& dir, json& files) {
  const auto& c = *s.meta;
  const auto r = solve_gne(c.flipit, c.signaling, c.max_iterations);
  SignalingGame final_game = c.signaling;
  final_game.prior = r.ts0;
  std::ostringstream csv;
  csv << "iteration,rate_attacker,rate_defender,p,prior,change,kind\n";
  json hist = json::array();
  for (std::size_t i = 0; i < r.history.size(); ++i) {
    const auto& h = r.history[i];
    csv << i + 1 << ',' << format_number(h.flipit.rate_attacker) << ',' << format_number(h.flipit.rate_defender) << ','
        << format_number(h.flipit.p) << ',' << format_number(h.prior) << ',' << format_number(h.change) << ','
        << h.signaling.kind << '\n';
    hist.push_back({{"iteration", i + 1}, {"p", num(h.flipit.p)}, {"prior", num(h.prior)}, {"change", num(h.change)}});
  }
  write_text(dir / "gne_history.csv", csv.str());
  files.push_back("gne_history.csv");
  return {{"ts0", num(r.ts0)},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"coupling", r.coupling},
          {"flipit", flipit_json(r.flipit)},
          {"signaling", signaling_json(final_game, r.signaling)},
          {"history", hist}};
}

struct SessionRow {
  SessionMetrics m;
  ResilienceReport res;
  double payoff_defender = 0.0;
};

inline json run_auth(const Scenario& s, const RunOptions& o, const std::vector<std::uint64_t>& seeds,
                     const fs::path& dir, json& files) {
  const auto& c = *s.auth;
  const AuthGame ag = build_auth_game(c);
  const std::size_t window = o.window.value_or(c.window);
  SolveOptions opt;
  opt.grid_resolution = o.grid.value_or(c.grid_resolution);
  require(opt.grid_resolution >= 1, "--grid", "must be a positive integer");
  WindowSolver ws(ag, window, opt);
  const SessionLayers layers{c.policy ? &*c.policy : nullptr, c.session_entity};
  const auto rule = default_performance_rule(s.resilience.baseline, c.model.costs.breach_loss, c.model.costs.friction_loss);

  json policies = json::array();
  std::map<std::string, json> table;  // session -> {policy: mean time}
  for (const auto& pname : c.policies) {
    const DefensePolicy dp = parse_defense_policy(pname);
    json sessions = json::array();
    for (const auto& sess : c.sessions) {
      const TrustState t0{c.session_entity, sess.trust0, 0};
      const auto sub = fs::path("traces") / file_token(dp.name()) / file_token(sess.label);
      std::vector<SessionRow> rows(seeds.size());
      parallel_for(
          seeds.size(), o.threads,
          [&](std::size_t i) {
            auto tr = simulate_session(ag, ws, dp, t0, sess.agent, seeds[i], layers);
            annotate_performance(tr, rule);
            rows[i].m = session_metrics(tr, c.model.costs.mfa_cost, c.detect_below);
            rows[i].res = assess(trajectory_from_trace(tr, rule, s.resilience.baseline), s.resilience.delta,
                                 s.resilience.dwell, s.resilience.limits);
            rows[i].payoff_defender = cumulative_payoff(tr, true);
            write_trace(dir / sub / ("seed_" + std::to_string(seeds[i]) + ".csv"), tr);
          },
          4);
      const std::string success = sess.agent == kLegitimate ? "completed" : "breached";
      std::map<std::string, std::size_t> outcomes;
      std::vector<double> times, challenges, payoffs, Ts, Ds;
      std::vector<std::optional<double>> detect;
      std::map<std::string, std::size_t> hist;
      std::size_t resilient = 0, detected = 0;
      json per_seed = json::array();
      for (std::size_t i = 0; i < seeds.size(); ++i) {
        const auto& r = rows[i];
        files.push_back((sub / ("seed_" + std::to_string(seeds[i]) + ".csv")).string());
        ++outcomes[r.m.outcome];
        const bool ok = r.m.outcome == success;
        if (ok) times.push_back(r.m.elapsed);
        challenges.push_back(static_cast<double>(r.m.challenges));
        payoffs.push_back(r.payoff_defender);
        std::optional<double> d;
        if (r.m.detection_stage) d = static_cast<double>(*r.m.detection_stage), ++detected;
        detect.push_back(d);
        ++hist[d ? std::to_string(*r.m.detection_stage) : "never"];
        resilient += r.res.resilient ? 1 : 0;
        Ts.push_back(r.res.T);
        Ds.push_back(r.res.D);
        per_seed.push_back({{"seed", seeds[i]},
                            {"outcome", r.m.outcome},
                            {"elapsed", ok ? num(r.m.elapsed) : json(nullptr)},
                            {"stages", r.m.stages},
                            {"challenges", r.m.challenges},
                            {"detection_stage", opt_num(d)},
                            {"payoff_defender", num(r.payoff_defender)},
                            {"resilient", r.res.resilient},
                            {"T", num(r.res.T)},
                            {"D", num(r.res.D)}});
      }
      std::vector<std::optional<double>> topt(times.begin(), times.end());
      const json mean_time = times.empty() ? json(nullptr) : num(mean_of(times));
      json hj = json::object();
      for (const auto& [k, v] : hist) hj[k] = v;
      json oj = json::object();
      for (const auto& [k, v] : outcomes) oj[k] = v;
      sessions.push_back({{"group", dp.name() + "/" + sess.label},
                          {"session", sess.label},
                          {"agent", detail::auth_types().labels[sess.agent]},
                          {"trust0", nums(sess.trust0)},
                          {"runs", seeds.size()},
                          {"outcomes", oj},
                          {"success_outcome", success},
                          {"successes", times.size()},
                          {"mean_time", mean_time},
                          {"median_time", opt_num(lower_median(topt))},
                          {"mean_challenges", num(mean_of(challenges))},
                          {"mean_payoff_defender", num(mean_of(payoffs))},
                          {"detection",
                           {{"threshold", num(c.detect_below)},
                            {"detected", detected},
                            {"median_stage", opt_num(lower_median(detect))},
                            {"histogram", hj}}},
                          {"resilience",
                           {{"resilient", resilient}, {"mean_T", num(mean_of(Ts))}, {"mean_D", num(mean_of(Ds))}}},
                          {"per_seed", per_seed}});
      table[sess.label][dp.name()] = mean_time;
    }
    policies.push_back({{"policy", dp.name()}, {"sessions", sessions}});
  }
  json cmp = json::array();
  for (const auto& sess : c.sessions) cmp.push_back({{"session", sess.label}, {"mean_time", table[sess.label]}});
  return {{"window", window},
          {"grid_resolution", opt.grid_resolution},
          {"state_count", ag.state_count()},
          {"time_metric", "stages plus mfa_cost per challenge; successful sessions only"},
          {"policies", policies},
          {"access_time_comparison", cmp}};
}

inline fs::path scratch_dir(const fs::path& out) {
  const fs::path parent = out.has_parent_path() ? out.parent_path() : fs::path(".");
  fs::create_directories(parent);
  for (int i = 0;; ++i) {
    fs::path p = parent / ("." + out.filename().string() + ".tmp-" + std::to_string(::getpid()) + "-" + std::to_string(i));
    if (fs::create_directory(p)) return p;
  }
}

}  // namespace detail

// Runs the scenario and returns the report, which is also written to
// <out>/report.json. An existing <out> is replaced only if it holds a
// previous report.
inline json run_scenario(const Scenario& s, const RunOptions& o = {}) {
  const auto seeds = o.seeds.value_or(s.seeds);
  const bool stochastic = s.mode == ScenarioMode::pbne || s.mode == ScenarioMode::authgraph_sim;
  if (stochastic) require(!seeds.empty(), "seeds", "stochastic modes need a non-empty seed list");
  require(o.threads >= 1, "--threads", "must be at least 1");
  const fs::path out = o.out.value_or(s.output);
  require(!out.empty(), "output", "no output directory");
  if (fs::exists(out))
    require(fs::is_directory(out) && (fs::is_empty(out) || fs::exists(out / "report.json")), "output",
            "'" + out.string() + "' exists and is not a previous run directory");

  const fs::path tmp = detail::scratch_dir(out);
  try {
    json files = json::array();
    json results;
    switch (s.mode) {
      case ScenarioMode::trust_replay: results = detail::run_trust(s, tmp, files); break;
      case ScenarioMode::pbne: results = detail::run_pbne(s, o, seeds, tmp, files); break;
      case ScenarioMode::meta_game: results = detail::run_meta(s, tmp, files); break;
      case ScenarioMode::authgraph_sim: results = detail::run_auth(s, o, seeds, tmp, files); break;
    }
    json report;
    report["scenario"] = {{"name", s.name},
                          {"mode", to_string(s.mode)},
                          {"digest", s.digest},
                          {"comparison_digest", comparison_digest(s)}};
    report["engine"] = {{"version", kEngineVersion}};
    report["seeds"] = stochastic ? seeds_to_json(seeds) : json(nullptr);
    report["results"] = results;
    files.push_back("report.json");
    report["files"] = files;
    detail::write_text(tmp / "report.json", report.dump(2) + "\n");
    if (fs::exists(out)) fs::remove_all(out);
    fs::rename(tmp, out);
    return report;
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

inline json load_report(const std::string& path) {
  const json j = parse_json_text(read_file(path), path);
  require(j.is_object() && j.contains("scenario") && j.contains("results"), path, "not a run report");
  return j;
}

// Per-group, per-seed values of `metric` across reports, with paired
// differences against the first column of each group family.
inline json compare_reports(const std::vector<json>& reports, const std::vector<std::string>& labels,
                            const std::string& metric) {
  require(!reports.empty(), "reports", "at least one report required");
  require(labels.size() == reports.size(), "reports", "one label per report required");
  const std::string digest = reports[0]["scenario"].value("comparison_digest", "");
  for (std::size_t i = 1; i < reports.size(); ++i)
    require(reports[i]["scenario"].value("comparison_digest", "") == digest, "reports",
            "report '" + labels[i] + "' comes from a different scenario");

  // family -> ordered columns; a column is (name, seed -> value)
  struct Column {
    std::string name;
    std::map<std::uint64_t, json> values;
  };
  std::vector<std::string> families;
  std::map<std::string, std::vector<Column>> cols;
  auto add_group = [&](const std::string& family, const std::string& name, const json& per_seed) {
    if (!cols.count(family)) families.push_back(family);
    Column c{name, {}};
    for (const auto& row : per_seed) {
      require(row.contains(metric), "metric", "unknown metric '" + metric + "'");
      c.values[row["seed"].get<std::uint64_t>()] = row[metric];
    }
    cols[family].push_back(std::move(c));
  };
  for (std::size_t r = 0; r < reports.size(); ++r) {
    const json& res = reports[r]["results"];
    const std::string prefix = reports.size() > 1 ? labels[r] + ":" : "";
    if (res.contains("policies")) {
      for (const auto& p : res["policies"])
        for (const auto& s : p["sessions"])
          add_group(s["session"].get<std::string>(), prefix + p["policy"].get<std::string>(), s["per_seed"]);
    } else if (res.contains("groups")) {
      for (const auto& g : res["groups"]) add_group(g["group"].get<std::string>(), prefix + "pbne", g["per_seed"]);
    } else {
      throw ValidationError("reports", "report '" + labels[r] + "' has no per-seed results");
    }
  }
  json tables = json::array();
  for (const auto& f : families) {
    const auto& cs = cols[f];
    std::vector<std::uint64_t> seeds;
    for (const auto& [seed, v] : cs[0].values) seeds.push_back(seed);
    json rows = json::array();
    json means = json::object(), diff_means = json::object();
    std::vector<double> sum(cs.size(), 0.0), dsum(cs.size(), 0.0);
    std::vector<std::size_t> n(cs.size(), 0), dn(cs.size(), 0);
    for (auto seed : seeds) {
      json row = {{"seed", seed}};
      const json base = cs[0].values.count(seed) ? cs[0].values.at(seed) : json(nullptr);
      for (std::size_t i = 0; i < cs.size(); ++i) {
        const json v = cs[i].values.count(seed) ? cs[i].values.at(seed) : json(nullptr);
        row[cs[i].name] = v;
        if (v.is_number()) sum[i] += v.get<double>(), ++n[i];
        if (i > 0) {
          json d = nullptr;
          if (v.is_number() && base.is_number()) {
            d = num(v.get<double>() - base.get<double>());
            dsum[i] += v.get<double>() - base.get<double>(), ++dn[i];
          }
          row[cs[i].name + " - " + cs[0].name] = d;
        }
      }
      rows.push_back(row);
    }
    json columns = json::array();
    for (std::size_t i = 0; i < cs.size(); ++i) {
      columns.push_back(cs[i].name);
      means[cs[i].name] = n[i] ? num(sum[i] / static_cast<double>(n[i])) : json(nullptr);
      if (i > 0) diff_means[cs[i].name + " - " + cs[0].name] = dn[i] ? num(dsum[i] / static_cast<double>(dn[i])) : json(nullptr);
    }
    tables.push_back({{"group", f}, {"columns", columns}, {"means", means}, {"mean_paired_difference", diff_means}, {"rows", rows}});
  }
  return {{"metric", metric}, {"comparison_digest", digest}, {"tables", tables}};
}

inline json export_policy(const Scenario& s, const RunOptions& o = {}) {
  if (s.mode == ScenarioMode::pbne) {
    const auto pol = solve_pbne(s.pbne->game, detail::pbne_options(s, o));
    return detail::solved_policy_json(s.pbne->game, pol);
  }
  if (s.mode == ScenarioMode::authgraph_sim) {
    const auto& c = *s.auth;
    const AuthGame ag = build_auth_game(c);
    SolveOptions opt;
    opt.grid_resolution = o.grid.value_or(c.grid_resolution);
    opt.threads = o.threads;
    const std::size_t window = o.window.value_or(c.window);
    require(window >= 1 && window <= ag.game.horizon, "--window", "must lie in [1, horizon]");
    const auto w = truncate(ag.game, 0, 0, window, ag.game.prior);
    auto j = detail::solved_policy_json(w, solve_pbne(w, opt));
    j["window"] = window;
    return j;
  }
  throw ValidationError("mode", std::string("mode ") + to_string(s.mode) + " has no policy to export");
}

}  // namespace ztrust
