#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "ztrust/runner.hpp"

using namespace ztrust;
namespace fs = std::filesystem;

namespace {

std::string shipped(const std::string& name) { return std::string(ZTRUST_SCENARIO_DIR) + "/" + name + ".json"; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ztrust_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string field_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    return e.field();
  }
  return "<no error>";
}

json minimal_trust() {
  return json::parse(R"({
    "schema_version": 1, "name": "mini", "mode": "trust_replay",
    "trust": {
      "types": {"labels": ["good", "bad"], "trusted": ["good"]},
      "prior": [0.7, 0.3],
      "strategy": {"actions": ["read", "write"], "table": {"good": [0.9, 0.1], "bad": [0.5, 0.5]}},
      "evidence": {"alphabet": ["ok", "alert"],
                   "likelihood": {"read": {"good": [0.95, 0.05], "bad": [0.8, 0.2]},
                                  "write": {"good": [0.9, 0.1], "bad": [0.4, 0.6]}}},
      "events": [{"stage": 0, "entity_id": "e1", "action": "read", "evidence": "ok"},
                 {"stage": 1, "entity_id": "e1", "action": "write", "evidence": "alert"},
                 {"stage": 2, "entity_id": "e1", "action": "read", "evidence": "ok"}]
    }})");
}

int run_cli(const std::string& args) {
  const int rc = std::system((std::string(ZTRUST_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST(Scenario, ShippedScenariosRoundTrip) {
  for (const auto* name : {"apt3", "net5g", "replay3", "cloud_meta"}) {
    const auto s = load_scenario(shipped(name));
    EXPECT_EQ(s.digest, sha256_hex(read_file(shipped(name))));
    const json a = serialize_scenario(s);
    const auto again = parse_scenario(json::parse(a.dump()), s.base_dir);
    EXPECT_EQ(serialize_scenario(again).dump(), a.dump()) << name;
    EXPECT_EQ(comparison_digest(again), comparison_digest(s));
  }
}

TEST(Scenario, MinimalTrustReplayLoads) {
  const auto s = parse_scenario(minimal_trust(), ".");
  EXPECT_EQ(s.mode, ScenarioMode::trust_replay);
  EXPECT_EQ(s.trust->events.size(), 3u);
  EXPECT_EQ(s.output, "out/mini");
}

TEST(Scenario, ErrorsNameTheField) {
  auto j = minimal_trust();
  j["trust"]["events"][1]["evidence"] = "siren";
  EXPECT_EQ(field_of([&] { parse_scenario(j, "."); }), "trust.events[1].evidence");
  j = minimal_trust();
  j["trust"]["strategy"]["table"]["good"] = json::array({0.5, 0.6});
  EXPECT_EQ(field_of([&] { parse_scenario(j, "."); }).rfind("trust.strategy", 0), 0u);
  j = minimal_trust();
  j["mode"] = "pbne";
  EXPECT_EQ(field_of([&] { parse_scenario(j, "."); }), "trust");
  j = minimal_trust();
  j.erase("schema_version");
  EXPECT_EQ(field_of([&] { parse_scenario(j, "."); }), "schema_version");
  j = minimal_trust();
  j["trust"]["events"] = "missing.csv";
  EXPECT_ANY_THROW(parse_scenario(j, "."));
  EXPECT_THROW(parse_json_text("{\"a\": ", "x.json"), ValidationError);
}

TEST(Scenario, StochasticModesNeedSeeds) {
  auto j = serialize_scenario(load_scenario(shipped("net5g")));
  j.erase("seeds");
  EXPECT_EQ(field_of([&] { parse_scenario(j, ZTRUST_SCENARIO_DIR); }), "seeds");
  EXPECT_EQ(field_of([&] { parse_seed_range("5..2", "seeds"); }), "seeds");
  EXPECT_EQ(parse_seed_range("3..5", "seeds"), (std::vector<std::uint64_t>{3, 4, 5}));
}

TEST(Scenario, EveryAuthgraphFieldReachesTheModel) {
  auto j = serialize_scenario(load_scenario(shipped("net5g")));
  auto& a = j["authgraph"];
  a["costs"] = {{"mfa_cost", 2.5}, {"breach_loss", 30}, {"friction_loss", 0.75}, {"horizon", 8}};
  a["agents"]["malicious"]["mfa_pass_prob"] = 0.35;
  a["agents"]["legitimate"]["progress_reward"] = 0.5;
  a["window"] = 2;
  a["grid_resolution"] = 7;
  a["detect_below"] = 0.4;
  a["policy"]["grants"]["svc"] = {{"level", 3}, {"expiry", 9}};
  a["policy"]["grants"]["session"]["expiry"] = 8;
  a["policy"]["authn"] = {{"tau_deny", 0.1}, {"tau_challenge", 0.6}};
  j["resilience"] = {{"baseline", 50}, {"delta", 0.2}, {"dwell", 2}, {"t_max", 4}, {"d_max", 9}};
  const auto s = parse_scenario(j, ZTRUST_SCENARIO_DIR);
  const auto& c = *s.auth;
  EXPECT_EQ(c.model.costs.mfa_cost, 2.5);
  EXPECT_EQ(c.model.costs.breach_loss, 30);
  EXPECT_EQ(c.model.costs.friction_loss, 0.75);
  EXPECT_EQ(c.model.costs.horizon, 8u);
  EXPECT_EQ(c.model.agents[kMalicious].mfa_pass_prob, 0.35);
  EXPECT_EQ(c.model.agents[kLegitimate].progress_reward, 0.5);
  EXPECT_EQ(c.window, 2u);
  EXPECT_EQ(c.grid_resolution, 7u);
  EXPECT_EQ(c.detect_below, 0.4);
  EXPECT_EQ(c.session_entity, "session");
  EXPECT_EQ(c.policy->grants.at("svc").expiry, 9u);
  EXPECT_EQ(c.policy->authn.tau_challenge, 0.6);
  EXPECT_EQ(s.resilience.dwell, 2u);
  EXPECT_EQ(s.resilience.limits.d_max, 9);
  EXPECT_EQ(build_auth_game(c).game.horizon, 8u);
  EXPECT_TRUE(c.model.evidence.has_value());
  EXPECT_EQ(c.model.graph.nodes.size(), 9u);
}

TEST(Runner, TrustReplayReportsTrajectory) {
  const auto dir = scratch("trust");
  const auto s = parse_scenario(minimal_trust(), ".");
  RunOptions o;
  o.out = (dir / "run").string();
  const auto r = run_scenario(s, o);
  const auto& c = *s.trust;
  std::vector<TrustEvent> log{{0, 0}, {1, 1}, {0, 0}};
  const auto want = replay_events(TrustState{"e1", c.prior, 0}, log, c.strategy, c.evidence);
  const auto& traj = r["results"]["entities"][0]["trajectory"];
  ASSERT_EQ(traj.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(traj[i]["ts"].get<double>(), round9(want[i].pi[0]));
  EXPECT_TRUE(fs::exists(dir / "run" / "trust.csv"));
}

TEST(Runner, ReportIsDeterministicAndFilesExist) {
  const auto dir = scratch("net5g");
  const auto s = load_scenario(shipped("net5g"));
  RunOptions o;
  o.seeds = parse_seed_range("1..20", "seeds");
  o.out = (dir / "a").string();
  const auto r = run_scenario(s, o);
  for (const auto& f : r["files"]) EXPECT_TRUE(fs::exists(dir / "a" / f.get<std::string>())) << f;
  EXPECT_EQ(r["scenario"]["digest"], s.digest);
  o.out = (dir / "b").string();
  o.threads = 3;
  run_scenario(s, o);
  EXPECT_EQ(read_file((dir / "a/report.json").string()), read_file((dir / "b/report.json").string()));
  // Four-way table per session.
  const auto& cmp = r["results"]["access_time_comparison"];
  ASSERT_EQ(cmp.size(), 2u);
  EXPECT_EQ(cmp[0]["mean_time"].size(), 4u);
  // Rerunning into the same directory replaces it.
  o.out = (dir / "a").string();
  EXPECT_NO_THROW(run_scenario(s, o));
}

TEST(Runner, RefusesForeignDirectoryAndLeavesNoPartialOutput) {
  const auto dir = scratch("guard");
  fs::create_directories(dir / "mine");
  write(dir / "mine" / "notes.txt", "keep");
  const auto s = load_scenario(shipped("net5g"));
  RunOptions o;
  o.out = (dir / "mine").string();
  EXPECT_THROW(run_scenario(s, o), ValidationError);
  EXPECT_EQ(read_file((dir / "mine/notes.txt").string()), "keep");
  o.out = (dir / "new").string();
  o.window = 99;
  EXPECT_THROW(run_scenario(s, o), ValidationError);
  EXPECT_FALSE(fs::exists(dir / "new"));
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_EQ(e.path().filename(), "mine");
}

TEST(Runner, CompareMatchesTraceRecomputation) {
  const auto dir = scratch("compare");
  const auto s = load_scenario(shipped("net5g"));
  RunOptions o;
  o.seeds = parse_seed_range("1..60", "seeds");
  o.out = (dir / "run").string();
  const auto r = run_scenario(s, o);
  const auto t = compare_reports({r}, {"run"}, "elapsed");
  const json* attacker = nullptr;
  for (const auto& tab : t["tables"])
    if (tab["group"] == "attacker") attacker = &tab;
  ASSERT_NE(attacker, nullptr);
  // Recompute mean time-to-target from the CSVs: stages plus mfa_cost per
  // challenge, successful breaches only.
  auto mean_time = [&](const std::string& policy) {
    double sum = 0;
    int n = 0;
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
      const auto csv = read_csv((dir / "run/traces" / policy / "attacker" / ("seed_" + std::to_string(seed) + ".csv")).string());
      const auto& last = csv.rows.back()[csv.column("state")];
      if (last.find(":breached") == std::string::npos) continue;
      double e = double(csv.rows.size() - 1);
      for (const auto& row : csv.rows) e += row[csv.column("defender_action")] == "challenge" ? 1.0 : 0.0;
      sum += e;
      ++n;
    }
    return n ? sum / n : NAN;
  };
  EXPECT_NEAR((*attacker)["means"]["never_challenge"].get<double>(), mean_time("never_challenge"), 1e-9);
  if ((*attacker)["means"]["strategic"].is_number()) {
    EXPECT_NEAR((*attacker)["means"]["strategic"].get<double>(), mean_time("strategic"), 1e-9);
  }
  // Two identical reports: paired differences across them are zero.
  const auto same = compare_reports({r, r}, {"x", "y"}, "elapsed");
  for (const auto& tab : same["tables"]) {
    const auto base = tab["columns"][0].get<std::string>();
    const auto d = tab["mean_paired_difference"]["y:" + base.substr(2) + " - " + base];
    if (!d.is_null()) { EXPECT_EQ(d.get<double>(), 0.0); }
    for (auto it = tab["means"].begin(); it != tab["means"].end(); ++it)
      if (it.key().rfind("x:", 0) == 0) { EXPECT_EQ(tab["means"]["y:" + it.key().substr(2)], it.value()); }
  }
  // Reports of different scenarios are not comparable.
  json other = r;
  other["scenario"]["comparison_digest"] = "different";
  EXPECT_THROW(compare_reports({r, other}, {"a", "b"}, "elapsed"), ValidationError);
}

TEST(Runner, ExportPolicy) {
  const auto s = load_scenario(shipped("net5g"));
  RunOptions o;
  o.grid = 4;
  const auto p = export_policy(s, o);
  EXPECT_EQ(p["window"], 3);
  EXPECT_EQ(p["grid"].size(), 5u);
  EXPECT_EQ(p["stages"].size(), 3u);
  EXPECT_THROW(export_policy(parse_scenario(minimal_trust(), "."), o), ValidationError);
}

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  EXPECT_EQ(run_cli("validate --scenario net5g"), 0);
  write(dir / "bad.json", "{\"schema_version\": 1, \"name\": \"x\", \"mode\": \"meta_game\"}");
  EXPECT_EQ(run_cli("validate --scenario " + (dir / "bad.json").string()), 2);
  EXPECT_EQ(run_cli("validate --scenario no_such_scenario"), 2);
  // A fully meshed graph overflows the state-space guard.
  json j = serialize_scenario(load_scenario(shipped("net5g")));
  auto& a = j["authgraph"];
  a.erase("policy");
  a["nodes"] = json::array();
  a["edges"] = json::array();
  for (int i = 0; i < 24; ++i)
    a["nodes"].push_back({{"node", "n" + std::to_string(i)}, {"segment", "s"}, {"privilege", 0}, {"target", i == 23}});
  for (int u = 0; u < 24; ++u)
    for (int v = 0; v < 24; ++v)
      if (u != v) a["edges"].push_back({"n" + std::to_string(u), "n" + std::to_string(v)});
  a["entry"] = "n0";
  a["agents"]["legitimate"]["goal"] = {"n5"};
  a["agents"]["legitimate"]["credentials"] = json::array();
  for (int i = 0; i < 24; ++i) a["agents"]["legitimate"]["credentials"].push_back("n" + std::to_string(i));
  a["agents"]["malicious"]["credentials"] = a["agents"]["legitimate"]["credentials"];
  a.erase("evidence");
  write(dir / "mesh.json", j.dump());
  EXPECT_EQ(run_cli("validate --scenario " + (dir / "mesh.json").string()), 3);
  EXPECT_EQ(run_cli("run --scenario replay3 --out " + (dir / "r").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "r" / "report.json"));
  EXPECT_EQ(run_cli("export-policy --scenario replay3"), 2);
}
