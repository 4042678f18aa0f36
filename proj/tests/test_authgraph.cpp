#include <gtest/gtest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "ztrust/authgraph.hpp"
#include "ztrust/scenario.hpp"

using namespace ztrust;

namespace {

AuthGraphConfig line2(double attacker_mfa = 0.2) {
  AuthGraphConfig c;
  c.name = "line2";
  c.graph.nodes = {{"ue", "access", 0, false, {}}, {"db", "data", 1, true, {}}};
  c.graph.out = {{1}, {}};
  c.graph.entry = "ue";
  c.costs.horizon = 1;
  c.agents[kLegitimate] = {{"db"}, {"db"}, 1.0, 10.0, 0.1, 0.0};
  c.agents[kMalicious] = {{}, {"db"}, attacker_mfa, 20.0, 0.5, 0.0};
  return c;
}

const Scenario& net5g() {
  static const Scenario s = load_scenario(std::string(ZTRUST_SCENARIO_DIR) + "/net5g.json");
  return s;
}

const AuthGame& net5g_game() {
  static const AuthGame g = build_auth_game(*net5g().auth);
  return g;
}

// Straightforward re-enumeration of (kind, node, visited) states stage by
// stage from the movement rules.
std::vector<std::set<std::string>> enumerate_states(const AuthGraphConfig& c) {
  const auto& G = c.graph;
  const std::size_t n = G.nodes.size();
  struct S {
    int kind;  // 0 active, 1 breached, 2 completed, 3 rejected
    std::size_t node;
    std::uint64_t visited;
    bool operator<(const S& o) const { return std::tie(kind, node, visited) < std::tie(o.kind, o.node, o.visited); }
  };
  auto label = [&](const S& s) {
    AuthState a{static_cast<AuthStateKind>(s.kind), s.node, s.visited};
    return auth_state_label(G, a);
  };
  auto idx = [&](const std::string& name) {
    for (std::size_t i = 0; i < n; ++i)
      if (G.nodes[i].name == name) return i;
    return n;
  };
  std::uint64_t goal = 0;
  for (const auto& g : c.agents[kLegitimate].goal) goal |= 1ull << idx(g);
  auto can_use = [&](const S& s, std::size_t th, std::size_t v) {
    for (const auto& id : c.agents[th].credentials)
      if (id == G.nodes[v].name) return true;
    for (std::size_t i = 0; i < n; ++i)
      if (s.visited >> i & 1)
        for (const auto& id : G.nodes[i].credentials)
          if (id == G.nodes[v].name) return true;
    return false;
  };
  std::vector<std::set<std::string>> out;
  std::set<S> cur{{0, idx(G.entry), 1ull << idx(G.entry)}};
  for (std::size_t k = 0;; ++k) {
    std::set<std::string> labels;
    for (const auto& s : cur) labels.insert(label(s));
    out.push_back(labels);
    if (k == c.costs.horizon) break;
    std::set<S> next;
    for (const auto& s : cur) {
      if (s.kind != 0) {
        next.insert(s);
        continue;
      }
      std::vector<std::size_t> targets{n};  // n = stay
      for (std::size_t v = 0; v < n; ++v)
        if (std::find(G.out[s.node].begin(), G.out[s.node].end(), v) != G.out[s.node].end()) targets.push_back(v);
      for (std::size_t th = 0; th < 2; ++th)
        for (std::size_t v : targets) {
          S moved = s;
          if (v != n && can_use(s, th, v)) {
            moved = {0, v, s.visited | 1ull << v};
            if (th == kMalicious && G.nodes[v].target) moved.kind = 1;
            if (th == kLegitimate && (moved.visited & goal) == goal) moved.kind = 2;
          }
          next.insert(moved);  // unchallenged, or challenged and passed
          if (c.agents[th].mfa_pass_prob < 1.0) next.insert({3, s.node, s.visited});
        }
    }
    cur = next;
  }
  return out;
}

std::vector<std::string> visited_of(const std::string& label) {
  const auto a = label.find('['), b = label.find(']');
  return split_list(label.substr(a + 1, b - a - 1), '+');
}

}  // namespace

TEST(AuthGraph, TwoNodeLineByHand) {
  const auto ag = build_game(line2());
  const auto& g = ag.game;
  EXPECT_EQ(g.actions[0][0], (std::vector<std::string>{"grant", "challenge"}));
  EXPECT_EQ(g.actions[0][1], (std::vector<std::string>{"stay", "to:db"}));
  EXPECT_EQ(g.states[0], (std::vector<std::string>{"ue[ue]"}));
  const std::set<std::string> s1(g.states[1].begin(), g.states[1].end());
  EXPECT_EQ(s1, (std::set<std::string>{"ue[ue]", "db[ue+db]:breached", "db[ue+db]:completed", "ue[ue]:rejected"}));
  EXPECT_EQ(g.info_mode, InfoMode::one_sided);
  // Attacker moving under a challenge: breach with probability 0.2.
  const auto& row = g.outcomes(0, 0, 1, 1, kMalicious);
  double breach = 0.0;
  for (const auto& o : row)
    if (g.states[1][o.next] == "db[ue+db]:breached") breach += o.prob;
  EXPECT_DOUBLE_EQ(breach, 0.2);
  const auto u = g.payoff(0, 0, 1, 1, kMalicious);
  EXPECT_DOUBLE_EQ(u[0], -1.0 - 20.0 * 0.2);
  EXPECT_DOUBLE_EQ(u[1], 20.0 * 0.2 - 0.5);
  const auto l = g.payoff(0, 0, 1, 1, kLegitimate);
  EXPECT_DOUBLE_EQ(l[0], -1.5);
  EXPECT_DOUBLE_EQ(l[1], 10.0 - 0.1 - 0.5);
}

TEST(AuthGraph, UnreachableTargetRejected) {
  auto c = line2();
  c.graph.out = {{}, {}};
  EXPECT_THROW(build_game(c), ValidationError);
}

TEST(AuthGraph, MissingCredentialBlocksTheHop) {
  auto c = line2();
  c.agents[kMalicious].credentials.clear();
  const auto ag = build_game(c);
  for (const auto& o : ag.game.outcomes(0, 0, 0, 1, kMalicious)) EXPECT_EQ(ag.game.states[1][o.next], "ue[ue]");
}

TEST(AuthGraph, Net5gStatesMatchIndependentEnumeration) {
  const auto& ag = net5g_game();
  const auto want = enumerate_states(ag.config);
  ASSERT_EQ(want.size(), ag.game.states.size());
  std::size_t total = 0;
  for (std::size_t k = 0; k < want.size(); ++k) {
    const std::set<std::string> got(ag.game.states[k].begin(), ag.game.states[k].end());
    EXPECT_EQ(got, want[k]) << "stage " << k;
    total += got.size();
  }
  EXPECT_EQ(ag.state_count(), total);
}

TEST(AuthGraph, RandomGraphsMatchIndependentEnumeration) {
  std::mt19937_64 rng(77);
  for (int i = 0; i < 20; ++i) {
    AuthGraphConfig c;
    c.graph = oracle::random_graph(rng, 5, 0.35, 2);
    c.graph.nodes.back().target = true;
    c.graph.add_edge(0, 4);
    for (auto& n : c.graph.nodes)
      if (rng() % 3 == 0) n.credentials.push_back(c.graph.nodes[rng() % 5].name);
    c.costs.horizon = 3;
    c.agents[kLegitimate] = {{"n" + std::to_string(1 + rng() % 4)}, {"n1", "n2"}, 1.0, 5, 0.1, 0};
    c.agents[kMalicious] = {{}, {"n3", "n4"}, (rng() % 2) * 0.5, 5, 0.1, 0};
    const auto ag = build_game(c);
    const auto want = enumerate_states(c);
    for (std::size_t k = 0; k < want.size(); ++k) {
      const std::set<std::string> got(ag.game.states[k].begin(), ag.game.states[k].end());
      EXPECT_EQ(got, want[k]) << "graph " << i << " stage " << k;
    }
  }
}

TEST(AuthGraph, GuardRejectsStateExplosion) {
  AuthGraphConfig c;
  c.name = "mesh";
  for (int i = 0; i < 24; ++i) c.graph.nodes.push_back({"n" + std::to_string(i), "s", 0, i == 23, {}});
  c.graph.out.assign(24, {});
  for (std::size_t a = 0; a < 24; ++a)
    for (std::size_t b = 0; b < 24; ++b)
      if (a != b) c.graph.add_edge(a, b);
  c.graph.entry = "n0";
  c.costs.horizon = 6;
  std::vector<std::string> all;
  for (const auto& n : c.graph.nodes) all.push_back(n.name);
  c.agents[kLegitimate] = {{"n5"}, all, 1.0, 1, 0.1, 0};
  c.agents[kMalicious] = {{}, all, 0.5, 1, 0.1, 0};
  try {
    build_game(c);
    FAIL();
  } catch (const GuardError& e) {
    EXPECT_NE(std::string(e.what()).find("authgraph 'mesh'"), std::string::npos);
  }
}

TEST(AuthGraph, FullWindowMatchesOfflinePolicy) {
  auto c = line2();
  c.graph.nodes.insert(c.graph.nodes.begin() + 1, AuthNode{"app", "edge", 0, false, {}});
  c.graph.out = {{1}, {2}, {}};
  c.costs.horizon = 3;
  c.agents[kLegitimate] = {{"app", "db"}, {"app", "db"}, 1.0, 10.0, 0.1, 1.0};
  c.agents[kMalicious] = {{}, {"app", "db"}, 0.3, 20.0, 0.5, 1.0};
  const auto ag = build_game(c);
  SolveOptions o;
  o.grid_resolution = 10;
  o.certify = false;
  WindowSolver ws(ag, 3, o);
  const auto offline = solve_pbne(ag.game, o);
  for (double b : {0.05, 0.3, 0.5, 0.71, 0.95}) {
    const std::vector<double> mu{b, 1.0 - b};
    EXPECT_EQ(ws.first_stage(0, 0, mu).p, strategies_at(offline, 0, 0, mu).p);
  }
}

TEST(AuthGraph, NeverChallengeLegitimateTakesShortestPath) {
  const auto& ag = net5g_game();
  WindowSolver ws(ag, 3, {});
  const TrustState t0{"session", {0.9, 0.1}, 0};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto tr = run_baseline(ag, ws, {DefenseMode::never_challenge}, t0, kLegitimate, seed);
    const auto m = session_metrics(tr, 1.0);
    EXPECT_EQ(m.outcome, "completed");
    EXPECT_EQ(m.challenges, 0u);
    EXPECT_EQ(m.elapsed, 3.0);  // ue -> gnb -> app1 -> amf
  }
}

TEST(AuthGraph, AlwaysChallengeStopsAttackerWithoutMfa) {
  auto cfg = *net5g().auth;
  cfg.model.agents[kMalicious].mfa_pass_prob = 0.0;
  const auto ag = build_auth_game(cfg);
  WindowSolver ws(ag, 3, {});
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto tr = run_baseline(ag, ws, {DefenseMode::always_challenge}, {"s", {0.9, 0.1}, 0}, kMalicious, seed);
    EXPECT_EQ(tr.outcome, "rejected");
    ASSERT_EQ(tr.records.size(), 2u);
    EXPECT_EQ(tr.records.back().state, "ue[ue]:rejected");
  }
}

TEST(AuthGraph, ThresholdPolicyMatchesStraightLineReplay) {
  const auto& ag = net5g_game();
  const auto& g = ag.game;
  WindowSolver ws(ag, 3, {});
  const double tau = 0.5;
  for (std::size_t type : {kLegitimate, kMalicious})
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
      const auto tr = run_baseline(ag, ws, {DefenseMode::static_threshold, tau}, {"s", {0.9, 0.1}, 0}, type, seed);
      // Replay: challenge iff TS < tau, draws from the same per-purpose streams,
      // belief by path enumeration.
      std::vector<double> b{0.9, 0.1};
      std::size_t x = 0, k = 0;
      for (; k < g.horizon && !ag.info[k][x].absorbing(); ++k) {
        ASSERT_LT(k + 1, tr.records.size());
        const auto& r = tr.records[k];
        EXPECT_NEAR(r.ts, b[0], 1e-12);
        const std::size_t a1 = b[0] < tau ? 1 : 0;
        EXPECT_EQ(r.defender_action, g.actions[k][0][a1]);
        auto s = ws.first_stage(k, x, b);
        const std::size_t a2 = Rng::stream(seed, k, 2).categorical(s.p[1][type]);
        EXPECT_EQ(r.agent_action, g.actions[k][1][a2]);
        const auto& row = g.outcomes(k, x, a1, a2, type);
        std::vector<double> pr;
        for (const auto& o : row) pr.push_back(o.prob);
        const std::size_t xn = row[Rng::stream(seed, k, 3).categorical(pr)].next;
        std::vector<double> ep;
        for (std::size_t e = 0; e < g.num_evidence(); ++e) ep.push_back(g.evidence_prob(k, e, a2, type));
        const std::size_t e = Rng::stream(seed, k, 4).categorical(ep);
        EXPECT_EQ(r.evidence, g.evidence->alphabet[e]);
        s.p[0][0] = {a1 == 0 ? 1.0 : 0.0, a1 == 1 ? 1.0 : 0.0};
        b = oracle::belief_by_enumeration(g, {kDefender, b}, 0, k, x, xn, s, e);
        x = xn;
      }
      ASSERT_EQ(tr.records.size(), k + 1);
      EXPECT_EQ(tr.records.back().state, g.states[k][x]);
      EXPECT_NEAR(tr.records.back().ts, b[0], 1e-12);
    }
}

TEST(AuthGraph, TraceInvariants) {
  const auto& ag = net5g_game();
  WindowSolver ws(ag, 3, {});
  for (const auto& pol : {"strategic", "always_challenge", "never_challenge", "static_threshold(0.5)"})
    for (std::size_t type : {kLegitimate, kMalicious})
      for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        const auto tr = simulate_session(ag, ws, parse_defense_policy(pol), {"s", {0.9, 0.1}, 0}, type, seed);
        EXPECT_LE(tr.records.size(), ag.game.horizon + 1);
        std::set<std::string> seen;
        for (const auto& r : tr.records) {
          // Labels never lose a visited node.
          const auto v = visited_of(r.state);
          for (const auto& n : seen) EXPECT_NE(std::find(v.begin(), v.end(), n), v.end());
          seen.insert(v.begin(), v.end());
          EXPECT_DOUBLE_EQ(r.ts, trust_score(TrustState{"", r.belief_defender, 0}, ag.game.types[1]).value);
        }
        const auto& last = tr.records.back().state;
        if (tr.outcome == "horizon")
          EXPECT_EQ(tr.records.size(), ag.game.horizon + 1);
        else
          EXPECT_NE(last.find(":" + tr.outcome), std::string::npos);
      }
}

TEST(AuthGraph, RevealingMoveDropsTrustAndDefenseChallenges) {
  const auto& ag = net5g_game();
  WindowSolver ws(ag, 3, {});
  int revealed = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto tr = moving_horizon_defense(ag, ws, {"s", {0.9, 0.1}, 0}, kMalicious, seed);
    bool zero = false;
    for (std::size_t i = 0; i + 1 < tr.records.size(); ++i) {
      const auto& r = tr.records[i];
      if (r.agent_action == "to:app2") {
        // The legitimate type never goes to app2, so the next belief is exact.
        EXPECT_EQ(tr.records[i + 1].ts, 0.0);
        zero = true;
        ++revealed;
      } else if (zero) {
        EXPECT_EQ(r.defender_action, "challenge");
      }
    }
  }
  EXPECT_GT(revealed, 50);
}

TEST(AuthGraph, LayerPolicyRestrictsHops) {
  auto c = line2();
  LayerPolicy p;
  p.grants["session"] = {1, 5};
  p.flows = {{"access", "data"}};
  EXPECT_EQ(restrict_graph(c.graph, p, "session", 1).out[0].size(), 1u);
  p.flows.clear();
  EXPECT_TRUE(restrict_graph(c.graph, p, "session", 1).out[0].empty());
  p.grants["session"] = {0, 5};
  p.flows = {{"access", "data"}};
  EXPECT_TRUE(restrict_graph(c.graph, p, "session", 1).out[0].empty());
  p.grants["session"] = {1, 1};
  EXPECT_THROW(restrict_graph(c.graph, p, "session", 3), ValidationError);
}

TEST(AuthGraph, PolicyNames) {
  EXPECT_EQ(parse_defense_policy("static_threshold(0.25)").name(), "static_threshold(0.25)");
  EXPECT_THROW(parse_defense_policy("static_threshold(1.5)"), ValidationError);
  EXPECT_THROW(parse_defense_policy("sometimes"), ValidationError);
}
