#pragma once

// Lateral movement on an authentication graph as a one-sided Markov game.
// The state is the current node plus the set of visited nodes; the agent
// moves along edges using credentials it holds or finds in visited nodes,
// and the defender decides per stage whether to demand step-up
// authentication before granting the hop.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ztrust/error.hpp"
#include "ztrust/game.hpp"
#include "ztrust/graph.hpp"
#include "ztrust/pbne.hpp"
#include "ztrust/policy_engine.hpp"
#include "ztrust/random.hpp"
#include "ztrust/trace.hpp"
#include "ztrust/trust.hpp"

namespace ztrust {

inline constexpr std::size_t kLegitimate = 0;
inline constexpr std::size_t kMalicious = 1;
inline constexpr std::size_t kMaxAuthStates = 100000;

struct AgentProfile {
  std::vector<std::string> goal;  // legitimate workload; ignored for the attacker
  std::vector<std::string> credentials;
  double mfa_pass_prob = 1.0;
  double access_reward = 10.0;  // on completing the workload / reaching a target
  double step_cost = 0.1;
  double progress_reward = 0.0;  // per newly visited node (workload nodes only, for the legitimate type)
};

struct DefenseCosts {
  double mfa_cost = 1.0;
  double breach_loss = 20.0;
  double friction_loss = 0.5;
  std::size_t horizon = 7;

  void validate(const std::string& path = "costs") const {
    for (auto [v, n] : {std::pair{mfa_cost, "mfa_cost"}, std::pair{breach_loss, "breach_loss"},
                        std::pair{friction_loss, "friction_loss"}})
      require(std::isfinite(v) && v >= 0.0, path + "." + n, "must be a non-negative finite number");
    require(horizon >= 1, path + ".horizon", "must be at least 1");
  }
};

struct AuthGraphConfig {
  std::string name = "authgraph";
  AuthGraph graph;
  DefenseCosts costs;
  std::array<AgentProfile, 2> agents;  // legitimate, malicious
  // Rows keyed by "stay", "move" or a specific "to:<node>"; the specific key
  // wins. Absent: uninformative.
  std::optional<EvidenceModel> evidence;
};

enum class AuthStateKind { active, breached, completed, rejected };

struct AuthState {
  AuthStateKind kind = AuthStateKind::active;
  std::size_t node = 0;
  std::uint64_t visited = 0;

  bool absorbing() const { return kind != AuthStateKind::active; }
  auto key() const { return std::tuple{static_cast<int>(kind), node, visited}; }
};

struct AuthGame {
  AuthGraphConfig config;
  GameDefinition game;
  std::vector<std::vector<AuthState>> info;  // [k][x]
  std::vector<std::size_t> move_target;      // agent action -> node, SIZE_MAX for stay

  std::size_t state_count() const {
    std::size_t n = 0;
    for (const auto& s : info) n += s.size();
    return n;
  }
};

inline std::string auth_state_label(const AuthGraph& g, const AuthState& s) {
  std::string out = g.nodes[s.node].name + "[";
  bool first = true;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (s.visited >> i & 1u) out += (first ? "" : "+") + g.nodes[i].name, first = false;
  out += "]";
  switch (s.kind) {
    case AuthStateKind::active: break;
    case AuthStateKind::breached: out += ":breached"; break;
    case AuthStateKind::completed: out += ":completed"; break;
    case AuthStateKind::rejected: out += ":rejected"; break;
  }
  return out;
}

// Evidence rows for every agent action label.
inline EvidenceModel expand_evidence(const EvidenceModel& m, const std::vector<std::string>& labels) {
  EvidenceModel out;
  out.alphabet = m.alphabet;
  for (const auto& a : labels) {
    auto it = std::find(m.actions.begin(), m.actions.end(), a);
    if (it == m.actions.end())
      it = std::find(m.actions.begin(), m.actions.end(), a == "stay" ? std::string("stay") : std::string("move"));
    require(it != m.actions.end(), "evidence.likelihood", "no row covers action '" + a + "'");
    out.actions.push_back(a);
    out.likelihood.push_back(m.likelihood[static_cast<std::size_t>(it - m.actions.begin())]);
  }
  return out;
}

namespace detail {

struct AuthStep {
  AuthState next;
  double prob;
};

class AuthKernel {
public:
  explicit AuthKernel(const AuthGraphConfig& c) : c_(c) {
    const auto& g = c.graph;
    for (std::size_t th = 0; th < 2; ++th) {
      held_[th].assign(g.size(), 0);
      for (const auto& id : c.agents[th].credentials)
        if (g.has_node(id)) held_[th][g.index(id)] = 1;
    }
    for (const auto& n : c.agents[kLegitimate].goal) goal_ |= std::uint64_t{1} << g.index(n, "agents.legitimate.goal");
  }

  bool has_credential(const AuthState& s, std::size_t th, std::size_t v) const {
    if (held_[th][v]) return true;
    const auto& g = c_.graph;
    const auto& name = g.nodes[v].name;
    for (std::size_t i = 0; i < g.size(); ++i)
      if ((s.visited >> i & 1u) &&
          std::find(g.nodes[i].credentials.begin(), g.nodes[i].credentials.end(), name) != g.nodes[i].credentials.end())
        return true;
    return false;
  }

  AuthState arrive(const AuthState& s, std::size_t th, std::size_t v) const {
    AuthState n{AuthStateKind::active, v, s.visited | std::uint64_t{1} << v};
    if (th == kMalicious && c_.graph.nodes[v].target) n.kind = AuthStateKind::breached;
    if (th == kLegitimate && (n.visited & goal_) == goal_) n.kind = AuthStateKind::completed;
    return n;
  }

  // move == SIZE_MAX: stay.
  std::vector<AuthStep> step(const AuthState& s, bool challenge, std::size_t move, std::size_t th) const {
    if (s.absorbing()) return {{s, 1.0}};
    AuthState ok = s;
    if (move != SIZE_MAX && has_credential(s, th, move)) ok = arrive(s, th, move);
    if (!challenge) return {{ok, 1.0}};
    const double pass = c_.agents[th].mfa_pass_prob;
    std::vector<AuthStep> out;
    if (pass > 0.0) out.push_back({ok, pass});
    if (pass < 1.0) out.push_back({AuthState{AuthStateKind::rejected, s.node, s.visited}, 1.0 - pass});
    return out;
  }

  std::uint64_t goal() const { return goal_; }

private:
  const AuthGraphConfig& c_;
  std::array<std::vector<char>, 2> held_;
  std::uint64_t goal_ = 0;
};

}  // namespace detail

// Enumerates the states reachable within the horizon and builds the game.
// Stage payoffs are expectations over the challenge outcome.
inline AuthGame build_game(const AuthGraphConfig& config) {
  AuthGame out;
  out.config = config;
  const AuthGraphConfig& c = out.config;
  const AuthGraph& G = c.graph;
  G.validate("graph");
  c.costs.validate("costs");
  require(G.size() <= 64, "graph.nodes", "at most 64 nodes are supported");
  for (std::size_t th = 0; th < 2; ++th) {
    const auto path = std::string("agents.") + (th == kLegitimate ? "legitimate" : "malicious");
    const auto& a = c.agents[th];
    require(a.mfa_pass_prob >= 0.0 && a.mfa_pass_prob <= 1.0, path + ".mfa_pass_prob", "must lie in [0, 1]");
    require(std::isfinite(a.access_reward) && std::isfinite(a.step_cost) && std::isfinite(a.progress_reward), path,
            "non-finite reward");
    for (const auto& id : a.credentials) require(G.has_node(id), path + ".credentials", "unknown node '" + id + "'");
  }
  require(!c.agents[kLegitimate].goal.empty(), "agents.legitimate.goal", "workload must name at least one node");
  for (const auto& n : c.agents[kLegitimate].goal) G.index(n, "agents.legitimate.goal");
  for (const auto& n : G.nodes)
    for (const auto& id : n.credentials)
      require(G.has_node(id), "graph.nodes." + n.name + ".credentials", "unknown node '" + id + "'");
  {
    const auto seen = G.reachable(G.entry_index());
    bool any = false;
    for (std::size_t i = 0; i < G.size(); ++i) any = any || (seen[i] && G.nodes[i].target);
    require(any, "graph", "no target node is reachable from the entry node");
  }

  const std::size_t K = c.costs.horizon;
  std::vector<std::string> agent_actions{"stay"};
  out.move_target.push_back(SIZE_MAX);
  {
    std::vector<char> indeg(G.size(), 0);
    for (const auto& row : G.out)
      for (std::size_t v : row) indeg[v] = 1;
    for (std::size_t v = 0; v < G.size(); ++v)
      if (indeg[v]) agent_actions.push_back("to:" + G.nodes[v].name), out.move_target.push_back(v);
  }
  const std::vector<std::string> defender_actions{"grant", "challenge"};
  const std::size_t M2 = agent_actions.size();

  const detail::AuthKernel kernel(c);
  const std::size_t entry = G.entry_index();
  out.info.assign(K + 1, {});
  out.info[0].push_back({AuthStateKind::active, entry, std::uint64_t{1} << entry});
  std::size_t total = 1;
  for (std::size_t k = 0; k < K; ++k) {
    std::map<std::tuple<int, std::size_t, std::uint64_t>, std::size_t> idx;
    auto& next = out.info[k + 1];
    for (const auto& s : out.info[k])
      for (std::size_t a1 = 0; a1 < 2; ++a1)
        for (std::size_t a2 = 0; a2 < M2; ++a2) {
          const std::size_t v = out.move_target[a2];
          if (v != SIZE_MAX && (s.absorbing() || !G.has_edge(s.node, v))) continue;
          for (std::size_t th = 0; th < 2; ++th)
            for (const auto& st : kernel.step(s, a1 == 1, v, th))
              if (idx.emplace(st.next.key(), next.size()).second) next.push_back(st.next);
        }
    std::sort(next.begin(), next.end(), [](const AuthState& a, const AuthState& b) { return a.key() < b.key(); });
    total += next.size();
    if (total > kMaxAuthStates) {
      std::string sizes;
      for (std::size_t j = 0; j <= k + 1; ++j) sizes += (j ? "," : "") + std::to_string(out.info[j].size());
      throw GuardError("authgraph '" + c.name + "'", "more than " + std::to_string(kMaxAuthStates) +
                                                        " reachable states (per-stage counts so far: " + sizes + ")");
    }
  }

  GameDefinition& g = out.game;
  g.name = c.name;
  g.horizon = K;
  g.info_mode = InfoMode::one_sided;
  g.type_dependent = true;
  g.types[0] = TypeSpace{{"defender"}, {}};
  g.types[1] = TypeSpace{{"legitimate", "malicious"}, {"legitimate"}};
  g.states.resize(K + 1);
  for (std::size_t k = 0; k <= K; ++k)
    for (const auto& s : out.info[k]) g.states[k].push_back(auth_state_label(G, s));
  g.actions.assign(K, {defender_actions, agent_actions});
  g.allocate();
  g.allowed.assign(K, {});
  for (std::size_t k = 0; k < K; ++k) {
    std::map<std::tuple<int, std::size_t, std::uint64_t>, std::size_t> idx;
    for (std::size_t i = 0; i < out.info[k + 1].size(); ++i) idx.emplace(out.info[k + 1][i].key(), i);
    g.allowed[k].resize(out.info[k].size());
    for (std::size_t x = 0; x < out.info[k].size(); ++x) {
      const AuthState& s = out.info[k][x];
      auto& mask = g.allowed[k][x];
      mask[0] = {1, static_cast<char>(s.absorbing() ? 0 : 1)};
      mask[1].assign(M2, 0);
      for (std::size_t a2 = 0; a2 < M2; ++a2) {
        const std::size_t v = out.move_target[a2];
        mask[1][a2] = v == SIZE_MAX || (!s.absorbing() && G.has_edge(s.node, v));
      }
      for (std::size_t a1 = 0; a1 < 2; ++a1)
        for (std::size_t a2 = 0; a2 < M2; ++a2)
          for (std::size_t th = 0; th < 2; ++th) {
            // Masked cells still need a valid row; they behave like "stay".
            const std::size_t v = mask[1][a2] ? out.move_target[a2] : SIZE_MAX;
            const auto steps = kernel.step(s, a1 == 1 && !s.absorbing(), v, th);
            std::vector<Outcome> row;
            double breach = 0.0, complete = 0.0, fresh = 0.0;
            for (const auto& st : steps) {
              row.push_back({idx.at(st.next.key()), st.prob});
              const std::uint64_t gained = st.next.visited & ~s.visited & (th == kLegitimate ? kernel.goal() : ~0ull);
              if (gained) fresh += st.prob;
              if (!s.absorbing() && st.next.kind == AuthStateKind::breached) breach += st.prob;
              if (!s.absorbing() && st.next.kind == AuthStateKind::completed) complete += st.prob;
            }
            g.set_transition(k, x, a1, a2, std::move(row), th);
            Payoff u{0.0, 0.0};
            if (!s.absorbing()) {
              const auto& ag = c.agents[th];
              const bool ch = a1 == 1;
              u[0] = -(ch ? c.costs.mfa_cost : 0.0);
              u[1] = ag.progress_reward * fresh - ag.step_cost;
              if (th == kLegitimate) {
                if (ch) u[0] -= c.costs.friction_loss, u[1] -= c.costs.friction_loss;
                u[1] += ag.access_reward * complete;
              } else {
                u[0] -= c.costs.breach_loss * breach;
                u[1] += ag.access_reward * breach;
              }
            }
            g.set_payoff(k, x, a1, a2, th, u);
          }
    }
  }
  g.evidence = c.evidence ? expand_evidence(*c.evidence, agent_actions)
                          : EvidenceModel::uninformative(agent_actions, 2);
  g.initial_state = {1.0};
  g.prior = {0.5, 0.5};
  g.validate();
  return out;
}

// The graph as seen through a layer policy: hops the network or authorization
// layer would refuse for `entity` are removed. Grants must outlive the session.
inline AuthGraph restrict_graph(const AuthGraph& graph, const LayerPolicy& policy, const std::string& entity,
                                std::size_t horizon) {
  policy.validate(graph);
  const auto it = policy.grants.find(entity);
  require(it != policy.grants.end(), "policy.grants", "no grant for session entity '" + entity + "'");
  require(it->second.expiry >= horizon, "policy.grants." + entity, "grant expires before the session horizon");
  AuthGraph out = graph;
  for (std::size_t u = 0; u < graph.size(); ++u) {
    out.out[u].clear();
    for (std::size_t v : graph.out[u])
      if (policy.flow_allowed(graph.nodes[u].segment, graph.nodes[v].segment) &&
          it->second.level >= graph.nodes[v].privilege)
        out.out[u].push_back(v);
  }
  return out;
}

// Window policies keyed by (stage, state). A window solve does not depend on
// the belief it is queried at, so one cache serves every seed and policy.
class WindowSolver {
public:
  WindowSolver(const AuthGame& ag, std::size_t window, SolveOptions opt) : ag_(ag), window_(window), opt_(opt) {
    require(window >= 1, "window", "must be a positive integer");
    require(window <= ag.game.horizon, "window", "must not exceed the horizon");
    opt_.certify = false;
    opt_.threads = 1;
  }

  std::size_t window() const { return window_; }

  std::shared_ptr<const SolvedPolicy> at(std::size_t k, std::size_t x) {
    {
      std::lock_guard lock(mu_);
      auto it = cache_.find({k, x});
      if (it != cache_.end()) return it->second;
    }
    const auto w = truncate(ag_.game, k, x, window_, ag_.game.prior);
    auto pol = std::make_shared<const SolvedPolicy>(solve_pbne(w, opt_));
    std::lock_guard lock(mu_);
    return cache_.emplace(std::pair{k, x}, std::move(pol)).first->second;
  }

  // First-stage strategies of the window game at belief mu over agent types.
  StageStrategies first_stage(std::size_t k, std::size_t x, std::span<const double> mu) {
    return strategies_at(*at(k, x), 0, 0, mu);
  }

private:
  const AuthGame& ag_;
  std::size_t window_;
  SolveOptions opt_;
  std::mutex mu_;
  std::map<std::pair<std::size_t, std::size_t>, std::shared_ptr<const SolvedPolicy>> cache_;
};

enum class DefenseMode { strategic, always_challenge, never_challenge, static_threshold };

inline const char* to_string(DefenseMode m) {
  switch (m) {
    case DefenseMode::strategic: return "strategic";
    case DefenseMode::always_challenge: return "always_challenge";
    case DefenseMode::never_challenge: return "never_challenge";
    case DefenseMode::static_threshold: return "static_threshold";
  }
  return "?";
}

struct DefensePolicy {
  DefenseMode mode = DefenseMode::strategic;
  double tau = 0.5;

  std::string name() const {
    if (mode != DefenseMode::static_threshold) return to_string(mode);
    return std::string("static_threshold(") + format_number(tau) + ")";
  }
};

inline DefensePolicy parse_defense_policy(const std::string& s, const std::string& field = "policies") {
  if (s == "strategic") return {DefenseMode::strategic};
  if (s == "always_challenge") return {DefenseMode::always_challenge};
  if (s == "never_challenge") return {DefenseMode::never_challenge};
  const std::string pre = "static_threshold(";
  if (s.rfind(pre, 0) == 0 && s.size() > pre.size() + 1 && s.back() == ')') {
    double tau = 0.0;
    try {
      std::size_t used = 0;
      const std::string num = s.substr(pre.size(), s.size() - pre.size() - 1);
      tau = std::stod(num, &used);
      require(used == num.size(), field, "malformed threshold in '" + s + "'");
    } catch (const std::logic_error&) {
      throw ValidationError(field, "malformed threshold in '" + s + "'");
    }
    require(tau >= 0.0 && tau <= 1.0, field, "threshold must lie in [0, 1]");
    return {DefenseMode::static_threshold, tau};
  }
  throw ValidationError(field, "unknown policy '" + s + "'");
}

struct SessionLayers {
  const LayerPolicy* policy = nullptr;  // null: hops are not re-checked
  std::string entity = "session";
};

// One session of an agent of the given type. The defender's action comes from
// the window policy (strategic) or from the fixed rule; the agent always plays
// the window equilibrium strategy for its type at the current public belief.
// The defender's belief is updated with its realized action, the observed
// transition and the evidence.
inline SimulationTrace simulate_session(const AuthGame& ag, WindowSolver& ws, const DefensePolicy& policy,
                                        const TrustState& trust0, std::size_t agent_type, std::uint64_t seed,
                                        const SessionLayers& layers = {}) {
  const GameDefinition& g = ag.game;
  require(trust0.pi.size() == 2 && is_distribution(trust0.pi), "trust0.pi", "must be a distribution over 2 types");
  require(agent_type < 2, "agent_type", "out of range");
  require(policy.mode != DefenseMode::static_threshold || (policy.tau >= 0.0 && policy.tau <= 1.0), "policy.tau",
          "threshold must lie in [0, 1]");
  enum : std::uint64_t { kDefenderAct = 1, kAgentAct = 2, kMove = 3, kEvidence = 4 };
  SimulationTrace trace;
  trace.seed = seed;
  trace.policy = policy.name();
  trace.agent = g.types[1].labels[agent_type];
  const AuthGraph& G = ag.config.graph;
  const TypeSpace& space = g.types[1];

  BeliefState b{kDefender, trust0.pi};
  std::size_t x = 0;
  std::size_t k = 0;
  auto fill = [&](TraceRecord& r) {
    r.belief_defender = b.point;
    r.belief_good = b.point[kLegitimate];
    r.ts = trust_score(TrustState{"", b.point, k}, space).value;
  };
  bool off_path = false;
  for (; k < g.horizon && !ag.info[k][x].absorbing(); ++k) {
    const AuthState& s = ag.info[k][x];
    const auto eq = ws.first_stage(k, x, b.point);
    std::size_t a1 = 0;
    switch (policy.mode) {
      case DefenseMode::strategic: a1 = Rng::stream(seed, k, kDefenderAct).categorical(eq.p[0][0]); break;
      case DefenseMode::always_challenge: a1 = 1; break;
      case DefenseMode::never_challenge: a1 = 0; break;
      case DefenseMode::static_threshold: a1 = b.point[kLegitimate] < policy.tau ? 1 : 0; break;
    }
    const std::size_t a2 = Rng::stream(seed, k, kAgentAct).categorical(eq.p[1][agent_type]);
    const auto& row = g.outcomes(k, x, a1, a2, agent_type);
    std::vector<double> probs;
    for (const auto& o : row) probs.push_back(o.prob);
    const std::size_t xn = row[Rng::stream(seed, k, kMove).categorical(probs)].next;
    std::vector<double> ep(g.num_evidence());
    for (std::size_t i = 0; i < ep.size(); ++i) ep[i] = g.evidence_prob(k, i, a2, agent_type);
    const std::size_t e = Rng::stream(seed, k, kEvidence).categorical(ep);

    TraceRecord r;
    r.stage = k;
    r.state = g.states[k][x];
    r.defender_action = g.actions[k][0][a1];
    r.agent_action = g.actions[k][1][a2];
    r.evidence = g.evidence->alphabet[e];
    fill(r);
    r.off_path = off_path;
    const auto& u = g.payoff(k, x, a1, a2, agent_type);
    r.payoff_defender = u[0];
    r.payoff_agent = u[1];
    r.authn = a1 == 1 ? "challenge" : "pass";
    r.authz = r.network = "pass";
    const std::size_t v = ag.move_target[a2];
    if (layers.policy && v != SIZE_MAX) {
      const TrustState ts{layers.entity, b.point, k};
      const auto d = decide({layers.entity, G.nodes[s.node].name, G.nodes[v].name, 0, ""}, &ts, space,
                            *layers.policy, G, k);
      r.authz = to_string(d.authz);
      r.network = to_string(d.network);
    }
    const bool hop_ok = r.authz == "pass" && r.network == "pass";
    r.verdict = !hop_ok ? to_string(Verdict::deny)
                        : to_string(a1 == 1 ? Verdict::challenge_then_grant : Verdict::grant);
    trace.records.push_back(std::move(r));

    StageStrategies obs = eq;
    obs.p[0][0].assign(2, 0.0);
    obs.p[0][0][a1] = 1.0;
    const auto upd = update_belief(g, b, 0, k, x, xn, obs, e);
    b = upd.belief;
    off_path = off_path || upd.off_path;
    x = xn;
  }
  TraceRecord last;
  last.stage = k;
  last.state = g.states[k][x];
  fill(last);
  last.off_path = off_path;
  trace.records.push_back(std::move(last));
  switch (ag.info[k][x].kind) {
    case AuthStateKind::active: trace.outcome = "horizon"; break;
    case AuthStateKind::breached: trace.outcome = "breached"; break;
    case AuthStateKind::completed: trace.outcome = "completed"; break;
    case AuthStateKind::rejected: trace.outcome = "rejected"; break;
  }
  return trace;
}

inline SimulationTrace moving_horizon_defense(const AuthGame& ag, WindowSolver& ws, const TrustState& trust0,
                                              std::size_t agent_type, std::uint64_t seed,
                                              const SessionLayers& layers = {}) {
  return simulate_session(ag, ws, {DefenseMode::strategic}, trust0, agent_type, seed, layers);
}

inline SimulationTrace run_baseline(const AuthGame& ag, WindowSolver& ws, const DefensePolicy& mode,
                                    const TrustState& trust0, std::size_t agent_type, std::uint64_t seed,
                                    const SessionLayers& layers = {}) {
  require(mode.mode != DefenseMode::strategic, "mode", "not a baseline");
  return simulate_session(ag, ws, mode, trust0, agent_type, seed, layers);
}

struct SessionMetrics {
  std::string outcome;
  std::size_t stages = 0;      // decision stages taken
  std::size_t challenges = 0;
  double elapsed = 0.0;        // stages plus mfa_cost per challenge
  std::optional<std::size_t> detection_stage;  // first record with TS below the threshold
};

inline SessionMetrics session_metrics(const SimulationTrace& t, double mfa_cost, double detect_below = 0.5) {
  SessionMetrics m;
  m.outcome = t.outcome;
  m.stages = t.records.empty() ? 0 : t.records.size() - 1;
  for (const auto& r : t.records) {
    if (r.defender_action == "challenge") ++m.challenges;
    if (!m.detection_stage && r.ts < detect_below) m.detection_stage = r.stage;
  }
  m.elapsed = static_cast<double>(m.stages) + mfa_cost * static_cast<double>(m.challenges);
  return m;
}

}  // namespace ztrust
