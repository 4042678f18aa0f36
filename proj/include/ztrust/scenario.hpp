#pragma once

// Scenario files: one JSON document (schema_version 1) per run, with CSV side
// files for graphs and event logs. Loading validates every cross-reference;
// serialization inlines side files so that load -> serialize -> load is a
// fixed point.

#include <openssl/evp.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ztrust/authgraph.hpp"
#include "ztrust/csv.hpp"
#include "ztrust/error.hpp"
#include "ztrust/flipit.hpp"
#include "ztrust/game_io.hpp"
#include "ztrust/json_io.hpp"
#include "ztrust/metagame.hpp"
#include "ztrust/policy_engine.hpp"
#include "ztrust/resilience.hpp"
#include "ztrust/signaling.hpp"
#include "ztrust/trust.hpp"

namespace ztrust {

inline constexpr const char* kEngineVersion = "ztrust 1.0.0";
inline constexpr std::uint64_t kSchemaVersion = 1;

enum class ScenarioMode { trust_replay, pbne, meta_game, authgraph_sim };

inline const char* to_string(ScenarioMode m) {
  switch (m) {
    case ScenarioMode::trust_replay: return "trust_replay";
    case ScenarioMode::pbne: return "pbne";
    case ScenarioMode::meta_game: return "meta_game";
    case ScenarioMode::authgraph_sim: return "authgraph_sim";
  }
  return "?";
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256: digest computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) out += hex[md[i] >> 4], out += hex[md[i] & 15];
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path, "cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// "a..b" (inclusive) or a single integer.
inline std::vector<std::uint64_t> parse_seed_range(const std::string& s, const std::string& field = "seeds") {
  auto number = [&](const std::string& t) {
    require(!t.empty() && t.find_first_not_of("0123456789") == std::string::npos, field,
            "expected 'a..b' with non-negative integers, got '" + s + "'");
    try {
      return static_cast<std::uint64_t>(std::stoull(t));
    } catch (const std::out_of_range&) {
      throw ValidationError(field, "seed out of range in '" + s + "'");
    }
  };
  const auto dots = s.find("..");
  if (dots == std::string::npos) return {number(s)};
  const auto a = number(s.substr(0, dots)), b = number(s.substr(dots + 2));
  require(a <= b, field, "empty seed range '" + s + "'");
  require(b - a < 10000000, field, "seed range too large");
  std::vector<std::uint64_t> out;
  for (auto v = a; v <= b; ++v) out.push_back(v);
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(const json& j, const std::string& path) {
  if (j.is_string()) return parse_seed_range(j.get<std::string>(), path);
  if (!j.is_array()) throw ValidationError(path, "expected 'a..b' or an array of integers");
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_count(j[i], index_path(path, i)));
  return out;
}

inline json seeds_to_json(const std::vector<std::uint64_t>& s) {
  bool run = !s.empty();
  for (std::size_t i = 1; i < s.size() && run; ++i) run = s[i] == s[i - 1] + 1;
  if (run && s.size() > 1) return std::to_string(s.front()) + ".." + std::to_string(s.back());
  return s;
}

struct ReplayEvent {
  std::size_t stage = 0;
  std::string entity_id, action, evidence;
};

struct TrustReplayConfig {
  TypeSpace types;
  std::vector<double> prior;  // used when there are no prior sources
  std::vector<PriorSource> sources;
  double half_life = 1.0;
  ObservedStrategy strategy;
  EvidenceModel evidence;
  std::vector<ReplayEvent> events;

  TrustState initial(const std::string& entity) const {
    if (sources.empty()) return TrustState{entity, prior, 0};
    return aggregate_prior(sources, half_life, entity);
  }
};

struct PbnePlay {
  std::string defender_type, agent_type;
  std::string label() const { return defender_type + "-" + agent_type; }
};

struct PbneConfig {
  GameSpec spec;
  GameDefinition game;
  std::size_t grid_resolution = 20;
  std::size_t certify_samples = 0;
  std::vector<PbnePlay> plays;
};

struct MetaGameConfig {
  FlipItConfig flipit;
  SignalingGame signaling;
  std::size_t max_iterations = 50;
};

struct SessionSpec {
  std::string label;
  std::size_t agent = kLegitimate;
  std::vector<double> trust0;
};

struct AuthSimConfig {
  AuthGraphConfig model;  // graph as declared
  std::optional<LayerPolicy> policy;
  std::string session_entity = "session";
  std::size_t window = 3;
  std::size_t grid_resolution = 20;
  std::vector<std::string> policies;
  std::vector<SessionSpec> sessions;
  double detect_below = 0.5;
};

struct ResilienceConfig {
  double baseline = 100.0;
  double delta = 0.1;
  std::size_t dwell = 1;
  ResilienceLimits limits;
};

struct Scenario {
  std::string path, base_dir;
  std::string digest;  // SHA-256 of the file bytes
  std::string name, description;
  ScenarioMode mode = ScenarioMode::trust_replay;
  std::vector<std::uint64_t> seeds;
  std::string output;
  ResilienceConfig resilience;
  std::optional<TrustReplayConfig> trust;
  std::optional<PbneConfig> pbne;
  std::optional<MetaGameConfig> meta;
  std::optional<AuthSimConfig> auth;
};

namespace detail {

inline const TypeSpace& auth_types() {
  static const TypeSpace t{{"legitimate", "malicious"}, {"legitimate"}};
  return t;
}

inline std::size_t count_or(const json& j, const std::string& key, std::size_t fallback, const std::string& path) {
  const json* v = find(j, key);
  return v ? static_cast<std::size_t>(as_count(*v, join_path(path, key))) : fallback;
}

inline TrustReplayConfig parse_trust(const json& j, const std::string& path, const std::string& base) {
  TrustReplayConfig c;
  c.types = parse_type_space(at(j, "types", path), join_path(path, "types"), false);
  if (const json* s = find(j, "prior_sources")) {
    const auto sp = join_path(path, "prior_sources");
    if (!s->is_array() || s->empty()) throw ValidationError(sp, "expected a non-empty array");
    for (std::size_t i = 0; i < s->size(); ++i) c.sources.push_back(parse_prior_source((*s)[i], c.types, index_path(sp, i)));
    c.half_life = number_or(j, "half_life", 1.0, path);
    require(c.half_life > 0.0, join_path(path, "half_life"), "must be positive");
    aggregate_prior(c.sources, c.half_life);
  } else {
    c.prior = as_numbers(at(j, "prior", path), join_path(path, "prior"));
    require(c.prior.size() == c.types.size() && is_distribution(c.prior), join_path(path, "prior"),
            "must be a distribution over the types");
  }
  c.strategy = parse_strategy(at(j, "strategy", path), c.types, join_path(path, "strategy"));
  c.evidence = parse_evidence(at(j, "evidence", path), c.types, join_path(path, "evidence"));
  for (const auto& a : c.strategy.actions)
    index_of(c.evidence.actions, a, join_path(path, "evidence.likelihood"));

  const json& ev = at(j, "events", path);
  const auto epath = join_path(path, "events");
  if (ev.is_string()) {
    const auto t = read_csv(resolve_path(base, ev.get<std::string>()));
    const std::size_t cs = t.column("stage"), ce = t.column("entity_id"), ca = t.column("action"),
                      cv = t.column("evidence");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const long long st = parse_int(t.rows[r][cs], t.where(r) + ":stage");
      require(st >= 0, t.where(r) + ":stage", "must be non-negative");
      c.events.push_back({static_cast<std::size_t>(st), t.rows[r][ce], t.rows[r][ca], t.rows[r][cv]});
    }
  } else if (ev.is_array()) {
    for (std::size_t i = 0; i < ev.size(); ++i) {
      const auto p = index_path(epath, i);
      c.events.push_back({static_cast<std::size_t>(as_count(at(ev[i], "stage", p), join_path(p, "stage"))),
                          as_string(at(ev[i], "entity_id", p), join_path(p, "entity_id")),
                          as_string(at(ev[i], "action", p), join_path(p, "action")),
                          as_string(at(ev[i], "evidence", p), join_path(p, "evidence"))});
    }
  } else {
    throw ValidationError(epath, "expected a CSV file name or an array of events");
  }
  for (std::size_t i = 0; i < c.events.size(); ++i) {
    const auto p = index_path(epath, i);
    require(!c.events[i].entity_id.empty(), join_path(p, "entity_id"), "empty entity id");
    index_of(c.strategy.actions, c.events[i].action, join_path(p, "action"));
    index_of(c.evidence.alphabet, c.events[i].evidence, join_path(p, "evidence"));
  }
  return c;
}

inline json trust_to_json(const TrustReplayConfig& c) {
  json j;
  j["types"] = to_json(c.types);
  if (c.sources.empty()) {
    j["prior"] = nums(c.prior);
  } else {
    json s = json::array();
    for (const auto& src : c.sources) s.push_back(to_json(src));
    j["prior_sources"] = s;
    j["half_life"] = num(c.half_life);
  }
  j["strategy"] = to_json(c.strategy, c.types);
  j["evidence"] = to_json(c.evidence, c.types);
  json ev = json::array();
  for (const auto& e : c.events)
    ev.push_back({{"stage", e.stage}, {"entity_id", e.entity_id}, {"action", e.action}, {"evidence", e.evidence}});
  j["events"] = ev;
  return j;
}

inline PbneConfig parse_pbne(const json& root, const std::string& base) {
  PbneConfig c;
  c.spec = parse_game_spec(at(root, "game", ""), "game", base);
  c.game = build_game(c.spec, "game");
  const json* p = find(root, "pbne");
  const json empty = json::object();
  const json& j = p ? *p : empty;
  c.grid_resolution = count_or(j, "grid_resolution", 20, "pbne");
  require(c.grid_resolution >= 1, "pbne.grid_resolution", "must be a positive integer");
  c.certify_samples = count_or(j, "certify_samples", 0, "pbne");
  if (const json* plays = find(j, "plays")) {
    if (!plays->is_array()) throw ValidationError("pbne.plays", "expected an array");
    for (std::size_t i = 0; i < plays->size(); ++i) {
      const auto pp = index_path("pbne.plays", i);
      PbnePlay pl{as_string(at((*plays)[i], "defender_type", pp), join_path(pp, "defender_type")),
                  as_string(at((*plays)[i], "agent_type", pp), join_path(pp, "agent_type"))};
      index_of(c.game.types[0].labels, pl.defender_type, join_path(pp, "defender_type"));
      index_of(c.game.types[1].labels, pl.agent_type, join_path(pp, "agent_type"));
      c.plays.push_back(pl);
    }
  } else {
    for (const auto& d : c.game.types[0].labels)
      for (const auto& a : c.game.types[1].labels) c.plays.push_back({d, a});
  }
  return c;
}

inline RateBounds parse_bounds(const json* j, const std::string& path, RateBounds fallback) {
  if (!j) return fallback;
  return {number_or(*j, "min", fallback.min, path), number_or(*j, "max", fallback.max, path)};
}

inline std::vector<std::vector<std::vector<double>>> parse_tables(const json& j, const std::string& path) {
  std::vector<std::vector<std::vector<double>>> out(2);
  for (std::size_t t = 0; t < 2; ++t) {
    const std::string key = t == kSenderAttacker ? "attacker" : "defender";
    const json& tab = at(j, key, path);
    const auto tp = join_path(path, key);
    if (!tab.is_array()) throw ValidationError(tp, "expected an array of rows (one per message)");
    for (std::size_t m = 0; m < tab.size(); ++m) out[t].push_back(as_numbers(tab[m], index_path(tp, m)));
  }
  return out;
}

inline json tables_to_json(const std::vector<std::vector<std::vector<double>>>& t) {
  json j;
  for (std::size_t k = 0; k < 2; ++k) {
    json rows = json::array();
    for (const auto& r : t[k]) rows.push_back(nums(r));
    j[k == kSenderAttacker ? "attacker" : "defender"] = rows;
  }
  return j;
}

inline MetaGameConfig parse_meta(const json& root) {
  MetaGameConfig c;
  const json& f = at(root, "flipit", "");
  c.flipit.move_cost_attacker = number_or(f, "move_cost_attacker", 1.0, "flipit");
  c.flipit.move_cost_defender = number_or(f, "move_cost_defender", 1.0, "flipit");
  c.flipit.reward_attacker = number_or(f, "reward_attacker", 1.0, "flipit");
  c.flipit.reward_defender = number_or(f, "reward_defender", 1.0, "flipit");
  c.flipit.rates_attacker = parse_bounds(find(f, "rates_attacker"), "flipit.rates_attacker", {});
  c.flipit.rates_defender = parse_bounds(find(f, "rates_defender"), "flipit.rates_defender", {});
  c.flipit.lattice_points = count_or(f, "lattice_points", 200, "flipit");
  c.flipit.max_iterations = count_or(f, "max_iterations", 1000, "flipit");
  c.flipit.validate("flipit");
  const json& s = at(root, "signaling", "");
  c.signaling.messages = as_strings(at(s, "messages", "signaling"), "signaling.messages");
  c.signaling.actions = as_strings(at(s, "actions", "signaling"), "signaling.actions");
  c.signaling.u_sender = parse_tables(at(s, "u_sender", "signaling"), "signaling.u_sender");
  c.signaling.u_receiver = parse_tables(at(s, "u_receiver", "signaling"), "signaling.u_receiver");
  c.signaling.prior = number_or(s, "prior", 0.5, "signaling");
  c.signaling.validate("signaling");
  c.max_iterations = count_or(root.contains("meta_game") ? root["meta_game"] : json::object(), "max_iterations", 50,
                              "meta_game");
  require(c.max_iterations >= 1, "meta_game.max_iterations", "must be at least 1");
  return c;
}

inline json meta_to_json(const MetaGameConfig& c, json& root) {
  const auto bounds = [](const RateBounds& b) { return json{{"min", num(b.min)}, {"max", num(b.max)}}; };
  root["flipit"] = {{"move_cost_attacker", num(c.flipit.move_cost_attacker)},
                    {"move_cost_defender", num(c.flipit.move_cost_defender)},
                    {"reward_attacker", num(c.flipit.reward_attacker)},
                    {"reward_defender", num(c.flipit.reward_defender)},
                    {"rates_attacker", bounds(c.flipit.rates_attacker)},
                    {"rates_defender", bounds(c.flipit.rates_defender)},
                    {"lattice_points", c.flipit.lattice_points},
                    {"max_iterations", c.flipit.max_iterations}};
  root["signaling"] = {{"messages", c.signaling.messages},
                       {"actions", c.signaling.actions},
                       {"u_sender", tables_to_json(c.signaling.u_sender)},
                       {"u_receiver", tables_to_json(c.signaling.u_receiver)},
                       {"prior", num(c.signaling.prior)}};
  root["meta_game"] = {{"max_iterations", c.max_iterations}};
  return root;
}

inline AuthGraph parse_graph(const json& j, const std::string& path, const std::string& base) {
  const std::string entry = as_string(at(j, "entry", path), join_path(path, "entry"));
  const json& nodes = at(j, "nodes", path);
  if (nodes.is_string())
    return load_auth_graph(resolve_path(base, nodes.get<std::string>()),
                           resolve_path(base, as_string(at(j, "edges", path), join_path(path, "edges"))), entry);
  AuthGraph g;
  g.entry = entry;
  const auto np = join_path(path, "nodes");
  if (!nodes.is_array()) throw ValidationError(np, "expected a CSV file name or an array of nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto p = index_path(np, i);
    AuthNode n;
    n.name = as_string(at(nodes[i], "node", p), join_path(p, "node"));
    n.segment = as_string(at(nodes[i], "segment", p), join_path(p, "segment"));
    n.privilege = static_cast<std::size_t>(as_count(at(nodes[i], "privilege", p), join_path(p, "privilege")));
    n.target = find(nodes[i], "target") ? as_bool(nodes[i]["target"], join_path(p, "target")) : false;
    if (const json* c = find(nodes[i], "credentials")) n.credentials = as_strings(*c, join_path(p, "credentials"));
    g.nodes.push_back(std::move(n));
  }
  g.out.assign(g.nodes.size(), {});
  const json& edges = at(j, "edges", path);
  const auto ep = join_path(path, "edges");
  if (!edges.is_array()) throw ValidationError(ep, "expected an array of [src, dst] pairs");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const auto pair = as_strings(edges[i], index_path(ep, i));
    require(pair.size() == 2, index_path(ep, i), "expected [src, dst]");
    g.add_edge(g.index(pair[0], index_path(ep, i)), g.index(pair[1], index_path(ep, i)));
  }
  g.validate(path);
  return g;
}

inline json graph_to_json(const AuthGraph& g) {
  json nodes = json::array();
  for (const auto& n : g.nodes)
    nodes.push_back({{"node", n.name}, {"segment", n.segment}, {"privilege", n.privilege}, {"target", n.target},
                     {"credentials", n.credentials}});
  json edges = json::array();
  for (std::size_t u = 0; u < g.size(); ++u)
    for (std::size_t v : g.out[u]) edges.push_back({g.nodes[u].name, g.nodes[v].name});
  return {{"entry", g.entry}, {"nodes", nodes}, {"edges", edges}};
}

inline AgentProfile parse_agent(const json& j, const std::string& path) {
  AgentProfile a;
  if (const json* g = find(j, "goal")) a.goal = as_strings(*g, join_path(path, "goal"));
  if (const json* c = find(j, "credentials")) a.credentials = as_strings(*c, join_path(path, "credentials"));
  a.mfa_pass_prob = number_or(j, "mfa_pass_prob", 1.0, path);
  a.access_reward = number_or(j, "access_reward", 10.0, path);
  a.step_cost = number_or(j, "step_cost", 0.1, path);
  a.progress_reward = number_or(j, "progress_reward", 0.0, path);
  return a;
}

inline json agent_to_json(const AgentProfile& a) {
  return {{"goal", a.goal},
          {"credentials", a.credentials},
          {"mfa_pass_prob", num(a.mfa_pass_prob)},
          {"access_reward", num(a.access_reward)},
          {"step_cost", num(a.step_cost)},
          {"progress_reward", num(a.progress_reward)}};
}

inline LayerPolicy parse_layer_policy(const json& j, const AuthGraph& graph, const std::string& path) {
  LayerPolicy p;
  if (const json* a = find(j, "authn")) {
    p.authn.tau_deny = number_or(*a, "tau_deny", p.authn.tau_deny, join_path(path, "authn"));
    p.authn.tau_challenge = number_or(*a, "tau_challenge", p.authn.tau_challenge, join_path(path, "authn"));
  }
  if (const json* g = find(j, "grants")) {
    const auto gp = join_path(path, "grants");
    if (!g->is_object()) throw ValidationError(gp, "expected an object keyed by entity");
    for (auto it = g->begin(); it != g->end(); ++it) {
      const auto ep = join_path(gp, it.key());
      p.grants[it.key()] = Grant{static_cast<std::size_t>(as_count(at(it.value(), "level", ep), join_path(ep, "level"))),
                                 static_cast<std::size_t>(as_count(at(it.value(), "expiry", ep), join_path(ep, "expiry")))};
    }
  }
  if (const json* w = find(j, "workload")) {
    const auto wp = join_path(path, "workload");
    if (!w->is_array()) throw ValidationError(wp, "expected an array of {entity, node}");
    std::vector<std::pair<std::string, std::string>> need;
    for (std::size_t i = 0; i < w->size(); ++i) {
      const auto ip = index_path(wp, i);
      need.emplace_back(as_string(at((*w)[i], "entity", ip), join_path(ip, "entity")),
                        as_string(at((*w)[i], "node", ip), join_path(ip, "node")));
      graph.index(need.back().second, join_path(ip, "node"));
    }
    const auto expiry = static_cast<std::size_t>(as_count(at(j, "expiry", path), join_path(path, "expiry")));
    for (const auto& [e, gr] : least_privilege_assign(graph, need, expiry)) {
      require(p.grants.count(e) == 0, wp, "entity '" + e + "' also has an explicit grant");
      p.grants[e] = gr;
    }
  }
  const json& flows = at(j, "flows", path);
  const auto fp = join_path(path, "flows");
  if (!flows.is_array()) throw ValidationError(fp, "expected an array of [from, to] segment pairs");
  for (std::size_t i = 0; i < flows.size(); ++i) {
    const auto pair = as_strings(flows[i], index_path(fp, i));
    require(pair.size() == 2, index_path(fp, i), "expected [from, to]");
    p.flows.insert({pair[0], pair[1]});
  }
  p.validate(graph, path);
  return p;
}

inline json layer_policy_to_json(const LayerPolicy& p) {
  json grants = json::object();
  for (const auto& [e, g] : p.grants) grants[e] = {{"level", g.level}, {"expiry", g.expiry}};
  json flows = json::array();
  for (const auto& [a, b] : p.flows) flows.push_back({a, b});
  return {{"authn", {{"tau_deny", num(p.authn.tau_deny)}, {"tau_challenge", num(p.authn.tau_challenge)}}},
          {"grants", grants},
          {"flows", flows}};
}

inline AuthSimConfig parse_auth(const json& j, const std::string& name, const std::string& base) {
  const std::string path = "authgraph";
  AuthSimConfig c;
  c.model.name = name;
  c.model.graph = parse_graph(j, path, base);
  const json& costs = at(j, "costs", path);
  const auto cp = join_path(path, "costs");
  c.model.costs.mfa_cost = number_or(costs, "mfa_cost", 1.0, cp);
  c.model.costs.breach_loss = number_or(costs, "breach_loss", 20.0, cp);
  c.model.costs.friction_loss = number_or(costs, "friction_loss", 0.5, cp);
  c.model.costs.horizon = count_or(costs, "horizon", 7, cp);
  c.model.costs.validate(cp);
  const json& agents = at(j, "agents", path);
  const auto ap = join_path(path, "agents");
  c.model.agents[kLegitimate] = parse_agent(at(agents, "legitimate", ap), join_path(ap, "legitimate"));
  c.model.agents[kMalicious] = parse_agent(at(agents, "malicious", ap), join_path(ap, "malicious"));
  if (const json* e = find(j, "evidence")) c.model.evidence = parse_evidence(*e, auth_types(), join_path(path, "evidence"));
  if (const json* p = find(j, "policy")) c.policy = parse_layer_policy(*p, c.model.graph, join_path(path, "policy"));
  if (const json* s = find(j, "session_entity")) c.session_entity = as_string(*s, join_path(path, "session_entity"));
  c.window = count_or(j, "window", 3, path);
  c.grid_resolution = count_or(j, "grid_resolution", 20, path);
  require(c.grid_resolution >= 1, join_path(path, "grid_resolution"), "must be a positive integer");
  c.detect_below = number_or(j, "detect_below", 0.5, path);
  require(c.detect_below >= 0.0 && c.detect_below <= 1.0, join_path(path, "detect_below"), "must lie in [0, 1]");
  c.policies = find(j, "policies") ? as_strings(j["policies"], join_path(path, "policies"))
                                   : std::vector<std::string>{"strategic"};
  require(!c.policies.empty(), join_path(path, "policies"), "at least one policy required");
  for (std::size_t i = 0; i < c.policies.size(); ++i)
    parse_defense_policy(c.policies[i], index_path(join_path(path, "policies"), i));
  const json& sessions = at(j, "sessions", path);
  const auto sp = join_path(path, "sessions");
  if (!sessions.is_array() || sessions.empty()) throw ValidationError(sp, "expected a non-empty array");
  for (std::size_t i = 0; i < sessions.size(); ++i) {
    const auto p = index_path(sp, i);
    SessionSpec s;
    s.label = as_string(at(sessions[i], "label", p), join_path(p, "label"));
    s.agent = index_of(auth_types().labels, as_string(at(sessions[i], "agent", p), join_path(p, "agent")),
                       join_path(p, "agent"));
    s.trust0 = as_numbers(at(sessions[i], "trust0", p), join_path(p, "trust0"));
    require(s.trust0.size() == 2 && is_distribution(s.trust0), join_path(p, "trust0"),
            "must be a distribution over (legitimate, malicious)");
    for (const auto& o : c.sessions) require(o.label != s.label, join_path(p, "label"), "duplicate session label");
    c.sessions.push_back(std::move(s));
  }
  return c;
}

inline json auth_to_json(const AuthSimConfig& c) {
  json j = graph_to_json(c.model.graph);
  const auto& k = c.model.costs;
  j["costs"] = {{"mfa_cost", num(k.mfa_cost)},
                {"breach_loss", num(k.breach_loss)},
                {"friction_loss", num(k.friction_loss)},
                {"horizon", k.horizon}};
  j["agents"] = {{"legitimate", agent_to_json(c.model.agents[kLegitimate])},
                 {"malicious", agent_to_json(c.model.agents[kMalicious])}};
  if (c.model.evidence) j["evidence"] = to_json(*c.model.evidence, auth_types());
  if (c.policy) j["policy"] = layer_policy_to_json(*c.policy);
  j["session_entity"] = c.session_entity;
  j["window"] = c.window;
  j["grid_resolution"] = c.grid_resolution;
  j["detect_below"] = num(c.detect_below);
  j["policies"] = c.policies;
  json s = json::array();
  for (const auto& x : c.sessions)
    s.push_back({{"label", x.label}, {"agent", auth_types().labels[x.agent]}, {"trust0", nums(x.trust0)}});
  j["sessions"] = s;
  return j;
}

}  // namespace detail

// The game the simulator plays: the declared graph seen through the layer
// policy, if any.
inline AuthGame build_auth_game(const AuthSimConfig& c) {
  AuthGraphConfig m = c.model;
  if (c.policy) m.graph = restrict_graph(m.graph, *c.policy, c.session_entity, m.costs.horizon);
  return build_game(m);
}

inline Scenario parse_scenario(const json& j, const std::string& base_dir) {
  Scenario s;
  s.base_dir = base_dir;
  require(j.is_object(), "", "scenario must be a JSON object");
  const auto version = as_count(at(j, "schema_version", ""), "schema_version");
  require(version == kSchemaVersion, "schema_version", "unsupported version " + std::to_string(version));
  s.name = as_string(at(j, "name", ""), "name");
  require(!s.name.empty(), "name", "must not be empty");
  if (const json* d = find(j, "description")) s.description = as_string(*d, "description");
  const std::string mode = as_string(at(j, "mode", ""), "mode");
  if (mode == "trust_replay")
    s.mode = ScenarioMode::trust_replay;
  else if (mode == "pbne")
    s.mode = ScenarioMode::pbne;
  else if (mode == "meta_game")
    s.mode = ScenarioMode::meta_game;
  else if (mode == "authgraph_sim")
    s.mode = ScenarioMode::authgraph_sim;
  else
    throw ValidationError("mode", "expected one of trust_replay, pbne, meta_game, authgraph_sim");
  if (const json* sd = find(j, "seeds")) s.seeds = parse_seeds(*sd, "seeds");
  s.output = find(j, "output") ? as_string(j["output"], "output") : "out/" + s.name;

  if (const json* r = find(j, "resilience")) {
    s.resilience.baseline = number_or(*r, "baseline", s.resilience.baseline, "resilience");
    s.resilience.delta = number_or(*r, "delta", s.resilience.delta, "resilience");
    s.resilience.dwell = detail::count_or(*r, "dwell", 1, "resilience");
    s.resilience.limits.t_max = number_or(*r, "t_max", INFINITY, "resilience");
    s.resilience.limits.d_max = number_or(*r, "d_max", INFINITY, "resilience");
  }
  require(s.resilience.baseline > 0.0, "resilience.baseline", "must be positive");
  require(s.resilience.delta > 0.0 && s.resilience.delta < 1.0, "resilience.delta", "must lie in (0, 1)");
  require(s.resilience.dwell >= 1, "resilience.dwell", "must be a positive integer");

  const std::vector<std::pair<ScenarioMode, const char*>> sections{{ScenarioMode::trust_replay, "trust"},
                                                                   {ScenarioMode::pbne, "game"},
                                                                   {ScenarioMode::meta_game, "signaling"},
                                                                   {ScenarioMode::authgraph_sim, "authgraph"}};
  for (const auto& [m, key] : sections)
    if (m != s.mode && j.contains(key))
      throw ValidationError(key, std::string("section belongs to mode ") + to_string(m) + ", scenario mode is " + mode);

  switch (s.mode) {
    case ScenarioMode::trust_replay: s.trust = detail::parse_trust(at(j, "trust", ""), "trust", base_dir); break;
    case ScenarioMode::pbne: s.pbne = detail::parse_pbne(j, base_dir); break;
    case ScenarioMode::meta_game: s.meta = detail::parse_meta(j); break;
    case ScenarioMode::authgraph_sim:
      s.auth = detail::parse_auth(at(j, "authgraph", ""), s.name, base_dir);
      build_auth_game(*s.auth);  // surfaces graph, policy and size errors at load time
      break;
  }
  const bool stochastic = s.mode == ScenarioMode::pbne || s.mode == ScenarioMode::authgraph_sim;
  if (stochastic) require(!s.seeds.empty(), "seeds", "stochastic modes need a non-empty seed list");
  return s;
}

inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(source, std::string("JSON parse error: ") + e.what());
  }
}

inline Scenario load_scenario(const std::string& path) {
  const std::string bytes = read_file(path);
  const auto base = std::filesystem::path(path).parent_path().string();
  Scenario s = parse_scenario(parse_json_text(bytes, path), base);
  s.path = path;
  s.digest = sha256_hex(bytes);
  return s;
}

inline json serialize_scenario(const Scenario& s) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["name"] = s.name;
  j["mode"] = to_string(s.mode);
  if (!s.description.empty()) j["description"] = s.description;
  if (!s.seeds.empty()) j["seeds"] = seeds_to_json(s.seeds);
  j["output"] = s.output;
  json r = {{"baseline", num(s.resilience.baseline)}, {"delta", num(s.resilience.delta)}, {"dwell", s.resilience.dwell}};
  if (std::isfinite(s.resilience.limits.t_max)) r["t_max"] = num(s.resilience.limits.t_max);
  if (std::isfinite(s.resilience.limits.d_max)) r["d_max"] = num(s.resilience.limits.d_max);
  j["resilience"] = r;
  switch (s.mode) {
    case ScenarioMode::trust_replay: j["trust"] = detail::trust_to_json(*s.trust); break;
    case ScenarioMode::pbne: {
      j["game"] = to_json(s.pbne->spec);
      json plays = json::array();
      for (const auto& p : s.pbne->plays) plays.push_back({{"defender_type", p.defender_type}, {"agent_type", p.agent_type}});
      j["pbne"] = {{"grid_resolution", s.pbne->grid_resolution},
                   {"certify_samples", s.pbne->certify_samples},
                   {"plays", plays}};
      break;
    }
    case ScenarioMode::meta_game: detail::meta_to_json(*s.meta, j); break;
    case ScenarioMode::authgraph_sim: j["authgraph"] = detail::auth_to_json(*s.auth); break;
  }
  return j;
}

// Digest of the scenario content with the policy list removed; reports of the
// same scenario under different policy sets share it.
inline std::string comparison_digest(const Scenario& s) {
  json j = serialize_scenario(s);
  j.erase("output");
  j.erase("seeds");
  if (j.contains("authgraph")) j["authgraph"].erase("policies");
  return sha256_hex(j.dump());
}

}  // namespace ztrust
