#pragma once

// Game declarations in scenario files. Tables are written as rules that match
// (state, defender_action, agent_action, defender_type, agent_type) with "*"
// or omitted keys as wildcards. For transitions the last matching rule wins;
// payoff rules are additive. Rules may also come from CSV side files, where a
// list of labels is written "a|b".

#include <array>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ztrust/csv.hpp"
#include "ztrust/game.hpp"
#include "ztrust/json_io.hpp"

namespace ztrust {

struct Match {
  std::vector<std::string> any_of;  // empty: any label

  bool operator()(const std::string& v) const {
    if (any_of.empty()) return true;
    for (const auto& a : any_of)
      if (a == v) return true;
    return false;
  }
  bool wildcard() const { return any_of.empty(); }
};

inline Match parse_match(const json* j, const std::string& path) {
  Match m;
  if (!j) return m;
  if (j->is_string()) {
    const auto s = j->get<std::string>();
    if (s != "*") m.any_of.push_back(s);
    return m;
  }
  m.any_of = as_strings(*j, path);
  return m;
}

inline Match parse_match_csv(const std::string& s) {
  Match m;
  if (s.empty() || s == "*") return m;
  std::size_t start = 0;
  for (;;) {
    const auto bar = s.find('|', start);
    m.any_of.push_back(s.substr(start, bar - start));
    if (bar == std::string::npos) break;
    start = bar + 1;
  }
  return m;
}

inline json to_json(const Match& m) {
  if (m.wildcard()) return "*";
  if (m.any_of.size() == 1) return m.any_of[0];
  return m.any_of;
}

struct CellMatch {
  Match state, defender_action, agent_action, defender_type, agent_type;
};

struct TransitionRule {
  CellMatch when;
  std::vector<std::pair<std::string, double>> next;
};

struct PayoffRule {
  CellMatch when;
  double defender = 0.0, agent = 0.0;
};

struct ForbidRule {
  Match state;
  std::vector<std::string> defender, agent;
};

struct StageSpec {
  std::vector<std::string> defender_actions, agent_actions;
  std::vector<TransitionRule> transitions;
  std::vector<PayoffRule> payoffs;
  std::vector<ForbidRule> forbid;
};

struct GameSpec {
  std::string name;
  std::size_t horizon = 1;
  InfoMode info_mode = InfoMode::two_sided;
  TypeSpace defender_types, agent_types;
  std::vector<double> prior_defender, prior_agent;  // product prior
  std::vector<double> joint_prior;                  // overrides the product when set
  std::vector<std::vector<std::string>> states;
  std::vector<double> initial_state;
  std::vector<StageSpec> stages;
  std::vector<PayoffRule> terminal;  // action keys unused
  std::optional<EvidenceModel> evidence;
};

namespace detail {

inline CellMatch parse_cell(const json& j, const std::string& path) {
  CellMatch c;
  c.state = parse_match(find(j, "state"), join_path(path, "state"));
  c.defender_action = parse_match(find(j, "defender_action"), join_path(path, "defender_action"));
  c.agent_action = parse_match(find(j, "agent_action"), join_path(path, "agent_action"));
  c.defender_type = parse_match(find(j, "defender_type"), join_path(path, "defender_type"));
  c.agent_type = parse_match(find(j, "agent_type"), join_path(path, "agent_type"));
  return c;
}

inline void cell_to_json(const CellMatch& c, json& j, bool actions = true) {
  j["state"] = to_json(c.state);
  if (actions) {
    j["defender_action"] = to_json(c.defender_action);
    j["agent_action"] = to_json(c.agent_action);
  }
  j["defender_type"] = to_json(c.defender_type);
  j["agent_type"] = to_json(c.agent_type);
}

inline CellMatch parse_cell_csv(const CsvTable& t, std::size_t r) {
  CellMatch c;
  auto col = [&](const char* name) { return t.has_column(name) ? t.rows[r][t.column(name)] : std::string("*"); };
  c.state = parse_match_csv(col("state"));
  c.defender_action = parse_match_csv(col("defender_action"));
  c.agent_action = parse_match_csv(col("agent_action"));
  c.defender_type = parse_match_csv(col("defender_type"));
  c.agent_type = parse_match_csv(col("agent_type"));
  return c;
}

inline bool same_cell(const CellMatch& a, const CellMatch& b) {
  return a.state.any_of == b.state.any_of && a.defender_action.any_of == b.defender_action.any_of &&
         a.agent_action.any_of == b.agent_action.any_of && a.defender_type.any_of == b.defender_type.any_of &&
         a.agent_type.any_of == b.agent_type.any_of;
}

inline std::size_t csv_stage(const CsvTable& t, std::size_t r, std::size_t horizon) {
  const auto k = parse_int(t.rows[r][t.column("stage")], t.where(r));
  if (k < 0 || static_cast<std::size_t>(k) >= horizon) throw ValidationError(t.where(r), "stage out of range");
  return static_cast<std::size_t>(k);
}

inline void check_labels(const Match& m, const std::vector<std::string>& labels, const std::string& path) {
  for (const auto& v : m.any_of) index_of(labels, v, path);
}

}  // namespace detail

inline GameSpec parse_game_spec(const json& j, const std::string& path, const std::string& base_dir) {
  GameSpec s;
  s.name = j.contains("name") ? as_string(j["name"], join_path(path, "name")) : std::string("game");
  s.horizon = as_count(at(j, "horizon", path), join_path(path, "horizon"));
  require(s.horizon >= 1, join_path(path, "horizon"), "must be at least 1");
  const std::string mode = j.contains("info_mode") ? as_string(j["info_mode"], join_path(path, "info_mode")) : "two_sided";
  if (mode == "one_sided")
    s.info_mode = InfoMode::one_sided;
  else if (mode == "two_sided")
    s.info_mode = InfoMode::two_sided;
  else
    throw ValidationError(join_path(path, "info_mode"), "expected one_sided or two_sided");

  const json& types = at(j, "types", path);
  const auto tpath = join_path(path, "types");
  s.defender_types = parse_type_space(at(types, "defender", tpath), join_path(tpath, "defender"), true);
  s.agent_types = parse_type_space(at(types, "agent", tpath), join_path(tpath, "agent"), false);

  if (const json* jp = find(j, "joint_prior")) {
    s.joint_prior = as_numbers(*jp, join_path(path, "joint_prior"));
  } else {
    const json& pr = at(j, "prior", path);
    const auto ppath = join_path(path, "prior");
    s.prior_agent = as_numbers(at(pr, "agent", ppath), join_path(ppath, "agent"));
    if (const json* d = find(pr, "defender"))
      s.prior_defender = as_numbers(*d, join_path(ppath, "defender"));
    else
      s.prior_defender.assign(s.defender_types.size(), 1.0 / static_cast<double>(s.defender_types.size()));
    require(s.prior_agent.size() == s.agent_types.size() && is_distribution(s.prior_agent), join_path(ppath, "agent"),
            "must be a distribution over agent types");
    require(s.prior_defender.size() == s.defender_types.size() && is_distribution(s.prior_defender),
            join_path(ppath, "defender"), "must be a distribution over defender types");
  }

  const json& states = at(j, "states", path);
  if (!states.is_array()) throw ValidationError(join_path(path, "states"), "expected one label list per stage");
  for (std::size_t k = 0; k < states.size(); ++k)
    s.states.push_back(as_strings(states[k], index_path(join_path(path, "states"), k)));
  require(s.states.size() == s.horizon + 1, join_path(path, "states"), "one state list per stage 0..horizon required");
  if (const json* init = find(j, "initial_state"))
    s.initial_state = as_numbers(*init, join_path(path, "initial_state"));
  else
    s.initial_state.assign(s.states[0].size(), 1.0 / static_cast<double>(s.states[0].size()));

  const json& stages = at(j, "stages", path);
  const auto spath = join_path(path, "stages");
  if (!stages.is_array() || stages.size() != s.horizon)
    throw ValidationError(spath, "one entry per decision stage required");
  for (std::size_t k = 0; k < s.horizon; ++k) {
    const auto kp = index_path(spath, k);
    const json& st = stages[k];
    StageSpec ss;
    const json& acts = at(st, "actions", kp);
    ss.defender_actions = as_strings(at(acts, "defender", join_path(kp, "actions")), join_path(kp, "actions.defender"));
    ss.agent_actions = as_strings(at(acts, "agent", join_path(kp, "actions")), join_path(kp, "actions.agent"));
    if (const json* tr = find(st, "transitions")) {
      for (std::size_t i = 0; i < tr->size(); ++i) {
        const auto rp = index_path(join_path(kp, "transitions"), i);
        TransitionRule r;
        r.when = detail::parse_cell((*tr)[i], rp);
        const json& nx = at((*tr)[i], "next", rp);
        if (nx.is_string()) {
          r.next.emplace_back(nx.get<std::string>(), 1.0);
        } else {
          if (!nx.is_object()) throw ValidationError(join_path(rp, "next"), "expected a label or {label: prob}");
          for (auto it = nx.begin(); it != nx.end(); ++it)
            r.next.emplace_back(it.key(), as_number(it.value(), join_path(join_path(rp, "next"), it.key())));
        }
        ss.transitions.push_back(std::move(r));
      }
    }
    if (const json* py = find(st, "payoffs")) {
      for (std::size_t i = 0; i < py->size(); ++i) {
        const auto rp = index_path(join_path(kp, "payoffs"), i);
        PayoffRule r;
        r.when = detail::parse_cell((*py)[i], rp);
        r.defender = number_or((*py)[i], "defender", 0.0, rp);
        r.agent = number_or((*py)[i], "agent", 0.0, rp);
        ss.payoffs.push_back(std::move(r));
      }
    }
    if (const json* fb = find(st, "forbid")) {
      for (std::size_t i = 0; i < fb->size(); ++i) {
        const auto rp = index_path(join_path(kp, "forbid"), i);
        ForbidRule r;
        r.state = parse_match(find((*fb)[i], "state"), join_path(rp, "state"));
        if (const json* d = find((*fb)[i], "defender")) r.defender = as_strings(*d, join_path(rp, "defender"));
        if (const json* a = find((*fb)[i], "agent")) r.agent = as_strings(*a, join_path(rp, "agent"));
        ss.forbid.push_back(std::move(r));
      }
    }
    s.stages.push_back(std::move(ss));
  }

  // Side files append to the inline rules, stage by stage.
  if (const json* f = find(j, "transitions_csv")) {
    const auto t = read_csv(resolve_path(base_dir, as_string(*f, join_path(path, "transitions_csv"))));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::size_t k = detail::csv_stage(t, r, s.horizon);
      const auto cell = detail::parse_cell_csv(t, r);
      const auto next = t.rows[r][t.column("next")];
      const double p = parse_double(t.rows[r][t.column("prob")], t.where(r));
      auto& rules = s.stages[k].transitions;
      if (r > 0 && detail::csv_stage(t, r - 1, s.horizon) == k && !rules.empty() &&
          detail::same_cell(rules.back().when, cell))
        rules.back().next.emplace_back(next, p);
      else
        rules.push_back({cell, {{next, p}}});
    }
  }
  if (const json* f = find(j, "payoffs_csv")) {
    const auto t = read_csv(resolve_path(base_dir, as_string(*f, join_path(path, "payoffs_csv"))));
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::size_t k = detail::csv_stage(t, r, s.horizon);
      PayoffRule rule{detail::parse_cell_csv(t, r), parse_double(t.rows[r][t.column("defender")], t.where(r)),
                      parse_double(t.rows[r][t.column("agent")], t.where(r))};
      s.stages[k].payoffs.push_back(std::move(rule));
    }
  }

  if (const json* term = find(j, "terminal")) {
    for (std::size_t i = 0; i < term->size(); ++i) {
      const auto rp = index_path(join_path(path, "terminal"), i);
      PayoffRule r;
      r.when = detail::parse_cell((*term)[i], rp);
      r.defender = number_or((*term)[i], "defender", 0.0, rp);
      r.agent = number_or((*term)[i], "agent", 0.0, rp);
      s.terminal.push_back(std::move(r));
    }
  }
  if (const json* ev = find(j, "evidence")) s.evidence = parse_evidence(*ev, s.agent_types, join_path(path, "evidence"));
  return s;
}

inline json to_json(const GameSpec& s) {
  json j;
  j["name"] = s.name;
  j["horizon"] = s.horizon;
  j["info_mode"] = s.info_mode == InfoMode::one_sided ? "one_sided" : "two_sided";
  j["types"] = {{"defender", to_json(s.defender_types)}, {"agent", to_json(s.agent_types)}};
  if (!s.joint_prior.empty())
    j["joint_prior"] = nums(s.joint_prior);
  else
    j["prior"] = {{"defender", nums(s.prior_defender)}, {"agent", nums(s.prior_agent)}};
  j["states"] = s.states;
  j["initial_state"] = nums(s.initial_state);
  json stages = json::array();
  for (const auto& st : s.stages) {
    json js;
    js["actions"] = {{"defender", st.defender_actions}, {"agent", st.agent_actions}};
    json tr = json::array();
    for (const auto& r : st.transitions) {
      json jr;
      detail::cell_to_json(r.when, jr);
      json nx = json::object();
      for (const auto& [label, p] : r.next) nx[label] = num(p);
      jr["next"] = nx;
      tr.push_back(jr);
    }
    js["transitions"] = tr;
    json py = json::array();
    for (const auto& r : st.payoffs) {
      json jr;
      detail::cell_to_json(r.when, jr);
      jr["defender"] = num(r.defender);
      jr["agent"] = num(r.agent);
      py.push_back(jr);
    }
    js["payoffs"] = py;
    if (!st.forbid.empty()) {
      json fb = json::array();
      for (const auto& r : st.forbid) fb.push_back({{"state", to_json(r.state)}, {"defender", r.defender}, {"agent", r.agent}});
      js["forbid"] = fb;
    }
    stages.push_back(js);
  }
  j["stages"] = stages;
  json term = json::array();
  for (const auto& r : s.terminal) {
    json jr;
    detail::cell_to_json(r.when, jr, false);
    jr["defender"] = num(r.defender);
    jr["agent"] = num(r.agent);
    term.push_back(jr);
  }
  j["terminal"] = term;
  if (s.evidence) j["evidence"] = to_json(*s.evidence, s.agent_types);
  return j;
}

inline GameDefinition build_game(const GameSpec& s, const std::string& path = "game") {
  GameDefinition g;
  g.name = s.name;
  g.horizon = s.horizon;
  g.states = s.states;
  g.types = {s.defender_types, s.agent_types};
  g.info_mode = s.info_mode;
  for (const auto& st : s.stages) g.actions.push_back({st.defender_actions, st.agent_actions});
  g.type_dependent = false;
  for (const auto& st : s.stages)
    for (const auto& r : st.transitions)
      g.type_dependent = g.type_dependent || !r.when.defender_type.wildcard() || !r.when.agent_type.wildcard();
  g.evidence = s.evidence;
  g.initial_state = s.initial_state;
  const std::size_t n1 = s.defender_types.size(), n2 = s.agent_types.size();
  if (!s.joint_prior.empty()) {
    g.prior = s.joint_prior;
  } else {
    g.prior.resize(n1 * n2);
    for (std::size_t a = 0; a < n1; ++a)
      for (std::size_t b = 0; b < n2; ++b) g.prior[a * n2 + b] = s.prior_defender[a] * s.prior_agent[b];
  }
  require(s.states.size() == s.horizon + 1 && s.stages.size() == s.horizon, path, "stage count mismatch");
  g.allocate();

  for (std::size_t k = 0; k < s.horizon; ++k) {
    const auto& st = s.stages[k];
    const auto kp = index_path(join_path(path, "stages"), k);
    for (const auto& r : st.transitions) {
      detail::check_labels(r.when.state, s.states[k], join_path(kp, "transitions.state"));
      detail::check_labels(r.when.defender_action, st.defender_actions, join_path(kp, "transitions.defender_action"));
      detail::check_labels(r.when.agent_action, st.agent_actions, join_path(kp, "transitions.agent_action"));
      detail::check_labels(r.when.defender_type, s.defender_types.labels, join_path(kp, "transitions.defender_type"));
      detail::check_labels(r.when.agent_type, s.agent_types.labels, join_path(kp, "transitions.agent_type"));
      for (const auto& [label, p] : r.next) index_of(s.states[k + 1], label, join_path(kp, "transitions.next"));
    }
    for (const auto& r : st.payoffs) {
      detail::check_labels(r.when.state, s.states[k], join_path(kp, "payoffs.state"));
      detail::check_labels(r.when.defender_action, st.defender_actions, join_path(kp, "payoffs.defender_action"));
      detail::check_labels(r.when.agent_action, st.agent_actions, join_path(kp, "payoffs.agent_action"));
      detail::check_labels(r.when.defender_type, s.defender_types.labels, join_path(kp, "payoffs.defender_type"));
      detail::check_labels(r.when.agent_type, s.agent_types.labels, join_path(kp, "payoffs.agent_type"));
    }
    for (std::size_t x = 0; x < s.states[k].size(); ++x)
      for (std::size_t a1 = 0; a1 < st.defender_actions.size(); ++a1)
        for (std::size_t a2 = 0; a2 < st.agent_actions.size(); ++a2)
          for (std::size_t t = 0; t < n1 * n2; ++t) {
            const auto& xl = s.states[k][x];
            const auto& l1 = st.defender_actions[a1];
            const auto& l2 = st.agent_actions[a2];
            const auto& t1 = s.defender_types.labels[t / n2];
            const auto& t2 = s.agent_types.labels[t % n2];
            auto hit = [&](const CellMatch& c) {
              return c.state(xl) && c.defender_action(l1) && c.agent_action(l2) && c.defender_type(t1) &&
                     c.agent_type(t2);
            };
            Payoff u{0.0, 0.0};
            for (const auto& r : st.payoffs)
              if (hit(r.when)) u[0] += r.defender, u[1] += r.agent;
            g.set_payoff(k, x, a1, a2, t, u);
            if (!g.type_dependent && t > 0) continue;
            const TransitionRule* last = nullptr;
            for (const auto& r : st.transitions)
              if (hit(r.when)) last = &r;
            if (!last)
              throw ValidationError(join_path(kp, "transitions"), "no rule covers (" + xl + ", " + l1 + ", " + l2 +
                                                                      ", " + t1 + ", " + t2 + ")");
            std::vector<Outcome> row;
            for (const auto& [label, p] : last->next) row.push_back({index_of(s.states[k + 1], label, kp), p});
            if (g.type_dependent)
              g.set_transition(k, x, a1, a2, std::move(row), t);
            else
              g.set_transition(k, x, a1, a2, std::move(row));
          }
    if (!st.forbid.empty()) {
      if (g.allowed.empty()) g.allowed.assign(s.horizon, {});
      g.allowed[k].assign(s.states[k].size(), {});
      for (std::size_t x = 0; x < s.states[k].size(); ++x) {
        auto& m = g.allowed[k][x];
        m[0].assign(st.defender_actions.size(), 1);
        m[1].assign(st.agent_actions.size(), 1);
        for (const auto& r : st.forbid) {
          detail::check_labels(r.state, s.states[k], join_path(kp, "forbid.state"));
          if (!r.state(s.states[k][x])) continue;
          for (const auto& a : r.defender) m[0][index_of(st.defender_actions, a, join_path(kp, "forbid.defender"))] = 0;
          for (const auto& a : r.agent) m[1][index_of(st.agent_actions, a, join_path(kp, "forbid.agent"))] = 0;
        }
      }
    }
  }
  for (const auto& r : s.terminal) {
    detail::check_labels(r.when.state, s.states[s.horizon], join_path(path, "terminal.state"));
    detail::check_labels(r.when.defender_type, s.defender_types.labels, join_path(path, "terminal.defender_type"));
    detail::check_labels(r.when.agent_type, s.agent_types.labels, join_path(path, "terminal.agent_type"));
  }
  for (std::size_t x = 0; x < s.states[s.horizon].size(); ++x)
    for (std::size_t t = 0; t < n1 * n2; ++t)
      for (const auto& r : s.terminal)
        if (r.when.state(s.states[s.horizon][x]) && r.when.defender_type(s.defender_types.labels[t / n2]) &&
            r.when.agent_type(s.agent_types.labels[t % n2])) {
          g.terminal[x][t][0] += r.defender;
          g.terminal[x][t][1] += r.agent;
        }
  g.validate();
  return g;
}

}  // namespace ztrust
