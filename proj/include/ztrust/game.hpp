#pragma once

// Finite-horizon two-player Markov games of incomplete information.
//
// Stages run k = 0..K. Decisions are taken at k < K; stage K carries only a
// terminal payoff. Player index 0 is the defender (player 1), index 1 the
// agent (player 2). Joint types are flattened as t = theta1 * |Theta2| + theta2.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ztrust/error.hpp"
#include "ztrust/trust.hpp"

namespace ztrust {

inline constexpr std::size_t kDefender = 0;
inline constexpr std::size_t kAgent = 1;

enum class InfoMode { one_sided, two_sided };

struct Outcome {
  std::size_t next = 0;
  double prob = 0.0;
};

using Payoff = std::array<double, 2>;

// Mixed actions at one stage, per own type: p[player][type][action].
struct StageStrategies {
  std::array<std::vector<std::vector<double>>, 2> p;
};

struct GameDefinition {
  std::string name;
  std::size_t horizon = 1;
  std::vector<std::vector<std::string>> states;                 // [k][x], k = 0..K
  std::array<TypeSpace, 2> types;                               // Theta1, Theta2
  std::vector<std::array<std::vector<std::string>, 2>> actions;  // [k][player], k < K
  InfoMode info_mode = InfoMode::two_sided;
  bool type_dependent = false;  // kernel may depend on the joint type

  // Per decision stage, flattened over (x, a1, a2, t). When the kernel is
  // type independent its table uses t = 0 only.
  std::vector<std::vector<std::vector<Outcome>>> transitions;
  std::vector<std::vector<Payoff>> payoffs;
  std::vector<std::vector<Payoff>> terminal;  // [x][t] at stage K

  // Side evidence observed with every transition, h(e | a2, theta2). Rows are
  // keyed by player-2 action label.
  std::optional<EvidenceModel> evidence;

  std::vector<double> initial_state;  // over X^0
  std::vector<double> prior;          // joint over Theta1 x Theta2

  // allowed[k][x][player][a]; an empty vector means every action is allowed.
  std::vector<std::vector<std::array<std::vector<char>, 2>>> allowed;

  // ---- shape helpers ----
  std::size_t num_types(std::size_t player) const { return types[player].size(); }
  std::size_t joint_types() const { return types[0].size() * types[1].size(); }
  std::size_t joint(std::size_t th1, std::size_t th2) const { return th1 * types[1].size() + th2; }
  std::size_t type_of(std::size_t t, std::size_t player) const {
    return player == kDefender ? t / types[1].size() : t % types[1].size();
  }
  std::size_t num_states(std::size_t k) const { return states[k].size(); }
  std::size_t num_actions(std::size_t k, std::size_t player) const { return actions[k][player].size(); }
  std::size_t num_evidence() const { return evidence ? evidence->alphabet.size() : 1; }

  std::size_t cell(std::size_t k, std::size_t x, std::size_t a1, std::size_t a2) const {
    return (x * num_actions(k, 0) + a1) * num_actions(k, 1) + a2;
  }
  const std::vector<Outcome>& outcomes(std::size_t k, std::size_t x, std::size_t a1, std::size_t a2,
                                       std::size_t t) const {
    const std::size_t c = cell(k, x, a1, a2);
    return transitions[k][type_dependent ? c * joint_types() + t : c];
  }
  const Payoff& payoff(std::size_t k, std::size_t x, std::size_t a1, std::size_t a2, std::size_t t) const {
    return payoffs[k][cell(k, x, a1, a2) * joint_types() + t];
  }
  bool is_allowed(std::size_t k, std::size_t x, std::size_t player, std::size_t a) const {
    if (allowed.empty() || allowed[k].empty()) return true;
    const auto& m = allowed[k][x][player];
    return m.empty() || m[a] != 0;
  }
  double evidence_prob(std::size_t k, std::size_t e, std::size_t a2, std::size_t th2) const {
    if (!evidence) return 1.0;
    return evidence->prob(e, evidence_rows_[k][a2], th2);
  }

  // Allocates tables for the declared shape (zero payoffs, empty kernels).
  void allocate() {
    const std::size_t T = joint_types();
    transitions.assign(horizon, {});
    payoffs.assign(horizon, {});
    for (std::size_t k = 0; k < horizon; ++k) {
      const std::size_t cells = num_states(k) * num_actions(k, 0) * num_actions(k, 1);
      transitions[k].assign(type_dependent ? cells * T : cells, {});
      payoffs[k].assign(cells * T, Payoff{0.0, 0.0});
    }
    terminal.assign(num_states(horizon), std::vector<Payoff>(T, Payoff{0.0, 0.0}));
  }

  void set_transition(std::size_t k, std::size_t x, std::size_t a1, std::size_t a2, std::vector<Outcome> row,
                      std::optional<std::size_t> t = std::nullopt) {
    const std::size_t c = cell(k, x, a1, a2);
    if (type_dependent) {
      if (t) {
        transitions[k][c * joint_types() + *t] = std::move(row);
      } else {
        for (std::size_t tt = 0; tt < joint_types(); ++tt) transitions[k][c * joint_types() + tt] = row;
      }
    } else {
      transitions[k][c] = std::move(row);
    }
  }
  void set_payoff(std::size_t k, std::size_t x, std::size_t a1, std::size_t a2, std::size_t t, Payoff u) {
    payoffs[k][cell(k, x, a1, a2) * joint_types() + t] = u;
  }

  bool validated() const { return validated_; }

  // Checks every invariant and builds lookup caches. Must be called before
  // the game is handed to a solver.
  void validate() {
    require(horizon >= 1, "game.horizon", "must be at least 1");
    require(states.size() == horizon + 1, "game.states", "one state set per stage 0..K required");
    for (std::size_t k = 0; k <= horizon; ++k)
      require(!states[k].empty(), "game.states[" + std::to_string(k) + "]", "empty state set");
    types[0].validate("game.types.defender", true);
    types[1].validate("game.types.agent", true);
    if (info_mode == InfoMode::one_sided)
      require(types[0].size() == 1, "game.types.defender",
              "one-sided games require a single (commonly known) defender type");
    require(actions.size() == horizon, "game.actions", "one action pair per decision stage required");
    const std::size_t T = joint_types();
    for (std::size_t k = 0; k < horizon; ++k)
      for (std::size_t p = 0; p < 2; ++p)
        require(!actions[k][p].empty(), "game.actions[" + std::to_string(k) + "]", "empty action set");
    require(transitions.size() == horizon && payoffs.size() == horizon, "game", "tables not allocated");
    for (std::size_t k = 0; k < horizon; ++k) {
      const std::size_t cells = num_states(k) * num_actions(k, 0) * num_actions(k, 1);
      require(transitions[k].size() == (type_dependent ? cells * T : cells), "game.transitions",
              "table size mismatch at stage " + std::to_string(k));
      require(payoffs[k].size() == cells * T, "game.payoffs", "table size mismatch at stage " + std::to_string(k));
      for (std::size_t x = 0; x < num_states(k); ++x)
        for (std::size_t a1 = 0; a1 < num_actions(k, 0); ++a1)
          for (std::size_t a2 = 0; a2 < num_actions(k, 1); ++a2)
            for (std::size_t t = 0; t < (type_dependent ? T : 1); ++t) {
              const auto field = [&] {
                return "game.transitions[" + std::to_string(k) + "][" + states[k][x] + "][" + actions[k][0][a1] +
                       "][" + actions[k][1][a2] + "]";
              };
              double s = 0.0;
              for (const auto& o : outcomes(k, x, a1, a2, t)) {
                if (o.next >= num_states(k + 1)) throw ValidationError(field(), "next state out of range");
                if (!(o.prob >= 0.0)) throw ValidationError(field(), "negative probability");
                s += o.prob;
              }
              if (std::abs(s - 1.0) > kProbTol) throw ValidationError(field(), "row does not sum to 1");
            }
      for (const auto& u : payoffs[k])
        require(std::isfinite(u[0]) && std::isfinite(u[1]), "game.payoffs", "non-finite payoff");
    }
    require(terminal.size() == num_states(horizon), "game.terminal", "one row per terminal state required");
    for (const auto& row : terminal) {
      require(row.size() == T, "game.terminal", "one entry per joint type required");
      for (const auto& u : row) require(std::isfinite(u[0]) && std::isfinite(u[1]), "game.terminal", "non-finite payoff");
    }
    require(initial_state.size() == num_states(0) && is_distribution(initial_state), "game.initial_state",
            "must be a distribution over stage-0 states");
    require(prior.size() == T && is_distribution(prior), "game.prior", "must be a distribution over joint types");
    if (!allowed.empty()) {
      require(allowed.size() == horizon, "game.allowed", "one entry per decision stage required");
      for (std::size_t k = 0; k < horizon; ++k) {
        if (allowed[k].empty()) continue;
        require(allowed[k].size() == num_states(k), "game.allowed", "one entry per state required");
        for (std::size_t x = 0; x < num_states(k); ++x)
          for (std::size_t p = 0; p < 2; ++p) {
            const auto& m = allowed[k][x][p];
            if (m.empty()) continue;
            require(m.size() == num_actions(k, p), "game.allowed", "mask length mismatch");
            bool any = false;
            for (char c : m) any = any || c;
            require(any, "game.allowed[" + std::to_string(k) + "][" + states[k][x] + "]", "no action allowed");
          }
      }
    }
    evidence_rows_.assign(horizon, {});
    if (evidence) {
      evidence->validate(types[1].size(), "game.evidence");
      for (std::size_t k = 0; k < horizon; ++k)
        for (const auto& a : actions[k][1])
          evidence_rows_[k].push_back(index_of(evidence->actions, a, "game.evidence.actions"));
    }
    validated_ = true;
  }

private:
  std::vector<std::vector<std::size_t>> evidence_rows_;
  bool validated_ = false;
};

// Conditional belief of `player`'s type `own` over the opponent's types,
// derived from a joint belief. A type with zero joint mass falls back to the
// opponent marginal.
inline void conditional_belief(const GameDefinition& g, std::span<const double> joint, std::size_t player,
                               std::size_t own, std::vector<double>& out) {
  const std::size_t n1 = g.num_types(0), n2 = g.num_types(1);
  const std::size_t nj = player == kDefender ? n2 : n1;
  out.assign(nj, 0.0);
  double mass = 0.0;
  for (std::size_t j = 0; j < nj; ++j) {
    const double v = player == kDefender ? joint[own * n2 + j] : joint[j * n2 + own];
    out[j] = v;
    mass += v;
  }
  if (mass > 0.0) {
    for (double& v : out) v /= mass;
    return;
  }
  for (std::size_t t = 0; t < n1 * n2; ++t) out[player == kDefender ? t % n2 : t / n2] += joint[t];
}

// Probability of reaching x_next (and emitting `evidence`, when given) for
// every joint type, under the stage strategies.
inline void observation_likelihood(const GameDefinition& g, std::size_t k, std::size_t x, std::size_t x_next,
                                   std::optional<std::size_t> evidence, const StageStrategies& s,
                                   std::vector<double>& lik) {
  const std::size_t T = g.joint_types();
  lik.assign(T, 0.0);
  const std::size_t m1 = g.num_actions(k, 0), m2 = g.num_actions(k, 1);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t th1 = g.type_of(t, 0), th2 = g.type_of(t, 1);
    double acc = 0.0;
    for (std::size_t a1 = 0; a1 < m1; ++a1) {
      const double p1 = s.p[0][th1][a1];
      if (p1 == 0.0) continue;
      for (std::size_t a2 = 0; a2 < m2; ++a2) {
        const double p2 = s.p[1][th2][a2];
        if (p2 == 0.0) continue;
        double f = 0.0;
        for (const auto& o : g.outcomes(k, x, a1, a2, t))
          if (o.next == x_next) f += o.prob;
        if (f == 0.0) continue;
        if (evidence) f *= g.evidence_prob(k, *evidence, a2, th2);
        acc += f * p1 * p2;
      }
    }
    lik[t] = acc;
  }
}

struct BeliefState {
  std::size_t owner = kDefender;  // whose belief
  std::vector<double> point;      // over the opponent's types
};

struct BeliefUpdate {
  BeliefState belief;
  bool off_path = false;
};

// Bayesian update of one player's belief about the opponent's type after the
// transition x -> x_next, marginalizing both players' actions under the stage
// strategies. Optional side evidence multiplies the likelihood inside the sum.
// A transition impossible under every opponent type with positive belief is
// off-path: the belief is carried forward unchanged and flagged.
inline BeliefUpdate update_belief(const GameDefinition& g, const BeliefState& belief, std::size_t own_type,
                                  std::size_t k, std::size_t x, std::size_t x_next, const StageStrategies& s,
                                  std::optional<std::size_t> evidence = std::nullopt) {
  const std::size_t me = belief.owner, opp = 1 - me;
  const std::size_t nj = g.num_types(opp);
  require(belief.point.size() == nj, "belief.point", "dimension mismatch");
  require(own_type < g.num_types(me), "own_type", "out of range");
  require(k < g.horizon && x < g.num_states(k) && x_next < g.num_states(k + 1), "update_belief", "index out of range");
  const std::size_t m1 = g.num_actions(k, 0), m2 = g.num_actions(k, 1);

  BeliefUpdate out{{me, std::vector<double>(nj, 0.0)}, false};
  double denom = 0.0;
  for (std::size_t j = 0; j < nj; ++j) {
    const std::size_t th1 = me == kDefender ? own_type : j;
    const std::size_t th2 = me == kDefender ? j : own_type;
    const std::size_t t = g.joint(th1, th2);
    double pr = 0.0;
    for (std::size_t a1 = 0; a1 < m1; ++a1)
      for (std::size_t a2 = 0; a2 < m2; ++a2) {
        double f = 0.0;
        for (const auto& o : g.outcomes(k, x, a1, a2, t))
          if (o.next == x_next) f += o.prob;
        if (evidence) f *= g.evidence_prob(k, *evidence, a2, th2);
        pr += f * s.p[0][th1][a1] * s.p[1][th2][a2];
      }
    out.belief.point[j] = pr * belief.point[j];
    denom += out.belief.point[j];
  }
  if (!(denom > 0.0)) {
    out.belief.point = belief.point;
    out.off_path = true;
    return out;
  }
  for (double& v : out.belief.point) v /= denom;
  return out;
}

// Joint-belief counterpart used by the solvers: mu'(t) proportional to
// mu(t) * lik(t); off-path observations leave mu unchanged.
inline bool update_joint(std::span<const double> mu, std::span<const double> lik, std::vector<double>& out) {
  out.resize(mu.size());
  double denom = 0.0;
  for (std::size_t t = 0; t < mu.size(); ++t) {
    out[t] = mu[t] * lik[t];
    denom += out[t];
  }
  if (!(denom > 0.0)) {
    out.assign(mu.begin(), mu.end());
    return false;
  }
  for (double& v : out) v /= denom;
  return true;
}

// Largest spread of any single payoff entry, over both players.
inline double payoff_range(const GameDefinition& g) {
  double range = 0.0;
  for (std::size_t p = 0; p < 2; ++p) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& stage : g.payoffs)
      for (const auto& u : stage) lo = std::min(lo, u[p]), hi = std::max(hi, u[p]);
    for (const auto& row : g.terminal)
      for (const auto& u : row) lo = std::min(lo, u[p]), hi = std::max(hi, u[p]);
    range = std::max(range, hi - lo);
  }
  return range;
}

// States of stage k+1 reachable from x under some action pair and type.
inline std::vector<std::size_t> successors(const GameDefinition& g, std::size_t k, std::size_t x) {
  std::set<std::size_t> out;
  for (std::size_t a1 = 0; a1 < g.num_actions(k, 0); ++a1)
    for (std::size_t a2 = 0; a2 < g.num_actions(k, 1); ++a2)
      for (std::size_t t = 0; t < (g.type_dependent ? g.joint_types() : 1); ++t)
        for (const auto& o : g.outcomes(k, x, a1, a2, t))
          if (o.prob > 0.0) out.insert(o.next);
  return {out.begin(), out.end()};
}

// Subgame rooted at (k0, x0) covering at most `window` decision stages. Only
// states reachable from x0 are kept. When the window ends before the real
// horizon the terminal payoff is zero.
inline GameDefinition truncate(const GameDefinition& g, std::size_t k0, std::size_t x0, std::size_t window,
                               std::vector<double> prior) {
  require(g.validated(), "game", "not validated");
  require(k0 < g.horizon, "truncate.stage", "no decision stage left");
  require(window >= 1, "window", "must be at least 1");
  const std::size_t K = std::min(window, g.horizon - k0);
  GameDefinition w;
  w.name = g.name + "@" + std::to_string(k0) + ":" + g.states[k0][x0];
  w.horizon = K;
  w.types = g.types;
  w.info_mode = g.info_mode;
  w.type_dependent = g.type_dependent;
  w.evidence = g.evidence;
  w.prior = std::move(prior);

  // Reachable state lists per window stage, mapped to original indices.
  std::vector<std::vector<std::size_t>> keep(K + 1);
  keep[0] = {x0};
  for (std::size_t j = 0; j < K; ++j) {
    std::set<std::size_t> next;
    for (std::size_t x : keep[j])
      for (std::size_t y : successors(g, k0 + j, x)) next.insert(y);
    keep[j + 1].assign(next.begin(), next.end());
  }
  std::vector<std::vector<std::size_t>> remap(K + 1);
  w.states.resize(K + 1);
  for (std::size_t j = 0; j <= K; ++j) {
    remap[j].assign(g.num_states(k0 + j), SIZE_MAX);
    for (std::size_t i = 0; i < keep[j].size(); ++i) {
      remap[j][keep[j][i]] = i;
      w.states[j].push_back(g.states[k0 + j][keep[j][i]]);
    }
  }
  for (std::size_t j = 0; j < K; ++j) w.actions.push_back(g.actions[k0 + j]);
  w.allocate();
  const std::size_t T = g.joint_types();
  const bool any_mask = !g.allowed.empty();
  if (any_mask) w.allowed.assign(K, {});
  for (std::size_t j = 0; j < K; ++j) {
    const std::size_t k = k0 + j;
    if (any_mask && !g.allowed[k].empty()) w.allowed[j].resize(keep[j].size());
    for (std::size_t i = 0; i < keep[j].size(); ++i) {
      const std::size_t x = keep[j][i];
      if (any_mask && !g.allowed[k].empty()) w.allowed[j][i] = g.allowed[k][x];
      for (std::size_t a1 = 0; a1 < g.num_actions(k, 0); ++a1)
        for (std::size_t a2 = 0; a2 < g.num_actions(k, 1); ++a2) {
          for (std::size_t t = 0; t < T; ++t) w.set_payoff(j, i, a1, a2, t, g.payoff(k, x, a1, a2, t));
          for (std::size_t t = 0; t < (g.type_dependent ? T : 1); ++t) {
            std::vector<Outcome> row;
            for (const auto& o : g.outcomes(k, x, a1, a2, t))
              if (o.prob > 0.0) row.push_back({remap[j + 1][o.next], o.prob});
            if (g.type_dependent)
              w.set_transition(j, i, a1, a2, std::move(row), t);
            else
              w.set_transition(j, i, a1, a2, std::move(row));
          }
        }
    }
  }
  if (k0 + K == g.horizon)
    for (std::size_t i = 0; i < keep[K].size(); ++i) w.terminal[i] = g.terminal[keep[K][i]];
  w.initial_state.assign(1, 1.0);
  w.validate();
  return w;
}

}  // namespace ztrust
