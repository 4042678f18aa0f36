#pragma once

// Trust evaluation: trust scores over finite type spaces, prior pooling from
// heterogeneous sources, and the Bayesian trust update driven by observed
// strategies and side evidence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ztrust/error.hpp"

namespace ztrust {

inline constexpr double kProbTol = 1e-9;

inline bool is_distribution(std::span<const double> p, double tol = kProbTol) {
  if (p.empty()) return false;
  double s = 0.0;
  for (double v : p) {
    if (!(v >= -tol && v <= 1.0 + tol)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= tol;
}

inline void normalize(std::vector<double>& p) {
  double s = std::accumulate(p.begin(), p.end(), 0.0);
  for (double& v : p) v /= s;
}

inline std::size_t index_of(const std::vector<std::string>& labels, std::string_view label,
                            const std::string& field) {
  auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw ValidationError(field, "unknown label '" + std::string(label) + "'");
  return static_cast<std::size_t>(it - labels.begin());
}

struct TypeSpace {
  std::vector<std::string> labels;
  std::vector<std::string> trusted;

  std::size_t size() const { return labels.size(); }
  std::size_t index(std::string_view label) const { return index_of(labels, label, "types"); }

  bool is_trusted(std::size_t i) const {
    return std::find(trusted.begin(), trusted.end(), labels.at(i)) != trusted.end();
  }

  // `allow_singleton` admits |labels| == 1 for players whose type is common
  // knowledge; such spaces have no trusted subset requirement.
  void validate(const std::string& field, bool allow_singleton = false) const {
    require(labels.size() >= (allow_singleton ? 1u : 2u), field + ".labels", "too few types");
    for (std::size_t i = 0; i < labels.size(); ++i)
      for (std::size_t j = i + 1; j < labels.size(); ++j)
        require(labels[i] != labels[j], field + ".labels", "duplicate label '" + labels[i] + "'");
    for (const auto& t : trusted)
      require(std::find(labels.begin(), labels.end(), t) != labels.end(), field + ".trusted",
              "unknown label '" + t + "'");
    if (labels.size() >= 2) {
      require(!trusted.empty(), field + ".trusted", "trusted subset is empty");
      require(trusted.size() < labels.size(), field + ".trusted", "trusted subset is not proper");
    }
  }
};

struct TrustState {
  std::string entity_id;
  std::vector<double> pi;
  std::size_t timestamp = 0;
};

struct TrustScore {
  double value = 0.0;
};

// sigma(a | theta): table[type][action].
struct ObservedStrategy {
  std::vector<std::string> actions;
  std::vector<std::vector<double>> table;

  double prob(std::size_t type, std::size_t action) const { return table[type][action]; }

  void validate(std::size_t num_types, const std::string& field) const {
    require(!actions.empty(), field + ".actions", "empty action set");
    require(table.size() == num_types, field, "one row per type required");
    for (std::size_t t = 0; t < table.size(); ++t) {
      require(table[t].size() == actions.size(), field + "[" + std::to_string(t) + "]",
              "row length must equal the number of actions");
      require(is_distribution(table[t]), field + "[" + std::to_string(t) + "]",
              "row is not a probability distribution");
    }
  }
};

// h(e | a, theta): likelihood[action][type][evidence].
struct EvidenceModel {
  std::vector<std::string> alphabet;
  std::vector<std::string> actions;
  std::vector<std::vector<std::vector<double>>> likelihood;

  double prob(std::size_t evidence, std::size_t action, std::size_t type) const {
    return likelihood[action][type][evidence];
  }

  void validate(std::size_t num_types, const std::string& field) const {
    require(!alphabet.empty(), field + ".alphabet", "empty evidence alphabet");
    require(likelihood.size() == actions.size(), field + ".likelihood", "one block per action required");
    for (std::size_t a = 0; a < actions.size(); ++a) {
      require(likelihood[a].size() == num_types, field + ".likelihood." + actions[a],
              "one row per type required");
      for (std::size_t t = 0; t < num_types; ++t) {
        const auto path = field + ".likelihood." + actions[a] + "[" + std::to_string(t) + "]";
        require(likelihood[a][t].size() == alphabet.size(), path, "row length must equal alphabet size");
        require(is_distribution(likelihood[a][t]), path, "row is not a probability distribution");
      }
    }
  }

  // Model that carries no information: every symbol equally likely.
  static EvidenceModel uninformative(std::vector<std::string> actions, std::size_t num_types,
                                     std::vector<std::string> alphabet = {"none"}) {
    EvidenceModel m;
    m.alphabet = std::move(alphabet);
    m.actions = std::move(actions);
    const double p = 1.0 / static_cast<double>(m.alphabet.size());
    m.likelihood.assign(m.actions.size(),
                        std::vector<std::vector<double>>(num_types, std::vector<double>(m.alphabet.size(), p)));
    return m;
  }
};

enum class PriorKind {
  credential,
  attribute_check,
  incentive_compliance,
  historical,
  social_reputation,
  recommendation,
  supply_chain,
  third_party
};

inline constexpr std::pair<PriorKind, std::string_view> kPriorKindNames[] = {
    {PriorKind::credential, "credential"},
    {PriorKind::attribute_check, "attribute_check"},
    {PriorKind::incentive_compliance, "incentive_compliance"},
    {PriorKind::historical, "historical"},
    {PriorKind::social_reputation, "social_reputation"},
    {PriorKind::recommendation, "recommendation"},
    {PriorKind::supply_chain, "supply_chain"},
    {PriorKind::third_party, "third_party"},
};

inline std::string_view to_string(PriorKind k) {
  for (auto [kind, name] : kPriorKindNames)
    if (kind == k) return name;
  return "unknown";
}

inline PriorKind prior_kind_from(std::string_view name, const std::string& field) {
  for (auto [kind, n] : kPriorKindNames)
    if (n == name) return kind;
  throw ValidationError(field, "unknown prior source kind '" + std::string(name) + "'");
}

struct PriorSource {
  PriorKind kind = PriorKind::historical;
  std::vector<double> estimate;
  double weight = 1.0;
  double age = 0.0;
};

inline TrustScore trust_score(const TrustState& state, const TypeSpace& space) {
  if (state.pi.size() != space.size())
    throw ValidationError("trust_state.pi", "dimension " + std::to_string(state.pi.size()) +
                                                " does not match type space of size " +
                                                std::to_string(space.size()));
  double ts = 0.0;
  for (std::size_t i = 0; i < space.size(); ++i)
    if (space.is_trusted(i)) ts += state.pi[i];
  return {std::clamp(ts, 0.0, 1.0)};
}

inline constexpr double kPoolClamp = 1e-6;

// Weighted log-odds pooling. Each source contributes with weight
// w * 2^(-age / half_life); the per-type pooled log-odds are mapped back
// through the logistic function and renormalized.
inline TrustState aggregate_prior(std::span<const PriorSource> sources, double half_life,
                                  std::string entity_id = {}) {
  require(!sources.empty(), "prior_sources", "no prior sources");
  require(half_life > 0.0, "half_life", "must be positive");
  const std::size_t n = sources.front().estimate.size();
  std::vector<double> log_odds(n, 0.0);
  double total = 0.0;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const auto& src = sources[s];
    const auto field = "prior_sources[" + std::to_string(s) + "]";
    require(src.estimate.size() == n, field + ".estimate", "dimension mismatch across sources");
    require(is_distribution(src.estimate), field + ".estimate", "not a probability distribution");
    require(src.weight >= 0.0, field + ".weight", "must be non-negative");
    require(src.age >= 0.0, field + ".age", "must be non-negative");
    const double w = src.weight * std::exp2(-src.age / half_life);
    total += w;
    for (std::size_t i = 0; i < n; ++i) {
      const double p = std::clamp(src.estimate[i], kPoolClamp, 1.0 - kPoolClamp);
      log_odds[i] += w * std::log(p / (1.0 - p));
    }
  }
  require(total > 0.0, "prior_sources", "all effective weights are zero");
  TrustState out;
  out.entity_id = std::move(entity_id);
  out.pi.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.pi[i] = 1.0 / (1.0 + std::exp(-log_odds[i] / total));
  normalize(out.pi);
  return out;
}

// Posterior pi'(theta) proportional to h(e|a,theta) sigma(a|theta) pi(theta).
inline TrustState update_trust(const TrustState& state, std::size_t action, std::size_t evidence,
                               const ObservedStrategy& sigma, const EvidenceModel& model) {
  const std::size_t n = state.pi.size();
  require(sigma.table.size() == n, "sigma", "type dimension mismatch");
  require(action < sigma.actions.size(), "action", "out of range");
  require(evidence < model.alphabet.size(), "evidence", "out of range");
  // Evidence rows are keyed by action label; the strategy and the model may
  // list actions in different orders.
  const std::size_t model_action = index_of(model.actions, sigma.actions[action], "evidence_model.actions");
  require(model.likelihood[model_action].size() == n, "evidence_model", "type dimension mismatch");

  TrustState out{state.entity_id, std::vector<double>(n), state.timestamp + 1};
  double denom = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    out.pi[t] = model.prob(evidence, model_action, t) * sigma.prob(t, action) * state.pi[t];
    denom += out.pi[t];
  }
  if (!(denom > 0.0))
    throw InconsistentObservation("observation (" + sigma.actions[action] + ", " + model.alphabet[evidence] +
                                  ") has zero probability under every type with positive prior");
  for (double& v : out.pi) v /= denom;
  return out;
}

inline TrustState update_trust(const TrustState& state, std::string_view action, std::string_view evidence,
                               const ObservedStrategy& sigma, const EvidenceModel& model) {
  return update_trust(state, index_of(sigma.actions, action, "action"),
                      index_of(model.alphabet, evidence, "evidence"), sigma, model);
}

struct TrustEvent {
  std::size_t action = 0;
  std::size_t evidence = 0;
};

// Folds update_trust over the log; the result starts with `initial`.
inline std::vector<TrustState> replay_events(const TrustState& initial, std::span<const TrustEvent> log,
                                             const ObservedStrategy& sigma, const EvidenceModel& model) {
  std::vector<TrustState> out;
  out.reserve(log.size() + 1);
  out.push_back(initial);
  for (std::size_t i = 0; i < log.size(); ++i) {
    try {
      out.push_back(update_trust(out.back(), log[i].action, log[i].evidence, sigma, model));
    } catch (const InconsistentObservation& e) {
      throw InconsistentObservation("log entry " + std::to_string(i) + ": " + e.what(), i);
    }
  }
  return out;
}

}  // namespace ztrust
