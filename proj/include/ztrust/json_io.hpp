#pragma once

// JSON plumbing shared by the scenario readers: typed access with field
// paths in every error, and (de)serialization of the trust-core types.

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "ztrust/error.hpp"
#include "ztrust/trace.hpp"
#include "ztrust/trust.hpp"

namespace ztrust {

using json = nlohmann::ordered_json;

inline std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}
// Side files are resolved relative to the scenario file's directory.
inline std::string resolve_path(const std::string& base_dir, const std::string& file) {
  if (base_dir.empty() || file.empty() || file.front() == '/') return file;
  return base_dir + "/" + file;
}

inline std::string index_path(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline const json& at(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw ValidationError(path, "expected an object");
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(join_path(path, key), "required field missing");
  return *it;
}

inline const json* find(const json& j, const std::string& key) {
  if (!j.is_object()) return nullptr;
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

inline double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ValidationError(path, "expected a number");
  return j.get<double>();
}

inline std::uint64_t as_count(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
  throw ValidationError(path, "expected a non-negative integer");
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ValidationError(path, "expected a string");
  return j.get<std::string>();
}

inline bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ValidationError(path, "expected true or false");
  return j.get<bool>();
}

inline std::vector<double> as_numbers(const json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path, "expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_number(j[i], index_path(path, i)));
  return out;
}

inline std::vector<std::string> as_strings(const json& j, const std::string& path) {
  if (!j.is_array()) throw ValidationError(path, "expected an array of strings");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_string(j[i], index_path(path, i)));
  return out;
}

inline double number_or(const json& j, const std::string& key, double fallback, const std::string& path) {
  const json* v = find(j, key);
  return v ? as_number(*v, join_path(path, key)) : fallback;
}

// Rounded to 9 significant digits for emission.
inline json num(double v) { return round9(v); }

inline json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline TypeSpace parse_type_space(const json& j, const std::string& path, bool allow_singleton) {
  TypeSpace s;
  s.labels = as_strings(at(j, "labels", path), join_path(path, "labels"));
  if (const json* t = find(j, "trusted")) s.trusted = as_strings(*t, join_path(path, "trusted"));
  s.validate(path, allow_singleton);
  return s;
}

inline json to_json(const TypeSpace& s) {
  json j;
  j["labels"] = s.labels;
  j["trusted"] = s.trusted;
  return j;
}

// {"alphabet": [...], "likelihood": {action: {type: [p(e) ...]}}}
inline EvidenceModel parse_evidence(const json& j, const TypeSpace& agent, const std::string& path) {
  EvidenceModel m;
  m.alphabet = as_strings(at(j, "alphabet", path), join_path(path, "alphabet"));
  const json& lik = at(j, "likelihood", path);
  const auto lpath = join_path(path, "likelihood");
  if (!lik.is_object()) throw ValidationError(lpath, "expected an object keyed by action");
  for (auto it = lik.begin(); it != lik.end(); ++it) {
    m.actions.push_back(it.key());
    const auto apath = join_path(lpath, it.key());
    if (!it.value().is_object()) throw ValidationError(apath, "expected an object keyed by type");
    std::vector<std::vector<double>> rows(agent.size());
    for (auto t = it.value().begin(); t != it.value().end(); ++t) {
      const std::size_t ti = index_of(agent.labels, t.key(), apath);
      rows[ti] = as_numbers(t.value(), join_path(apath, t.key()));
    }
    for (std::size_t ti = 0; ti < agent.size(); ++ti)
      require(!rows[ti].empty(), join_path(apath, agent.labels[ti]), "missing likelihood row");
    m.likelihood.push_back(std::move(rows));
  }
  m.validate(agent.size(), path);
  return m;
}

inline json to_json(const EvidenceModel& m, const TypeSpace& agent) {
  json j;
  j["alphabet"] = m.alphabet;
  json lik = json::object();
  for (std::size_t a = 0; a < m.actions.size(); ++a) {
    json rows = json::object();
    for (std::size_t t = 0; t < agent.size(); ++t) rows[agent.labels[t]] = nums(m.likelihood[a][t]);
    lik[m.actions[a]] = rows;
  }
  j["likelihood"] = lik;
  return j;
}

// {"actions": [...], "table": {type: [sigma(a|type) ...]}}
inline ObservedStrategy parse_strategy(const json& j, const TypeSpace& space, const std::string& path) {
  ObservedStrategy s;
  s.actions = as_strings(at(j, "actions", path), join_path(path, "actions"));
  const json& tab = at(j, "table", path);
  const auto tpath = join_path(path, "table");
  if (!tab.is_object()) throw ValidationError(tpath, "expected an object keyed by type");
  s.table.assign(space.size(), {});
  for (auto it = tab.begin(); it != tab.end(); ++it)
    s.table[index_of(space.labels, it.key(), tpath)] = as_numbers(it.value(), join_path(tpath, it.key()));
  s.validate(space.size(), tpath);
  return s;
}

inline json to_json(const ObservedStrategy& s, const TypeSpace& space) {
  json j;
  j["actions"] = s.actions;
  json tab = json::object();
  for (std::size_t t = 0; t < space.size(); ++t) tab[space.labels[t]] = nums(s.table[t]);
  j["table"] = tab;
  return j;
}

inline PriorSource parse_prior_source(const json& j, const TypeSpace& space, const std::string& path) {
  PriorSource s;
  s.kind = prior_kind_from(as_string(at(j, "kind", path), join_path(path, "kind")), join_path(path, "kind"));
  s.estimate = as_numbers(at(j, "estimate", path), join_path(path, "estimate"));
  require(s.estimate.size() == space.size(), join_path(path, "estimate"), "one entry per type required");
  s.weight = number_or(j, "weight", 1.0, path);
  s.age = number_or(j, "age", 0.0, path);
  return s;
}

inline json to_json(const PriorSource& s) {
  json j;
  j["kind"] = std::string(to_string(s.kind));
  j["estimate"] = nums(s.estimate);
  j["weight"] = num(s.weight);
  j["age"] = num(s.age);
  return j;
}

}  // namespace ztrust
