#pragma once

// Three-layer access decision: authentication (trust thresholds),
// authorization (least-privilege grants with expiry) and network
// (micro-segmentation flows). Access is granted only when all three pass.

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ztrust/error.hpp"
#include "ztrust/graph.hpp"
#include "ztrust/trust.hpp"

namespace ztrust {

enum class LayerVerdict { pass, challenge, deny };
enum class Verdict { grant, challenge_then_grant, deny };

inline const char* to_string(LayerVerdict v) {
  switch (v) {
    case LayerVerdict::pass: return "pass";
    case LayerVerdict::challenge: return "challenge";
    case LayerVerdict::deny: return "deny";
  }
  return "?";
}
inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::grant: return "grant";
    case Verdict::challenge_then_grant: return "challenge_then_grant";
    case Verdict::deny: return "deny";
  }
  return "?";
}

struct AuthnPolicy {
  double tau_deny = 0.2;
  double tau_challenge = 0.7;
};

struct Grant {
  std::size_t level = 0;
  std::size_t expiry = 0;  // valid at stages < expiry
};

struct LayerPolicy {
  AuthnPolicy authn;
  std::map<std::string, Grant> grants;                     // per entity
  std::set<std::pair<std::string, std::string>> flows;     // allowed (from segment, to segment)

  bool flow_allowed(const std::string& from, const std::string& to) const { return flows.count({from, to}) > 0; }

  void validate(const AuthGraph& graph, const std::string& path = "policy") const {
    require(authn.tau_deny >= 0.0 && authn.tau_deny <= authn.tau_challenge && authn.tau_challenge <= 1.0,
            path + ".authn", "thresholds must satisfy 0 <= tau_deny <= tau_challenge <= 1");
    const auto segs = graph.segments();
    for (const auto& [a, b] : flows) {
      require(segs.count(a) > 0, path + ".flows", "unknown segment '" + a + "'");
      require(segs.count(b) > 0, path + ".flows", "unknown segment '" + b + "'");
    }
  }
};

struct AccessRequest {
  std::string entity_id;
  std::string source, destination;
  std::size_t privilege = 0;
  std::string context;
};

struct AccessDecision {
  Verdict verdict = Verdict::deny;
  LayerVerdict authn = LayerVerdict::deny, authz = LayerVerdict::deny, network = LayerVerdict::deny;
  std::string reason;
};

inline LayerVerdict authn_verdict(double ts, const AuthnPolicy& p) {
  if (ts < p.tau_deny) return LayerVerdict::deny;
  if (ts < p.tau_challenge) return LayerVerdict::challenge;
  return LayerVerdict::pass;
}

// `trust` may be null: no trust record means deny.
inline AccessDecision decide(const AccessRequest& req, const TrustState* trust, const TypeSpace& space,
                             const LayerPolicy& policy, const AuthGraph& graph, std::size_t stage) {
  const std::size_t src = graph.index(req.source, "request.source");
  const std::size_t dst = graph.index(req.destination, "request.destination");
  AccessDecision d;
  std::vector<std::string> why;

  if (!trust) {
    d.authn = LayerVerdict::deny;
    why.push_back("no trust record");
  } else {
    d.authn = authn_verdict(trust_score(*trust, space).value, policy.authn);
    if (d.authn == LayerVerdict::deny) why.push_back("authn: trust below deny threshold");
  }

  auto g = policy.grants.find(req.entity_id);
  if (g == policy.grants.end() || stage >= g->second.expiry) {
    why.push_back("authz: no valid grant");
  } else if (g->second.level < std::max(req.privilege, graph.nodes[dst].privilege)) {
    why.push_back("authz: insufficient privilege");
  } else {
    d.authz = LayerVerdict::pass;
  }

  if (!graph.has_edge(src, dst)) {
    why.push_back("network: no edge");
  } else if (!policy.flow_allowed(graph.nodes[src].segment, graph.nodes[dst].segment)) {
    why.push_back("network: segment flow not allowed");
  } else {
    d.network = LayerVerdict::pass;
  }

  const bool rest = d.authz == LayerVerdict::pass && d.network == LayerVerdict::pass;
  if (rest && d.authn == LayerVerdict::pass)
    d.verdict = Verdict::grant;
  else if (rest && d.authn == LayerVerdict::challenge)
    d.verdict = Verdict::challenge_then_grant;
  else
    d.verdict = Verdict::deny;
  if (d.verdict == Verdict::challenge_then_grant) why.push_back("authn: step-up required");
  for (std::size_t i = 0; i < why.size(); ++i) d.reason += (i ? "; " : "") + why[i];
  return d;
}

// Each entity gets the largest privilege among its needed nodes, nothing more.
inline std::map<std::string, Grant> least_privilege_assign(
    const AuthGraph& graph, const std::vector<std::pair<std::string, std::string>>& workload, std::size_t expiry) {
  std::map<std::string, Grant> out;
  for (const auto& [entity, node] : workload) {
    const std::size_t level = graph.nodes[graph.index(node, "workload")].privilege;
    auto [it, fresh] = out.try_emplace(entity, Grant{level, expiry});
    if (!fresh) it->second.level = std::max(it->second.level, level);
  }
  return out;
}

// Nodes reachable from `compromised` over edges whose segment flow is allowed.
inline std::set<std::string> segment_containment(const AuthGraph& graph, const LayerPolicy& policy,
                                                 const std::string& compromised) {
  const std::size_t s = graph.index(compromised, "compromised");
  std::vector<char> seen(graph.size(), 0);
  std::vector<std::size_t> queue{s};
  seen[s] = 1;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t u = queue[head];
    for (std::size_t v : graph.out[u])
      if (!seen[v] && policy.flow_allowed(graph.nodes[u].segment, graph.nodes[v].segment)) {
        seen[v] = 1;
        queue.push_back(v);
      }
  }
  std::set<std::string> out;
  for (std::size_t i = 0; i < graph.size(); ++i)
    if (seen[i]) out.insert(graph.nodes[i].name);
  return out;
}

}  // namespace ztrust
