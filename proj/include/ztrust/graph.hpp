#pragma once

// Agent-centric authentication graph: nodes carry a segment, a required
// privilege level, a credential store and a target flag; edges are
// authentication hops.

#include <algorithm>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "ztrust/csv.hpp"
#include "ztrust/error.hpp"

namespace ztrust {

struct AuthNode {
  std::string name;
  std::string segment;
  std::size_t privilege = 0;
  bool target = false;
  std::vector<std::string> credentials;  // ids cached at the node
};

struct AuthGraph {
  std::vector<AuthNode> nodes;
  std::vector<std::vector<std::size_t>> out;  // sorted successor lists
  std::string entry;

  std::size_t size() const { return nodes.size(); }

  std::size_t index(const std::string& name, const std::string& field = "graph") const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].name == name) return i;
    throw ValidationError(field, "unknown node '" + name + "'");
  }
  bool has_node(const std::string& name) const {
    return std::any_of(nodes.begin(), nodes.end(), [&](const AuthNode& n) { return n.name == name; });
  }
  bool has_edge(std::size_t u, std::size_t v) const { return std::binary_search(out[u].begin(), out[u].end(), v); }
  std::size_t entry_index() const { return index(entry, "graph.entry"); }

  void add_edge(std::size_t u, std::size_t v) {
    auto it = std::lower_bound(out[u].begin(), out[u].end(), v);
    if (it == out[u].end() || *it != v) out[u].insert(it, v);
  }

  std::set<std::string> segments() const {
    std::set<std::string> s;
    for (const auto& n : nodes) s.insert(n.segment);
    return s;
  }

  // Plain reachability from `from`.
  std::vector<char> reachable(std::size_t from) const {
    std::vector<char> seen(size(), 0);
    std::vector<std::size_t> stack{from};
    seen[from] = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v : out[u])
        if (!seen[v]) seen[v] = 1, stack.push_back(v);
    }
    return seen;
  }

  void validate(const std::string& path = "graph") const {
    require(!nodes.empty(), path + ".nodes", "graph has no nodes");
    std::set<std::string> names;
    for (const auto& n : nodes) {
      require(!n.name.empty(), path + ".nodes", "empty node name");
      require(names.insert(n.name).second, path + ".nodes", "duplicate node '" + n.name + "'");
      require(!n.segment.empty(), path + ".nodes." + n.name, "missing segment");
    }
    require(out.size() == nodes.size(), path + ".edges", "adjacency size mismatch");
    for (const auto& row : out)
      for (std::size_t v : row) require(v < nodes.size(), path + ".edges", "edge to a missing node");
    require(has_node(entry), path + ".entry", "unknown entry node '" + entry + "'");
    require(std::any_of(nodes.begin(), nodes.end(), [](const AuthNode& n) { return n.target; }), path + ".nodes",
            "at least one target node required");
  }
};

inline std::vector<std::string> split_list(const std::string& s, char sep = '|') {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// nodes: node,segment,privilege,target,credentials (credentials '|'-separated)
// edges: src,dst
inline AuthGraph load_auth_graph(const std::string& nodes_csv, const std::string& edges_csv, const std::string& entry) {
  AuthGraph g;
  g.entry = entry;
  const auto nodes = read_csv(nodes_csv);
  const std::size_t cn = nodes.column("node"), cs = nodes.column("segment"), cp = nodes.column("privilege"),
                    ct = nodes.column("target"), cc = nodes.column("credentials");
  for (std::size_t r = 0; r < nodes.rows.size(); ++r) {
    const auto& row = nodes.rows[r];
    AuthNode n;
    n.name = row[cn];
    n.segment = row[cs];
    const long long p = parse_int(row[cp], nodes.where(r) + ":privilege");
    require(p >= 0, nodes.where(r) + ":privilege", "must be non-negative");
    n.privilege = static_cast<std::size_t>(p);
    const std::string t = row[ct];
    require(t == "0" || t == "1" || t == "true" || t == "false", nodes.where(r) + ":target", "expected 0/1 or true/false");
    n.target = t == "1" || t == "true";
    n.credentials = split_list(row[cc]);
    g.nodes.push_back(std::move(n));
  }
  g.out.assign(g.nodes.size(), {});
  const auto edges = read_csv(edges_csv);
  const std::size_t es = edges.column("src"), ed = edges.column("dst");
  for (std::size_t r = 0; r < edges.rows.size(); ++r) {
    const std::size_t u = g.index(edges.rows[r][es], edges.where(r) + ":src");
    const std::size_t v = g.index(edges.rows[r][ed], edges.where(r) + ":dst");
    g.add_edge(u, v);
  }
  g.validate(nodes_csv);
  return g;
}

}  // namespace ztrust
