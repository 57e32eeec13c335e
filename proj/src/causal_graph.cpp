#include "safereg/causal_graph.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <map>

#include "safereg/error.hpp"

namespace safereg {

std::string_view to_string(VariableKind kind) noexcept {
  switch (kind) {
    case VariableKind::exogenous: return "exogenous";
    case VariableKind::internal: return "internal";
    case VariableKind::observable: return "observable";
    case VariableKind::control: return "control";
    case VariableKind::target: return "target";
  }
  return "observable";
}

VariableKind parse_variable_kind(std::string_view text) {
  for (auto kind : {VariableKind::exogenous, VariableKind::internal, VariableKind::observable,
                    VariableKind::control, VariableKind::target}) {
    if (to_string(kind) == text) return kind;
  }
  throw Error(ErrorCode::SchemaMismatch, "unknown variable kind '" + std::string(text) + "'");
}

std::string to_string(const Independence& ind) {
  std::string out = ind.a + " _||_ " + ind.b;
  if (!ind.given.empty()) {
    out += " |";
    for (const auto& z : ind.given) out += " " + z;
  }
  return out;
}

CausalGraph::CausalGraph(std::vector<NodeSpec> nodes, const std::vector<Edge>& edges)
    : nodes_(std::move(nodes)), parents_(nodes_.size()), children_(nodes_.size()) {
  std::map<std::string, std::size_t, std::less<>> seen;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!seen.emplace(nodes_[i].name, i).second)
      throw Error(ErrorCode::DuplicateNode, "node '" + nodes_[i].name + "' declared twice");
  }
  for (const auto& [parent, child] : edges) {
    auto p = seen.find(parent);
    auto c = seen.find(child);
    if (p == seen.end() || c == seen.end()) {
      throw Error(ErrorCode::UnknownEndpoint,
                  "edge " + parent + " -> " + child + " references an undeclared node");
    }
    auto& ch = children_[p->second];
    if (std::find(ch.begin(), ch.end(), c->second) != ch.end()) continue;
    ch.push_back(c->second);
    parents_[c->second].push_back(p->second);
  }

  // Kahn's algorithm; leftover nodes lie on a cycle.
  std::vector<std::size_t> indegree(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) indegree[i] = parents_[i].size();
  std::vector<std::size_t> ready;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (indegree[i] == 0) ready.push_back(i);
  std::size_t visited = 0;
  while (!ready.empty()) {
    auto n = ready.back();
    ready.pop_back();
    ++visited;
    for (auto c : children_[n])
      if (--indegree[c] == 0) ready.push_back(c);
  }
  if (visited != nodes_.size()) {
    std::string members;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (indegree[i] > 0) members += (members.empty() ? "" : ", ") + nodes_[i].name;
    throw Error(ErrorCode::CycleDetected, "cycle through {" + members + "}");
  }
}

std::vector<Edge> CausalGraph::edges() const {
  std::vector<Edge> out;
  for (std::size_t p = 0; p < nodes_.size(); ++p)
    for (auto c : children_[p]) out.emplace_back(nodes_[p].name, nodes_[c].name);
  return out;
}

bool CausalGraph::contains(std::string_view name) const noexcept {
  return std::any_of(nodes_.begin(), nodes_.end(), [&](const auto& n) { return n.name == name; });
}

std::size_t CausalGraph::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].name == name) return i;
  throw Error(ErrorCode::UnknownNode, "no node named '" + std::string(name) + "'");
}

Domain CausalGraph::domain(std::string_view name) const {
  return node(name).domain.value_or(Domain{});
}

std::vector<std::size_t> CausalGraph::indices(const NodeSet& names) const {
  std::vector<std::size_t> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(index_of(n));
  return out;
}

std::vector<bool> CausalGraph::descendants_of(const std::vector<std::size_t>& roots) const {
  std::vector<bool> mark(nodes_.size(), false);
  std::vector<std::size_t> stack;
  for (auto r : roots)
    for (auto c : children_[r]) stack.push_back(c);
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (mark[n]) continue;
    mark[n] = true;
    for (auto c : children_[n]) stack.push_back(c);
  }
  return mark;
}

std::vector<bool> CausalGraph::ancestors_of(const std::vector<std::size_t>& roots,
                                            bool include_roots) const {
  std::vector<bool> mark(nodes_.size(), false);
  std::vector<std::size_t> stack;
  for (auto r : roots) {
    if (include_roots) mark[r] = true;
    for (auto p : parents_[r]) stack.push_back(p);
  }
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (mark[n]) continue;
    mark[n] = true;
    for (auto p : parents_[n]) stack.push_back(p);
  }
  return mark;
}

CausalGraph CausalGraph::without_outgoing(const NodeSet& sources) const {
  std::vector<Edge> kept;
  for (auto& e : edges())
    if (!sources.contains(e.first)) kept.push_back(std::move(e));
  return CausalGraph(nodes_, kept);
}

CausalGraph CausalGraph::without_edge(const Edge& edge) const {
  auto all = edges();
  auto it = std::find(all.begin(), all.end(), edge);
  if (it == all.end())
    throw Error(ErrorCode::UnknownEndpoint, "edge " + edge.first + " -> " + edge.second + " not in graph");
  all.erase(it);
  return CausalGraph(nodes_, all);
}

CausalGraph build_graph(std::vector<NodeSpec> nodes, const std::vector<Edge>& edges) {
  return CausalGraph(std::move(nodes), edges);
}

namespace {

void require_disjoint(const NodeSet& x, const NodeSet& y, const char* what) {
  for (const auto& n : x) {
    if (y.contains(n))
      throw Error(ErrorCode::OverlappingSets, std::string(what) + " share node '" + n + "'");
  }
}

}  // namespace

bool d_separated(const CausalGraph& graph, const NodeSet& a, const NodeSet& b, const NodeSet& z) {
  const auto ai = graph.indices(a);
  const auto bi = graph.indices(b);
  const auto zi = graph.indices(z);
  require_disjoint(a, b, "A and B");
  require_disjoint(a, z, "A and Z");
  require_disjoint(b, z, "B and Z");

  const std::size_t n = graph.size();
  std::vector<bool> in_z(n, false), in_b(n, false);
  for (auto i : zi) in_z[i] = true;
  for (auto i : bi) in_b[i] = true;
  // A collider is open iff it is in Z or has a descendant in Z.
  const auto z_ancestry = graph.ancestors_of(zi, true);

  // Reachability over (node, arrived-from-child) states.
  enum Dir : int { up = 0, down = 1 };
  std::vector<std::array<bool, 2>> visited(n, {false, false});
  std::vector<std::pair<std::size_t, Dir>> stack;
  for (auto i : ai) stack.emplace_back(i, up);

  while (!stack.empty()) {
    auto [node, dir] = stack.back();
    stack.pop_back();
    if (visited[node][dir]) continue;
    visited[node][dir] = true;
    if (!in_z[node] && in_b[node]) return false;

    if (dir == up && !in_z[node]) {
      for (auto p : graph.parents(node)) stack.emplace_back(p, up);
      for (auto c : graph.children(node)) stack.emplace_back(c, down);
    } else if (dir == down) {
      if (!in_z[node])
        for (auto c : graph.children(node)) stack.emplace_back(c, down);
      if (z_ancestry[node])
        for (auto p : graph.parents(node)) stack.emplace_back(p, up);
    }
  }
  return true;
}

namespace {

// Calls fn(subset) for every k-combination of `pool` (sorted) in lexicographic order.
// Stops early when fn returns true; returns whether it stopped.
template <typename Fn>
bool for_each_combination(const std::vector<std::string>& pool, std::size_t k, Fn&& fn) {
  if (k > pool.size()) return false;
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;
  while (true) {
    NodeSet subset;
    for (auto i : idx) subset.insert(pool[i]);
    if (fn(subset)) return true;
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == pool.size() - k + (i - 1)) --i;
    if (i == 0) return false;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

std::vector<std::string> sorted_names(const CausalGraph& graph) {
  std::vector<std::string> names;
  for (const auto& n : graph.nodes()) names.push_back(n.name);
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

std::vector<Independence> implied_independencies(const CausalGraph& graph,
                                                 std::size_t max_conditioning_size) {
  const auto names = sorted_names(graph);
  std::vector<Independence> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      std::vector<std::string> rest;
      for (const auto& n : names)
        if (n != names[i] && n != names[j]) rest.push_back(n);
      for (std::size_t k = 0; k <= std::min(max_conditioning_size, rest.size()); ++k) {
        for_each_combination(rest, k, [&](const NodeSet& z) {
          if (d_separated(graph, {names[i]}, {names[j]}, z)) out.push_back({names[i], names[j], z});
          return false;
        });
      }
    }
  }
  return out;
}

bool satisfies_backdoor(const CausalGraph& graph, const NodeSet& treatment,
                        const NodeSet& outcome, const NodeSet& adjustment) {
  const auto desc = graph.descendants_of(graph.indices(treatment));
  for (const auto& z : adjustment)
    if (desc[graph.index_of(z)]) return false;
  return d_separated(graph.without_outgoing(treatment), treatment, outcome, adjustment);
}

std::optional<NodeSet> backdoor_set(const CausalGraph& graph, const NodeSet& treatment,
                                    const NodeSet& outcome) {
  const auto ti = graph.indices(treatment);
  graph.indices(outcome);
  require_disjoint(treatment, outcome, "treatment and outcome");

  const auto desc = graph.descendants_of(ti);
  const auto pruned = graph.without_outgoing(treatment);
  std::vector<std::string> candidates;
  for (const auto& name : sorted_names(graph)) {
    const auto i = graph.index_of(name);
    const auto kind = graph.nodes()[i].kind;
    if (kind != VariableKind::observable && kind != VariableKind::control) continue;
    if (treatment.contains(name) || outcome.contains(name) || desc[i]) continue;
    candidates.push_back(name);
  }

  std::optional<NodeSet> found;
  for (std::size_t k = 0; k <= candidates.size() && !found; ++k) {
    for_each_combination(candidates, k, [&](const NodeSet& z) {
      if (d_separated(pruned, treatment, outcome, z)) {
        found = z;
        return true;
      }
      return false;
    });
  }
  return found;
}

std::optional<NodeSet> backdoor_set(const CausalGraph& graph, const NodeSet& treatment,
                                    const std::string& outcome) {
  return backdoor_set(graph, treatment, NodeSet{outcome});
}

void validate_target(const CausalGraph& graph, const InterventionTarget& target) {
  if (target.variables.empty())
    throw Error(ErrorCode::NotAControl, "intervention target has no variables");
  if (target.variables.size() != target.values.size()) {
    throw Error(ErrorCode::LengthMismatch, "intervention target has " +
                                               std::to_string(target.variables.size()) +
                                               " variables but " +
                                               std::to_string(target.values.size()) + " values");
  }
  NodeSet seen;
  for (std::size_t i = 0; i < target.variables.size(); ++i) {
    const auto& name = target.variables[i];
    if (!seen.insert(name).second)
      throw Error(ErrorCode::OverlappingSets, "variable '" + name + "' targeted twice");
    if (graph.kind(name) != VariableKind::control)
      throw Error(ErrorCode::NotAControl, "'" + name + "' is " +
                                              std::string(to_string(graph.kind(name))) +
                                              ", not a control");
    const auto dom = graph.domain(name);
    if (!dom.contains(target.values[i])) {
      throw Error(ErrorCode::OutOfDomain, "'" + name + "' = " + std::to_string(target.values[i]) +
                                              " outside [" + std::to_string(dom.lo) + ", " +
                                              std::to_string(dom.hi) + "]");
    }
  }
}

bool is_identifiable(const CausalGraph& graph, const InterventionTarget& target,
                     const NodeSet& outcome) {
  validate_target(graph, target);
  NodeSet treatment(target.variables.begin(), target.variables.end());
  return backdoor_set(graph, treatment, outcome).has_value();
}

bool is_identifiable(const CausalGraph& graph, const InterventionTarget& target,
                     const std::string& outcome) {
  return is_identifiable(graph, target, NodeSet{outcome});
}

CausalGraph graph_from_json(const nlohmann::json& doc) {
  try {
    std::vector<NodeSpec> nodes;
    for (const auto& n : doc.at("nodes")) {
      NodeSpec spec;
      spec.name = n.at("name").get<std::string>();
      spec.kind = parse_variable_kind(n.at("kind").get<std::string>());
      if (n.contains("domain")) {
        const auto& d = n.at("domain");
        if (!d.is_array() || d.size() != 2)
          throw Error(ErrorCode::SchemaMismatch, "domain of '" + spec.name + "' must be [lo, hi]");
        spec.domain = Domain{d[0].get<double>(), d[1].get<double>()};
        if (!(spec.domain->lo <= spec.domain->hi))
          throw Error(ErrorCode::SchemaMismatch, "domain of '" + spec.name + "' is empty");
      }
      nodes.push_back(std::move(spec));
    }
    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges")) {
      if (!e.is_array() || e.size() != 2)
        throw Error(ErrorCode::SchemaMismatch, "edges must be [parent, child] pairs");
      edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
    }
    return CausalGraph(std::move(nodes), edges);
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::SchemaMismatch, std::string("graph JSON: ") + ex.what());
  }
}

nlohmann::json graph_to_json(const CausalGraph& graph) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : graph.nodes()) {
    nlohmann::json j{{"name", n.name}, {"kind", std::string(to_string(n.kind))}};
    if (n.domain) j["domain"] = {n.domain->lo, n.domain->hi};
    nodes.push_back(std::move(j));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [p, c] : graph.edges()) edges.push_back({p, c});
  return {{"nodes", nodes}, {"edges", edges}};
}

CausalGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open graph file '" + path + "'");
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(ErrorCode::IoError, "malformed graph JSON in '" + path + "': " + ex.what());
  }
  return graph_from_json(doc);
}

}  // namespace safereg
