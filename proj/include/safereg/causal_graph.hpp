#pragma once

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace safereg {

enum class VariableKind { exogenous, internal, observable, control, target };

std::string_view to_string(VariableKind kind) noexcept;
VariableKind parse_variable_kind(std::string_view text);

/// Closed real interval. Control nodes default to [0, 1].
struct Domain {
  double lo = 0.0;
  double hi = 1.0;

  bool contains(double v) const noexcept { return v >= lo && v <= hi; }
  double width() const noexcept { return hi - lo; }
};

struct NodeSpec {
  std::string name;
  VariableKind kind = VariableKind::observable;
  std::optional<Domain> domain;
};

using Edge = std::pair<std::string, std::string>;
using NodeSet = std::set<std::string>;

/// Conditional independence statement a ⟂ b | given.
struct Independence {
  std::string a;
  std::string b;
  NodeSet given;

  friend bool operator==(const Independence&, const Independence&) = default;
};

std::string to_string(const Independence& ind);

/// Immutable, validated DAG over named system variables.
class CausalGraph {
 public:
  /// Throws DuplicateNode, UnknownEndpoint or CycleDetected.
  CausalGraph(std::vector<NodeSpec> nodes, const std::vector<Edge>& edges);

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<NodeSpec>& nodes() const noexcept { return nodes_; }
  std::vector<Edge> edges() const;

  bool contains(std::string_view name) const noexcept;
  /// Throws UnknownNode.
  std::size_t index_of(std::string_view name) const;
  const NodeSpec& node(std::string_view name) const { return nodes_[index_of(name)]; }
  VariableKind kind(std::string_view name) const { return node(name).kind; }
  Domain domain(std::string_view name) const;

  const std::vector<std::size_t>& parents(std::size_t i) const { return parents_[i]; }
  const std::vector<std::size_t>& children(std::size_t i) const { return children_[i]; }

  /// Strict descendants of the given set (the set itself excluded unless reachable).
  std::vector<bool> descendants_of(const std::vector<std::size_t>& roots) const;
  std::vector<bool> ancestors_of(const std::vector<std::size_t>& roots, bool include_roots) const;

  /// Copy of this graph with every edge leaving a node in `sources` removed.
  CausalGraph without_outgoing(const NodeSet& sources) const;
  /// Copy with a single edge removed; the edge must exist.
  CausalGraph without_edge(const Edge& edge) const;

  std::vector<std::size_t> indices(const NodeSet& names) const;

 private:
  std::vector<NodeSpec> nodes_;
  std::vector<std::vector<std::size_t>> parents_;
  std::vector<std::vector<std::size_t>> children_;
};

CausalGraph build_graph(std::vector<NodeSpec> nodes, const std::vector<Edge>& edges);

/// True iff every path between `a` and `b` is blocked given `z`.
/// Throws UnknownNode, OverlappingSets.
bool d_separated(const CausalGraph& graph, const NodeSet& a, const NodeSet& b, const NodeSet& z);

/// All pairwise independencies a ⟂ b | Z with |Z| <= max_conditioning_size, a < b,
/// ordered by (a, b) then by Z (size first, then lexicographic).
std::vector<Independence> implied_independencies(const CausalGraph& graph,
                                                 std::size_t max_conditioning_size);

/// Smallest (then lexicographically first) set of observable/control nodes satisfying
/// the backdoor criterion relative to (treatment, outcome); nullopt if none exists.
std::optional<NodeSet> backdoor_set(const CausalGraph& graph, const NodeSet& treatment,
                                    const NodeSet& outcome);
std::optional<NodeSet> backdoor_set(const CausalGraph& graph, const NodeSet& treatment,
                                    const std::string& outcome);

/// Independent check of the backdoor criterion for a given adjustment set.
bool satisfies_backdoor(const CausalGraph& graph, const NodeSet& treatment,
                        const NodeSet& outcome, const NodeSet& adjustment);

/// do(variables = values); validated against a graph.
struct InterventionTarget {
  std::vector<std::string> variables;
  std::vector<double> values;
};

/// Throws UnknownNode, NotAControl, OutOfDomain, LengthMismatch.
void validate_target(const CausalGraph& graph, const InterventionTarget& target);

bool is_identifiable(const CausalGraph& graph, const InterventionTarget& target,
                     const NodeSet& outcome);
bool is_identifiable(const CausalGraph& graph, const InterventionTarget& target,
                     const std::string& outcome);

// JSON: {"nodes":[{"name","kind","domain":[lo,hi]?}], "edges":[[parent,child],...]}
CausalGraph graph_from_json(const nlohmann::json& doc);
nlohmann::json graph_to_json(const CausalGraph& graph);
CausalGraph load_graph(const std::string& path);

}  // namespace safereg
