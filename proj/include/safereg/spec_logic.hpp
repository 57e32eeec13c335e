#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace safereg {

class CausalGraph;

enum class Comparator { less, greater, less_equal, greater_equal };

std::string_view to_string(Comparator cmp) noexcept;

struct Predicate {
  std::string metric;
  Comparator comparator = Comparator::less;
  double threshold = 0.0;

  bool holds(double value) const noexcept;
};

/// Conjunction of predicates under "always" over a horizon of H steps (H + 1 rows).
struct SpecFormula {
  std::vector<Predicate> predicates;
  std::size_t horizon = 0;

  std::vector<std::string> metrics() const;
};

struct TrajectoryRow {
  std::int64_t time = 0;
  std::map<std::string, double, std::less<>> values;
};

using Trajectory = std::vector<TrajectoryRow>;

/// Grammar: always[H=<int>] ( <metric> <cmp> <number> { and <metric> <cmp> <number> } )
/// Throws SyntaxError (with position) or UnknownComparator.
SpecFormula parse_spec(std::string_view text);
std::string format_spec(const SpecFormula& spec);

/// 1 iff every predicate holds at every row. Throws LengthMismatch, MissingMetric,
/// NonFiniteMetric, SchemaMismatch (non-consecutive time indices).
int evaluate(const SpecFormula& spec, const Trajectory& traj);

/// Per-row conjunction without the trajectory-length check.
bool row_satisfies(const SpecFormula& spec, const TrajectoryRow& row);

/// Every referenced metric must be a target node of the graph.
void bind_spec(const SpecFormula& spec, const CausalGraph& graph);

}  // namespace safereg
