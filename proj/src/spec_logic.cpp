#include "safereg/spec_logic.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <set>

#include "safereg/causal_graph.hpp"
#include "safereg/error.hpp"

namespace safereg {

std::string_view to_string(Comparator cmp) noexcept {
  switch (cmp) {
    case Comparator::less: return "<";
    case Comparator::greater: return ">";
    case Comparator::less_equal: return "<=";
    case Comparator::greater_equal: return ">=";
  }
  return "<";
}

bool Predicate::holds(double value) const noexcept {
  switch (comparator) {
    case Comparator::less: return value < threshold;
    case Comparator::greater: return value > threshold;
    case Comparator::less_equal: return value <= threshold;
    case Comparator::greater_equal: return value >= threshold;
  }
  return false;
}

std::vector<std::string> SpecFormula::metrics() const {
  std::set<std::string> names;
  for (const auto& p : predicates) names.insert(p.metric);
  return {names.begin(), names.end()};
}

namespace {

class SpecParser {
 public:
  explicit SpecParser(std::string_view text) : text_(text) {}

  SpecFormula parse() {
    SpecFormula spec;
    expect_word("always");
    skip_ws();
    if (peek() != '[') throw SyntaxError(pos_, "expected '[H=<int>]' after 'always'");
    ++pos_;
    expect_word("H");
    expect_char('=');
    skip_ws();
    spec.horizon = parse_horizon();
    expect_char(']');
    expect_char('(');
    spec.predicates.push_back(parse_predicate());
    while (true) {
      skip_ws();
      if (peek() == ')') break;
      expect_word("and");
      spec.predicates.push_back(parse_predicate());
    }
    expect_char(')');
    skip_ws();
    if (pos_ != text_.size()) throw SyntaxError(pos_, "trailing input");
    return spec;
  }

 private:
  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect_char(char c) {
    skip_ws();
    if (peek() != c) throw SyntaxError(pos_, std::string("expected '") + c + "'");
    ++pos_;
  }

  void expect_word(std::string_view word) {
    skip_ws();
    const auto start = pos_;
    if (read_identifier() != word)
      throw SyntaxError(start, "expected '" + std::string(word) + "'");
  }

  std::string read_identifier() {
    const auto start = pos_;
    while (pos_ < text_.size()) {
      const auto c = static_cast<unsigned char>(text_[pos_]);
      if (std::isalnum(c) || c == '_' || (pos_ > start && c == '.')) {
        ++pos_;
      } else {
        break;
      }
    }
    return std::string(text_.substr(start, pos_ - start));
  }

  std::size_t parse_horizon() {
    const auto start = pos_;
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
    if (ec != std::errc{} || ptr == text_.data() + pos_)
      throw SyntaxError(start, "expected a nonnegative integer horizon");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return value;
  }

  Predicate parse_predicate() {
    skip_ws();
    Predicate p;
    const auto metric_pos = pos_;
    if (!(std::isalpha(static_cast<unsigned char>(peek())) || peek() == '_'))
      throw SyntaxError(metric_pos, "expected a metric name");
    p.metric = read_identifier();
    if (p.metric == "and") throw SyntaxError(metric_pos, "expected a metric name");

    skip_ws();
    const auto cmp_pos = pos_;
    std::string op;
    while (pos_ < text_.size() && std::string_view("<>=!").find(text_[pos_]) != std::string_view::npos)
      op += text_[pos_++];
    if (op.empty()) throw SyntaxError(cmp_pos, "expected a comparator");
    if (op == "<") {
      p.comparator = Comparator::less;
    } else if (op == ">") {
      p.comparator = Comparator::greater;
    } else if (op == "<=") {
      p.comparator = Comparator::less_equal;
    } else if (op == ">=") {
      p.comparator = Comparator::greater_equal;
    } else if (op == "<<" || op == ">>" || op == "=<" || op == "=>") {
      throw SyntaxError(cmp_pos, "malformed comparator '" + op + "'");
    } else {
      throw Error(ErrorCode::UnknownComparator,
                  "'" + op + "' at position " + std::to_string(cmp_pos));
    }

    skip_ws();
    const auto num_pos = pos_;
    const char* begin = text_.data() + pos_;
    const char* end = text_.data() + text_.size();
    if (pos_ < text_.size() && text_[pos_] == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, p.threshold);
    if (ec != std::errc{} || !std::isfinite(p.threshold))
      throw SyntaxError(num_pos, "expected a finite number");
    pos_ = static_cast<std::size_t>(ptr - text_.data());
    return p;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

std::string format_number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

SpecFormula parse_spec(std::string_view text) { return SpecParser(text).parse(); }

std::string format_spec(const SpecFormula& spec) {
  std::string out = "always[H=" + std::to_string(spec.horizon) + "](";
  for (std::size_t i = 0; i < spec.predicates.size(); ++i) {
    const auto& p = spec.predicates[i];
    if (i > 0) out += " and ";
    out += p.metric + " " + std::string(to_string(p.comparator)) + " " + format_number(p.threshold);
  }
  return out + ")";
}

bool row_satisfies(const SpecFormula& spec, const TrajectoryRow& row) {
  bool ok = true;
  for (const auto& p : spec.predicates) {
    auto it = row.values.find(p.metric);
    if (it == row.values.end())
      throw Error(ErrorCode::MissingMetric, "row t=" + std::to_string(row.time) + " lacks '" + p.metric + "'");
    if (!std::isfinite(it->second))
      throw Error(ErrorCode::NonFiniteMetric,
                  "'" + p.metric + "' is not finite at t=" + std::to_string(row.time));
    ok = ok && p.holds(it->second);
  }
  return ok;
}

int evaluate(const SpecFormula& spec, const Trajectory& traj) {
  if (traj.size() != spec.horizon + 1) {
    throw Error(ErrorCode::LengthMismatch, "trajectory has " + std::to_string(traj.size()) +
                                               " rows, horizon needs " +
                                               std::to_string(spec.horizon + 1));
  }
  for (std::size_t i = 1; i < traj.size(); ++i) {
    if (traj[i].time != traj[i - 1].time + 1)
      throw Error(ErrorCode::SchemaMismatch, "trajectory time indices must increase by 1");
  }
  // Every row is checked so that missing or non-finite metrics are always reported.
  int result = 1;
  for (const auto& row : traj)
    if (!row_satisfies(spec, row)) result = 0;
  return result;
}

void bind_spec(const SpecFormula& spec, const CausalGraph& graph) {
  for (const auto& p : spec.predicates) {
    if (graph.kind(p.metric) != VariableKind::target) {
      throw Error(ErrorCode::MissingMetric,
                  "spec metric '" + p.metric + "' is not a target node of the graph");
    }
  }
}

}  // namespace safereg
