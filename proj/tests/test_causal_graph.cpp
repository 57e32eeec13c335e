#include <doctest.h>

#include <bit>
#include <fstream>
#include <functional>
#include <random>

#include "safereg/causal_graph.hpp"
#include "safereg/error.hpp"
#include "support.hpp"

using namespace safereg;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::ConfigError;
}

NodeSpec obs(const std::string& name) { return {name, VariableKind::observable, std::nullopt}; }

std::size_t index_of(const std::string& name) { return std::stoul(name.substr(1)); }

std::set<std::size_t> to_ids(const NodeSet& names) {
  std::set<std::size_t> out;
  for (const auto& n : names) out.insert(index_of(n));
  return out;
}

NodeSet to_names(const std::set<std::size_t>& ids) {
  NodeSet out;
  for (auto i : ids) out.insert("N" + std::to_string(i));
  return out;
}

/// Backdoor criterion checked with the path-enumeration oracle: no member descends from the
/// treatment, and z separates treatment from outcome once the treatment's outgoing edges are cut.
bool oracle_backdoor(const oracle::Dag& dag, const std::set<std::size_t>& treatment, std::size_t outcome,
                     const std::set<std::size_t>& z) {
  for (auto t : treatment)
    for (auto d : dag.descendants_inclusive(t))
      if (z.count(d)) return false;
  oracle::Dag pruned{dag.n, {}};
  for (const auto& e : dag.edges)
    if (!treatment.count(e.first)) pruned.edges.push_back(e);
  return oracle::d_separated(pruned, treatment, {outcome}, z);
}

}  // namespace

TEST_SUITE("causal-graph") {
  TEST_CASE("build_graph accepts the example system graph") {
    const auto g = testing::fig8b();
    CHECK(g.size() == 4);
    CHECK(g.edges().size() == 3);
    CHECK(g.kind("C") == VariableKind::control);
  }

  TEST_CASE("build_graph rejects cycles, dangling endpoints and duplicates") {
    CHECK(code_of([] { build_graph({obs("A"), obs("B")}, {{"A", "B"}, {"B", "A"}}); }) == ErrorCode::CycleDetected);
    CHECK(code_of([] { build_graph({obs("A")}, {{"A", "Z"}}); }) == ErrorCode::UnknownEndpoint);
    CHECK(code_of([] { build_graph({obs("A"), obs("A")}, {}); }) == ErrorCode::DuplicateNode);
  }

  TEST_CASE("d_separated on the example graph and a chain") {
    const auto g = testing::fig8b();
    CHECK(d_separated(g, {"C"}, {"W"}, {}));
    CHECK_FALSE(d_separated(g, {"C"}, {"W"}, {"Y"}));
    const auto chain = build_graph({obs("A"), obs("B"), obs("C")}, {{"A", "B"}, {"B", "C"}});
    CHECK(d_separated(chain, {"A"}, {"C"}, {"B"}));
    CHECK_FALSE(d_separated(chain, {"A"}, {"C"}, {}));
  }

  TEST_CASE("d_separated rejects unknown and overlapping sets") {
    const auto g = testing::fig8b();
    CHECK(code_of([&] { d_separated(g, {"Q"}, {"W"}, {}); }) == ErrorCode::UnknownNode);
    CHECK(code_of([&] { d_separated(g, {"C"}, {"W"}, {"C"}); }) == ErrorCode::OverlappingSets);
  }

  TEST_CASE("implied_independencies") {
    const auto list = implied_independencies(testing::fig8b(), 0);
    auto has = [&](std::string a, std::string b) {
      for (const auto& ind : list)
        if (ind.given.empty() && ((ind.a == a && ind.b == b) || (ind.a == b && ind.b == a))) return true;
      return false;
    };
    CHECK(has("C", "W"));
    CHECK(has("C", "M"));
    CHECK(has("M", "W"));
    CHECK(list.size() == 3);
    CHECK(implied_independencies(build_graph({obs("A")}, {}), 2).empty());
    CHECK(implied_independencies(build_graph({obs("A"), obs("B")}, {{"A", "B"}}), 0).empty());

    const auto again = implied_independencies(testing::fig8b(), 2);
    CHECK(again == implied_independencies(testing::fig8b(), 2));
    for (const auto& ind : again) CHECK(d_separated(testing::fig8b(), {ind.a}, {ind.b}, ind.given));
  }

  TEST_CASE("backdoor_set examples") {
    const auto g = testing::fig8b();
    const auto z = backdoor_set(g, NodeSet{"C", "M"}, std::string("Y"));
    REQUIRE(z.has_value());
    CHECK(z->empty());

    const auto cpu = load_graph(testing::fixture("two_step_cpu_graph.json").string());
    const auto zc = backdoor_set(cpu, NodeSet{"C"}, std::string("P"));
    REQUIRE(zc.has_value());
    CHECK(*zc == NodeSet{"C_prev"});

    const auto hidden = build_graph({{"H", VariableKind::internal, std::nullopt},
                                     {"C", VariableKind::control, Domain{}},
                                     {"Y", VariableKind::target, std::nullopt}},
                                    {{"H", "C"}, {"H", "Y"}, {"C", "Y"}});
    CHECK_FALSE(backdoor_set(hidden, NodeSet{"C"}, std::string("Y")).has_value());
  }

  TEST_CASE("is_identifiable") {
    InterventionTarget target{{"C", "M"}, {0.5, 0.5}};
    CHECK(is_identifiable(testing::fig8b(), target, "Y"));
    const auto hidden = load_graph(testing::fixture("hidden_confounder_graph.json").string());
    CHECK_FALSE(is_identifiable(hidden, target, "Y"));
    InterventionTarget exo{{"U"}, {0.5}};
    const auto code = code_of([&] { is_identifiable(hidden, exo, "Y"); });
    CHECK((code == ErrorCode::NotAControl || code == ErrorCode::UnknownNode));
  }

  TEST_CASE("graph JSON round trip and malformed files") {
    const auto g = testing::fig8b();
    const auto back = graph_from_json(graph_to_json(g));
    CHECK(back.edges() == g.edges());
    CHECK(back.domain("C").hi == doctest::Approx(1.0));

    const auto dir = testing::scratch_dir("graph_json");
    const auto bad = dir / "bad.json";
    std::ofstream(bad) << "{ \"nodes\": [";
    CHECK(code_of([&] { load_graph(bad.string()); }) == ErrorCode::IoError);
    CHECK(code_of([&] { load_graph((dir / "missing.json").string()); }) == ErrorCode::IoError);
  }

  TEST_CASE("property: d_separated agrees with path enumeration, is symmetric and monotone under deletion") {
    std::mt19937_64 rng(20240601);
    std::size_t queries = 0, separated = 0;
    for (int trial = 0; trial < 500; ++trial) {
      const auto rd = testing::random_dag(rng);
      const std::size_t n = rd.dag.n;
      std::vector<std::size_t> perm(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
      for (int q = 0; q < 4; ++q) {
        std::shuffle(perm.begin(), perm.end(), rng);
        std::uniform_int_distribution<std::size_t> one_or_two(1, 2);
        const std::size_t na = std::min<std::size_t>(one_or_two(rng), n - 1);
        const std::size_t nb = std::min<std::size_t>(one_or_two(rng), n - na);
        std::uniform_int_distribution<std::size_t> zsize(0, std::min<std::size_t>(3, n - na - nb));
        const std::size_t nz = zsize(rng);
        const auto at = [&](std::size_t i) { return perm.begin() + static_cast<long>(i); };
        const std::set<std::size_t> a(at(0), at(na)), b(at(na), at(na + nb)), z(at(na + nb), at(na + nb + nz));
        const bool expected = oracle::d_separated(rd.dag, a, b, z);
        const bool got = d_separated(rd.graph, to_names(a), to_names(b), to_names(z));
        INFO("trial " << trial << " query " << q);
        REQUIRE(got == expected);
        REQUIRE(d_separated(rd.graph, to_names(b), to_names(a), to_names(z)) == got);
        ++queries;
        if (got) {
          ++separated;
          for (const auto& e : rd.graph.edges())
            REQUIRE(d_separated(rd.graph.without_edge(e), to_names(a), to_names(b), to_names(z)));
        }
      }
    }
    CHECK(queries == 2000);
    CHECK(separated > 100);
    CHECK(separated < queries - 100);
  }

  TEST_CASE("property: backdoor_set output passes an independent verifier and is minimal") {
    std::mt19937_64 rng(77);
    int found = 0, absent = 0;
    for (int trial = 0; trial < 300; ++trial) {
      const auto rd = testing::random_dag(rng, 8);
      std::uniform_int_distribution<std::size_t> pick(0, rd.dag.n - 1);
      const std::size_t t = pick(rng);
      std::size_t y = pick(rng);
      if (y == t) y = (t + 1) % rd.dag.n;
      const auto z = backdoor_set(rd.graph, NodeSet{rd.names[t]}, rd.names[y]);
      std::vector<std::size_t> others;
      for (std::size_t v = 0; v < rd.dag.n; ++v)
        if (v != t && v != y) others.push_back(v);
      // Every subset smaller than the answer must fail (every subset at all when absent).
      const std::size_t bound = z ? z->size() : others.size() + 1;
      for (std::size_t mask = 0; mask < (std::size_t{1} << others.size()); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) >= bound) continue;
        std::set<std::size_t> cand;
        for (std::size_t k = 0; k < others.size(); ++k)
          if (mask >> k & 1U) cand.insert(others[k]);
        REQUIRE_FALSE(oracle_backdoor(rd.dag, {t}, y, cand));
      }
      if (!z) {
        ++absent;
        continue;
      }
      ++found;
      REQUIRE(oracle_backdoor(rd.dag, {t}, y, to_ids(*z)));
      CHECK(satisfies_backdoor(rd.graph, NodeSet{rd.names[t]}, NodeSet{rd.names[y]}, *z));
    }
    CHECK(found > 100);
    CHECK(absent > 10);
  }
}
