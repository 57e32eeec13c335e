#pragma once

#include <algorithm>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "oracles/brute_dsep.hpp"
#include "safereg/causal_graph.hpp"
#include "safereg/dataset.hpp"
#include "safereg/env.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return SAFEREG_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& name) { return source_dir() / "fixtures" / name; }

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("safereg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline safereg::CausalGraph fig8b() {
  using safereg::VariableKind;
  return safereg::build_graph({{"W", VariableKind::observable, std::nullopt},
                               {"C", VariableKind::control, safereg::Domain{0.0, 1.0}},
                               {"M", VariableKind::control, safereg::Domain{0.0, 1.0}},
                               {"Y", VariableKind::target, std::nullopt}},
                              {{"W", "Y"}, {"C", "Y"}, {"M", "Y"}});
}

/// A random DAG in both representations. Node i is named "N<i>" and edges respect a hidden
/// random topological order, so indices carry no ordering information.
struct RandomDag {
  oracle::Dag dag;
  safereg::CausalGraph graph;
  std::vector<std::string> names;
};

inline RandomDag random_dag(std::mt19937_64& rng, std::size_t max_nodes = 10) {
  std::uniform_int_distribution<std::size_t> size(2, max_nodes);
  const std::size_t n = size(rng);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double density = 0.15 + 0.45 * unit(rng);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);

  oracle::Dag dag{n, {}};
  std::vector<std::string> names;
  std::vector<safereg::NodeSpec> nodes;
  for (std::size_t i = 0; i < n; ++i) {
    names.push_back("N" + std::to_string(i));
    nodes.push_back({names.back(), safereg::VariableKind::observable, std::nullopt});
  }
  std::vector<safereg::Edge> edges;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (unit(rng) < density) {
        dag.edges.emplace_back(order[a], order[b]);
        edges.emplace_back(names[order[a]], names[order[b]]);
      }
  RandomDag out{std::move(dag), safereg::build_graph(std::move(nodes), edges), std::move(names)};
  return out;
}

/// Passive Scenario-1/2 log with the load optionally mixed into the CPU share.
inline safereg::ObservationDataset simulate(int scenario, std::size_t rows, std::uint64_t seed, double couple = 0.0) {
  safereg::ExampleSystem env(scenario, seed);
  auto data = safereg::record_passive(env, rows);
  if (couple == 0.0) return data;
  const Eigen::VectorXd t = data.column("t"), w = data.column("W"), m = data.column("M");
  Eigen::VectorXd c = data.column("C"), y = data.column("Y");
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    c(i) = (1.0 - couple) * c(i) + couple * w(i);
    y(i) = safereg::ExampleSystem::response_time(scenario, static_cast<std::int64_t>(t(i)), w(i), c(i), m(i));
  }
  return safereg::ObservationDataset({"t", "W", "C", "M", "Y"}, {t, w, c, m, y});
}

}  // namespace testing
