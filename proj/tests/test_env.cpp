#include <doctest.h>

#include "safereg/env.hpp"
#include "safereg/error.hpp"
#include "safereg/grid.hpp"
#include "safereg/spec_logic.hpp"
#include "support.hpp"

using namespace safereg;

namespace {

InterventionTarget at(double c, double m) { return {{"C", "M"}, {c, m}}; }

double truth_lambda(const ExampleSystem& env, const SpecFormula& spec, std::int64_t start, std::size_t samples) {
  const ControlGrid grid({"C", "M"}, {Domain{}, Domain{}}, 50);
  const auto p = env.satisfaction_probability(grid.points(), spec, start, samples);
  return static_cast<double>((p.array() >= 0.8).count()) / static_cast<double>(p.size());
}

}  // namespace

TEST_SUITE("env") {
  TEST_CASE("response time closed form") {
    CHECK(ExampleSystem::response_time(1, 1, 0.0, 0.5, 0.5) == doctest::Approx(0.0));
    CHECK(ExampleSystem::response_time(1, 1, 1.0, 0.5, 0.5) == doctest::Approx(34.3));
    CHECK(ExampleSystem::response_time(1, 1, 0.0, 1.0, 0.0) == doctest::Approx(75.0));
    // Up to the stress onset the second scenario uses the same formula.
    CHECK(ExampleSystem::response_time(2, 10, 0.3, 0.2, 0.9) == ExampleSystem::response_time(1, 10, 0.3, 0.2, 0.9));
  }

  TEST_CASE("intervention costs") {
    ExampleSystem env(1);
    CHECK(env.cost(at(0.5, 0.5)) == doctest::Approx(2.0));
    CHECK(env.cost(at(1.0, 1.0)) == doctest::Approx(4.5));
    CHECK(env.cost(at(0.0, 0.0)) == doctest::Approx(0.5));
  }

  TEST_CASE("intervened trajectories") {
    ExampleSystem env(1, 3);
    const auto spec = parse_spec("always[H=1](Y < 50)");
    for (int rep = 0; rep < 50; ++rep) {
      const auto safe = env.intervene(at(0.5, 0.5), 1);
      REQUIRE(safe.size() == 2);
      CHECK(evaluate(spec, safe) == 1);
      for (const auto& row : safe) CHECK(row.values.at("Y") <= 34.3 + 1e-9);
      const auto hot = env.intervene(at(1.0, 1.0), 1);
      for (const auto& row : hot) CHECK(row.values.at("Y") >= 175.0 - 1e-9);
      CHECK(evaluate(spec, hot) == 0);
    }
    CHECK(env.intervene(at(0.2, 0.2), 0).size() == 1);
    CHECK_THROWS_AS(env.intervene(at(1.5, 0.2), 0), Error);
    CHECK_THROWS_AS(env.intervene({{"W"}, {0.1}}, 0), Error);
  }

  TEST_CASE("clock advances monotonically") {
    ExampleSystem env(1, 1);
    const auto t0 = env.clock();
    env.observe();
    CHECK(env.clock() == t0 + 1);
    const auto traj = env.intervene(at(0.5, 0.5), 3);
    CHECK(env.clock() == t0 + 5);
    for (std::size_t i = 1; i < traj.size(); ++i) CHECK(traj[i].time == traj[i - 1].time + 1);
  }

  TEST_CASE("ground truth examples") {
    ExampleSystem env(1);
    const auto spec = parse_spec("always[H=1](Y < 50)");
    CHECK(env.ground_truth_safe(at(0.5, 0.5), spec, 0.8, 2000).value());
    CHECK_FALSE(env.ground_truth_safe(at(1.0, 1.0), spec, 0.8, 2000).value());
    // delta = 0: safe wherever the specification can hold at all.
    CHECK(env.ground_truth_safe(at(0.3, 0.6), spec, 0.0, 2000).value());
    CHECK_FALSE(env.ground_truth_safe(at(1.0, 1.0), spec, 0.0, 2000).value());
  }

  TEST_CASE("property: reset reproduces every output") {
    for (int scenario : {1, 2}) {
      ExampleSystem env(scenario);
      auto run = [&] {
        env.reset(99);
        std::vector<double> out;
        for (int i = 0; i < 15; ++i)
          for (const auto& [k, v] : env.observe().values) out.push_back(v);
        for (const auto& row : env.intervene(at(0.4, 0.7), 5))
          for (const auto& [k, v] : row.values) out.push_back(v);
        out.push_back(static_cast<double>(env.clock()));
        return out;
      };
      const auto first = run();
      CHECK(first == run());
    }
  }

  TEST_CASE("property: the second scenario matches the first up to the stress onset") {
    for (std::uint64_t seed : {0ULL, 1ULL, 17ULL}) {
      ExampleSystem one(1, seed), two(2, seed);
      for (int t = 1; t <= ExampleSystem::kStressOnset; ++t) {
        const auto a = one.observe(), b = two.observe();
        CHECK(a.time == b.time);
        CHECK(a.values == b.values);
      }
      const auto a = one.observe(), b = two.observe();
      CHECK(a.values.at("W") != b.values.at("W"));
    }
  }

  TEST_CASE("property: stress load schedule") {
    CHECK(ExampleSystem::stressed_load(11) == doctest::Approx(0.2));
    CHECK(ExampleSystem::stressed_load(15) == doctest::Approx(0.6));
    CHECK(ExampleSystem::stressed_load(40) == doctest::Approx(1.0));
    ExampleSystem two(2);
    CHECK(two.load_is_random(10));
    CHECK_FALSE(two.load_is_random(11));
    ExampleSystem one(1);
    CHECK(one.load_is_random(500));
  }

  TEST_CASE("property: ground-truth region is stable across Monte-Carlo seeds") {
    const auto spec = parse_spec("always[H=1](Y < 50)");
    const double reference = truth_lambda(ExampleSystem(1, 0, 1), spec, 1, 10000);
    CHECK(reference > 0.2);
    for (std::uint64_t truth_seed : {2ULL, 3ULL, 4ULL, 5ULL}) {
      const double lambda = truth_lambda(ExampleSystem(1, 0, truth_seed), spec, 1, 10000);
      CHECK(std::abs(lambda - reference) <= 0.02);
    }
  }

  TEST_CASE("property: the safe region shrinks under stress") {
    const auto spec = parse_spec("always[H=1](Y < 50)");
    ExampleSystem two(2);
    const double early = truth_lambda(two, spec, 10, 10000);
    const double late = truth_lambda(two, spec, 30, 10000);
    INFO("lambda(10) = " << early << ", lambda(30) = " << late);
    CHECK(late < early);
  }

  TEST_CASE("csv replay environment") {
    const auto data = testing::simulate(1, 5, 4);
    CsvReplayEnvironment env(data);
    env.reset(0);
    const auto row = env.observe();
    CHECK(row.values.at("Y") == data.column("Y")(0));
    for (int i = 0; i < 4; ++i) env.observe();
    CHECK_THROWS_AS(env.observe(), Error);
    CHECK_THROWS_AS(env.intervene(at(0.5, 0.5), 1), Error);
  }
}
