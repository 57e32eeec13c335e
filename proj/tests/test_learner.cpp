#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "safereg/error.hpp"
#include "safereg/learner.hpp"
#include "support.hpp"

using namespace safereg;

namespace {

using Gp = GaussianProcess<double>;

SafeRegionEstimate manual_region(std::vector<double> variance, std::vector<bool> member) {
  SafeRegionEstimate r;
  const auto n = static_cast<Eigen::Index>(variance.size());
  r.mean = Eigen::VectorXd::Constant(n, 0.9);
  r.variance = Eigen::Map<Eigen::VectorXd>(variance.data(), n);
  r.kappa = Eigen::VectorXd::Zero(n);
  r.member = std::move(member);
  return r;
}

Gp constant_gp(double mean, double std) {
  return Gp([mean](const auto&) { return mean; }, PriorScaledKernel<double>([std](const auto&) { return std; }, 0.5));
}

const SpecFormula& spec() {
  static const auto s = parse_spec("always[H=1](Y < 50)");
  return s;
}

ColConfig small_config(std::uint64_t seed) {
  ColConfig c;
  c.grid_resolution = 15;
  c.truth_mc_samples = 2000;
  c.seed = seed;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ColTrace synthetic_trace(const std::vector<double>& lambdas, const std::vector<bool>& safe) {
  ColTrace t;
  t.initial_lambda = 0.0;
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    IterationRecord r;
    r.iteration = i + 1;
    r.lambda = lambdas[i];
    r.truth_safe = safe[i];
    t.records.push_back(r);
  }
  return t;
}

}  // namespace

TEST_SUITE("learner") {
  TEST_CASE("estimate_region examples") {
    const ControlGrid grid({"C", "M"}, {Domain{}, Domain{}}, 5);
    const ConfidenceParams conf{};
    const auto sure = estimate_region(constant_gp(0.95, 0.0), conf, 0.8, grid, 1);
    CHECK(sure.lambda == 1.0);
    CHECK(sure.members() == grid.size());
    const auto unsure = estimate_region(constant_gp(0.5, 0.0), conf, 0.8, grid, 1);
    CHECK(unsure.lambda == 0.0);
    CHECK(unsure.members() == 0);
    // kappa = 2 sigma pulls 0.95 below 0.8 once sigma > 0.075.
    CHECK(estimate_region(constant_gp(0.95, 0.1), conf, 0.8, grid, 1).lambda == 0.0);
  }

  TEST_CASE("synthetic step effect: region stays inside the truth") {
    const ControlGrid grid({"U"}, {Domain{}}, 101);
    auto gp = Gp([](const auto&) { return 0.5; }, PriorScaledKernel<double>([](const auto&) { return 0.5; }, 1.0));
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const Eigen::VectorXd u = grid.normalized().row(static_cast<Eigen::Index>(i)).transpose();
      gp = update(gp, u, u(0) < 0.5 ? 1.0 : 0.0, 0.0);
    }
    const auto region = estimate_region(gp, ConfidenceParams{}, 0.8, grid, 1);
    std::size_t members = 0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const double u = grid.normalized()(static_cast<Eigen::Index>(i), 0);
      if (region.member[i]) {
        ++members;
        CHECK(u < 0.5);
      }
    }
    CHECK(members >= 40);
    CHECK(members < 50);
  }

  TEST_CASE("select_intervention examples") {
    AblationFlags flags;
    const auto two = manual_region({0.09, 0.04}, {true, true});
    CHECK(select_intervention(two, Eigen::Vector2d(1.0, 1.0), flags) == 0u);
    CHECK(select_intervention(two, Eigen::Vector2d(3.0, 1.0), flags) == 1u);
    CHECK_FALSE(select_intervention(manual_region({0.09, 0.04}, {false, false}), Eigen::Vector2d(1.0, 1.0), flags));

    // Without the safety constraint the whole grid competes.
    const auto partial = manual_region({0.09, 0.04}, {false, true});
    CHECK(select_intervention(partial, Eigen::Vector2d(1.0, 1.0), flags) == 1u);
    flags.use_safety_constraint = false;
    CHECK(select_intervention(partial, Eigen::Vector2d(1.0, 1.0), flags) == 0u);

    // Without cost scaling the cheap point loses.
    AblationFlags plain;
    plain.use_cost_scaling = false;
    CHECK(select_intervention(two, Eigen::Vector2d(3.0, 1.0), plain) == 0u);

    // Ties go to the earliest grid point.
    CHECK(select_intervention(manual_region({0.04, 0.04, 0.04}, {false, true, true}), Eigen::Vector3d(1, 1, 1),
                              AblationFlags{}) == 1u);
  }

  TEST_CASE("best_lower_bound") {
    auto r = manual_region({0.0, 0.0, 0.0}, {false, false, false});
    r.mean << 0.2, 1.4, 0.7;
    r.kappa << 0.0, 0.5, 0.1;
    CHECK(best_lower_bound(r) == 2u);
  }

  TEST_CASE("property: uniform cost rescaling leaves the choice unchanged") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 25;
      std::vector<double> var(n);
      std::vector<bool> member(n);
      Eigen::VectorXd cost(n);
      for (int i = 0; i < n; ++i) {
        var[static_cast<std::size_t>(i)] = unit(rng) * 0.2;
        member[static_cast<std::size_t>(i)] = unit(rng) < 0.6;
        cost(i) = 0.5 + 4.0 * unit(rng);
      }
      const auto region = manual_region(var, member);
      const auto base = select_intervention(region, cost, AblationFlags{});
      for (double scale : {0.01, 0.5, 3.0, 1000.0}) {
        const Eigen::VectorXd scaled = cost * scale;
        CHECK(select_intervention(region, scaled, AblationFlags{}) == base);
      }
    }
  }

  TEST_CASE("cost model refuses to overspend") {
    CostModel costs([](const Eigen::VectorXd& u) { return u.sum(); }, 3.0);
    CHECK(costs.cost(Eigen::Vector2d(1.0, 0.5)) == 1.5);
    CHECK(costs.affordable(3.0));
    costs.charge(2.0);
    CHECK_FALSE(costs.affordable(1.5));
    CHECK_THROWS_AS(costs.charge(1.5), Error);
    CHECK_THROWS_AS(costs.charge(-0.1), Error);
    CHECK(costs.spent() == 2.0);
    CHECK_THROWS_AS(CostModel([](const Eigen::VectorXd&) { return 1.0; }, -1.0), Error);
  }

  TEST_CASE("config validation") {
    ColConfig c;
    CHECK_NOTHROW(validate(c));
    c.delta = 1.5;
    CHECK_THROWS_AS(validate(c), Error);
    c = ColConfig{};
    c.grid_resolution = 1;
    CHECK_THROWS_AS(validate(c), Error);
    c = ColConfig{};
    c.horizon = 2;
    ExampleSystem env(1);
    CHECK_THROWS_AS(run_col(c, env, testing::fig8b(), spec()), Error);
  }

  TEST_CASE("zero budget keeps the prior region") {
    auto c = small_config(3);
    c.budget = 0.0;
    ExampleSystem env(1);
    const auto trace = run_col(c, env, testing::fig8b(), spec());
    CHECK(trace.records.empty());
    CHECK(trace.spent == 0.0);
    CHECK(trace.final_region.member == initial_region(trace.prior, c.delta));
    CHECK(trace.final_lambda() == trace.initial_lambda);
  }

  TEST_CASE("non-identifiable graphs abort before intervening") {
    const auto hidden = load_graph(testing::fixture("hidden_confounder_graph.json").string());
    ExampleSystem env(1);
    try {
      run_col(small_config(0), env, hidden, spec());
      FAIL("expected NotIdentifiable");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NotIdentifiable);
    }
  }

  TEST_CASE("property: cumulative cost never exceeds the budget") {
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
      for (bool prior : {true, false}) {
        auto c = small_config(seed);
        c.ablation.use_causal_prior = prior;
        c.budget = 5.0 + static_cast<double>(seed) * 4.0;
        ExampleSystem env(seed % 2 ? 2 : 1);
        const auto trace = run_col(c, env, testing::fig8b(), spec());
        double prev = 0.0;
        for (const auto& r : trace.records) {
          CHECK(r.spent <= c.budget + 1e-12);
          CHECK(r.spent >= prev);
          CHECK(r.cost > 0.0);
          prev = r.spent;
        }
        CHECK(trace.spent <= c.budget + 1e-12);
        for (std::size_t i = 1; i < trace.records.size(); ++i)
          CHECK(trace.records[i].iteration > trace.records[i - 1].iteration);
      }
    }
  }

  TEST_CASE("fallback is flagged when the region is empty") {
    auto c = small_config(1);
    c.ablation.use_causal_prior = false;
    c.budget = 3.0;
    ExampleSystem env(1);
    const auto trace = run_col(c, env, testing::fig8b(), spec());
    REQUIRE_FALSE(trace.records.empty());
    CHECK(trace.initial_lambda == 0.0);
    CHECK(trace.records.front().fallback);
  }

  TEST_CASE("property: identical config and seed give byte-identical traces") {
    const auto dir = testing::scratch_dir("learner_det");
    for (int rep = 0; rep < 2; ++rep) {
      ExampleSystem env(2);
      auto c = small_config(42);
      c.window = 15;
      const auto trace = run_col(c, env, testing::fig8b(), spec());
      write_trace_csv((dir / ("trace" + std::to_string(rep) + ".csv")).string(), trace, "seed=42");
      write_region_csv((dir / ("region" + std::to_string(rep) + ".csv")).string(), trace, "seed=42");
    }
    CHECK(slurp(dir / "trace0.csv") == slurp(dir / "trace1.csv"));
    CHECK(slurp(dir / "region0.csv") == slurp(dir / "region1.csv"));
    CHECK(slurp(dir / "trace0.csv").size() > 100);
  }

  TEST_CASE("unsafe interventions to converge") {
    const auto safe = synthetic_trace({0.1, 0.2, 0.2, 0.2, 0.2, 0.2}, std::vector<bool>(6, true));
    const auto r = unsafe_interventions_to_converge(safe);
    CHECK(r.unsafe == 0);
    CHECK(r.converged);
    CHECK(r.step == 2);

    const auto rising = synthetic_trace({0.1, 0.2, 0.3, 0.4, 0.5, 0.6}, {false, true, false, true, true, false});
    const auto rr = unsafe_interventions_to_converge(rising);
    CHECK_FALSE(rr.converged);
    CHECK(rr.unsafe == 3);

    const auto plateau = synthetic_trace({0.1, 0.3, 0.3, 0.3, 0.3, 0.3}, {false, false, true, false, true, true});
    const auto rp = unsafe_interventions_to_converge(plateau);
    CHECK(rp.converged);
    CHECK(rp.unsafe == 2);

    auto missing = safe;
    missing.records[3].truth_safe.reset();
    CHECK_THROWS_AS(unsafe_interventions_to_converge(missing), Error);
  }

  TEST_CASE("region hash") {
    CHECK(region_hash({true, false, true}) == region_hash({true, false, true}));
    CHECK(region_hash({true, false, true}) != region_hash({true, true, false}));
    CHECK(region_hash({}).size() == 16);
  }
}
