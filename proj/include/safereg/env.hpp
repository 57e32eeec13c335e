#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "safereg/causal_graph.hpp"
#include "safereg/dataset.hpp"
#include "safereg/spec_logic.hpp"

namespace safereg {

/// A controlled system that can be watched passively or intervened on. Every call that
/// produces rows advances an internal integer clock by one per row.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual void reset(std::uint64_t seed) = 0;
  virtual std::int64_t clock() const = 0;

  /// Column names of the rows produced by observe()/intervene(), excluding time.
  virtual std::vector<std::string> variables() const = 0;

  /// One passive row.
  virtual TrajectoryRow observe() = 0;

  /// Holds the targeted controls fixed for horizon + 1 steps and returns those rows.
  virtual Trajectory intervene(const InterventionTarget& target, std::size_t horizon) = 0;

  virtual double cost(const InterventionTarget& target) const = 0;

  /// Whether do(target) satisfies `spec` with probability >= delta starting at the current
  /// clock. Only simulators know this.
  virtual std::optional<bool> ground_truth_safe(const InterventionTarget&, const SpecFormula&, double,
                                                std::size_t) const {
    return std::nullopt;
  }
};

/// Passive log of n rows as an ObservationDataset with a leading "t" column.
ObservationDataset record_passive(Environment& env, std::size_t steps);

/// The edge-server example: load W, CPU C, memory M, response time Y (ms).
class ExampleSystem final : public Environment {
 public:
  static constexpr std::int64_t kStressOnset = 10;

  explicit ExampleSystem(int scenario, std::uint64_t seed = 0, std::uint64_t truth_seed = 0x5eedf00dULL);

  int scenario() const noexcept { return scenario_; }

  void reset(std::uint64_t seed) override;
  std::int64_t clock() const override { return clock_; }
  std::vector<std::string> variables() const override { return {"W", "C", "M", "Y"}; }
  TrajectoryRow observe() override;
  Trajectory intervene(const InterventionTarget& target, std::size_t horizon) override;
  double cost(const InterventionTarget& target) const override;

  std::optional<bool> ground_truth_safe(const InterventionTarget& target, const SpecFormula& spec, double delta,
                                        std::size_t mc_samples) const override;

  /// Monte-Carlo P(spec | do(C, M)) for a trajectory starting at `start_time`, at every
  /// row of `points` (columns C, M). All points share the same load draws.
  Eigen::VectorXd satisfaction_probability(const Eigen::MatrixXd& points, const SpecFormula& spec,
                                           std::int64_t start_time, std::size_t mc_samples) const;

  /// Whether the load at time t is drawn at random (false once the stress ramp starts).
  bool load_is_random(std::int64_t t) const noexcept;
  /// Deterministic load under stress; only meaningful when !load_is_random(t).
  static double stressed_load(std::int64_t t) noexcept;

  static double response_time(int scenario, std::int64_t t, double load, double cpu, double mem) noexcept;
  static double intervention_cost(double cpu, double mem) noexcept;

 private:
  double sample_beta(double a, double b);
  double next_load(std::int64_t t);
  TrajectoryRow make_row(double load, double cpu, double mem);

  int scenario_;
  std::uint64_t truth_seed_;
  std::mt19937_64 rng_;
  std::int64_t clock_ = 1;
};

/// Serves passive rows from a recorded log; interventions are impossible.
class CsvReplayEnvironment final : public Environment {
 public:
  explicit CsvReplayEnvironment(ObservationDataset data);

  void reset(std::uint64_t seed) override;
  std::int64_t clock() const override { return clock_; }
  std::vector<std::string> variables() const override;
  TrajectoryRow observe() override;
  Trajectory intervene(const InterventionTarget& target, std::size_t horizon) override;
  double cost(const InterventionTarget& target) const override;

 private:
  ObservationDataset data_;
  std::size_t cursor_ = 0;
  std::int64_t clock_ = 1;
};

}  // namespace safereg
