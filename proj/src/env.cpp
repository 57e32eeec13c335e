#include "safereg/env.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "safereg/error.hpp"

namespace safereg {

ObservationDataset record_passive(Environment& env, std::size_t steps) {
  auto names = env.variables();
  std::vector<Eigen::VectorXd> cols(names.size() + 1, Eigen::VectorXd(static_cast<Eigen::Index>(steps)));
  for (std::size_t s = 0; s < steps; ++s) {
    const auto row = env.observe();
    const auto r = static_cast<Eigen::Index>(s);
    cols[0](r) = static_cast<double>(row.time);
    for (std::size_t k = 0; k < names.size(); ++k) cols[k + 1](r) = row.values.at(names[k]);
  }
  names.insert(names.begin(), "t");
  return ObservationDataset(std::move(names), std::move(cols));
}

ExampleSystem::ExampleSystem(int scenario, std::uint64_t seed, std::uint64_t truth_seed)
    : scenario_(scenario), truth_seed_(truth_seed) {
  if (scenario != 1 && scenario != 2)
    throw Error(ErrorCode::ConfigError, "scenario must be 1 or 2, got " + std::to_string(scenario));
  reset(seed);
}

void ExampleSystem::reset(std::uint64_t seed) {
  rng_.seed(seed);
  clock_ = 1;
}

double ExampleSystem::sample_beta(double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng_);
  const double y = gb(rng_);
  return x + y > 0 ? x / (x + y) : 0.5;
}

bool ExampleSystem::load_is_random(std::int64_t t) const noexcept {
  return scenario_ == 1 || t <= kStressOnset;
}

double ExampleSystem::stressed_load(std::int64_t t) noexcept {
  return std::min(1.0, 0.1 + 0.1 * static_cast<double>(t - kStressOnset));
}

double ExampleSystem::next_load(std::int64_t t) {
  return load_is_random(t) ? sample_beta(2.0, 5.0) : stressed_load(t);
}

double ExampleSystem::response_time(int scenario, std::int64_t t, double load, double cpu, double mem) noexcept {
  const double dc = cpu - 0.5;
  const double dm = mem - 0.5;
  const double base = 34.3 * load + 250.0 * dc * dc + 250.0 * dm * dm;
  if (scenario == 2 && t > kStressOnset)
    return base + 350.0 * std::sin(static_cast<double>(t) / 2.0) * dc * dm;
  return base + 200.0 * dc * dm;
}

double ExampleSystem::intervention_cost(double cpu, double mem) noexcept {
  const double c = 1.0 + cpu - 0.5;
  const double m = 1.0 + mem - 0.5;
  return c * c + m * m;
}

TrajectoryRow ExampleSystem::make_row(double load, double cpu, double mem) {
  TrajectoryRow row;
  row.time = clock_;
  row.values = {{"W", load}, {"C", cpu}, {"M", mem}, {"Y", response_time(scenario_, clock_, load, cpu, mem)}};
  ++clock_;
  return row;
}

TrajectoryRow ExampleSystem::observe() {
  const double load = next_load(clock_);
  const double cpu = sample_beta(0.5, 0.5);
  const double mem = sample_beta(0.5, 0.5);
  return make_row(load, cpu, mem);
}

namespace {

struct FixedControls {
  std::optional<double> cpu;
  std::optional<double> mem;
};

FixedControls parse_target(const InterventionTarget& target) {
  if (target.variables.size() != target.values.size())
    throw Error(ErrorCode::LengthMismatch, "intervention variables and values differ in length");
  FixedControls fixed;
  for (std::size_t i = 0; i < target.variables.size(); ++i) {
    const auto& name = target.variables[i];
    const double v = target.values[i];
    if (name != "C" && name != "M") throw Error(ErrorCode::NotAControl, "'" + name + "' is not a control of the example system");
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::OutOfDomain, "'" + name + "' = " + std::to_string(v) + " outside [0, 1]");
    (name == "C" ? fixed.cpu : fixed.mem) = v;
  }
  return fixed;
}

}  // namespace

Trajectory ExampleSystem::intervene(const InterventionTarget& target, std::size_t horizon) {
  const auto fixed = parse_target(target);
  Trajectory traj;
  traj.reserve(horizon + 1);
  for (std::size_t tau = 0; tau <= horizon; ++tau) {
    const double load = next_load(clock_);
    const double cpu = fixed.cpu ? *fixed.cpu : sample_beta(0.5, 0.5);
    const double mem = fixed.mem ? *fixed.mem : sample_beta(0.5, 0.5);
    traj.push_back(make_row(load, cpu, mem));
  }
  return traj;
}

double ExampleSystem::cost(const InterventionTarget& target) const {
  const auto fixed = parse_target(target);
  return intervention_cost(fixed.cpu.value_or(0.5), fixed.mem.value_or(0.5));
}

Eigen::VectorXd ExampleSystem::satisfaction_probability(const Eigen::MatrixXd& points, const SpecFormula& spec,
                                                        std::int64_t start_time, std::size_t mc_samples) const {
  for (const auto& p : spec.predicates)
    if (p.metric != "Y" && p.metric != "W" && p.metric != "C" && p.metric != "M")
      throw Error(ErrorCode::MissingMetric, "example system has no metric '" + p.metric + "'");

  const std::size_t rows = spec.horizon + 1;
  // Common load draws for every point; a separate stream keeps the system's own RNG untouched.
  std::seed_seq seq{static_cast<std::uint32_t>(truth_seed_), static_cast<std::uint32_t>(truth_seed_ >> 32),
                    static_cast<std::uint32_t>(start_time), static_cast<std::uint32_t>(scenario_)};
  std::mt19937_64 rng(seq);
  std::gamma_distribution<double> ga(2.0, 1.0), gb(5.0, 1.0);
  bool any_random = false;
  for (std::size_t tau = 0; tau < rows; ++tau) any_random = any_random || load_is_random(start_time + static_cast<std::int64_t>(tau));
  const std::size_t samples = any_random ? mc_samples : 1;

  Eigen::MatrixXd loads(static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(rows));
  for (std::size_t s = 0; s < samples; ++s)
    for (std::size_t tau = 0; tau < rows; ++tau) {
      const auto t = start_time + static_cast<std::int64_t>(tau);
      double w = stressed_load(t);
      if (load_is_random(t)) {
        const double x = ga(rng);
        const double y = gb(rng);
        w = x / (x + y);
      }
      loads(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(tau)) = w;
    }

  // Predicates resolved once to indices into (W, C, M, Y).
  std::vector<std::pair<std::size_t, const Predicate*>> checks;
  for (const auto& p : spec.predicates) {
    const std::size_t idx = p.metric == "W" ? 0 : p.metric == "C" ? 1 : p.metric == "M" ? 2 : 3;
    checks.emplace_back(idx, &p);
  }

  Eigen::VectorXd prob(points.rows());
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const double cpu = points(i, 0);
    const double mem = points(i, 1);
    std::size_t ok = 0;
    for (Eigen::Index s = 0; s < loads.rows(); ++s) {
      bool all = true;
      for (Eigen::Index tau = 0; tau < loads.cols() && all; ++tau) {
        const auto t = start_time + tau;
        const double w = loads(s, tau);
        const std::array<double, 4> values{w, cpu, mem, response_time(scenario_, t, w, cpu, mem)};
        for (const auto& [idx, pred] : checks) all = all && pred->holds(values[idx]);
      }
      if (all) ++ok;
    }
    prob(i) = static_cast<double>(ok) / static_cast<double>(loads.rows());
  }
  return prob;
}

std::optional<bool> ExampleSystem::ground_truth_safe(const InterventionTarget& target, const SpecFormula& spec,
                                                     double delta, std::size_t mc_samples) const {
  const auto fixed = parse_target(target);
  if (!fixed.cpu || !fixed.mem) return std::nullopt;
  Eigen::MatrixXd point(1, 2);
  point << *fixed.cpu, *fixed.mem;
  const double p = satisfaction_probability(point, spec, clock_, mc_samples)(0);
  // With delta = 0 any point that can satisfy the spec at all counts as safe.
  if (delta <= 0.0) return p > 0.0;
  return p >= delta;
}

CsvReplayEnvironment::CsvReplayEnvironment(ObservationDataset data) : data_(std::move(data)) {}

void CsvReplayEnvironment::reset(std::uint64_t) {
  cursor_ = 0;
  clock_ = 1;
}

std::vector<std::string> CsvReplayEnvironment::variables() const {
  std::vector<std::string> out;
  for (const auto& n : data_.names())
    if (n != "t") out.push_back(n);
  return out;
}

TrajectoryRow CsvReplayEnvironment::observe() {
  if (cursor_ >= data_.rows())
    throw Error(ErrorCode::EnvironmentFailure, "replay log exhausted after " + std::to_string(data_.rows()) + " rows");
  TrajectoryRow row;
  row.time = clock_++;
  for (const auto& n : variables()) row.values[n] = data_.column(n)(static_cast<Eigen::Index>(cursor_));
  ++cursor_;
  return row;
}

Trajectory CsvReplayEnvironment::intervene(const InterventionTarget&, std::size_t) {
  throw Error(ErrorCode::EnvironmentFailure, "a replayed log cannot be intervened on");
}

double CsvReplayEnvironment::cost(const InterventionTarget&) const { return 1.0; }

}  // namespace safereg
