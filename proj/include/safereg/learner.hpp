#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "safereg/causal_graph.hpp"
#include "safereg/env.hpp"
#include "safereg/gp.hpp"
#include "safereg/grid.hpp"
#include "safereg/observational.hpp"
#include "safereg/spec_logic.hpp"

namespace safereg {

/// Lower-confidence-bound region on a control grid.
struct SafeRegionEstimate {
  Eigen::VectorXd mean;      // posterior mean, unclamped
  Eigen::VectorXd variance;  // posterior variance
  Eigen::VectorXd kappa;
  std::vector<bool> member;
  double lambda = 0.0;
  double beta = 0.0;

  std::size_t size() const noexcept { return member.size(); }
  std::size_t members() const;
};

/// Member iff clamp(mean, 0, 1) - kappa >= delta.
SafeRegionEstimate region_from_posterior(const Posterior<double>& post, double beta, double delta);

/// Posterior of `gp` at every grid point, thresholded. `t` is the iteration index used by
/// the theoretical confidence schedule.
SafeRegionEstimate estimate_region(const GaussianProcess<double>& gp, const ConfidenceParams& confidence,
                                   double delta, const ControlGrid& grid, std::size_t t);

/// Region whose membership is the observational one (mu >= delta at supported points),
/// with the prior mean and variance attached.
SafeRegionEstimate prior_region(const EffectModel& model, double delta);

/// Budget ledger. charge() refuses to overspend.
class CostModel {
 public:
  using CostFn = std::function<double(const Eigen::VectorXd&)>;

  CostModel(CostFn cost, double budget);

  double cost(const Eigen::VectorXd& raw_point) const { return cost_(raw_point); }
  double budget() const noexcept { return budget_; }
  double spent() const noexcept { return spent_; }
  bool affordable(double amount) const noexcept { return spent_ + amount <= budget_; }
  /// Throws ConfigError if the amount is negative or would exceed the budget.
  void charge(double amount);

 private:
  CostFn cost_;
  double budget_;
  double spent_ = 0.0;
};

struct AblationFlags {
  bool use_causal_prior = true;
  bool use_safety_constraint = true;
  bool use_cost_scaling = true;
};

/// argmax of sqrt(variance) / cost over the member points (over the whole grid when the
/// safety constraint is off). Ties go to the earliest grid point. Empty when nothing qualifies.
std::optional<std::size_t> select_intervention(const SafeRegionEstimate& region, const Eigen::VectorXd& costs,
                                               const AblationFlags& flags);

/// Index of the largest clamp(mean) - kappa; the deadlock fallback when no point is a member.
std::size_t best_lower_bound(const SafeRegionEstimate& region);

struct ColConfig {
  std::size_t monitoring_steps = 10;
  std::size_t horizon = 1;
  double delta = 0.8;
  ConfidenceParams confidence{};
  double budget = 20.0;
  std::size_t grid_resolution = 50;
  /// Intervened controls; empty means every control node of the graph.
  std::vector<std::string> controls;
  AblationFlags ablation{};
  /// Keep only the most recent observations in the GP (0 keeps all).
  std::size_t window = 0;
  std::uint64_t seed = 0;

  double lengthscale = 0.5;
  double noise_std = 0.05;
  /// Wider fixed kernel and a lower support bar than the offline defaults: the monitoring
  /// phase is short.
  PriorOptions prior{.bandwidth = 0.15, .bandwidth_reference = 0, .support_threshold = 1.0};

  double convergence_eps = 0.01;
  std::size_t convergence_patience = 3;
  std::size_t truth_mc_samples = 10000;
};

/// Throws ConfigError naming the offending field.
void validate(const ColConfig& config);

struct IterationRecord {
  std::size_t iteration = 0;
  std::int64_t time = 0;
  Eigen::VectorXd point;
  double cost = 0.0;
  double spent = 0.0;
  int outcome = 0;
  std::optional<bool> truth_safe;
  double lambda = 0.0;
  std::string region_hash;
  bool fallback = false;
  std::vector<bool> region;  // membership after this iteration's update
};

struct ColTrace {
  std::vector<std::string> controls;
  ControlGrid grid;
  EffectModel prior;
  double initial_lambda = 0.0;
  std::vector<bool> initial_region;
  std::vector<IterationRecord> records;
  SafeRegionEstimate final_region;
  nlohmann::json gp;
  double budget = 0.0;
  double spent = 0.0;

  double final_lambda() const noexcept { return records.empty() ? initial_lambda : records.back().lambda; }
};

/// FNV-1a over the membership bits, as 16 hex digits.
std::string region_hash(const std::vector<bool>& member);

/// GP whose mean and std interpolate the effect model; inputs live in the unit box.
GaussianProcess<double> prior_process(const EffectModel& model, double lengthscale);

/// The active-learning loop: monitor, estimate the causal prior, then intervene while the
/// budget allows. Throws ConfigError, NotIdentifiable, EnvironmentFailure and numeric errors.
ColTrace run_col(const ColConfig& config, Environment& env, const CausalGraph& graph, const SpecFormula& spec);

struct ConvergenceResult {
  std::size_t unsafe = 0;
  bool converged = false;
  /// Iteration at which the region stopped moving (valid only if converged).
  std::size_t step = 0;
};

/// Counts interventions flagged unsafe up to the first plateau of lambda. The plateau starts
/// at iteration k when lambda_k > 0 and |lambda_{j+1} - lambda_j| < eps for j = k..k+patience-1
/// (lambda_0 is the initial region). Throws MissingTruthFlags.
ConvergenceResult unsafe_interventions_to_converge(const ColTrace& trace, double eps = 0.01,
                                                   std::size_t patience = 3);

void write_trace_csv(const std::string& path, const ColTrace& trace, const std::string& header_comment);
void write_region_csv(const std::string& path, const ColTrace& trace, const std::string& header_comment);
nlohmann::json trace_summary(const ColTrace& trace, const ConvergenceResult& convergence);

}  // namespace safereg
