#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "safereg/causal_graph.hpp"
#include "safereg/dataset.hpp"
#include "safereg/grid.hpp"
#include "safereg/spec_logic.hpp"

namespace safereg {

/// Per-grid-point mean and std of the probability that the spec holds under do(controls = u).
struct EffectModel {
  ControlGrid grid;
  Eigen::VectorXd mu;
  Eigen::VectorXd sigma;
  std::vector<bool> support;
  NodeSet adjustment;
  double sigma_max = 0.5;

  const std::vector<std::string>& controls() const noexcept { return grid.names(); }
  std::size_t size() const noexcept { return grid.size(); }
};

/// mu = 0.5, sigma = sigma_max, no support anywhere.
EffectModel uninformative_prior(const ControlGrid& grid, double sigma_max);

/// Grid membership of the observational region: mu >= delta at supported points.
std::vector<bool> initial_region(const EffectModel& model, double delta);

nlohmann::json effect_model_to_json(const EffectModel& model);
EffectModel effect_model_from_json(const nlohmann::json& doc);

struct PriorOptions {
  /// Std of the product Gaussian kernel, in normalized control units.
  double bandwidth = 0.05;
  /// When nonzero, `bandwidth` applies at this many windows and shrinks as
  /// (windows / reference)^(-1 / (d + 4)) for larger logs, so the estimate is consistent.
  std::size_t bandwidth_reference = 1000;
  std::size_t bootstrap_reps = 50;
  double sigma_max = 0.5;
  /// Minimum total kernel weight (effective samples) for a point to count as supported.
  double support_threshold = 5.0;
  std::size_t adjustment_bins = 10;
  /// Treat rows as independent under a fixed intervention (true when the graph has no
  /// lagged edges): estimate the per-row probability and raise it to the power H + 1.
  bool factorize_horizon = true;
  std::uint64_t seed = 0;
};

/// Backdoor-adjusted, kernel-smoothed estimate of P(spec = 1 | do(controls = u)) on `grid`.
///
/// With factorize_horizon, every row is one sample of the per-row predicate and the
/// horizon enters as a power. Otherwise the dataset is read as consecutive time steps and
/// cut into overlapping windows of H + 1 rows; a window's outcome is the spec evaluated on
/// it and its weight at a grid point is the product of the control kernel over every row,
/// so windows whose controls stayed near u for the whole horizon dominate. Strata of the
/// adjustment set are formed at the window start.
///
/// Throws NotIdentifiable, InsufficientData, MissingColumn.
/// Kernel std actually used for `windows` windows over `dims` controls.
double effective_bandwidth(const PriorOptions& options, std::size_t windows, std::size_t dims);

EffectModel estimate_prior(const ObservationDataset& data, const CausalGraph& graph,
                           const SpecFormula& spec, const ControlGrid& grid,
                           const PriorOptions& options = {});

enum class EmptyStratumPolicy { use_prior, fail };

struct AdjustOptions {
  std::size_t bins = 10;
  /// Rows match the treatment value when every coordinate is within this distance.
  double match_tolerance = 1e-9;
  EmptyStratumPolicy empty_stratum = EmptyStratumPolicy::use_prior;
};

struct AdjustedEffect {
  double probability = 0.5;
  std::size_t empty_strata = 0;
  bool low_support() const noexcept { return empty_strata > 0; }
};

/// sum_z P(outcome = 1 | treatment = value, Z = z) P(Z = z) with Z discretized into
/// equal-frequency bins (columns with at most `bins` distinct values keep their values).
/// Throws MissingColumn, LengthMismatch, EmptyStratum (policy fail), InsufficientData.
AdjustedEffect adjust_effect(const ObservationDataset& data, const std::string& outcome,
                             const std::vector<std::string>& treatment, const NodeSet& adjustment,
                             const std::vector<double>& value, const AdjustOptions& options = {});

/// Equal-frequency stratum ids (0-based, dense) for the given columns.
std::vector<std::size_t> stratify(const std::vector<Eigen::VectorXd>& columns, std::size_t bins);

struct IndependenceCheck {
  Independence independence;
  double statistic = 0.0;
  double p_value = 1.0;
  bool consistent = true;
};

struct ValidationOptions {
  double significance = 0.05;
  /// HSIC is quadratic in n; larger datasets are thinned to evenly spaced rows.
  std::size_t max_samples = 500;
  std::uint64_t seed = 0;
};

/// Kernel-regression residual of `target` on `given` (leave-one-out Nadaraya-Watson).
Eigen::VectorXd residualize(const Eigen::VectorXd& target, const Eigen::MatrixXd& given);

/// HSIC check of every implied independence whose variables are all dataset columns.
std::vector<IndependenceCheck> validate_graph(const ObservationDataset& data, const CausalGraph& graph,
                                              std::size_t max_conditioning_size,
                                              std::size_t permutations,
                                              const ValidationOptions& options = {});

}  // namespace safereg
