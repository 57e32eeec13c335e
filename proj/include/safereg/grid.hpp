#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "safereg/causal_graph.hpp"

namespace safereg {

/// Regular tensor grid over a box of control variables. Points are enumerated in
/// lexicographic order of their coordinates (first variable slowest).
class ControlGrid {
 public:
  ControlGrid() = default;
  /// Throws ConfigError if resolution < 2 or the lists disagree in length.
  ControlGrid(std::vector<std::string> names, std::vector<Domain> domains,
              std::vector<std::size_t> resolution);
  ControlGrid(std::vector<std::string> names, const std::vector<Domain>& domains,
              std::size_t resolution)
      : ControlGrid(std::move(names), domains, std::vector<std::size_t>(domains.size(), resolution)) {}

  static ControlGrid for_controls(const CausalGraph& graph, std::vector<std::string> controls,
                                  std::size_t resolution);

  std::size_t dims() const noexcept { return names_.size(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<Domain>& domains() const noexcept { return domains_; }
  const std::vector<std::size_t>& resolution() const noexcept { return resolution_; }

  /// Rows are points in the variables' own units.
  const Eigen::MatrixXd& points() const noexcept { return points_; }
  /// Same points affinely mapped into [0, 1]^d.
  const Eigen::MatrixXd& normalized() const noexcept { return normalized_; }

  Eigen::VectorXd point(std::size_t i) const { return points_.row(static_cast<Eigen::Index>(i)).transpose(); }

  /// Map raw coordinates into the unit box (no clamping).
  Eigen::VectorXd normalize(const Eigen::Ref<const Eigen::VectorXd>& raw) const;

  /// Multilinear interpolation of per-point values; constant extrapolation outside the box.
  /// `raw` is in the variables' own units.
  double interpolate(const Eigen::Ref<const Eigen::VectorXd>& values,
                     const Eigen::Ref<const Eigen::VectorXd>& raw) const;

 private:
  std::vector<std::string> names_;
  std::vector<Domain> domains_;
  std::vector<std::size_t> resolution_;
  Eigen::MatrixXd points_;
  Eigen::MatrixXd normalized_;
};

}  // namespace safereg
