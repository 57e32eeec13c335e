#include "safereg/grid.hpp"

#include <algorithm>
#include <cmath>

#include "safereg/error.hpp"

namespace safereg {

ControlGrid::ControlGrid(std::vector<std::string> names, std::vector<Domain> domains,
                         std::vector<std::size_t> resolution)
    : names_(std::move(names)), domains_(std::move(domains)), resolution_(std::move(resolution)) {
  if (names_.empty()) throw Error(ErrorCode::ConfigError, "grid needs at least one control");
  if (names_.size() != domains_.size() || names_.size() != resolution_.size())
    throw Error(ErrorCode::ConfigError, "grid names, domains and resolution disagree in length");
  std::size_t total = 1;
  for (std::size_t d = 0; d < dims(); ++d) {
    if (resolution_[d] < 2)
      throw Error(ErrorCode::ConfigError, "grid_resolution for '" + names_[d] + "' must be >= 2");
    total *= resolution_[d];
  }

  const auto n = static_cast<Eigen::Index>(total);
  const auto d = static_cast<Eigen::Index>(dims());
  points_.resize(n, d);
  normalized_.resize(n, d);
  std::vector<std::size_t> idx(dims(), 0);
  for (Eigen::Index row = 0; row < n; ++row) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const auto res = resolution_[static_cast<std::size_t>(k)];
      const double frac = static_cast<double>(idx[static_cast<std::size_t>(k)]) / static_cast<double>(res - 1);
      const auto& dom = domains_[static_cast<std::size_t>(k)];
      normalized_(row, k) = frac;
      points_(row, k) = dom.lo + frac * dom.width();
    }
    // Odometer increment, last variable fastest.
    for (std::size_t k = dims(); k-- > 0;) {
      if (++idx[k] < resolution_[k]) break;
      idx[k] = 0;
    }
  }
}

ControlGrid ControlGrid::for_controls(const CausalGraph& graph, std::vector<std::string> controls,
                                      std::size_t resolution) {
  std::vector<Domain> domains;
  for (const auto& c : controls) {
    if (graph.kind(c) != VariableKind::control)
      throw Error(ErrorCode::NotAControl, "'" + c + "' is not a control variable");
    domains.push_back(graph.domain(c));
  }
  return ControlGrid(std::move(controls), std::move(domains), resolution);
}

Eigen::VectorXd ControlGrid::normalize(const Eigen::Ref<const Eigen::VectorXd>& raw) const {
  Eigen::VectorXd out(raw.size());
  for (Eigen::Index k = 0; k < raw.size(); ++k) {
    const auto& dom = domains_[static_cast<std::size_t>(k)];
    out(k) = dom.width() > 0 ? (raw(k) - dom.lo) / dom.width() : 0.0;
  }
  return out;
}

double ControlGrid::interpolate(const Eigen::Ref<const Eigen::VectorXd>& values,
                                const Eigen::Ref<const Eigen::VectorXd>& raw) const {
  const auto u = normalize(raw);
  const std::size_t d = dims();
  std::vector<std::size_t> base(d);
  std::vector<double> frac(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double cells = static_cast<double>(resolution_[k] - 1);
    const double pos = std::clamp(u(static_cast<Eigen::Index>(k)), 0.0, 1.0) * cells;
    auto cell = static_cast<std::size_t>(std::floor(pos));
    if (cell >= resolution_[k] - 1) cell = resolution_[k] - 2;
    base[k] = cell;
    frac[k] = pos - static_cast<double>(cell);
  }

  double acc = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << d); ++corner) {
    double weight = 1.0;
    std::size_t flat = 0;
    for (std::size_t k = 0; k < d; ++k) {
      const bool upper = (corner >> k) & 1U;
      weight *= upper ? frac[k] : 1.0 - frac[k];
      flat = flat * resolution_[k] + base[k] + (upper ? 1 : 0);
    }
    if (weight != 0.0) acc += weight * values(static_cast<Eigen::Index>(flat));
  }
  return acc;
}

}  // namespace safereg
