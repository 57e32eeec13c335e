#include "safereg/observational.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "safereg/error.hpp"
#include "safereg/hsic.hpp"

namespace safereg {

EffectModel uninformative_prior(const ControlGrid& grid, double sigma_max) {
  EffectModel model;
  model.grid = grid;
  const auto n = static_cast<Eigen::Index>(grid.size());
  model.mu = Eigen::VectorXd::Constant(n, 0.5);
  model.sigma = Eigen::VectorXd::Constant(n, sigma_max);
  model.support.assign(grid.size(), false);
  model.sigma_max = sigma_max;
  return model;
}

std::vector<bool> initial_region(const EffectModel& model, double delta) {
  std::vector<bool> member(model.size());
  for (std::size_t i = 0; i < model.size(); ++i)
    member[i] = model.support[i] && model.mu(static_cast<Eigen::Index>(i)) >= delta;
  return member;
}

nlohmann::json effect_model_to_json(const EffectModel& model) {
  nlohmann::json grid = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.grid.points().rows(); ++i) {
    nlohmann::json p = nlohmann::json::array();
    for (Eigen::Index k = 0; k < model.grid.points().cols(); ++k) p.push_back(model.grid.points()(i, k));
    grid.push_back(std::move(p));
  }
  nlohmann::json domains = nlohmann::json::array();
  for (const auto& d : model.grid.domains()) domains.push_back({d.lo, d.hi});
  std::vector<double> mu(model.mu.data(), model.mu.data() + model.mu.size());
  std::vector<double> sigma(model.sigma.data(), model.sigma.data() + model.sigma.size());
  std::vector<bool> support = model.support;
  return {{"controls", model.grid.names()},
          {"domains", domains},
          {"resolution", model.grid.resolution()},
          {"adjustment", std::vector<std::string>(model.adjustment.begin(), model.adjustment.end())},
          {"sigma_max", model.sigma_max},
          {"grid", grid},
          {"mu", mu},
          {"sigma", sigma},
          {"support", support}};
}

EffectModel effect_model_from_json(const nlohmann::json& doc) {
  try {
    std::vector<Domain> domains;
    for (const auto& d : doc.at("domains")) domains.push_back({d.at(0).get<double>(), d.at(1).get<double>()});
    EffectModel model;
    model.grid = ControlGrid(doc.at("controls").get<std::vector<std::string>>(), std::move(domains),
                             doc.at("resolution").get<std::vector<std::size_t>>());
    const auto mu = doc.at("mu").get<std::vector<double>>();
    const auto sigma = doc.at("sigma").get<std::vector<double>>();
    model.support = doc.at("support").get<std::vector<bool>>();
    if (mu.size() != model.grid.size() || sigma.size() != mu.size() || model.support.size() != mu.size())
      throw Error(ErrorCode::SchemaMismatch, "effect model arrays do not match the grid size");
    model.mu = Eigen::Map<const Eigen::VectorXd>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    model.sigma = Eigen::Map<const Eigen::VectorXd>(sigma.data(), static_cast<Eigen::Index>(sigma.size()));
    for (const auto& a : doc.value("adjustment", std::vector<std::string>{})) model.adjustment.insert(a);
    model.sigma_max = doc.value("sigma_max", 0.5);
    return model;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::SchemaMismatch, std::string("effect model JSON: ") + ex.what());
  }
}

std::vector<std::size_t> stratify(const std::vector<Eigen::VectorXd>& columns, std::size_t bins) {
  if (columns.empty()) return {};
  const auto n = static_cast<std::size_t>(columns.front().size());
  std::vector<std::vector<std::size_t>> per_column;
  for (const auto& col : columns) {
    std::vector<double> sorted(col.data(), col.data() + col.size());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<double> cuts;  // bin = number of cuts <= value
    if (distinct.size() <= bins) {
      cuts.assign(distinct.begin() + 1, distinct.end());
    } else {
      for (std::size_t b = 1; b < bins; ++b) {
        const double q = sorted[b * n / bins];
        if (cuts.empty() || q > cuts.back()) cuts.push_back(q);
      }
    }
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = col(static_cast<Eigen::Index>(i));
      ids[i] = static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), v) - cuts.begin());
    }
    per_column.push_back(std::move(ids));
  }

  std::map<std::vector<std::size_t>, std::size_t> dense;
  std::vector<std::size_t> out(n);
  std::vector<std::size_t> key(columns.size());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < columns.size(); ++c) key[c] = per_column[c][i];
    out[i] = dense.emplace(key, dense.size()).first->second;
  }
  return out;
}

namespace {

bool row_holds(const SpecFormula& spec, const std::vector<const Eigen::VectorXd*>& metric_cols,
               Eigen::Index row) {
  bool ok = true;
  for (std::size_t p = 0; p < spec.predicates.size(); ++p) {
    const double v = (*metric_cols[p])(row);
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::NonFiniteMetric,
                  "'" + spec.predicates[p].metric + "' is not finite in row " + std::to_string(row + 1));
    }
    ok = ok && spec.predicates[p].holds(v);
  }
  return ok;
}

struct WindowSet {
  std::size_t count = 0;
  std::size_t length = 0;
  Eigen::MatrixXd controls;  // count x (length * dims), normalized, row-major per window
  Eigen::VectorXd outcome;   // 0/1
  std::vector<std::size_t> stratum;
  std::size_t strata = 1;
};

// Weighted Nadaraya-Watson mixture over strata. `mult` are per-window multiplicities.
double adjusted_mean(const WindowSet& ws, const Eigen::VectorXd& kernel, const Eigen::VectorXd& mult,
                     std::vector<double>& num, std::vector<double>& den, std::vector<double>& mass,
                     bool* empty_stratum) {
  std::fill(num.begin(), num.end(), 0.0);
  std::fill(den.begin(), den.end(), 0.0);
  std::fill(mass.begin(), mass.end(), 0.0);
  for (std::size_t w = 0; w < ws.count; ++w) {
    const auto i = static_cast<Eigen::Index>(w);
    const double m = mult(i);
    if (m == 0.0) continue;
    const auto s = ws.stratum[w];
    mass[s] += m;
    const double k = m * kernel(i);
    den[s] += k;
    num[s] += k * ws.outcome(i);
  }
  double total_mass = 0.0;
  for (double v : mass) total_mass += v;
  double mu = 0.0;
  for (std::size_t s = 0; s < ws.strata; ++s) {
    if (mass[s] == 0.0) continue;
    const double weight = mass[s] / total_mass;
    // A stratum whose kernel mass underflows has no treatment-matching windows.
    if (den[s] > 1e-300) {
      mu += weight * num[s] / den[s];
    } else {
      mu += weight * 0.5;
      if (empty_stratum) *empty_stratum = true;
    }
  }
  return mu;
}

}  // namespace

double effective_bandwidth(const PriorOptions& options, std::size_t windows, std::size_t dims) {
  if (options.bandwidth_reference == 0 || windows <= options.bandwidth_reference) return options.bandwidth;
  const double ratio = static_cast<double>(windows) / static_cast<double>(options.bandwidth_reference);
  return options.bandwidth * std::pow(ratio, -1.0 / (static_cast<double>(dims) + 4.0));
}

EffectModel estimate_prior(const ObservationDataset& data, const CausalGraph& graph,
                           const SpecFormula& spec, const ControlGrid& grid,
                           const PriorOptions& options) {
  const auto& controls = grid.names();
  InterventionTarget target{controls, {}};
  for (const auto& d : grid.domains()) target.values.push_back(d.lo);
  const auto metrics = spec.metrics();
  const NodeSet outcome(metrics.begin(), metrics.end());
  if (!is_identifiable(graph, target, outcome))
    throw Error(ErrorCode::NotIdentifiable, "effect of do(" + [&] {
      std::string s;
      for (const auto& c : controls) s += (s.empty() ? "" : ",") + c;
      return s;
    }() + ") on the spec is not identifiable by backdoor adjustment");
  const auto adjustment = *backdoor_set(graph, NodeSet(controls.begin(), controls.end()), outcome);

  const auto horizon = spec.horizon;
  const auto n = data.rows();
  // Factorized: single-row windows, raised to the power H + 1 at the end.
  const std::size_t span = options.factorize_horizon ? 1 : horizon + 1;
  if (n < span) {
    throw Error(ErrorCode::InsufficientData, "need at least " + std::to_string(span) +
                                                 " rows for one window, have " + std::to_string(n));
  }

  std::vector<const Eigen::VectorXd*> metric_cols;
  for (const auto& p : spec.predicates) metric_cols.push_back(&data.column(p.metric));
  std::vector<const Eigen::VectorXd*> control_cols;
  for (const auto& c : controls) control_cols.push_back(&data.column(c));
  std::vector<Eigen::VectorXd> adjustment_cols;
  for (const auto& z : adjustment) adjustment_cols.push_back(data.column(z));

  const std::size_t dims = grid.dims();
  WindowSet ws;
  ws.count = n - (span - 1);
  ws.length = span;
  ws.controls.resize(static_cast<Eigen::Index>(ws.count), static_cast<Eigen::Index>(ws.length * dims));
  ws.outcome.resize(static_cast<Eigen::Index>(ws.count));

  std::vector<bool> row_ok(n);
  for (std::size_t r = 0; r < n; ++r) row_ok[r] = row_holds(spec, metric_cols, static_cast<Eigen::Index>(r));

  for (std::size_t w = 0; w < ws.count; ++w) {
    bool ok = true;
    for (std::size_t tau = 0; tau < ws.length; ++tau) {
      const auto r = static_cast<Eigen::Index>(w + tau);
      ok = ok && row_ok[w + tau];
      for (std::size_t k = 0; k < dims; ++k) {
        const auto& dom = grid.domains()[k];
        const double raw = (*control_cols[k])(r);
        ws.controls(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(tau * dims + k)) =
            dom.width() > 0 ? (raw - dom.lo) / dom.width() : 0.0;
      }
    }
    ws.outcome(static_cast<Eigen::Index>(w)) = ok ? 1.0 : 0.0;
  }

  if (adjustment_cols.empty()) {
    ws.stratum.assign(ws.count, 0);
  } else {
    std::vector<Eigen::VectorXd> starts;
    for (const auto& col : adjustment_cols) starts.emplace_back(col.head(static_cast<Eigen::Index>(ws.count)));
    ws.stratum = stratify(starts, options.adjustment_bins);
  }
  ws.strata = ws.stratum.empty() ? 1 : *std::max_element(ws.stratum.begin(), ws.stratum.end()) + 1;

  // Bootstrap multiplicities, one independently seeded stream per replicate.
  const auto reps = options.bootstrap_reps;
  Eigen::MatrixXd multiplicity = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(reps),
                                                       static_cast<Eigen::Index>(ws.count));
  for (std::size_t r = 0; r < reps; ++r) {
    std::seed_seq seq{static_cast<std::uint32_t>(options.seed), static_cast<std::uint32_t>(options.seed >> 32),
                      static_cast<std::uint32_t>(r)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, ws.count - 1);
    for (std::size_t i = 0; i < ws.count; ++i)
      multiplicity(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(pick(rng))) += 1.0;
  }

  EffectModel model = uninformative_prior(grid, options.sigma_max);
  model.adjustment = adjustment;

  const double power = options.factorize_horizon ? static_cast<double>(horizon + 1) : 1.0;
  const double h = effective_bandwidth(options, ws.count, dims);
  const double inv_two_h2 = 1.0 / (2.0 * h * h);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(ws.count));
  std::vector<double> num(ws.strata), den(ws.strata), mass(ws.strata);
  Eigen::VectorXd kernel(static_cast<Eigen::Index>(ws.count));
  Eigen::VectorXd target_row(static_cast<Eigen::Index>(ws.length * dims));
  Eigen::VectorXd replicate(static_cast<Eigen::Index>(reps));

  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto gi = static_cast<Eigen::Index>(g);
    for (std::size_t tau = 0; tau < ws.length; ++tau)
      target_row.segment(static_cast<Eigen::Index>(tau * dims), static_cast<Eigen::Index>(dims)) =
          grid.normalized().row(gi).transpose();
    kernel = (-(ws.controls.rowwise() - target_row.transpose()).rowwise().squaredNorm() * inv_two_h2)
                 .array()
                 .exp()
                 .matrix();
    if (kernel.sum() < options.support_threshold) continue;

    bool empty = false;
    const double mu = std::pow(adjusted_mean(ws, kernel, ones, num, den, mass, &empty), power);
    double sd = options.sigma_max;
    if (reps >= 2) {
      for (std::size_t r = 0; r < reps; ++r)
        replicate(static_cast<Eigen::Index>(r)) = std::pow(
            adjusted_mean(ws, kernel, multiplicity.row(static_cast<Eigen::Index>(r)).transpose(), num, den, mass,
                          nullptr),
            power);
      const double mean = replicate.mean();
      sd = std::sqrt((replicate.array() - mean).square().sum() / static_cast<double>(reps - 1));
    }
    model.mu(gi) = std::clamp(mu, 0.0, 1.0);
    if (empty) {
      model.sigma(gi) = options.sigma_max;
    } else {
      model.sigma(gi) = std::min(sd, options.sigma_max);
      model.support[g] = true;
    }
  }
  return model;
}

AdjustedEffect adjust_effect(const ObservationDataset& data, const std::string& outcome,
                             const std::vector<std::string>& treatment, const NodeSet& adjustment,
                             const std::vector<double>& value, const AdjustOptions& options) {
  if (treatment.size() != value.size())
    throw Error(ErrorCode::LengthMismatch, "treatment and value differ in length");
  const auto& y = data.column(outcome);
  std::vector<const Eigen::VectorXd*> t_cols;
  for (const auto& t : treatment) t_cols.push_back(&data.column(t));
  std::vector<Eigen::VectorXd> z_cols;
  for (const auto& z : adjustment) z_cols.push_back(data.column(z));

  const auto n = data.rows();
  const auto strata = z_cols.empty() ? std::vector<std::size_t>(n, 0) : stratify(z_cols, options.bins);
  const std::size_t count = *std::max_element(strata.begin(), strata.end()) + 1;
  std::vector<double> mass(count, 0.0), hits(count, 0.0), successes(count, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    mass[strata[i]] += 1.0;
    bool match = true;
    for (std::size_t k = 0; k < t_cols.size() && match; ++k)
      match = std::abs((*t_cols[k])(r) - value[k]) <= options.match_tolerance;
    if (!match) continue;
    hits[strata[i]] += 1.0;
    successes[strata[i]] += y(r);
  }

  AdjustedEffect out;
  out.probability = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    const double weight = mass[s] / static_cast<double>(n);
    if (hits[s] > 0) {
      out.probability += weight * successes[s] / hits[s];
    } else {
      if (options.empty_stratum == EmptyStratumPolicy::fail)
        throw Error(ErrorCode::EmptyStratum, "stratum " + std::to_string(s) + " has no rows matching the treatment value");
      out.probability += weight * 0.5;
      ++out.empty_strata;
    }
  }
  if (out.empty_strata == count)
    throw Error(ErrorCode::InsufficientData, "no rows match the treatment value");
  return out;
}

Eigen::VectorXd residualize(const Eigen::VectorXd& target, const Eigen::MatrixXd& given) {
  if (given.cols() == 0) return target;
  const auto n = given.rows();
  Eigen::MatrixXd z = given;
  for (Eigen::Index k = 0; k < z.cols(); ++k) {
    const double mean = z.col(k).mean();
    const double sd = std::sqrt((z.col(k).array() - mean).square().sum() / static_cast<double>(n));
    z.col(k).array() -= mean;
    if (sd > 0) z.col(k) /= sd;
  }
  const double bw = median_heuristic(z);
  const double inv = 1.0 / (2.0 * bw * bw);
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double num = 0.0, den = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double k = std::exp(-(z.row(i) - z.row(j)).squaredNorm() * inv);
      num += k * target(j);
      den += k;
    }
    out(i) = target(i) - (den > 0 ? num / den : target.mean());
  }
  return out;
}

std::vector<IndependenceCheck> validate_graph(const ObservationDataset& data, const CausalGraph& graph,
                                              std::size_t max_conditioning_size,
                                              std::size_t permutations,
                                              const ValidationOptions& options) {
  std::vector<std::size_t> rows;
  const auto n = data.rows();
  if (n > options.max_samples) {
    for (std::size_t i = 0; i < options.max_samples; ++i) rows.push_back(i * n / options.max_samples);
  } else {
    for (std::size_t i = 0; i < n; ++i) rows.push_back(i);
  }
  const auto sample = data.select_rows(rows);

  std::vector<IndependenceCheck> report;
  std::uint64_t test_index = 0;
  for (auto& ind : implied_independencies(graph, max_conditioning_size)) {
    bool observed = sample.has(ind.a) && sample.has(ind.b);
    for (const auto& z : ind.given) observed = observed && sample.has(z);
    if (!observed) continue;

    Eigen::MatrixXd given(static_cast<Eigen::Index>(sample.rows()), static_cast<Eigen::Index>(ind.given.size()));
    Eigen::Index k = 0;
    for (const auto& z : ind.given) given.col(k++) = sample.column(z);
    const auto ra = residualize(sample.column(ind.a), given);
    const auto rb = residualize(sample.column(ind.b), given);
    const auto res = hsic_test(ra, rb, permutations, options.seed + 7919 * test_index++);
    report.push_back({std::move(ind), res.statistic, res.p_value, res.p_value >= options.significance});
  }
  return report;
}

}  // namespace safereg
