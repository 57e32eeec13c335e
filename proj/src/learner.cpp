#include "safereg/learner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "safereg/dataset.hpp"
#include "safereg/error.hpp"

namespace safereg {

std::size_t SafeRegionEstimate::members() const {
  return static_cast<std::size_t>(std::count(member.begin(), member.end(), true));
}

SafeRegionEstimate region_from_posterior(const Posterior<double>& post, double beta, double delta) {
  SafeRegionEstimate region;
  region.mean = post.mean;
  region.variance = post.variance;
  region.beta = beta;
  const auto n = post.mean.size();
  region.kappa.resize(n);
  region.member.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    region.kappa(i) = kappa(beta, post.variance(i));
    region.member[static_cast<std::size_t>(i)] = std::clamp(post.mean(i), 0.0, 1.0) - region.kappa(i) >= delta;
  }
  region.lambda = n == 0 ? 0.0 : static_cast<double>(region.members()) / static_cast<double>(n);
  return region;
}

namespace {

double confidence_beta(const GaussianProcess<double>& gp, const ConfidenceParams& confidence, std::size_t t) {
  if (confidence.mode == ConfidenceMode::practical) return beta<double>(t, confidence, 0.0);
  const auto& obs = gp.observations();
  double gamma = 0.0;
  if (!obs.empty()) {
    const auto n = static_cast<Eigen::Index>(obs.size());
    Mat<double> pts(n, obs.front().point.size());
    Vec<double> sd(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      pts.row(i) = obs[static_cast<std::size_t>(i)].point.transpose();
      sd(i) = gp.prior_std(obs[static_cast<std::size_t>(i)].point);
    }
    gamma = information_gain(gp.kernel().cross(pts, sd, pts, sd), confidence.noise_bound);
  }
  return beta<double>(t, confidence, gamma);
}

}  // namespace

SafeRegionEstimate estimate_region(const GaussianProcess<double>& gp, const ConfidenceParams& confidence,
                                   double delta, const ControlGrid& grid, std::size_t t) {
  return region_from_posterior(gp.posterior(grid.normalized()), confidence_beta(gp, confidence, t), delta);
}

SafeRegionEstimate prior_region(const EffectModel& model, double delta) {
  SafeRegionEstimate region;
  region.mean = model.mu;
  region.variance = model.sigma.array().square();
  region.kappa = Eigen::VectorXd::Zero(model.mu.size());
  region.member = initial_region(model, delta);
  region.lambda = model.size() == 0 ? 0.0 : static_cast<double>(region.members()) / static_cast<double>(model.size());
  return region;
}

CostModel::CostModel(CostFn cost, double budget) : cost_(std::move(cost)), budget_(budget) {
  if (!(budget >= 0.0) || !std::isfinite(budget)) throw Error(ErrorCode::ConfigError, "budget must be finite and >= 0");
}

void CostModel::charge(double amount) {
  if (!(amount >= 0.0)) throw Error(ErrorCode::ConfigError, "intervention cost must be nonnegative");
  if (!affordable(amount))
    throw Error(ErrorCode::ConfigError, "charging " + std::to_string(amount) + " would exceed the budget");
  spent_ += amount;
}

std::optional<std::size_t> select_intervention(const SafeRegionEstimate& region, const Eigen::VectorXd& costs,
                                               const AblationFlags& flags) {
  std::optional<std::size_t> best;
  double best_score = 0.0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (flags.use_safety_constraint && !region.member[i]) continue;
    const auto k = static_cast<Eigen::Index>(i);
    double score = std::sqrt(std::max(region.variance(k), 0.0));
    if (flags.use_cost_scaling) score /= costs(k);
    if (!best || score > best_score) {
      best = i;
      best_score = score;
    }
  }
  return best;
}

std::size_t best_lower_bound(const SafeRegionEstimate& region) {
  std::size_t best = 0;
  double best_value = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < region.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    const double lcb = std::clamp(region.mean(k), 0.0, 1.0) - region.kappa(k);
    if (lcb > best_value) {
      best = i;
      best_value = lcb;
    }
  }
  return best;
}

void validate(const ColConfig& c) {
  auto fail = [](const std::string& field, const std::string& what) {
    throw Error(ErrorCode::ConfigError, field + ": " + what);
  };
  if (!(c.delta > 0.0 && c.delta < 1.0)) fail("delta", "must lie in (0, 1), got " + std::to_string(c.delta));
  if (c.grid_resolution < 2) fail("grid_resolution", "must be at least 2");
  if (!(c.budget >= 0.0) || !std::isfinite(c.budget)) fail("budget", "must be finite and >= 0");
  if (!(c.confidence.alpha > 0.0 && c.confidence.alpha < 1.0)) fail("alpha", "must lie in (0, 1)");
  if (!(c.confidence.beta_sqrt >= 0.0)) fail("beta_sqrt", "must be >= 0");
  if (!(c.lengthscale > 0.0)) fail("lengthscale", "must be > 0");
  if (!(c.noise_std >= 0.0)) fail("noise_std", "must be >= 0");
  if (!(c.prior.bandwidth > 0.0)) fail("bandwidth", "must be > 0");
  if (!(c.prior.sigma_max > 0.0)) fail("sigma_max", "must be > 0");
  if (!(c.convergence_eps > 0.0)) fail("convergence_eps", "must be > 0");
  if (c.convergence_patience == 0) fail("convergence_patience", "must be >= 1");
}

std::string region_hash(const std::vector<bool>& member) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (bool b : member) {
    h ^= b ? 1U : 0U;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

Eigen::VectorXd to_raw(const ControlGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& unit) {
  Eigen::VectorXd raw(unit.size());
  for (Eigen::Index k = 0; k < unit.size(); ++k) {
    const auto& d = grid.domains()[static_cast<std::size_t>(k)];
    raw(k) = d.lo + unit(k) * d.width();
  }
  return raw;
}

}  // namespace

GaussianProcess<double> prior_process(const EffectModel& model, double lengthscale) {
  const auto grid = model.grid;
  const Eigen::VectorXd mu = model.mu;
  const Eigen::VectorXd sigma = model.sigma;
  auto mean = [grid, mu](const Eigen::Ref<const Vec<double>>& u) { return grid.interpolate(mu, to_raw(grid, u)); };
  auto sd = [grid, sigma](const Eigen::Ref<const Vec<double>>& u) {
    return grid.interpolate(sigma, to_raw(grid, u));
  };
  return GaussianProcess<double>(mean, PriorScaledKernel<double>(sd, lengthscale));
}

ColTrace run_col(const ColConfig& config, Environment& env, const CausalGraph& graph, const SpecFormula& spec) {
  validate(config);
  if (config.horizon != spec.horizon)
    throw Error(ErrorCode::ConfigError, "horizon: config says " + std::to_string(config.horizon) +
                                            " but the spec uses H=" + std::to_string(spec.horizon));

  std::vector<std::string> controls = config.controls;
  if (controls.empty())
    for (const auto& n : graph.nodes())
      if (n.kind == VariableKind::control) controls.push_back(n.name);
  if (controls.empty()) throw Error(ErrorCode::ConfigError, "controls: the graph has no control variables");

  env.reset(config.seed);
  const auto grid = ControlGrid::for_controls(graph, controls, config.grid_resolution);

  ColTrace trace;
  trace.controls = controls;
  trace.grid = grid;
  trace.budget = config.budget;

  const auto passive = record_passive(env, config.monitoring_steps);
  if (config.ablation.use_causal_prior) {
    PriorOptions opts = config.prior;
    opts.seed = config.seed;
    trace.prior = estimate_prior(passive, graph, spec, grid, opts);
  } else {
    trace.prior = uninformative_prior(grid, config.prior.sigma_max);
  }

  auto gp = prior_process(trace.prior, config.lengthscale);
  const Eigen::VectorXd& prior_m = trace.prior.mu;
  const Eigen::VectorXd prior_s = trace.prior.sigma;

  CostModel budget(
      [&](const Eigen::VectorXd& raw) {
        return env.cost(InterventionTarget{controls, std::vector<double>(raw.data(), raw.data() + raw.size())});
      },
      config.budget);
  Eigen::VectorXd costs(static_cast<Eigen::Index>(grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) costs(static_cast<Eigen::Index>(i)) = budget.cost(grid.point(i));

  SafeRegionEstimate region = prior_region(trace.prior, config.delta);
  trace.initial_region = region.member;
  trace.initial_lambda = region.lambda;
  // Before any intervention the confidence bound comes from the prior itself.
  SafeRegionEstimate selection_view =
      region_from_posterior(gp.posterior(grid.normalized(), prior_m, prior_s),
                            confidence_beta(gp, config.confidence, 1), config.delta);
  selection_view.member = region.member;

  for (std::size_t k = 1;; ++k) {
    auto pick = select_intervention(selection_view, costs, config.ablation);
    const bool fallback = !pick.has_value();
    const std::size_t idx = pick ? *pick : best_lower_bound(selection_view);
    const double c = costs(static_cast<Eigen::Index>(idx));
    if (!budget.affordable(c)) break;

    const Eigen::VectorXd raw = grid.point(idx);
    InterventionTarget target{controls, std::vector<double>(raw.data(), raw.data() + raw.size())};
    IterationRecord rec;
    rec.iteration = k;
    rec.time = env.clock();
    rec.point = raw;
    rec.cost = c;
    rec.fallback = fallback;
    rec.truth_safe = env.ground_truth_safe(target, spec, config.delta, config.truth_mc_samples);

    const auto traj = env.intervene(target, spec.horizon);
    rec.outcome = evaluate(spec, traj);
    budget.charge(c);
    rec.spent = budget.spent();

    gp = update(gp, Vec<double>(grid.normalized().row(static_cast<Eigen::Index>(idx)).transpose()),
                static_cast<double>(rec.outcome), config.noise_std);
    if (config.window > 0) gp = retain_recent(gp, config.window);

    region = region_from_posterior(gp.posterior(grid.normalized(), prior_m, prior_s),
                                   confidence_beta(gp, config.confidence, k), config.delta);
    selection_view = region;
    rec.lambda = region.lambda;
    rec.region = region.member;
    rec.region_hash = region_hash(region.member);
    trace.records.push_back(std::move(rec));
  }

  trace.spent = budget.spent();
  trace.final_region = trace.records.empty() ? region : selection_view;
  trace.gp = gp_to_json(gp);
  return trace;
}

ConvergenceResult unsafe_interventions_to_converge(const ColTrace& trace, double eps, std::size_t patience) {
  for (const auto& r : trace.records)
    if (!r.truth_safe)
      throw Error(ErrorCode::MissingTruthFlags, "iteration " + std::to_string(r.iteration) + " has no ground truth");

  std::vector<double> lambda{trace.initial_lambda};
  for (const auto& r : trace.records) lambda.push_back(r.lambda);
  const std::size_t iterations = trace.records.size();

  ConvergenceResult result;
  std::size_t stop = iterations;
  for (std::size_t k = 0; k + patience <= iterations; ++k) {
    if (!(lambda[k] > 0.0)) continue;
    bool flat = true;
    for (std::size_t j = k; j < k + patience && flat; ++j) flat = std::abs(lambda[j + 1] - lambda[j]) < eps;
    if (flat) {
      result.converged = true;
      result.step = k;
      stop = k;
      break;
    }
  }
  for (std::size_t i = 0; i < stop; ++i)
    if (!*trace.records[i].truth_safe) ++result.unsafe;
  return result;
}

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path + "'");
  out << std::setprecision(17);
  return out;
}

void write_comment(std::ofstream& out, const std::string& comment) {
  if (comment.empty()) return;
  std::istringstream lines(comment);
  for (std::string line; std::getline(lines, line);) out << "# " << line << '\n';
}

}  // namespace

void write_trace_csv(const std::string& path, const ColTrace& trace, const std::string& header_comment) {
  auto out = open_out(path);
  write_comment(out, header_comment);
  out << "iteration,t";
  for (const auto& c : trace.controls) out << ',' << csv_escape(c);
  out << ",cost,spent,spec_outcome,truth_safe,lambda,fallback,region_hash\n";
  out << "0,,";
  for (std::size_t k = 1; k < trace.controls.size(); ++k) out << ',';
  out << ",0,0,,," << trace.initial_lambda << ",0," << region_hash(trace.initial_region) << '\n';
  for (const auto& r : trace.records) {
    out << r.iteration << ',' << r.time;
    for (Eigen::Index k = 0; k < r.point.size(); ++k) out << ',' << r.point(k);
    out << ',' << r.cost << ',' << r.spent << ',' << r.outcome << ','
        << (r.truth_safe ? (*r.truth_safe ? "1" : "0") : "") << ',' << r.lambda << ',' << (r.fallback ? 1 : 0)
        << ',' << r.region_hash << '\n';
  }
}

void write_region_csv(const std::string& path, const ColTrace& trace, const std::string& header_comment) {
  auto out = open_out(path);
  write_comment(out, header_comment);
  for (const auto& c : trace.controls) out << csv_escape(c) << ',';
  out << "mean,variance,kappa,prior_mu,prior_sigma,member\n";
  const auto& reg = trace.final_region;
  for (std::size_t i = 0; i < trace.grid.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    for (Eigen::Index d = 0; d < trace.grid.points().cols(); ++d) out << trace.grid.points()(k, d) << ',';
    out << reg.mean(k) << ',' << reg.variance(k) << ',' << reg.kappa(k) << ',' << trace.prior.mu(k) << ','
        << trace.prior.sigma(k) << ',' << (reg.member[i] ? 1 : 0) << '\n';
  }
}

nlohmann::json trace_summary(const ColTrace& trace, const ConvergenceResult& convergence) {
  return {{"lambda_initial", trace.initial_lambda},
          {"lambda_final", trace.final_lambda()},
          {"interventions", trace.records.size()},
          {"unsafe_count", convergence.unsafe},
          {"converged", convergence.converged},
          {"convergence_step", convergence.converged ? nlohmann::json(convergence.step) : nlohmann::json(nullptr)},
          {"spent", trace.spent},
          {"budget", trace.budget}};
}

}  // namespace safereg
