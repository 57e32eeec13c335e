#include "safereg/cli.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "safereg/config.hpp"
#include "safereg/dataset.hpp"
#include "safereg/env.hpp"
#include "safereg/error.hpp"
#include "safereg/learner.hpp"
#include "safereg/observational.hpp"

namespace safereg {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(const std::exception& ex) {
  const auto* err = dynamic_cast<const Error*>(&ex);
  if (!err) return kExitRuntime;
  switch (err->code()) {
    case ErrorCode::NotIdentifiable:
      return kExitNotIdentifiable;
    case ErrorCode::ConfigError:
    case ErrorCode::IoError:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::EmptyDataset:
    case ErrorCode::MissingColumn:
    case ErrorCode::SyntaxError:
    case ErrorCode::UnknownComparator:
    case ErrorCode::CycleDetected:
    case ErrorCode::UnknownEndpoint:
    case ErrorCode::DuplicateNode:
    case ErrorCode::UnknownNode:
    case ErrorCode::NotAControl:
    case ErrorCode::OutOfDomain:
    case ErrorCode::MissingMetric:
      return kExitInput;
    default:
      return kExitRuntime;
  }
}

namespace {

std::shared_ptr<spdlog::logger> logger() {
  static std::once_flag once;
  static std::shared_ptr<spdlog::logger> log;
  std::call_once(once, [] {
    log = spdlog::stderr_color_mt("safereg");
    auto level = spdlog::level::warn;
    if (const char* env = std::getenv("SAFEREG_LOG")) level = spdlog::level::from_str(env);
    log->set_level(level);
  });
  return log;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::unique_ptr<Environment> make_environment(const RunConfig& cfg) {
  if (cfg.environment == "csv-replay") return std::make_unique<CsvReplayEnvironment>(load_csv(cfg.data.string()));
  return std::make_unique<ExampleSystem>(cfg.scenario(), 0, cfg.truth_seed);
}

struct SeedResult {
  std::uint64_t seed = 0;
  json summary;
  std::exception_ptr error;
};

SeedResult run_seed(const RunConfig& cfg, const CausalGraph& graph, const SpecFormula& spec, std::uint64_t seed) {
  SeedResult res;
  res.seed = seed;
  try {
    auto env = make_environment(cfg);
    ColConfig col = cfg.col;
    col.seed = seed;
    logger()->info("seed {}: starting", seed);
    const auto trace = run_col(col, *env, graph, spec);
    const auto conv = unsafe_interventions_to_converge(trace, col.convergence_eps, col.convergence_patience);
    const std::string tag = "seed" + std::to_string(seed);
    const std::string header = "config_hash=" + cfg.hash + " seed=" + std::to_string(seed);
    write_trace_csv((cfg.output_dir / ("trace_" + tag + ".csv")).string(), trace, header);
    write_region_csv((cfg.output_dir / ("region_" + tag + ".csv")).string(), trace, header);
    write_json(cfg.output_dir / ("model_" + tag + ".json"),
               {{"config_hash", cfg.hash},
                {"seed", seed},
                {"prior", effect_model_to_json(trace.prior)},
                {"gp", trace.gp}});
    res.summary = trace_summary(trace, conv);
    res.summary["seed"] = seed;
    logger()->info("seed {}: lambda {:.4f}, {} interventions, {} unsafe", seed, trace.final_lambda(),
                   trace.records.size(), conv.unsafe);
  } catch (...) {
    res.error = std::current_exception();
  }
  return res;
}

int cmd_run(const std::string& config_path, const std::string& out_dir, const std::string& seeds_flag,
            std::size_t jobs, std::ostream& out) {
  auto cfg = load_run_config(config_path);
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  if (!seeds_flag.empty()) {
    cfg.seeds.clear();
    for (const auto& s : split_list(seeds_flag)) {
      try {
        cfg.seeds.push_back(std::stoull(s));
      } catch (const std::exception&) {
        throw Error(ErrorCode::ConfigError, "--seeds: '" + s + "' is not a nonnegative integer");
      }
    }
  }
  const auto graph = load_graph(cfg.graph.string());
  const auto spec = parse_spec(cfg.spec);
  if (cfg.environment != "csv-replay") bind_spec(spec, graph);
  std::error_code ec;
  fs::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + cfg.output_dir.string() + "': " + ec.message());

  std::vector<SeedResult> results(cfg.seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cfg.seeds.size(); i = next++) results[i] = run_seed(cfg, graph, spec, cfg.seeds[i]);
  };
  const std::size_t width = std::max<std::size_t>(1, std::min(jobs, cfg.seeds.size()));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < width; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& r : results)
    if (r.error) std::rethrow_exception(r.error);

  std::vector<double> lambda, unsafe;
  json runs = json::array();
  std::size_t converged = 0;
  for (const auto& r : results) {
    lambda.push_back(r.summary.at("lambda_final").get<double>());
    unsafe.push_back(r.summary.at("unsafe_count").get<double>());
    converged += r.summary.at("converged").get<bool>() ? 1 : 0;
    runs.push_back(r.summary);
  }
  const auto [lm, ls] = mean_std(lambda);
  const auto [um, us] = mean_std(unsafe);
  json summary = {{"config_hash", cfg.hash},
                  {"seeds", cfg.seeds},
                  {"lambda_mean", lm},
                  {"lambda_std", ls},
                  {"unsafe_mean", um},
                  {"unsafe_std", us},
                  {"converged_runs", converged},
                  {"runs", runs}};
  write_json(cfg.output_dir / "summary.json", summary);
  out << "lambda " << lm << " +- " << ls << ", unsafe interventions to converge " << um << " +- " << us << " ("
      << cfg.seeds.size() << " seeds)\n";
  return kExitOk;
}

int cmd_validate_graph(const std::string& graph_path, const std::string& data_path, std::size_t max_cond,
                       std::size_t permutations, const ValidationOptions& opts, const std::string& json_out,
                       std::ostream& out) {
  const auto graph = load_graph(graph_path);
  const auto data = load_csv(data_path);
  const auto checks = validate_graph(data, graph, max_cond, permutations, opts);

  json doc = json::array();
  bool all = true;
  out << std::left << std::setw(36) << "independence" << std::right << std::setw(12) << "statistic"
      << std::setw(10) << "p-value" << "  verdict\n";
  for (const auto& c : checks) {
    all = all && c.consistent;
    out << std::left << std::setw(36) << to_string(c.independence) << std::right << std::setw(12)
        << std::setprecision(4) << c.statistic << std::setw(10) << c.p_value << "  "
        << (c.consistent ? "consistent" : "VIOLATED") << '\n';
    doc.push_back({{"independence", to_string(c.independence)},
                   {"a", c.independence.a},
                   {"b", c.independence.b},
                   {"given", std::vector<std::string>(c.independence.given.begin(), c.independence.given.end())},
                   {"statistic", c.statistic},
                   {"p_value", c.p_value},
                   {"consistent", c.consistent}});
  }
  json report = {{"significance", opts.significance}, {"seed", opts.seed}, {"consistent", all}, {"checks", doc}};
  if (json_out.empty()) {
    out << report.dump() << '\n';
  } else {
    write_json(json_out, report);
  }
  return all ? kExitOk : kExitInconsistent;
}

struct PriorFlags {
  std::string graph, data, spec, out, controls;
  std::size_t resolution = 50;
  double delta = 0.8;
  PriorOptions options{};
  bool windowed = false;
};

int cmd_estimate_prior(PriorFlags f, std::ostream& out) {
  if (f.resolution < 2) throw Error(ErrorCode::ConfigError, "--resolution: must be at least 2");
  if (!(f.delta > 0.0 && f.delta < 1.0)) throw Error(ErrorCode::ConfigError, "--delta: must lie in (0, 1)");
  const auto graph = load_graph(f.graph);
  const auto spec = parse_spec(f.spec);
  bind_spec(spec, graph);
  auto controls = split_list(f.controls);
  if (controls.empty())
    for (const auto& n : graph.nodes())
      if (n.kind == VariableKind::control) controls.push_back(n.name);
  const auto grid = ControlGrid::for_controls(graph, controls, f.resolution);
  const auto data = load_csv(f.data);
  f.options.factorize_horizon = !f.windowed;
  const auto model = estimate_prior(data, graph, spec, grid, f.options);
  const auto region = initial_region(model, f.delta);

  std::ostringstream key;
  key << f.graph << '|' << f.data << '|' << f.spec << '|' << f.resolution << '|' << f.delta << '|'
      << f.options.bandwidth << '|' << f.options.bandwidth_reference << '|' << f.options.bootstrap_reps << '|' << f.options.support_threshold << '|'
      << f.options.sigma_max << '|' << f.windowed;
  const auto hash = fnv1a_hex(key.str());

  const fs::path dir = f.out.empty() ? fs::path(".") : fs::path(f.out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  json doc = effect_model_to_json(model);
  doc["config_hash"] = hash;
  doc["seed"] = f.options.seed;
  write_json(dir / "effect_model.json", doc);

  std::ofstream csv(dir / "initial_region.csv");
  if (!csv) throw Error(ErrorCode::IoError, "cannot write '" + (dir / "initial_region.csv").string() + "'");
  csv << std::setprecision(17) << "# config_hash=" << hash << " seed=" << f.options.seed << '\n';
  for (const auto& c : controls) csv << csv_escape(c) << ',';
  csv << "mu,sigma,supported,member\n";
  std::size_t members = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    for (Eigen::Index d = 0; d < grid.points().cols(); ++d) csv << grid.points()(k, d) << ',';
    csv << model.mu(k) << ',' << model.sigma(k) << ',' << (model.support[i] ? 1 : 0) << ',' << (region[i] ? 1 : 0)
        << '\n';
    members += region[i] ? 1 : 0;
  }
  out << "adjustment set {";
  bool first = true;
  for (const auto& z : model.adjustment) {
    out << (first ? "" : ", ") << z;
    first = false;
  }
  out << "}, initial region " << members << " of " << grid.size() << " grid points\n";
  return kExitOk;
}

int cmd_simulate(int scenario, std::size_t rows, std::uint64_t seed, double couple, const std::string& path,
                 std::ostream& out) {
  if (rows == 0) throw Error(ErrorCode::ConfigError, "--rows: must be positive");
  ExampleSystem env(scenario, seed);
  auto data = record_passive(env, rows);
  if (couple > 0.0) {
    // Inject a W -> C dependence that the example graph does not allow.
    auto t = data.column("t");
    auto w = data.column("W");
    auto c = data.column("C");
    auto m = data.column("M");
    Eigen::VectorXd y(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      c(i) = (1.0 - couple) * c(i) + couple * w(i);
      y(i) = ExampleSystem::response_time(scenario, static_cast<std::int64_t>(t(i)), w(i), c(i), m(i));
    }
    data = ObservationDataset({"t", "W", "C", "M", "Y"}, {t, w, c, m, y});
  }
  write_csv(path, data, "scenario=" + std::to_string(scenario) + " seed=" + std::to_string(seed));
  out << "wrote " << rows << " rows to " << path << '\n';
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Safe-region learning for controlled systems with a known causal graph"};
  app.name("safereg");
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the active-learning loop for every seed of a config");
  std::string config_path, out_dir, seeds_flag;
  std::size_t jobs = 1;
  run->add_option("--config", config_path, "Experiment JSON")->required();
  run->add_option("--out", out_dir, "Output directory (overrides the config)");
  run->add_option("--seeds", seeds_flag, "Comma-separated seeds (overrides the config)");
  run->add_option("--jobs", jobs, "Seeds run in parallel")->check(CLI::PositiveNumber);

  auto* vg = app.add_subcommand("validate-graph", "Test the graph's implied independencies on a CSV log");
  std::string vg_graph, vg_data, vg_out;
  std::size_t max_cond = 1, permutations = 500;
  ValidationOptions vopts;
  vg->add_option("--graph", vg_graph, "Graph JSON")->required();
  vg->add_option("--data", vg_data, "Observational CSV")->required();
  vg->add_option("--out", vg_out, "Write the JSON report here instead of stdout");
  vg->add_option("--max-conditioning", max_cond, "Largest conditioning set tested");
  vg->add_option("--permutations", permutations, "HSIC permutations");
  vg->add_option("--significance", vopts.significance, "Rejection level");
  vg->add_option("--max-samples", vopts.max_samples, "Rows used by the test");
  vg->add_option("--seed", vopts.seed, "Permutation seed");

  auto* ep = app.add_subcommand("estimate-prior", "Estimate the causal prior and the initial region");
  PriorFlags pf;
  ep->add_option("--graph", pf.graph, "Graph JSON")->required();
  ep->add_option("--data", pf.data, "Observational CSV")->required();
  ep->add_option("--spec", pf.spec, "Specification, e.g. 'always[H=1](Y < 50)'")->required();
  ep->add_option("--out", pf.out, "Output directory");
  ep->add_option("--controls", pf.controls, "Comma-separated controls (default: all control nodes)");
  ep->add_option("--resolution", pf.resolution, "Grid points per control");
  ep->add_option("--delta", pf.delta, "Safety level");
  ep->add_option("--bandwidth", pf.options.bandwidth, "Kernel std in normalized units");
  ep->add_option("--bandwidth-reference", pf.options.bandwidth_reference,
                 "Windows at which --bandwidth applies; larger logs shrink it (0 keeps it fixed)");
  ep->add_option("--bootstrap", pf.options.bootstrap_reps, "Bootstrap replicates");
  ep->add_option("--support", pf.options.support_threshold, "Minimum kernel weight for support");
  ep->add_option("--sigma-max", pf.options.sigma_max, "Std ceiling");
  ep->add_option("--seed", pf.options.seed, "Bootstrap seed");
  ep->add_flag("--windowed", pf.windowed, "Use H+1-row windows instead of the factorized estimator");

  auto* sim = app.add_subcommand("simulate", "Record a passive log of the example system");
  int scenario = 1;
  std::size_t rows = 10000;
  std::uint64_t sim_seed = 0;
  double couple = 0.0;
  std::string sim_out;
  sim->add_option("--scenario", scenario, "1 or 2");
  sim->add_option("--rows", rows, "Number of rows");
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--couple-load", couple, "Mix W into C with this weight (breaks the graph)");
  sim->add_option("--out", sim_out, "CSV path")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*run) return cmd_run(config_path, out_dir, seeds_flag, jobs, out);
    if (*vg) return cmd_validate_graph(vg_graph, vg_data, max_cond, permutations, vopts, vg_out, out);
    if (*ep) return cmd_estimate_prior(pf, out);
    if (*sim) return cmd_simulate(scenario, rows, sim_seed, couple, sim_out, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    logger()->debug("exit after error: {}", ex.what());
    return exit_code_for(ex);
  }
  return kExitRuntime;
}

}  // namespace safereg
