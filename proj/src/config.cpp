#include "safereg/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "safereg/error.hpp"

namespace safereg {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw Error(ErrorCode::ConfigError, key + ": " + what);
}

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& prefix) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) fail(prefix + key, "unknown key");
}

template <typename T>
void read(const json& obj, const std::string& key, T& out, const std::string& prefix = {}) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    fail(prefix + key, "has the wrong type");
  }
}

void read_count(const json& obj, const std::string& key, std::size_t& out, const std::string& prefix = {}) {
  if (!obj.contains(key)) return;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) fail(prefix + key, "must be a nonnegative integer");
  out = v.get<std::size_t>();
}

void read_number(const json& obj, const std::string& key, double& out, const std::string& prefix = {}) {
  if (!obj.contains(key)) return;
  if (!obj.at(key).is_number()) fail(prefix + key, "must be a number");
  out = obj.at(key).get<double>();
}

}  // namespace

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int RunConfig::scenario() const {
  if (environment == "scenario1") return 1;
  if (environment == "scenario2") return 2;
  return 0;
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  if (!doc.is_object()) fail("config", "must be a JSON object");
  reject_unknown(doc,
                 {"environment", "graph", "data", "spec", "monitoring_steps", "horizon", "delta", "alpha",
                  "confidence_mode", "beta_sqrt", "rkhs_bound", "noise_bound", "budget", "grid_resolution",
                  "controls", "use_causal_prior", "use_safety_constraint", "use_cost_scaling", "window",
                  "lengthscale", "noise_std", "prior", "convergence", "truth_mc_samples", "truth_seed",
                  "output_dir", "seeds"},
                 "");

  RunConfig cfg;
  auto& col = cfg.col;
  read(doc, "environment", cfg.environment);
  if (cfg.environment != "scenario1" && cfg.environment != "scenario2" && cfg.environment != "csv-replay")
    fail("environment", "must be scenario1, scenario2 or csv-replay, got '" + cfg.environment + "'");

  auto resolve = [&](const std::string& key, std::filesystem::path& out) {
    std::string p;
    read(doc, key, p);
    if (p.empty()) return;
    out = std::filesystem::path(p).is_absolute() ? std::filesystem::path(p) : base_dir / p;
  };
  resolve("graph", cfg.graph);
  resolve("data", cfg.data);
  if (cfg.graph.empty()) fail("graph", "is required");
  if (cfg.environment == "csv-replay" && cfg.data.empty()) fail("data", "is required for csv-replay");

  read(doc, "spec", cfg.spec);
  if (cfg.spec.empty()) fail("spec", "is required");

  read_count(doc, "monitoring_steps", col.monitoring_steps);
  read_count(doc, "horizon", col.horizon);
  read_number(doc, "delta", col.delta);
  read_number(doc, "alpha", col.confidence.alpha);
  read_number(doc, "beta_sqrt", col.confidence.beta_sqrt);
  read_number(doc, "rkhs_bound", col.confidence.rkhs_bound);
  read_number(doc, "noise_bound", col.confidence.noise_bound);
  std::string mode = "practical";
  read(doc, "confidence_mode", mode);
  if (mode == "practical") col.confidence.mode = ConfidenceMode::practical;
  else if (mode == "theoretical") col.confidence.mode = ConfidenceMode::theoretical;
  else fail("confidence_mode", "must be practical or theoretical");
  read_number(doc, "budget", col.budget);
  read_count(doc, "grid_resolution", col.grid_resolution);
  read(doc, "controls", col.controls);
  read(doc, "use_causal_prior", col.ablation.use_causal_prior);
  read(doc, "use_safety_constraint", col.ablation.use_safety_constraint);
  read(doc, "use_cost_scaling", col.ablation.use_cost_scaling);
  read_count(doc, "window", col.window);
  read_number(doc, "lengthscale", col.lengthscale);
  read_number(doc, "noise_std", col.noise_std);
  read_count(doc, "truth_mc_samples", col.truth_mc_samples);
  read(doc, "truth_seed", cfg.truth_seed);

  if (doc.contains("prior")) {
    const auto& p = doc.at("prior");
    if (!p.is_object()) fail("prior", "must be an object");
    reject_unknown(p, {"bandwidth", "bandwidth_reference", "bootstrap_reps", "sigma_max", "support_threshold", "adjustment_bins",
                       "factorize_horizon"},
                   "prior.");
    read_number(p, "bandwidth", col.prior.bandwidth, "prior.");
    read_count(p, "bandwidth_reference", col.prior.bandwidth_reference, "prior.");
    read_count(p, "bootstrap_reps", col.prior.bootstrap_reps, "prior.");
    read_number(p, "sigma_max", col.prior.sigma_max, "prior.");
    read_number(p, "support_threshold", col.prior.support_threshold, "prior.");
    read_count(p, "adjustment_bins", col.prior.adjustment_bins, "prior.");
    read(p, "factorize_horizon", col.prior.factorize_horizon, "prior.");
  }
  if (doc.contains("convergence")) {
    const auto& c = doc.at("convergence");
    if (!c.is_object()) fail("convergence", "must be an object");
    reject_unknown(c, {"eps", "patience"}, "convergence.");
    read_number(c, "eps", col.convergence_eps, "convergence.");
    read_count(c, "patience", col.convergence_patience, "convergence.");
  }

  std::string out;
  read(doc, "output_dir", out);
  if (!out.empty()) cfg.output_dir = std::filesystem::path(out).is_absolute() ? std::filesystem::path(out) : base_dir / out;
  if (doc.contains("seeds")) {
    const auto& s = doc.at("seeds");
    if (!s.is_array() || s.empty()) fail("seeds", "must be a nonempty array of nonnegative integers");
    cfg.seeds.clear();
    for (const auto& v : s) {
      if (!v.is_number_integer() || v.get<long long>() < 0) fail("seeds", "must hold nonnegative integers");
      cfg.seeds.push_back(v.get<std::uint64_t>());
    }
  }

  validate(col);
  cfg.hash = fnv1a_hex(doc.dump());
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot read config '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& ex) {
    throw Error(ErrorCode::ConfigError, "config '" + path.string() + "' is not valid JSON: " + ex.what());
  }
  return parse_run_config(doc, path.parent_path());
}

}  // namespace safereg
