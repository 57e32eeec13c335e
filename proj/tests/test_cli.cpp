#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "safereg/cli.hpp"
#include "safereg/config.hpp"
#include "safereg/dataset.hpp"
#include "safereg/observational.hpp"
#include "support.hpp"

using namespace safereg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json quick_config() {
  return {{"environment", "scenario1"},
          {"graph", testing::fixture("fig8b_graph.json").string()},
          {"spec", "always[H=1](Y < 50)"},
          {"budget", 6},
          {"grid_resolution", 10},
          {"truth_mc_samples", 1000},
          {"seeds", {42}}};
}

fs::path write_config(const fs::path& dir, const json& doc, const std::string& name = "config.json") {
  const auto path = dir / name;
  std::ofstream(path) << doc.dump(2);
  return path;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("shipped configs parse") {
    for (const auto& entry : fs::recursive_directory_iterator(testing::source_dir() / "configs")) {
      if (entry.path().extension() != ".json") continue;
      INFO(entry.path().string());
      const auto cfg = load_run_config(entry.path());
      CHECK(fs::exists(cfg.graph));
      CHECK(cfg.hash.size() == 16);
    }
  }

  TEST_CASE("run rejects an out-of-range delta and names it") {
    const auto dir = testing::scratch_dir("cli_delta");
    auto doc = quick_config();
    doc["delta"] = 1.5;
    const auto r = cli({"run", "--config", write_config(dir, doc).string(), "--out", (dir / "out").string()});
    CHECK(r.code == kExitInput);
    CHECK(r.err.find("delta") != std::string::npos);
    CHECK(r.err.find("ConfigError") != std::string::npos);
  }

  TEST_CASE("run rejects unknown keys") {
    const auto dir = testing::scratch_dir("cli_unknown");
    auto doc = quick_config();
    doc["lenghtscale"] = 0.5;
    const auto r = cli({"run", "--config", write_config(dir, doc).string()});
    CHECK(r.code == kExitInput);
    CHECK(r.err.find("lenghtscale") != std::string::npos);
  }

  TEST_CASE("run twice gives identical files carrying hash and seed") {
    const auto dir = testing::scratch_dir("cli_rerun");
    const auto config = write_config(dir, quick_config()).string();
    const auto a = cli({"run", "--config", config, "--out", (dir / "a").string()});
    const auto b = cli({"run", "--config", config, "--out", (dir / "b").string(), "--jobs", "2"});
    REQUIRE(a.code == kExitOk);
    REQUIRE(b.code == kExitOk);
    const auto hash = load_run_config(config).hash;
    for (const char* name : {"trace_seed42.csv", "region_seed42.csv", "model_seed42.json", "summary.json"}) {
      INFO(name);
      const auto left = slurp(dir / "a" / name);
      CHECK_FALSE(left.empty());
      CHECK(left == slurp(dir / "b" / name));
      CHECK(left.find(hash) != std::string::npos);
    }
    CHECK(slurp(dir / "a" / "trace_seed42.csv").rfind("# config_hash=" + hash + " seed=42", 0) == 0);
    const auto summary = json::parse(slurp(dir / "a" / "summary.json"));
    CHECK(summary.at("runs").size() == 1);
    CHECK(summary.contains("lambda_mean"));
  }

  TEST_CASE("seeds flag overrides the config") {
    const auto dir = testing::scratch_dir("cli_seeds");
    const auto r = cli({"run", "--config", write_config(dir, quick_config()).string(), "--out", (dir / "o").string(),
                        "--seeds", "3,4"});
    REQUIRE(r.code == kExitOk);
    CHECK(fs::exists(dir / "o" / "trace_seed3.csv"));
    CHECK(fs::exists(dir / "o" / "trace_seed4.csv"));
    CHECK_FALSE(fs::exists(dir / "o" / "trace_seed42.csv"));
  }

  TEST_CASE("validate-graph exit codes") {
    const auto dir = testing::scratch_dir("cli_validate");
    const auto graph = testing::fixture("fig8b_graph.json").string();
    REQUIRE(cli({"simulate", "--scenario", "1", "--rows", "1000", "--seed", "5", "--out", (dir / "clean.csv").string()})
                .code == kExitOk);
    REQUIRE(cli({"simulate", "--scenario", "1", "--rows", "1000", "--seed", "5", "--couple-load", "0.6", "--out",
                 (dir / "coupled.csv").string()})
                .code == kExitOk);

    const auto clean = cli({"validate-graph", "--graph", graph, "--data", (dir / "clean.csv").string(), "--out",
                            (dir / "report.json").string()});
    INFO(clean.out << clean.err);
    CHECK(clean.code == kExitOk);
    const auto report = json::parse(slurp(dir / "report.json"));
    CHECK(report.is_object());

    const auto coupled = cli({"validate-graph", "--graph", graph, "--data", (dir / "coupled.csv").string()});
    CHECK(coupled.code == kExitInconsistent);
    CHECK(coupled.out.find("C") != std::string::npos);

    std::ofstream(dir / "broken.json") << "{\"nodes\": [";
    CHECK(cli({"validate-graph", "--graph", (dir / "broken.json").string(), "--data", (dir / "clean.csv").string()})
              .code == kExitInput);
    CHECK(cli({"validate-graph", "--graph", graph, "--data", (dir / "none.csv").string()}).code == kExitInput);
  }

  TEST_CASE("estimate-prior outputs and exit codes") {
    const auto dir = testing::scratch_dir("cli_prior");
    const auto data = (dir / "log.csv").string();
    REQUIRE(cli({"simulate", "--rows", "10000", "--seed", "8", "--out", data}).code == kExitOk);

    const auto ok = cli({"estimate-prior", "--graph", testing::fixture("fig8b_graph.json").string(), "--data", data,
                         "--spec", "always[H=1](Y < 50)", "--resolution", "11", "--out", (dir / "prior").string()});
    REQUIRE(ok.code == kExitOk);
    const auto doc = json::parse(slurp(dir / "prior" / "effect_model.json"));
    const auto model = effect_model_from_json(doc);
    bool found = false;
    for (std::size_t i = 0; i < model.size(); ++i) {
      const auto p = model.grid.point(i);
      if (std::abs(p(0) - 0.5) < 1e-9 && std::abs(p(1) - 0.5) < 1e-9) {
        found = true;
        CHECK(model.mu(static_cast<Eigen::Index>(i)) >= 0.9);
      }
    }
    CHECK(found);
    CHECK(slurp(dir / "prior" / "initial_region.csv").rfind("#", 0) == 0);

    const auto hidden = cli({"estimate-prior", "--graph", testing::fixture("hidden_confounder_graph.json").string(),
                             "--data", data, "--spec", "always[H=1](Y < 50)", "--out", (dir / "h").string()});
    CHECK(hidden.code == kExitNotIdentifiable);

    const auto coarse = cli({"estimate-prior", "--graph", testing::fixture("fig8b_graph.json").string(), "--data", data,
                             "--spec", "always[H=1](Y < 50)", "--resolution", "1", "--out", (dir / "c").string()});
    CHECK(coarse.code == kExitInput);
    CHECK(coarse.err.find("ConfigError") != std::string::npos);

    const auto bad_spec = cli({"estimate-prior", "--graph", testing::fixture("fig8b_graph.json").string(), "--data",
                               data, "--spec", "always(Y << 50)", "--out", (dir / "s").string()});
    CHECK(bad_spec.code == kExitInput);
  }

  TEST_CASE("argument errors") {
    CHECK(cli({}).code == kExitInput);
    CHECK(cli({"frobnicate"}).code == kExitInput);
    CHECK(cli({"run"}).code == kExitInput);
    CHECK(cli({"--help"}).code == kExitOk);
  }
}
