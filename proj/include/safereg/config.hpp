#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "safereg/learner.hpp"

namespace safereg {

/// An experiment as read from a JSON file. Paths are resolved against the file's directory.
struct RunConfig {
  /// "scenario1", "scenario2" or "csv-replay".
  std::string environment = "scenario1";
  std::filesystem::path graph;
  std::filesystem::path data;  // csv-replay only
  std::string spec;
  ColConfig col;
  std::uint64_t truth_seed = 0x5eedf00dULL;
  std::filesystem::path output_dir = "out";
  std::vector<std::uint64_t> seeds{0};
  /// FNV-1a of the canonical JSON text of the document.
  std::string hash;

  int scenario() const;
};

/// Throws ConfigError naming the offending key (unknown keys included).
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

std::string fnv1a_hex(std::string_view text);

}  // namespace safereg
