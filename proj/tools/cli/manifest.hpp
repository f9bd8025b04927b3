#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "q2d/corpus.hpp"

namespace q2d::cli {

// Record of one successful command invocation, written next to its outputs.
struct RunManifest {
  std::string command;
  std::string config_snapshot;  // canonical JSON of the effective config
  std::map<std::string, std::string> input_hashes;
  std::map<std::string, std::string> output_hashes;
  std::string started;
  std::string finished;

  void hash_inputs(const std::vector<std::filesystem::path>& paths);
  void hash_outputs(const std::vector<std::filesystem::path>& paths);
  Json to_json() const;
  void write(const std::filesystem::path& path) const;
};

// UTC, second resolution: 2024-01-31T12:00:00Z
std::string utc_timestamp();

}  // namespace q2d::cli
