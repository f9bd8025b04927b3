#include "cli/manifest.hpp"

#include <chrono>
#include <ctime>

#include "q2d/hashing.hpp"

namespace q2d::cli {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::hash_inputs(const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) input_hashes[p.string()] = sha256_file(p);
}

void RunManifest::hash_outputs(const std::vector<std::filesystem::path>& paths) {
  for (const auto& p : paths) output_hashes[p.string()] = sha256_file(p);
}

Json RunManifest::to_json() const {
  return Json{{"command", command},         {"config_snapshot", config_snapshot}, {"input_hashes", input_hashes},
              {"output_hashes", output_hashes}, {"started", started},             {"finished", finished}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  write_file_atomic(path, to_json().dump(2) + "\n");
}

}  // namespace q2d::cli
