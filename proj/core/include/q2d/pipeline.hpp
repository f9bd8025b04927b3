#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stop_token>
#include <string>
#include <vector>

#include "q2d/corpus.hpp"
#include "q2d/filter.hpp"
#include "q2d/llm.hpp"
#include "q2d/scoring.hpp"

namespace q2d {

struct PipelineConfig {
  PromptSet prompt_set;
  LmBackendConfig lm;
  ScoreProviderConfig scorers;
  FilterConfig filters;
  double forward_temperature = kForwardTemperature;
  std::size_t concurrency = 1;
  std::optional<std::filesystem::path> checkpoint_path;
  // Extra attempts after a retryable transport failure.
  int max_retries = 2;
  std::chrono::milliseconds retry_backoff{250};

  void validate() const;
  Json to_json() const;
  // SHA-256 over the prompt set, filter config and backend kind. A checkpoint
  // only resumes under a config with the same fingerprint.
  std::string fingerprint() const;
};

// Live providers a run talks to. Owned by the caller so tests can inject
// instrumented backends.
struct Services {
  LmBackend& lm;
  ScoreProvider& scorer;
};

struct RunOptions {
  // Stop requests end the run after the sample currently being emitted;
  // everything emitted so far is checkpointed.
  std::stop_token stop;
  // Called after each sample is emitted with the running count.
  std::function<void(std::size_t emitted)> progress;
};

struct RunSummary {
  std::size_t emitted = 0;  // samples written by this invocation
  std::size_t skipped = 0;  // records already present from a checkpoint
  bool completed = false;   // false when stopped before the end
  FilterReport report;      // over the full output, including resumed samples
};

// Runs one record through generate -> parse -> reverse -> score -> filter.
// Parse failures produce a sample with a parse_error verdict; backend and
// scorer failures throw once retries are exhausted.
GeneratedSample process_record(const QaRecord& qa, const PipelineConfig& cfg, Services svc);

// In-memory run. Samples come back in input order for any concurrency level.
std::vector<GeneratedSample> run_q2d(std::span<const QaRecord> qa, const PipelineConfig& cfg, Services svc,
                                     const RunOptions& opts = {});

// File run: truncates `out`, streams samples to it in input order and keeps
// cfg.checkpoint_path current. A hard failure rethrows after the checkpoint
// reflects every sample already written.
RunSummary run_q2d_to_file(std::span<const QaRecord> qa, const PipelineConfig& cfg, Services svc,
                           const std::filesystem::path& out, const RunOptions& opts = {});

// Continues a file run from its checkpoint. Refuses (InputError) when the
// fingerprint differs; a finished run is a no-op.
RunSummary resume(const std::filesystem::path& checkpoint_path, std::span<const QaRecord> qa,
                  const PipelineConfig& cfg, Services svc, const std::filesystem::path& out,
                  const RunOptions& opts = {});

struct Checkpoint {
  std::string fingerprint;
  std::vector<std::string> done_ids;

  static Checkpoint load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

// Replaces every assistant turn, front to back, with a generated response to
// the dialog prefix ending at the nearest preceding user turn. Earlier
// replacements are visible to later ones. Dialogs without assistant turns and
// parse-error samples pass through unchanged.
std::vector<GeneratedSample> regenerate_answers(std::span<const GeneratedSample> samples, const PipelineConfig& cfg,
                                                LmBackend& lm);

}  // namespace q2d
