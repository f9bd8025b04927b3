#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "q2d/corpus.hpp"
#include "q2d/llm.hpp"
#include "q2d/pipeline.hpp"

namespace q2d::test {

// Removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// Source-tree locations.
std::filesystem::path source_dir();
std::filesystem::path prompts_path(const std::string& name);  // "qrecc" -> prompts/qrecc.json
std::filesystem::path fixtures_dir();

// `n` distinct factoid questions with short answers that never occur in the
// question text.
std::vector<QaRecord> make_qa(std::size_t n);

PipelineConfig echo_config(const std::filesystem::path& prompts);

// Minimal HTTP server on 127.0.0.1 with an ephemeral port. Handlers run on
// the server's own threads.
class MockServer {
 public:
  struct Response {
    int status = 200;
    std::string body;
  };
  using Handler = std::function<Response(const std::string& path, const std::string& body)>;

  explicit MockServer(Handler handler);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  std::string url() const;
  std::size_t requests() const noexcept { return requests_.load(); }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::atomic<std::size_t> requests_{0};
};

// Scoring service stand-in: /embed answers with builtin_embed vectors, /nli
// with `nli(premise, hypothesis)`.
std::unique_ptr<MockServer> scoring_server(std::function<double(const std::string&, const std::string&)> nli);

// LM service stand-in speaking the completion wire format; completions come
// from `backend`.
std::unique_ptr<MockServer> lm_server(LmBackend& backend);

}  // namespace q2d::test
