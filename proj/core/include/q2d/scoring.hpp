#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace q2d {

// Unit-norm embedding. Construct through normalized() or from provider output
// that has already been checked.
struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const noexcept { return values.size(); }
  double norm() const noexcept;

  // L2-normalizes `raw`. Throws InputError on an all-zero vector.
  static EmbeddingVector normalized(std::vector<double> raw);

  bool operator==(const EmbeddingVector&) const = default;
};

// Dot product of two unit vectors clamped to [-1, 1]. Bitwise-identical
// vectors score exactly 1. Throws InputError on dimension mismatch.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

inline constexpr std::size_t kBuiltinEmbeddingDim = 256;

// Hashed bag-of-words: tokenize, FNV-1a 64 each token into one of 256
// buckets, count, L2-normalize. A text with no tokens hashes its trimmed
// bytes as a single token.
EmbeddingVector builtin_embed(const std::string& text);

struct ScoreProviderConfig {
  enum class Kind { builtin_hash, remote };

  Kind kind = Kind::builtin_hash;
  std::optional<std::string> endpoint;
  std::chrono::milliseconds timeout{30000};
  std::optional<std::filesystem::path> cache_path;

  // Throws InputError when kind=remote lacks an endpoint.
  void validate() const;
  nlohmann::json to_json() const;
};

const char* to_string(ScoreProviderConfig::Kind kind) noexcept;
ScoreProviderConfig::Kind score_kind_from_string(const std::string& s);

// Append-only JSON-lines response cache:
//   {"key":hex,"kind":"embed"|"nli","response":...}
// The in-memory index always exists; the file is only touched when a path is
// configured.
class ScoreCache {
 public:
  explicit ScoreCache(std::optional<std::filesystem::path> path);

  std::optional<nlohmann::json> lookup(const std::string& key) const;
  // Inserts unless already present; returns the stored response either way.
  nlohmann::json insert(const std::string& key, const char* kind, nlohmann::json response);
  std::size_t size() const;

  static std::string embed_key(const std::string& text);
  static std::string nli_key(const std::string& premise, const std::string& hypothesis);

 private:
  std::optional<std::filesystem::path> path_;
  mutable std::mutex mu_;
  std::unordered_map<std::string, nlohmann::json> entries_;
};

// Embedding and NLI scoring behind one object. Remote mode speaks
//   POST /embed {"texts":[...]}            -> {"vectors":[[...]...],"dim":N}
//   POST /nli   {"premise":..,"hypothesis"} -> {"entailment":p}
// and serves repeated requests from the cache. Thread-safe.
class ScoreProvider {
 public:
  explicit ScoreProvider(ScoreProviderConfig cfg);

  // One unit vector per input, same order. Throws InputError on an empty
  // list or a blank text; TransportError/ProtocolError from the remote.
  std::vector<EmbeddingVector> embed(std::span<const std::string> texts);
  EmbeddingVector embed_one(const std::string& text);

  // Entailment probability in [0,1]. UnsupportedError without a remote.
  double nli_score(const std::string& premise, const std::string& hypothesis);

  bool supports_nli() const noexcept { return cfg_.kind == ScoreProviderConfig::Kind::remote; }
  // Number of HTTP requests issued so far.
  std::size_t remote_calls() const noexcept { return remote_calls_.load(); }
  const ScoreProviderConfig& config() const noexcept { return cfg_; }

 private:
  std::vector<EmbeddingVector> embed_remote(std::span<const std::string> texts);

  ScoreProviderConfig cfg_;
  ScoreCache cache_;
  std::atomic<std::size_t> remote_calls_{0};
};

}  // namespace q2d
