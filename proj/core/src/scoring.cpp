#include "q2d/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "q2d/corpus.hpp"
#include "q2d/error.hpp"
#include "q2d/hashing.hpp"
#include "q2d/http.hpp"
#include "q2d/textmetrics.hpp"

namespace q2d {
namespace {

constexpr double kNormTolerance = 1e-6;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

EmbeddingVector checked_vector(const nlohmann::json& raw, std::size_t dim) {
  if (!raw.is_array() || raw.size() != dim) {
    throw ProtocolError("embedding has wrong shape (expected " + std::to_string(dim) + " values)");
  }
  EmbeddingVector v;
  v.values.reserve(dim);
  for (const auto& x : raw) {
    if (!x.is_number()) throw ProtocolError("embedding contains a non-number");
    v.values.push_back(x.get<double>());
  }
  if (std::abs(v.norm() - 1.0) > kNormTolerance) {
    throw ProtocolError("embedding is not unit-normalized (norm " + std::to_string(v.norm()) + ")");
  }
  return v;
}

}  // namespace

double EmbeddingVector::norm() const noexcept {
  double s = 0.0;
  for (double x : values) s += x * x;
  return std::sqrt(s);
}

EmbeddingVector EmbeddingVector::normalized(std::vector<double> raw) {
  EmbeddingVector v{std::move(raw)};
  const double n = v.norm();
  if (!(n > 0.0)) throw InputError("cannot normalize a zero vector");
  for (double& x : v.values) x /= n;
  return v;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw InputError("cosine: dimension mismatch (" + std::to_string(a.dimension()) + " vs " +
                     std::to_string(b.dimension()) + ")");
  }
  if (a.values == b.values) return 1.0;
  double dot = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) dot += a.values[i] * b.values[i];
  return std::clamp(dot, -1.0, 1.0);
}

EmbeddingVector builtin_embed(const std::string& text) {
  std::vector<double> counts(kBuiltinEmbeddingDim, 0.0);
  auto tokens = tokenize(text).tokens;
  if (tokens.empty()) {
    const std::string t = trim(text);
    if (t.empty()) throw InputError("cannot embed blank text");
    tokens.push_back(t);
  }
  for (const auto& tok : tokens) counts[fnv1a64(tok) % kBuiltinEmbeddingDim] += 1.0;
  return EmbeddingVector::normalized(std::move(counts));
}

void ScoreProviderConfig::validate() const {
  if (kind == Kind::remote && (!endpoint || endpoint->empty())) {
    throw InputError("remote score provider requires an endpoint");
  }
  if (endpoint) parse_url(*endpoint);
  if (timeout.count() <= 0) throw InputError("score provider timeout must be positive");
}

nlohmann::json ScoreProviderConfig::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"timeout_ms", timeout.count()}};
  j["endpoint"] = endpoint ? nlohmann::json(*endpoint) : nlohmann::json(nullptr);
  j["cache_path"] = cache_path ? nlohmann::json(cache_path->string()) : nlohmann::json(nullptr);
  return j;
}

const char* to_string(ScoreProviderConfig::Kind kind) noexcept {
  return kind == ScoreProviderConfig::Kind::remote ? "remote" : "builtin_hash";
}

ScoreProviderConfig::Kind score_kind_from_string(const std::string& s) {
  if (s == "builtin_hash" || s == "builtin") return ScoreProviderConfig::Kind::builtin_hash;
  if (s == "remote") return ScoreProviderConfig::Kind::remote;
  throw InputError("unknown scorer kind \"" + s + "\" (expected builtin_hash or remote)");
}

// --- ScoreCache -------------------------------------------------------------

ScoreCache::ScoreCache(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
  if (!path_ || !std::filesystem::exists(*path_)) return;
  std::ifstream in(*path_);
  if (!in) throw IoError(path_->string(), "cannot open score cache");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = nlohmann::json::parse(line);
      entries_.emplace(j.at("key").get<std::string>(), j.at("response"));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path_->string(), lineno, e.what());
    }
  }
}

std::optional<nlohmann::json> ScoreCache::lookup(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return std::optional<nlohmann::json>(std::in_place, it->second);
}

nlohmann::json ScoreCache::insert(const std::string& key, const char* kind, nlohmann::json response) {
  std::lock_guard lock(mu_);
  auto [it, inserted] = entries_.emplace(key, std::move(response));
  if (inserted && path_) {
    JsonlWriter w(*path_, JsonlWriter::Mode::append);
    w.write_line(canonical_dump(nlohmann::json{{"key", key}, {"kind", kind}, {"response", it->second}}));
  }
  return it->second;
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::string ScoreCache::embed_key(const std::string& text) {
  return sha256_hex(canonical_dump({{"route", "/embed"}, {"body", {{"texts", {text}}}}}));
}

std::string ScoreCache::nli_key(const std::string& premise, const std::string& hypothesis) {
  return sha256_hex(
      canonical_dump({{"route", "/nli"}, {"body", {{"premise", premise}, {"hypothesis", hypothesis}}}}));
}

// --- ScoreProvider ----------------------------------------------------------

ScoreProvider::ScoreProvider(ScoreProviderConfig cfg) : cfg_(std::move(cfg)), cache_(cfg_.cache_path) {
  cfg_.validate();
}

std::vector<EmbeddingVector> ScoreProvider::embed(std::span<const std::string> texts) {
  if (texts.empty()) throw InputError("embed: empty input list");
  for (const auto& t : texts) {
    if (trim(t).empty()) throw InputError("embed: blank text");
  }
  if (cfg_.kind == ScoreProviderConfig::Kind::builtin_hash) {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(builtin_embed(t));
    return out;
  }
  return embed_remote(texts);
}

EmbeddingVector ScoreProvider::embed_one(const std::string& text) {
  return std::move(embed(std::span<const std::string>(&text, 1)).front());
}

std::vector<EmbeddingVector> ScoreProvider::embed_remote(std::span<const std::string> texts) {
  std::vector<std::optional<nlohmann::json>> cached(texts.size());
  std::vector<std::string> misses;
  std::map<std::string, std::size_t> miss_index;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    cached[i] = cache_.lookup(ScoreCache::embed_key(texts[i]));
    if (!cached[i] && miss_index.emplace(texts[i], misses.size()).second) misses.push_back(texts[i]);
  }

  if (!misses.empty()) {
    ++remote_calls_;
    const auto resp = http_post_json(join_url(*cfg_.endpoint, "/embed"), {{"texts", misses}},
                                     HttpOptions{cfg_.timeout, std::nullopt});
    if (!resp.is_object() || !resp.contains("vectors") || !resp["vectors"].is_array()) {
      throw ProtocolError("/embed response lacks a \"vectors\" array");
    }
    const auto& vectors = resp["vectors"];
    if (vectors.size() != misses.size()) {
      throw ProtocolError("/embed returned " + std::to_string(vectors.size()) + " vectors for " +
                          std::to_string(misses.size()) + " texts");
    }
    const std::size_t dim = resp.contains("dim") && resp["dim"].is_number_unsigned()
                                ? resp["dim"].get<std::size_t>()
                                : vectors.front().size();
    for (std::size_t m = 0; m < misses.size(); ++m) {
      checked_vector(vectors[m], dim);
      cache_.insert(ScoreCache::embed_key(misses[m]), "embed",
                    nlohmann::json{{"vectors", {vectors[m]}}, {"dim", dim}});
    }
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (!cached[i]) cached[i] = cache_.lookup(ScoreCache::embed_key(texts[i]));
    }
  }

  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& entry : cached) {
    const auto& e = *entry;
    try {
      out.push_back(checked_vector(e.at("vectors").at(0), e.at("dim").get<std::size_t>()));
    } catch (const nlohmann::json::exception& ex) {
      throw ProtocolError(std::string("malformed cached embedding: ") + ex.what());
    }
  }
  return out;
}

double ScoreProvider::nli_score(const std::string& premise, const std::string& hypothesis) {
  if (!supports_nli()) throw UnsupportedError("NLI scoring requires a remote score provider");
  if (trim(premise).empty() || trim(hypothesis).empty()) throw InputError("nli: blank premise or hypothesis");
  const auto key = ScoreCache::nli_key(premise, hypothesis);
  auto resp = cache_.lookup(key);
  if (!resp) {
    ++remote_calls_;
    auto fresh = http_post_json(join_url(*cfg_.endpoint, "/nli"),
                                {{"premise", premise}, {"hypothesis", hypothesis}},
                                HttpOptions{cfg_.timeout, std::nullopt});
    if (!fresh.is_object() || !fresh.contains("entailment") || !fresh["entailment"].is_number()) {
      throw ProtocolError("/nli response lacks a numeric \"entailment\"");
    }
    const double p = fresh["entailment"].get<double>();
    if (!(p >= 0.0 && p <= 1.0)) throw ProtocolError("/nli entailment out of [0,1]: " + std::to_string(p));
    resp = cache_.insert(key, "nli", nlohmann::json{{"entailment", p}});
  }
  return resp->at("entailment").get<double>();
}

}  // namespace q2d
