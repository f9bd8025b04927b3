#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "q2d/corpus.hpp"
#include "q2d/scoring.hpp"

namespace q2d {

struct EvalRecord {
  std::string id;
  Dialog dialog;
  std::string gold_query;
  std::string predicted_query;

  bool operator==(const EvalRecord&) const = default;
};

void to_json(Json& j, const EvalRecord& r);
void from_json(const Json& j, EvalRecord& r);

// Lowercases the host, drops the scheme, any fragment and trailing slashes.
// "https://En.Wikipedia.org/wiki/X/#top" -> "en.wikipedia.org/wiki/X"
std::string normalize_url(std::string_view url);

inline constexpr std::size_t kPageSize = 10;

struct SearchResultPage {
  std::string query;
  std::vector<std::string> urls;  // normalized, unique, at most kPageSize

  // Normalizes, deduplicates (first occurrence wins) and truncates.
  static SearchResultPage make(std::string query, std::span<const std::string> raw_urls);
  bool operator==(const SearchResultPage&) const = default;
};

// |gold ∩ pred| / |gold|. Empty when the gold page has no URLs.
std::optional<double> recall_at_10(const SearchResultPage& gold, const SearchResultPage& pred);

class FixtureMissError : public Error {
 public:
  explicit FixtureMissError(std::vector<std::string> queries);
  const std::vector<std::string>& queries() const noexcept { return queries_; }

 private:
  std::vector<std::string> queries_;
};

inline constexpr const char* kSearchTokenEnv = "Q2D_SEARCH_API_TOKEN";

struct SearchClientConfig {
  enum class Mode { fixture, live };

  Mode mode = Mode::fixture;
  std::optional<std::filesystem::path> fixture_path;
  std::optional<std::string> endpoint;
  std::optional<std::filesystem::path> record_path;
  std::chrono::milliseconds min_interval{1000};
  std::chrono::milliseconds timeout{15000};
  int max_retries = 2;

  void validate() const;
};

// Fixture file lines: {"query":..,"urls":[...]}. Live mode issues
//   GET <endpoint>?q=<query>   (bearer token from Q2D_SEARCH_API_TOKEN)
// and accepts either {"urls":[...]} or {"organic_results":[{"link":..}...]}.
class SearchClient {
 public:
  explicit SearchClient(SearchClientConfig cfg);
  ~SearchClient();

  // Exact-string lookup in fixture mode (FixtureMissError on a miss).
  SearchResultPage fetch(const std::string& query);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Appends pages to a fixture file.
void append_fixture(const std::filesystem::path& path, const SearchResultPage& page);

struct EvalRow {
  std::string id;
  double embedding_similarity = 0.0;
  double rouge1_recall = 0.0;
  std::optional<double> recall_at_10;
  bool recall_skipped = false;
};

void to_json(Json& j, const EvalRow& r);
void from_json(const Json& j, EvalRow& r);

struct EvalReport {
  std::size_t n = 0;
  double embedding_similarity_mean = 0.0;
  double rouge1_recall_mean = 0.0;
  std::optional<double> recall_at_10_mean;  // absent without a search client
  std::size_t recall_skipped = 0;

  Json to_json() const;
  // Fixed-width table with raw [0,1] means and percentages.
  std::string render_table() const;
};

struct EvalResult {
  EvalReport report;
  std::vector<EvalRow> rows;
};

// Order-independent arithmetic mean (values are summed in sorted order).
double stable_mean(std::vector<double> values);

// Per-record cosine(gold, predicted), Rouge-1 recall with gold as reference
// and, with a search client, Recall@10. Missing fixtures are collected and
// reported together in one FixtureMissError.
EvalResult evaluate(std::span<const EvalRecord> records, ScoreProvider& scorer, SearchClient* search = nullptr);

struct FactualityRecord {
  std::string question;
  std::string response;
  std::string document;
  double nli = 0.0;
};

void to_json(Json& j, const FactualityRecord& r);
void from_json(const Json& j, FactualityRecord& r);

// "The answer to the question {question} is {response}"
std::string factuality_hypothesis(const std::string& question, const std::string& response);

// NLI of the document against factuality_hypothesis(). UnsupportedError when
// the provider has no NLI backend.
FactualityRecord score_response_factuality(const std::string& question, const std::string& response,
                                           const std::string& document, ScoreProvider& nli);

// (question, response) for every assistant turn that follows a user turn;
// the question is the nearest preceding user turn.
std::vector<std::pair<std::string, std::string>> question_response_pairs(const Dialog& dialog);

}  // namespace q2d
