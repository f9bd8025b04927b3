#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "q2d/corpus.hpp"
#include "q2d/scoring.hpp"

namespace q2d {

// Which turns the answer-leak check reads.
enum class LeakScope { all_turns, assistant_turns };

const char* to_string(LeakScope scope) noexcept;
LeakScope leak_scope_from_string(const std::string& s);

struct FilterConfig {
  double t_query = 0.999;
  double t_answer = 0.6;
  double t_last_turn = 0.8;
  bool nli_enabled = false;
  double t_nli = 0.82;
  LeakScope leak_scope = LeakScope::all_turns;

  // Throws InputError when a threshold leaves [0,1].
  void validate() const;
  Json to_json() const;
  static FilterConfig from_json(const Json& j);

  bool operator==(const FilterConfig&) const = default;
};

// Turn texts joined by single spaces, restricted to `scope`.
std::string dialog_text(const Dialog& dialog, LeakScope scope);

// Hypothesis for the NLI intent filter.
std::string nli_intent_hypothesis(const std::string& question);

// Computes every score regardless of which filters will fail. NLI is only
// queried when the config enables it. Requires a non-empty dialog and a
// non-blank reversed question.
FilterScores score_sample(const GeneratedSample& sample, ScoreProvider& scorer, const FilterConfig& cfg);

// Boundary semantics: intent keeps sim >= t_query, leak keeps leak <= t_answer,
// last-turn keeps sim <= t_last_turn, nli keeps p >= t_nli. Failures are
// listed in the fixed order intent, answer_leak, last_turn, nli.
FilterVerdict apply_filters(const FilterScores& scores, const FilterConfig& cfg);

inline FilterVerdict parse_error_verdict() { return FilterVerdict{false, {FilterName::parse_error}}; }

struct SweepRow {
  double threshold = 0.0;
  double filtering_proportion = 0.0;
};

// For each threshold t (ascending), the share of samples whose
// intent_similarity is below t.
std::vector<SweepRow> sweep_thresholds(std::span<const FilterScores> scored, std::span<const double> thresholds);

// Threshold grid of the reversed-query similarity ablation.
inline const std::vector<double> kAblationGrid{0.0, 0.25, 0.5, 0.75, 0.8, 0.9, 0.95, 0.99, 0.999};

// Aggregate counts; a sample failing several filters counts once per filter.
struct FilterReport {
  FilterConfig config;
  std::size_t total = 0;
  std::size_t retained = 0;
  std::map<FilterName, std::size_t> failed_by_filter;

  void add(const FilterVerdict& verdict);
  Json to_json() const;
  static FilterReport compute(std::span<const GeneratedSample> samples, const FilterConfig& cfg);

  bool operator==(const FilterReport&) const = default;
};

}  // namespace q2d
