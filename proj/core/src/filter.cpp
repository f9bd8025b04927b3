#include "q2d/filter.hpp"

#include <algorithm>

#include "q2d/llm.hpp"
#include "q2d/textmetrics.hpp"

namespace q2d {
namespace {

void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw InputError(std::string(name) + " must lie in [0,1], got " + std::to_string(v));
}

}  // namespace

const char* to_string(LeakScope scope) noexcept {
  return scope == LeakScope::assistant_turns ? "assistant_turns" : "all_turns";
}

LeakScope leak_scope_from_string(const std::string& s) {
  if (s == "all_turns") return LeakScope::all_turns;
  if (s == "assistant_turns") return LeakScope::assistant_turns;
  throw InputError("unknown leak scope \"" + s + "\"");
}

void FilterConfig::validate() const {
  check_unit(t_query, "t_query");
  check_unit(t_answer, "t_answer");
  check_unit(t_last_turn, "t_last_turn");
  check_unit(t_nli, "t_nli");
}

Json FilterConfig::to_json() const {
  return Json{{"t_query", t_query},         {"t_answer", t_answer}, {"t_last_turn", t_last_turn},
              {"nli_enabled", nli_enabled}, {"t_nli", t_nli},       {"leak_scope", to_string(leak_scope)}};
}

FilterConfig FilterConfig::from_json(const Json& j) {
  FilterConfig c;
  c.t_query = j.value("t_query", c.t_query);
  c.t_answer = j.value("t_answer", c.t_answer);
  c.t_last_turn = j.value("t_last_turn", c.t_last_turn);
  c.nli_enabled = j.value("nli_enabled", c.nli_enabled);
  c.t_nli = j.value("t_nli", c.t_nli);
  c.leak_scope = leak_scope_from_string(j.value("leak_scope", std::string(to_string(c.leak_scope))));
  c.validate();
  return c;
}

std::string dialog_text(const Dialog& dialog, LeakScope scope) {
  std::string out;
  for (const auto& t : dialog.turns) {
    if (scope == LeakScope::assistant_turns && t.role != Role::assistant) continue;
    if (!out.empty()) out += ' ';
    out += t.text;
  }
  return out;
}

std::string nli_intent_hypothesis(const std::string& question) { return "The dialog asks the question " + question; }

FilterScores score_sample(const GeneratedSample& sample, ScoreProvider& scorer, const FilterConfig& cfg) {
  if (sample.dialog.empty()) throw InputError("score_sample: sample " + sample.id + " has no dialog");
  if (sample.reversed_question.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw InputError("score_sample: sample " + sample.id + " has no reversed question");
  }
  const std::vector<std::string> texts{sample.source_question, sample.reversed_question, sample.dialog.final_text()};
  const auto vecs = scorer.embed(texts);

  FilterScores s;
  s.intent_similarity = cosine(vecs[0], vecs[1]);
  s.answer_leak = sample.answer.empty() ? 0.0 : contains_overlap(dialog_text(sample.dialog, cfg.leak_scope), sample.answer);
  s.last_turn_similarity = cosine(vecs[2], vecs[0]);
  if (cfg.nli_enabled) {
    s.nli_intent = scorer.nli_score(render_turns(sample.dialog), nli_intent_hypothesis(sample.source_question));
  }
  return s;
}

FilterVerdict apply_filters(const FilterScores& scores, const FilterConfig& cfg) {
  FilterVerdict v;
  if (scores.intent_similarity < cfg.t_query) v.failed_filters.push_back(FilterName::intent);
  if (scores.answer_leak > cfg.t_answer) v.failed_filters.push_back(FilterName::answer_leak);
  if (scores.last_turn_similarity > cfg.t_last_turn) v.failed_filters.push_back(FilterName::last_turn);
  if (cfg.nli_enabled) {
    if (!scores.nli_intent) throw InputError("apply_filters: NLI enabled but nli_intent was not scored");
    if (*scores.nli_intent < cfg.t_nli) v.failed_filters.push_back(FilterName::nli);
  }
  v.retained = v.failed_filters.empty();
  return v;
}

std::vector<SweepRow> sweep_thresholds(std::span<const FilterScores> scored, std::span<const double> thresholds) {
  if (scored.empty()) throw InputError("sweep_thresholds: no scored samples");
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw InputError("sweep_thresholds: thresholds must be sorted ascending");
  }
  std::vector<double> sims;
  sims.reserve(scored.size());
  for (const auto& s : scored) sims.push_back(s.intent_similarity);
  std::sort(sims.begin(), sims.end());

  std::vector<SweepRow> rows;
  rows.reserve(thresholds.size());
  for (double t : thresholds) {
    const auto below = static_cast<std::size_t>(std::lower_bound(sims.begin(), sims.end(), t) - sims.begin());
    rows.push_back({t, static_cast<double>(below) / static_cast<double>(sims.size())});
  }
  return rows;
}

void FilterReport::add(const FilterVerdict& verdict) {
  ++total;
  if (verdict.retained) ++retained;
  for (auto f : verdict.failed_filters) ++failed_by_filter[f];
}

Json FilterReport::to_json() const {
  Json failed = Json::object();
  for (auto f : {FilterName::intent, FilterName::answer_leak, FilterName::last_turn, FilterName::nli,
                 FilterName::parse_error}) {
    auto it = failed_by_filter.find(f);
    failed[to_string(f)] = it == failed_by_filter.end() ? 0 : it->second;
  }
  return Json{{"config", config.to_json()}, {"total", total}, {"retained", retained}, {"failed_by_filter", failed}};
}

FilterReport FilterReport::compute(std::span<const GeneratedSample> samples, const FilterConfig& cfg) {
  FilterReport r;
  r.config = cfg;
  for (const auto& s : samples) r.add(s.verdict);
  return r;
}

}  // namespace q2d
