#include "q2d/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "q2d/http.hpp"
#include "q2d/textmetrics.hpp"

namespace q2d {
namespace {

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

std::string format_fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

void to_json(Json& j, const EvalRecord& r) {
  j = Json{{"id", r.id}, {"dialog", r.dialog}, {"gold_query", r.gold_query}, {"predicted_query", r.predicted_query}};
}

void from_json(const Json& j, EvalRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.dialog = j.at("dialog").get<Dialog>();
  r.gold_query = j.at("gold_query").get<std::string>();
  r.predicted_query = j.value("predicted_query", std::string());
  if (blank(r.gold_query)) throw InputError("gold_query is empty");
}

// --- URLs / pages -------------------------------------------------------------

std::string normalize_url(std::string_view url) {
  std::string_view s = url;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  if (auto scheme = s.find("://"); scheme != std::string_view::npos) s.remove_prefix(scheme + 3);
  if (auto frag = s.find('#'); frag != std::string_view::npos) s = s.substr(0, frag);
  const auto host_end = std::min(s.find_first_of("/?"), s.size());
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < host_end; ++i) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(s[i]))));
  out.append(s.substr(host_end));
  while (!out.empty() && out.back() == '/') out.pop_back();
  return out;
}

SearchResultPage SearchResultPage::make(std::string query, std::span<const std::string> raw_urls) {
  SearchResultPage page{std::move(query), {}};
  std::unordered_set<std::string> seen;
  for (const auto& raw : raw_urls) {
    if (page.urls.size() == kPageSize) break;
    auto norm = normalize_url(raw);
    if (norm.empty() || !seen.insert(norm).second) continue;
    page.urls.push_back(std::move(norm));
  }
  return page;
}

std::optional<double> recall_at_10(const SearchResultPage& gold, const SearchResultPage& pred) {
  if (gold.urls.empty()) return std::nullopt;
  std::unordered_set<std::string> predicted;
  for (const auto& u : pred.urls) predicted.insert(normalize_url(u));
  std::unordered_set<std::string> gold_set;
  std::size_t hits = 0;
  for (const auto& u : gold.urls) {
    auto n = normalize_url(u);
    if (!gold_set.insert(n).second) continue;
    if (predicted.count(n) > 0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(gold_set.size());
}

FixtureMissError::FixtureMissError(std::vector<std::string> queries)
    : Error([&] {
        std::string msg = "no search fixture for " + std::to_string(queries.size()) + " quer" +
                          (queries.size() == 1 ? "y" : "ies") + ":";
        for (const auto& q : queries) msg += "\n  " + q;
        return msg;
      }()),
      queries_(std::move(queries)) {}

// --- search client ------------------------------------------------------------

void SearchClientConfig::validate() const {
  if (mode == Mode::fixture && !fixture_path) throw InputError("fixture search mode requires a fixture file");
  if (mode == Mode::live) {
    if (!endpoint) throw InputError("live search mode requires an endpoint");
    parse_url(*endpoint);
  }
}

void append_fixture(const std::filesystem::path& path, const SearchResultPage& page) {
  JsonlWriter w(path, JsonlWriter::Mode::append);
  w.write_line(canonical_dump(Json{{"query", page.query}, {"urls", page.urls}}));
}

struct SearchClient::Impl {
  SearchClientConfig cfg;
  std::unordered_map<std::string, SearchResultPage> pages;
  std::mutex mu;
  std::chrono::steady_clock::time_point last_request{};

  SearchResultPage fetch_live(const std::string& query) {
    {
      std::unique_lock lock(mu);
      const auto earliest = last_request + cfg.min_interval;
      const auto now = std::chrono::steady_clock::now();
      if (last_request.time_since_epoch().count() != 0 && now < earliest) std::this_thread::sleep_until(earliest);
      last_request = std::chrono::steady_clock::now();
    }
    Json resp;
    for (int attempt = 0;; ++attempt) {
      try {
        resp = http_get_json(*cfg.endpoint, {{"q", query}}, HttpOptions{cfg.timeout, env_var(kSearchTokenEnv)});
        break;
      } catch (const HttpStatusError& e) {
        if (e.is_client_error() || attempt >= cfg.max_retries) throw;
      } catch (const TransportError&) {
        if (attempt >= cfg.max_retries) throw;
      }
      std::this_thread::sleep_for(cfg.min_interval);
    }
    std::vector<std::string> urls;
    if (resp.contains("urls") && resp["urls"].is_array()) {
      for (const auto& u : resp["urls"]) urls.push_back(u.get<std::string>());
    } else if (resp.contains("organic_results") && resp["organic_results"].is_array()) {
      for (const auto& r : resp["organic_results"]) {
        if (r.contains("link") && r["link"].is_string()) urls.push_back(r["link"].get<std::string>());
      }
    } else {
      throw ProtocolError("search response has neither \"urls\" nor \"organic_results\"");
    }
    auto page = SearchResultPage::make(query, urls);
    if (cfg.record_path) {
      std::lock_guard lock(mu);
      append_fixture(*cfg.record_path, page);
    }
    return page;
  }
};

SearchClient::SearchClient(SearchClientConfig cfg) : impl_(std::make_unique<Impl>()) {
  cfg.validate();
  impl_->cfg = std::move(cfg);
  if (impl_->cfg.mode != SearchClientConfig::Mode::fixture) return;
  const auto& path = *impl_->cfg.fixture_path;
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open search fixtures");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      const auto j = Json::parse(line);
      auto urls = j.at("urls").get<std::vector<std::string>>();
      auto page = SearchResultPage::make(j.at("query").get<std::string>(), urls);
      impl_->pages.emplace(page.query, std::move(page));
    } catch (const Json::exception& e) {
      throw DataError(path.string(), lineno, e.what());
    }
  }
}

SearchClient::~SearchClient() = default;

SearchResultPage SearchClient::fetch(const std::string& query) {
  if (blank(query)) throw InputError("search query is empty");
  if (impl_->cfg.mode == SearchClientConfig::Mode::live) return impl_->fetch_live(query);
  auto it = impl_->pages.find(query);
  if (it == impl_->pages.end()) throw FixtureMissError({query});
  return it->second;
}

// --- evaluation ---------------------------------------------------------------

void to_json(Json& j, const EvalRow& r) {
  j = Json{{"id", r.id},
           {"embedding_similarity", r.embedding_similarity},
           {"rouge1_recall", r.rouge1_recall},
           {"recall_skipped", r.recall_skipped}};
  j["recall_at_10"] = r.recall_at_10 ? Json(*r.recall_at_10) : Json(nullptr);
}

void from_json(const Json& j, EvalRow& r) {
  r.id = j.at("id").get<std::string>();
  r.embedding_similarity = j.at("embedding_similarity").get<double>();
  r.rouge1_recall = j.at("rouge1_recall").get<double>();
  r.recall_skipped = j.value("recall_skipped", false);
  r.recall_at_10.reset();
  if (auto it = j.find("recall_at_10"); it != j.end() && !it->is_null()) r.recall_at_10 = it->get<double>();
}

Json EvalReport::to_json() const {
  Json j{{"n", n},
         {"embedding_similarity_mean", embedding_similarity_mean},
         {"rouge1_recall_mean", rouge1_recall_mean},
         {"recall_skipped", recall_skipped}};
  Json pct{{"embedding_similarity", embedding_similarity_mean * 100.0}, {"rouge1_recall", rouge1_recall_mean * 100.0}};
  if (recall_at_10_mean) {
    j["recall_at_10_mean"] = *recall_at_10_mean;
    pct["recall_at_10"] = *recall_at_10_mean * 100.0;
  }
  j["percent"] = pct;
  return j;
}

std::string EvalReport::render_table() const {
  std::string out = "metric                  mean        %\n";
  auto row = [&](const char* name, double v) {
    std::string line = name;
    line.resize(22, ' ');
    out += line + "  " + format_fixed(v, 6) + "  " + format_fixed(v * 100.0, 1) + "\n";
  };
  row("embedding_similarity", embedding_similarity_mean);
  row("rouge1_recall", rouge1_recall_mean);
  if (recall_at_10_mean) row("recall_at_10", *recall_at_10_mean);
  out += "records: " + std::to_string(n);
  if (recall_at_10_mean) out += "  recall@10 skipped: " + std::to_string(recall_skipped);
  out += "\n";
  return out;
}

double stable_mean(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

EvalResult evaluate(std::span<const EvalRecord> records, ScoreProvider& scorer, SearchClient* search) {
  if (records.empty()) throw InputError("evaluate: no records");

  // Resolve every page up front so all fixture misses surface together.
  std::unordered_map<std::string, SearchResultPage> pages;
  if (search != nullptr) {
    std::vector<std::string> missing;
    std::set<std::string> missing_set;
    auto want = [&](const std::string& q) {
      if (blank(q) || pages.count(q) > 0 || missing_set.count(q) > 0) return;
      try {
        pages.emplace(q, search->fetch(q));
      } catch (const FixtureMissError&) {
        missing_set.insert(q);
        missing.push_back(q);
      }
    };
    for (const auto& r : records) {
      want(r.gold_query);
      want(r.predicted_query);
    }
    if (!missing.empty()) throw FixtureMissError(std::move(missing));
  }

  EvalResult result;
  result.rows.reserve(records.size());
  std::vector<double> sims, rouges, recalls;
  for (const auto& r : records) {
    EvalRow row;
    row.id = r.id;
    if (!blank(r.predicted_query)) {
      const std::vector<std::string> texts{r.gold_query, r.predicted_query};
      const auto v = scorer.embed(texts);
      row.embedding_similarity = cosine(v[0], v[1]);
    }
    row.rouge1_recall = rouge1_recall(r.gold_query, r.predicted_query);
    if (search != nullptr) {
      const auto& gold = pages.at(r.gold_query);
      const SearchResultPage pred = blank(r.predicted_query) ? SearchResultPage{} : pages.at(r.predicted_query);
      row.recall_at_10 = recall_at_10(gold, pred);
      row.recall_skipped = !row.recall_at_10.has_value();
      if (row.recall_at_10) {
        recalls.push_back(*row.recall_at_10);
      } else {
        ++result.report.recall_skipped;
      }
    }
    sims.push_back(row.embedding_similarity);
    rouges.push_back(row.rouge1_recall);
    result.rows.push_back(std::move(row));
  }

  result.report.n = records.size();
  result.report.embedding_similarity_mean = stable_mean(sims);
  result.report.rouge1_recall_mean = stable_mean(rouges);
  if (search != nullptr) result.report.recall_at_10_mean = stable_mean(recalls);
  return result;
}

// --- factuality ---------------------------------------------------------------

void to_json(Json& j, const FactualityRecord& r) {
  j = Json{{"question", r.question}, {"response", r.response}, {"document", r.document}, {"nli", r.nli}};
}

void from_json(const Json& j, FactualityRecord& r) {
  r.question = j.at("question").get<std::string>();
  r.response = j.at("response").get<std::string>();
  r.document = j.at("document").get<std::string>();
  r.nli = j.at("nli").get<double>();
  if (!(r.nli >= 0.0 && r.nli <= 1.0)) throw InputError("nli out of [0,1]");
}

std::string factuality_hypothesis(const std::string& question, const std::string& response) {
  return "The answer to the question " + question + " is " + response;
}

FactualityRecord score_response_factuality(const std::string& question, const std::string& response,
                                           const std::string& document, ScoreProvider& nli) {
  if (blank(question) || blank(response) || blank(document)) {
    throw InputError("factuality: question, response and document must be non-empty");
  }
  FactualityRecord r{question, response, document, 0.0};
  r.nli = nli.nli_score(document, factuality_hypothesis(question, response));
  return r;
}

std::vector<std::pair<std::string, std::string>> question_response_pairs(const Dialog& dialog) {
  std::vector<std::pair<std::string, std::string>> out;
  const std::string* question = nullptr;
  for (const auto& t : dialog.turns) {
    if (t.role == Role::user) {
      question = &t.text;
    } else if (question != nullptr) {
      out.emplace_back(*question, t.text);
    }
  }
  return out;
}

}  // namespace q2d
