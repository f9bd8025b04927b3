#include "cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "cli/manifest.hpp"
#include "q2d/corpus.hpp"
#include "q2d/eval.hpp"
#include "q2d/filter.hpp"
#include "q2d/http.hpp"
#include "q2d/llm.hpp"
#include "q2d/pipeline.hpp"
#include "q2d/scoring.hpp"

namespace q2d::cli {
namespace {

namespace fs = std::filesystem;

// Raised while assembling configuration; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <class F>
auto as_config(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

fs::path with_suffix(const fs::path& base, const std::string& suffix) {
  fs::path p = base;
  p += suffix;
  return p;
}

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::optional<std::string> opt_string(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<std::string>(s);
}

std::optional<fs::path> opt_path(const std::string& s) {
  return s.empty() ? std::nullopt : std::optional<fs::path>(s);
}

bool is_parse_error(const GeneratedSample& s) {
  return std::find(s.verdict.failed_filters.begin(), s.verdict.failed_filters.end(), FilterName::parse_error) !=
         s.verdict.failed_filters.end();
}

// --- shared flag groups -------------------------------------------------------

struct ScorerFlags {
  std::string kind = "builtin_hash";
  std::string url;
  std::string cache;
  int timeout_ms = 30000;

  void add(CLI::App* app) {
    app->add_option("--scorer", kind, "Score provider: builtin_hash or remote")->capture_default_str();
    app->add_option("--scoring-url", url, std::string("Scoring service base URL (default $") + kScoringUrlEnv + ")");
    app->add_option("--score-cache", cache, "JSON-lines score cache file");
    app->add_option("--score-timeout-ms", timeout_ms, "Scoring request timeout")->capture_default_str();
  }

  ScoreProviderConfig build() const {
    return as_config([&] {
      ScoreProviderConfig c;
      c.kind = score_kind_from_string(kind);
      c.endpoint = opt_string(url);
      if (!c.endpoint) c.endpoint = env_var(kScoringUrlEnv);
      c.timeout = std::chrono::milliseconds(timeout_ms);
      c.cache_path = opt_path(cache);
      c.validate();
      return c;
    });
  }
};

struct FilterFlags {
  FilterConfig cfg;
  std::string leak_scope = "all_turns";

  void add(CLI::App* app) {
    app->add_option("--t-query", cfg.t_query, "Intent filter threshold (keep sim >= t)")->capture_default_str();
    app->add_option("--t-answer", cfg.t_answer, "Answer-leak threshold (keep leak <= t)")->capture_default_str();
    app->add_option("--t-last-turn", cfg.t_last_turn, "Last-turn threshold (keep sim <= t)")->capture_default_str();
    app->add_flag("--nli", cfg.nli_enabled, "Enable the NLI intent filter (needs a remote scorer)");
    app->add_option("--t-nli", cfg.t_nli, "NLI intent threshold (keep p >= t)")->capture_default_str();
    app->add_option("--leak-scope", leak_scope, "Turns read by the answer-leak filter: all_turns or assistant_turns")
        ->capture_default_str();
  }

  FilterConfig build() const {
    return as_config([&] {
      FilterConfig c = cfg;
      c.leak_scope = leak_scope_from_string(leak_scope);
      c.validate();
      return c;
    });
  }
};

struct LmFlags {
  std::string backend;
  std::string endpoint;
  std::string replay;
  std::string record;
  int timeout_ms = 120000;
  std::size_t max_in_flight = 4;

  void add(CLI::App* app) {
    app->add_option("--backend", backend, "Language-model backend: http, replay or echo")->required();
    app->add_option("--endpoint", endpoint, "Completion endpoint URL (http backend)");
    app->add_option("--replay", replay, "Recorded completions file (replay backend)");
    app->add_option("--record", record, "Append live completions to this file (http backend)");
    app->add_option("--lm-timeout-ms", timeout_ms, "Completion request timeout")->capture_default_str();
    app->add_option("--max-in-flight", max_in_flight, "Concurrent requests to the http backend")->capture_default_str();
  }

  LmBackendConfig build() const {
    return as_config([&] {
      LmBackendConfig c;
      c.kind = lm_kind_from_string(backend);
      c.endpoint = opt_string(endpoint);
      c.replay_path = opt_path(replay);
      c.record_path = opt_path(record);
      c.timeout = std::chrono::milliseconds(timeout_ms);
      c.max_in_flight = max_in_flight;
      c.validate();
      return c;
    });
  }
};

// --- generate -----------------------------------------------------------------

struct GenerateArgs {
  std::string qa, prompts, out, report, manifest, checkpoint;
  LmFlags lm;
  ScorerFlags scorer;
  FilterFlags filters;
  double temperature = kForwardTemperature;
  std::size_t concurrency = 1;
  int max_retries = 2;
  bool resume = false;
  long seed = 0;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out, std::ostream&) {
  RunManifest manifest{"generate", {}, {}, {}, utc_timestamp(), {}};
  PipelineConfig cfg;
  cfg.prompt_set = as_config([&] { return PromptSet::load(a.prompts); });
  cfg.lm = a.lm.build();
  cfg.scorers = a.scorer.build();
  cfg.filters = a.filters.build();
  cfg.forward_temperature = a.temperature;
  cfg.concurrency = a.concurrency;
  cfg.max_retries = a.max_retries;
  cfg.checkpoint_path = opt_path(a.checkpoint);
  as_config([&] {
    cfg.validate();
    return 0;
  });
  if (a.resume && !cfg.checkpoint_path) throw ConfigError("--resume requires --checkpoint");
  if (a.resume) {
    const auto cp = as_config([&] { return Checkpoint::load(*cfg.checkpoint_path); });
    if (cp.fingerprint != cfg.fingerprint()) {
      throw ConfigError("checkpoint " + a.checkpoint +
                        " does not match the current configuration (prompt set, filter thresholds or backend "
                        "kind changed); refusing to resume");
    }
  }

  const fs::path out_path = a.out;
  const fs::path report_path = a.report.empty() ? with_suffix(out_path, ".report.json") : fs::path(a.report);
  const fs::path manifest_path = a.manifest.empty() ? with_suffix(out_path, ".manifest.json") : fs::path(a.manifest);

  const auto qa = read_jsonl<QaRecord>(a.qa);
  auto backend = make_backend(cfg.lm);
  ScoreProvider scorer(cfg.scorers);
  Services svc{*backend, scorer};

  RunSummary summary = a.resume ? resume(*cfg.checkpoint_path, qa, cfg, svc, out_path)
                                : run_q2d_to_file(qa, cfg, svc, out_path);
  write_file_atomic(report_path, summary.report.to_json().dump(2) + "\n");

  Json snapshot{{"qa", a.qa}, {"prompts", a.prompts}, {"out", a.out}, {"report", report_path.string()},
                {"resume", a.resume}, {"seed", a.seed}, {"pipeline", cfg.to_json()}};
  manifest.config_snapshot = canonical_dump(snapshot);
  std::vector<fs::path> inputs{a.qa, a.prompts};
  if (cfg.lm.replay_path) inputs.push_back(*cfg.lm.replay_path);
  manifest.hash_inputs(inputs);
  manifest.hash_outputs({out_path, report_path});
  manifest.finished = utc_timestamp();
  manifest.write(manifest_path);

  out << "samples: " << summary.report.total << " (" << summary.report.retained << " retained";
  if (summary.skipped > 0) out << ", " << summary.skipped << " resumed from checkpoint";
  out << ") -> " << out_path.string() << "\n";
  out << summary.report.to_json()["failed_by_filter"].dump() << "\n";
  return kExitOk;
}

// --- filter -------------------------------------------------------------------

struct FilterArgs {
  std::string in, out, report, manifest;
  bool rescore = false;
  ScorerFlags scorer;
  FilterFlags filters;
};

int cmd_filter(const FilterArgs& a, std::ostream& out, std::ostream&) {
  RunManifest manifest{"filter", {}, {}, {}, utc_timestamp(), {}};
  const FilterConfig fc = a.filters.build();
  const ScoreProviderConfig sc = a.scorer.build();
  if (fc.nli_enabled && a.rescore && sc.kind != ScoreProviderConfig::Kind::remote) {
    throw ConfigError("the NLI filter needs --scorer remote");
  }
  const fs::path out_path = a.out;
  const fs::path report_path = a.report.empty() ? with_suffix(out_path, ".report.json") : fs::path(a.report);
  const fs::path manifest_path = a.manifest.empty() ? with_suffix(out_path, ".manifest.json") : fs::path(a.manifest);

  auto samples = read_jsonl<GeneratedSample>(a.in);
  std::optional<ScoreProvider> scorer;
  if (a.rescore) scorer.emplace(sc);
  for (auto& s : samples) {
    if (is_parse_error(s)) continue;
    if (scorer) s.scores = score_sample(s, *scorer, fc);
    s.verdict = apply_filters(s.scores, fc);
  }
  write_jsonl(out_path, samples);
  const auto report = FilterReport::compute(samples, fc);
  write_file_atomic(report_path, report.to_json().dump(2) + "\n");

  manifest.config_snapshot = canonical_dump(Json{{"in", a.in},
                                                 {"out", a.out},
                                                 {"rescore", a.rescore},
                                                 {"filters", fc.to_json()},
                                                 {"scorers", sc.to_json()}});
  manifest.hash_inputs({a.in});
  manifest.hash_outputs({out_path, report_path});
  manifest.finished = utc_timestamp();
  manifest.write(manifest_path);

  out << "samples: " << report.total << " (" << report.retained << " retained) -> " << out_path.string() << "\n";
  return kExitOk;
}

// --- ablate -------------------------------------------------------------------

struct AblateArgs {
  std::string in, out, manifest;
  std::vector<double> thresholds = kAblationGrid;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  RunManifest manifest{"ablate", {}, {}, {}, utc_timestamp(), {}};
  if (!std::is_sorted(a.thresholds.begin(), a.thresholds.end())) throw ConfigError("--thresholds must be ascending");
  for (double t : a.thresholds) {
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("thresholds must lie in [0,1]");
  }
  const fs::path out_path = a.out.empty() ? with_suffix(a.in, ".ablation.json") : fs::path(a.out);
  const fs::path manifest_path = a.manifest.empty() ? with_suffix(out_path, ".manifest.json") : fs::path(a.manifest);

  const auto samples = read_jsonl<GeneratedSample>(a.in);
  std::vector<FilterScores> scored;
  for (const auto& s : samples) {
    if (!is_parse_error(s)) scored.push_back(s.scores);
  }
  if (scored.empty()) {
    err << "error: " << a.in << " holds no scored samples\n";
    return kExitRuntime;
  }
  const auto rows = sweep_thresholds(scored, a.thresholds);

  Json jrows = Json::array();
  out << "threshold  filtering_proportion       %\n";
  for (const auto& r : rows) {
    jrows.push_back({{"threshold", r.threshold}, {"filtering_proportion", r.filtering_proportion}});
    out << std::left << std::setw(9) << fixed(r.threshold, 3) << "  " << std::setw(20)
        << fixed(r.filtering_proportion, 6) << "  " << std::right << std::setw(6)
        << fixed(r.filtering_proportion * 100.0, 1) << "\n";
  }
  out << "scored samples: " << scored.size() << " (of " << samples.size() << ")\n";
  write_file_atomic(out_path, Json{{"input", a.in}, {"scored", scored.size()}, {"rows", jrows}}.dump(2) + "\n");

  manifest.config_snapshot = canonical_dump(Json{{"in", a.in}, {"out", out_path.string()}, {"thresholds", a.thresholds}});
  manifest.hash_inputs({a.in});
  manifest.hash_outputs({out_path});
  manifest.finished = utc_timestamp();
  manifest.write(manifest_path);
  return kExitOk;
}

// --- eval ---------------------------------------------------------------------

struct EvalArgs {
  std::string pred, report, breakdown, manifest;
  std::string search_fixtures;
  bool search_live = false;
  std::string search_endpoint;
  std::string search_record;
  int search_interval_ms = 1000;
  ScorerFlags scorer;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  RunManifest manifest{"eval", {}, {}, {}, utc_timestamp(), {}};
  const ScoreProviderConfig sc = a.scorer.build();
  std::optional<SearchClientConfig> search_cfg;
  if (a.search_live && !a.search_fixtures.empty()) {
    throw ConfigError("--search-live and --search-fixtures are mutually exclusive");
  }
  if (!a.search_fixtures.empty()) {
    search_cfg = SearchClientConfig{};
    search_cfg->mode = SearchClientConfig::Mode::fixture;
    search_cfg->fixture_path = a.search_fixtures;
  } else if (a.search_live) {
    search_cfg = SearchClientConfig{};
    search_cfg->mode = SearchClientConfig::Mode::live;
    search_cfg->endpoint = opt_string(a.search_endpoint);
    search_cfg->record_path = opt_path(a.search_record);
    search_cfg->min_interval = std::chrono::milliseconds(a.search_interval_ms);
    as_config([&] {
      search_cfg->validate();
      return 0;
    });
  }
  const fs::path report_path = a.report.empty() ? with_suffix(a.pred, ".report.json") : fs::path(a.report);
  const fs::path breakdown_path =
      a.breakdown.empty() ? with_suffix(a.pred, ".breakdown.jsonl") : fs::path(a.breakdown);
  const fs::path manifest_path =
      a.manifest.empty() ? with_suffix(report_path, ".manifest.json") : fs::path(a.manifest);

  const auto records = read_jsonl<EvalRecord>(a.pred);
  if (records.empty()) {
    err << "error: " << a.pred << " holds no records\n";
    return kExitRuntime;
  }
  ScoreProvider scorer(sc);
  std::optional<SearchClient> search;
  if (search_cfg) search.emplace(*search_cfg);
  EvalResult result;
  try {
    result = evaluate(records, scorer, search ? &*search : nullptr);
  } catch (const FixtureMissError& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }

  write_file_atomic(report_path, result.report.to_json().dump(2) + "\n");
  write_jsonl(breakdown_path, result.rows);
  out << result.report.render_table();

  manifest.config_snapshot = canonical_dump(Json{{"pred", a.pred},
                                                 {"report", report_path.string()},
                                                 {"breakdown", breakdown_path.string()},
                                                 {"search_fixtures", a.search_fixtures},
                                                 {"search_live", a.search_live},
                                                 {"scorers", sc.to_json()}});
  std::vector<fs::path> inputs{a.pred};
  if (!a.search_fixtures.empty()) inputs.emplace_back(a.search_fixtures);
  manifest.hash_inputs(inputs);
  manifest.hash_outputs({report_path, breakdown_path});
  manifest.finished = utc_timestamp();
  manifest.write(manifest_path);
  return kExitOk;
}

// --- factuality ---------------------------------------------------------------

struct FactualityArgs {
  std::string dialogs, compare, docs, out, compare_out, report, manifest;
  ScorerFlags scorer;
};

struct DocRecord {
  std::string id;
  std::string document;
};

void from_json(const Json& j, DocRecord& d) {
  d.id = j.at("id").get<std::string>();
  d.document = j.at("document").get<std::string>();
  if (d.id.empty()) throw Error("document id must be non-empty");
}

struct SetSummary {
  std::string label;
  std::size_t n = 0;
  double mean = 0.0;
};

SetSummary score_set(const std::string& label, const fs::path& samples_path, const fs::path& out_path,
                     const std::map<std::string, std::string>& docs, ScoreProvider& nli) {
  const auto samples = read_jsonl<GeneratedSample>(samples_path);
  std::vector<std::string> missing;
  for (const auto& s : samples) {
    if (!s.dialog.empty() && docs.count(s.id) == 0) missing.push_back(s.id);
  }
  if (!missing.empty()) {
    std::string msg = "no document for " + std::to_string(missing.size()) + " sample(s) in " + samples_path.string() + ":";
    for (const auto& id : missing) msg += " " + id;
    throw Error(msg);
  }
  JsonlWriter w(out_path);
  std::vector<double> scores;
  for (const auto& s : samples) {
    if (s.dialog.empty()) continue;
    const auto& doc = docs.at(s.id);
    for (const auto& [q, r] : question_response_pairs(s.dialog)) {
      const auto rec = score_response_factuality(q, r, doc, nli);
      Json j = rec;
      j["id"] = s.id;
      w.write_line(canonical_dump(j));
      scores.push_back(rec.nli);
    }
  }
  return SetSummary{label, scores.size(), stable_mean(scores)};
}

int cmd_factuality(const FactualityArgs& a, std::ostream& out, std::ostream&) {
  RunManifest manifest{"factuality", {}, {}, {}, utc_timestamp(), {}};
  ScorerFlags sf = a.scorer;
  sf.kind = "remote";
  if (sf.url.empty() && !env_var(kScoringUrlEnv)) {
    throw ConfigError(std::string("factuality needs an NLI endpoint: pass --scoring-url or set ") + kScoringUrlEnv);
  }
  const ScoreProviderConfig sc = sf.build();
  const fs::path out_a = a.out.empty() ? with_suffix(a.dialogs, ".factuality.jsonl") : fs::path(a.out);
  const fs::path out_b = a.compare.empty() ? fs::path()
                         : a.compare_out.empty() ? with_suffix(a.compare, ".factuality.jsonl")
                                                 : fs::path(a.compare_out);
  const fs::path report_path = a.report.empty() ? with_suffix(out_a, ".report.json") : fs::path(a.report);
  const fs::path manifest_path = a.manifest.empty() ? with_suffix(report_path, ".manifest.json") : fs::path(a.manifest);

  std::map<std::string, std::string> docs;
  for (const auto& d : read_jsonl<DocRecord>(a.docs)) docs.emplace(d.id, d.document);
  ScoreProvider nli(sc);
  std::vector<SetSummary> sets{score_set("A", a.dialogs, out_a, docs, nli)};
  if (!a.compare.empty()) sets.push_back(score_set("B", a.compare, out_b, docs, nli));

  Json jsets = Json::array();
  out << "set  responses  mean_nli      %\n";
  for (const auto& s : sets) {
    jsets.push_back({{"set", s.label}, {"responses", s.n}, {"mean_nli", s.mean}});
    out << std::left << std::setw(3) << s.label << "  " << std::right << std::setw(9) << s.n << "  "
        << fixed(s.mean, 6) << "  " << std::setw(5) << fixed(s.mean * 100.0, 1) << "\n";
  }
  write_file_atomic(report_path, Json{{"sets", jsets}}.dump(2) + "\n");

  manifest.config_snapshot = canonical_dump(Json{{"dialogs", a.dialogs},
                                                 {"compare", a.compare},
                                                 {"docs", a.docs},
                                                 {"out", out_a.string()},
                                                 {"compare_out", out_b.string()},
                                                 {"scorers", sc.to_json()}});
  std::vector<fs::path> inputs{a.dialogs, a.docs};
  std::vector<fs::path> outputs{out_a, report_path};
  if (!a.compare.empty()) {
    inputs.emplace_back(a.compare);
    outputs.push_back(out_b);
  }
  manifest.hash_inputs(inputs);
  manifest.hash_outputs(outputs);
  manifest.finished = utc_timestamp();
  manifest.write(manifest_path);
  return kExitOk;
}

// --- regenerate ---------------------------------------------------------------

struct RegenerateArgs {
  std::string in, prompts, out, manifest;
  LmFlags lm;
  std::size_t concurrency = 1;
  int max_retries = 2;
};

int cmd_regenerate(const RegenerateArgs& a, std::ostream& out, std::ostream&) {
  RunManifest manifest{"regenerate", {}, {}, {}, utc_timestamp(), {}};
  PipelineConfig cfg;
  cfg.prompt_set = as_config([&] { return PromptSet::load(a.prompts); });
  cfg.lm = a.lm.build();
  cfg.concurrency = a.concurrency;
  cfg.max_retries = a.max_retries;
  if (cfg.concurrency < 1) throw ConfigError("--concurrency must be >= 1");
  const fs::path manifest_path = a.manifest.empty() ? with_suffix(a.out, ".manifest.json") : fs::path(a.manifest);

  const auto samples = read_jsonl<GeneratedSample>(a.in);
  auto backend = make_backend(cfg.lm);
  const auto regenerated = regenerate_answers(samples, cfg, *backend);
  write_jsonl(fs::path(a.out), regenerated);

  manifest.config_snapshot = canonical_dump(Json{{"in", a.in}, {"prompts", a.prompts}, {"out", a.out},
                                                 {"lm", cfg.lm.to_json()}, {"concurrency", cfg.concurrency}});
  std::vector<fs::path> inputs{a.in, a.prompts};
  if (cfg.lm.replay_path) inputs.push_back(*cfg.lm.replay_path);
  manifest.hash_inputs(inputs);
  manifest.hash_outputs({a.out});
  manifest.finished = utc_timestamp();
  manifest.write(manifest_path);
  out << "regenerated " << regenerated.size() << " samples -> " << a.out << "\n";
  return kExitOk;
}

// --- export -------------------------------------------------------------------

struct ExportArgs {
  std::string in, out, manifest;
  bool retained_only = false;
};

int cmd_export(const ExportArgs& a, std::ostream& out, std::ostream&) {
  RunManifest manifest{"export", {}, {}, {}, utc_timestamp(), {}};
  const fs::path manifest_path = a.manifest.empty() ? with_suffix(a.out, ".manifest.json") : fs::path(a.manifest);
  JsonlReader<GeneratedSample> reader(a.in);
  JsonlWriter writer(a.out);
  std::size_t total = 0;
  while (auto r = reader.next()) {
    ++total;
    if (a.retained_only && !r->record.verdict.retained) continue;
    writer.write(r->record);
  }
  manifest.config_snapshot = canonical_dump(Json{{"in", a.in}, {"out", a.out}, {"retained_only", a.retained_only}});
  manifest.hash_inputs({a.in});
  manifest.hash_outputs({a.out});
  manifest.finished = utc_timestamp();
  manifest.write(manifest_path);
  out << "exported " << writer.count() << " of " << total << " samples -> " << a.out << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"q2d: turn question-answering data into dialog-to-query datasets, and evaluate query generation"};
  app.set_config("--config", "", "TOML/INI config file; command-line flags take precedence");
  app.require_subcommand(1);
  long seed = 0;
  app.add_option("--seed", seed, "Reserved; the core has no randomness and ignores this value");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Generate dialogs from questions and filter them");
  g->add_option("--qa", gen.qa, "Input *.qa.jsonl")->required()->check(CLI::ExistingFile);
  g->add_option("--prompts", gen.prompts, "Prompt-set JSON")->required()->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "Output *.samples.jsonl")->required();
  g->add_option("--report", gen.report, "Filter report JSON (default <out>.report.json)");
  g->add_option("--manifest", gen.manifest, "Run manifest (default <out>.manifest.json)");
  g->add_option("--checkpoint", gen.checkpoint, "Checkpoint file for resumable runs");
  g->add_flag("--resume", gen.resume, "Continue from --checkpoint");
  g->add_option("--temperature", gen.temperature, "Forward sampling temperature")->capture_default_str();
  g->add_option("--concurrency", gen.concurrency, "Records processed in parallel")->capture_default_str();
  g->add_option("--max-retries", gen.max_retries, "Retries after transport failures")->capture_default_str();
  gen.lm.add(g);
  gen.scorer.add(g);
  gen.filters.add(g);

  FilterArgs flt;
  auto* f = app.add_subcommand("filter", "Re-apply (and optionally re-score) filters on a samples file");
  f->add_option("--in", flt.in, "Input *.samples.jsonl")->required()->check(CLI::ExistingFile);
  f->add_option("--out", flt.out, "Output *.samples.jsonl")->required();
  f->add_option("--report", flt.report, "Filter report JSON (default <out>.report.json)");
  f->add_option("--manifest", flt.manifest, "Run manifest (default <out>.manifest.json)");
  f->add_flag("--rescore", flt.rescore, "Recompute scores before applying thresholds");
  flt.scorer.add(f);
  flt.filters.add(f);

  AblateArgs abl;
  auto* ab = app.add_subcommand("ablate", "Sweep intent-filter thresholds over a scored samples file");
  ab->add_option("--in", abl.in, "Scored *.samples.jsonl")->required()->check(CLI::ExistingFile);
  ab->add_option("--thresholds", abl.thresholds, "Comma-separated ascending thresholds")
      ->delimiter(',')
      ->capture_default_str();
  ab->add_option("--out", abl.out, "Sweep JSON (default <in>.ablation.json)");
  ab->add_option("--manifest", abl.manifest, "Run manifest (default <out>.manifest.json)");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Score predicted queries against gold queries");
  e->add_option("--pred", ev.pred, "Predictions *.eval.jsonl")->required()->check(CLI::ExistingFile);
  e->add_option("--search-fixtures", ev.search_fixtures, "Recorded search pages (JSON lines)")
      ->check(CLI::ExistingFile);
  e->add_flag("--search-live", ev.search_live, std::string("Query a live search API (token from $") + kSearchTokenEnv + ")");
  e->add_option("--search-endpoint", ev.search_endpoint, "Live search endpoint URL");
  e->add_option("--search-record", ev.search_record, "Append live pages to this fixture file");
  e->add_option("--search-interval-ms", ev.search_interval_ms, "Minimum spacing of live requests")
      ->capture_default_str();
  e->add_option("--report", ev.report, "Report JSON (default <pred>.report.json)");
  e->add_option("--breakdown", ev.breakdown, "Per-record JSON lines (default <pred>.breakdown.jsonl)");
  e->add_option("--manifest", ev.manifest, "Run manifest (default <report>.manifest.json)");
  ev.scorer.add(e);

  FactualityArgs fa;
  auto* fc = app.add_subcommand("factuality", "NLI factuality of assistant responses against source documents");
  fc->add_option("--dialogs", fa.dialogs, "Samples file with the responses to score (set A)")
      ->required()
      ->check(CLI::ExistingFile);
  fc->add_option("--compare", fa.compare, "Second samples file (set B), e.g. regenerated responses")
      ->check(CLI::ExistingFile);
  fc->add_option("--docs", fa.docs, "Documents as JSON lines {\"id\",\"document\"}")->required()->check(CLI::ExistingFile);
  fc->add_option("--out", fa.out, "Set A records (default <dialogs>.factuality.jsonl)");
  fc->add_option("--compare-out", fa.compare_out, "Set B records (default <compare>.factuality.jsonl)");
  fc->add_option("--report", fa.report, "Summary JSON (default <out>.report.json)");
  fc->add_option("--manifest", fa.manifest, "Run manifest (default <report>.manifest.json)");
  fa.scorer.add(fc);

  RegenerateArgs rg;
  auto* r = app.add_subcommand("regenerate", "Replace assistant turns with generated responses");
  r->add_option("--in", rg.in, "Input *.samples.jsonl")->required()->check(CLI::ExistingFile);
  r->add_option("--prompts", rg.prompts, "Prompt-set JSON")->required()->check(CLI::ExistingFile);
  r->add_option("--out", rg.out, "Output *.samples.jsonl")->required();
  r->add_option("--manifest", rg.manifest, "Run manifest (default <out>.manifest.json)");
  r->add_option("--concurrency", rg.concurrency, "Samples processed in parallel")->capture_default_str();
  r->add_option("--max-retries", rg.max_retries, "Retries after transport failures")->capture_default_str();
  rg.lm.add(r);

  ExportArgs ex;
  auto* x = app.add_subcommand("export", "Copy a samples file, optionally keeping retained samples only");
  x->add_option("--in", ex.in, "Input *.samples.jsonl")->required()->check(CLI::ExistingFile);
  x->add_option("--out", ex.out, "Output file")->required();
  x->add_option("--manifest", ex.manifest, "Run manifest (default <out>.manifest.json)");
  x->add_flag("--retained-only", ex.retained_only, "Drop filtered samples");

  std::vector<std::string> argv_store{"q2d"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& pe) {
    err << "error: " << pe.what() << "\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  gen.seed = seed;
  try {
    if (g->parsed()) return cmd_generate(gen, out, err);
    if (f->parsed()) return cmd_filter(flt, out, err);
    if (ab->parsed()) return cmd_ablate(abl, out, err);
    if (e->parsed()) return cmd_eval(ev, out, err);
    if (fc->parsed()) return cmd_factuality(fa, out, err);
    if (r->parsed()) return cmd_regenerate(rg, out, err);
    if (x->parsed()) return cmd_export(ex, out, err);
  } catch (const ConfigError& ce) {
    err << "error: " << ce.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& ex_) {
    err << "error: " << ex_.what() << "\n";
    return kExitRuntime;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace q2d::cli
