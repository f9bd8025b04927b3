#include <doctest.h>

#include <atomic>
#include <mutex>

#include "q2d/error.hpp"
#include "q2d/hashing.hpp"
#include "q2d/http.hpp"
#include "q2d/pipeline.hpp"
#include "test_support.hpp"

using namespace q2d;
using q2d::test::TempDir;

namespace {

PipelineConfig base_config() {
  auto cfg = q2d::test::echo_config(q2d::test::prompts_path("qrecc"));
  cfg.retry_backoff = std::chrono::milliseconds(1);
  return cfg;
}

// Echo backend with scripted failures.
class ScriptedBackend : public LmBackend {
 public:
  std::function<void(const LmRequest&, int call)> before;
  std::function<std::string(const LmRequest&, std::string)> rewrite;

  std::string complete(const LmRequest& req) override {
    const int n = ++calls;
    if (before) before(req, n);
    auto out = echo.complete(req);
    return rewrite ? rewrite(req, std::move(out)) : out;
  }
  LmBackendConfig::Kind kind() const noexcept override { return LmBackendConfig::Kind::echo; }

  std::atomic<int> calls{0};
  EchoBackend echo;
};

bool is_forward(const LmRequest& r) { return r.prompt.ends_with("\nDialog:"); }

std::vector<std::string> retained_ids(const std::vector<GeneratedSample>& xs) {
  std::vector<std::string> out;
  for (const auto& s : xs) {
    if (s.verdict.retained) out.push_back(s.id);
  }
  return out;
}

}  // namespace

TEST_CASE("echo pipeline is a fixpoint") {
  auto cfg = base_config();
  cfg.filters.t_last_turn = 1.0;
  EchoBackend echo;
  ScoreProvider scorer(cfg.scorers);
  const auto qa = q2d::test::make_qa(10);
  const auto out = run_q2d(qa, cfg, {echo, scorer});
  REQUIRE(out.size() == 10);
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out[i].id == qa[i].id);
    CHECK(out[i].reversed_question == qa[i].question);
    CHECK(out[i].scores.intent_similarity == 1.0);
    CHECK(out[i].verdict.retained);
  }

  // under the default last-turn threshold the verbatim final turn is caught
  const auto strict = run_q2d(qa, base_config(), {echo, scorer});
  for (const auto& s : strict) {
    CHECK(s.verdict.failed_filters == std::vector<FilterName>{FilterName::last_turn});
  }
}

TEST_CASE("order and retained set do not depend on concurrency") {
  auto cfg = base_config();
  ScriptedBackend lm;
  // every third dialog leaks its answer, every fifth drifts in intent
  lm.rewrite = [](const LmRequest& r, std::string out) {
    const auto q = r.prompt.substr(r.prompt.rfind("number ") + 7);
    const int n = std::stoi(q);
    if (is_forward(r) && n % 3 == 0) out = "User: is it answer zeta" + std::to_string(n) + "?\n" + out;
    if (!is_forward(r) && n % 5 == 0) out = "what is the weather today";
    return out;
  };
  cfg.filters.t_last_turn = 1.0;
  ScoreProvider scorer(cfg.scorers);
  const auto qa = q2d::test::make_qa(40);
  cfg.concurrency = 1;
  const auto a = run_q2d(qa, cfg, {lm, scorer});
  cfg.concurrency = 8;
  const auto b = run_q2d(qa, cfg, {lm, scorer});
  CHECK(a == b);
  CHECK(retained_ids(a) == retained_ids(b));
  CHECK(retained_ids(a).size() < qa.size());
  CHECK_FALSE(retained_ids(a).empty());
}

TEST_CASE("unparseable completions become parse_error samples") {
  auto cfg = base_config();
  ScriptedBackend lm;
  lm.rewrite = [](const LmRequest& r, std::string out) {
    if (is_forward(r) && r.prompt.find("number 1\n") != std::string::npos) return std::string("I cannot do that.");
    if (!is_forward(r) && r.prompt.find("number 2\n") != std::string::npos) return std::string("   ");
    return out;
  };
  ScoreProvider scorer(cfg.scorers);
  const auto qa = q2d::test::make_qa(3);
  const auto out = run_q2d(qa, cfg, {lm, scorer});
  REQUIRE(out.size() == 3);
  CHECK(out[1].dialog.empty());
  CHECK(out[1].verdict == parse_error_verdict());
  CHECK(out[2].verdict == parse_error_verdict());
  CHECK(out[0].verdict.failed_filters == std::vector<FilterName>{FilterName::last_turn});
}

TEST_CASE("transport failures are retried, client errors are not") {
  auto cfg = base_config();
  cfg.max_retries = 2;
  ScoreProvider scorer(cfg.scorers);
  const auto qa = q2d::test::make_qa(1);

  ScriptedBackend flaky;
  flaky.before = [](const LmRequest&, int call) {
    if (call <= 2) throw TransportError("connection reset");
  };
  CHECK(run_q2d(qa, cfg, {flaky, scorer}).size() == 1);

  ScriptedBackend dead;
  dead.before = [](const LmRequest&, int) { throw TransportError("down"); };
  CHECK_THROWS_AS(run_q2d(qa, cfg, {dead, scorer}), TransportError);
  CHECK(dead.calls == 3);

  ScriptedBackend rejected;
  rejected.before = [](const LmRequest&, int) { throw HttpStatusError(400, "bad request"); };
  CHECK_THROWS_AS(run_q2d(qa, cfg, {rejected, scorer}), HttpStatusError);
  CHECK(rejected.calls == 1);
}

TEST_CASE("file run writes samples and a derivable report") {
  TempDir dir;
  auto cfg = base_config();
  cfg.checkpoint_path = dir / "ck.json";
  EchoBackend echo;
  ScoreProvider scorer(cfg.scorers);
  const auto qa = q2d::test::make_qa(12);
  const auto summary = run_q2d_to_file(qa, cfg, {echo, scorer}, dir / "s.jsonl");
  CHECK(summary.completed);
  CHECK(summary.emitted == 12);
  const auto samples = read_jsonl<GeneratedSample>(dir / "s.jsonl");
  CHECK(samples.size() == qa.size());
  CHECK(summary.report == FilterReport::compute(samples, cfg.filters));
  const auto ck = Checkpoint::load(dir / "ck.json");
  CHECK(ck.fingerprint == cfg.fingerprint());
  CHECK(ck.done_ids.size() == 12);
}

TEST_CASE("interrupted run resumes to the uninterrupted bytes") {
  TempDir dir;
  auto cfg = base_config();
  EchoBackend echo;
  ScoreProvider scorer(cfg.scorers);
  const auto qa = q2d::test::make_qa(10);

  cfg.checkpoint_path = dir / "full.ck";
  run_q2d_to_file(qa, cfg, {echo, scorer}, dir / "full.jsonl");

  for (std::size_t conc : {1u, 4u}) {
    cfg.concurrency = conc;
    cfg.checkpoint_path = dir / "part.ck";
    std::stop_source stop;
    RunOptions opts;
    opts.stop = stop.get_token();
    opts.progress = [&](std::size_t n) {
      if (n == 5) stop.request_stop();
    };
    const auto first = run_q2d_to_file(qa, cfg, {echo, scorer}, dir / "part.jsonl", opts);
    CHECK_FALSE(first.completed);
    CHECK(first.emitted >= 5);
    CHECK(first.emitted < 10);

    const auto second = resume(dir / "part.ck", qa, cfg, {echo, scorer}, dir / "part.jsonl");
    CHECK(second.completed);
    CHECK(second.skipped == first.emitted);
    CHECK(second.emitted + second.skipped == 10);
    CHECK(sha256_file(dir / "part.jsonl") == sha256_file(dir / "full.jsonl"));

    // resuming a finished run changes nothing
    const auto third = resume(dir / "part.ck", qa, cfg, {echo, scorer}, dir / "part.jsonl");
    CHECK(third.emitted == 0);
    CHECK(sha256_file(dir / "part.jsonl") == sha256_file(dir / "full.jsonl"));
  }
}

TEST_CASE("resume refuses a changed configuration") {
  TempDir dir;
  auto cfg = base_config();
  cfg.checkpoint_path = dir / "ck.json";
  EchoBackend echo;
  ScoreProvider scorer(cfg.scorers);
  const auto qa = q2d::test::make_qa(4);
  run_q2d_to_file(qa, cfg, {echo, scorer}, dir / "s.jsonl");

  auto changed = cfg;
  changed.filters.t_query = 0.99;
  CHECK(changed.fingerprint() != cfg.fingerprint());
  CHECK_THROWS_AS(resume(dir / "ck.json", qa, changed, {echo, scorer}, dir / "s.jsonl"), InputError);

  auto other_prompts = cfg;
  other_prompts.prompt_set = PromptSet::load(q2d::test::prompts_path("musique"));
  CHECK(other_prompts.fingerprint() != cfg.fingerprint());

  auto more_threads = cfg;
  more_threads.concurrency = 8;
  CHECK(more_threads.fingerprint() == cfg.fingerprint());
}

TEST_CASE("pipeline config validation") {
  auto cfg = base_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.concurrency = 0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg.concurrency = 1;
  cfg.filters.nli_enabled = true;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("regenerate_answers") {
  auto cfg = base_config();
  EchoBackend echo;
  std::vector<GeneratedSample> xs(3);
  xs[0].id = "a";
  xs[0].dialog = parse_dialog("User: only a question");
  xs[1].id = "b";
  xs[1].dialog = parse_dialog("User: first\nAssistant: old one\nUser: second\nAssistant: old two\nUser: third");
  xs[2].id = "c";
  xs[2].verdict = parse_error_verdict();

  const auto out = regenerate_answers(xs, cfg, echo);
  REQUIRE(out.size() == 3);
  CHECK(out[0] == xs[0]);
  CHECK(out[2] == xs[2]);
  const std::string prefix = EchoBackend::kResponsePrefix;
  CHECK(out[1].dialog.turns[1].text == prefix + "first");
  CHECK(out[1].dialog.turns[3].text == prefix + "second");
  CHECK(out[1].dialog.turns[4].text == "third");
  CHECK(regenerate_answers(xs, cfg, echo) == out);
}

TEST_CASE("regenerated answers replay byte-exactly") {
  TempDir dir;
  auto cfg = base_config();
  ScriptedBackend lm;
  lm.rewrite = [](const LmRequest& r, std::string out) {
    return r.prompt.ends_with("\nAssistant:") ? "Assistant: " + out + " (v" + std::to_string(r.prompt.size()) + ")"
                                               : out;
  };
  auto server = q2d::test::lm_server(lm);
  std::vector<GeneratedSample> xs(6);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i].id = "s" + std::to_string(i);
    xs[i].dialog = parse_dialog("User: tell me about item " + std::to_string(i) +
                                "\nAssistant: placeholder\nUser: and its origin?\nAssistant: placeholder\nUser: thanks");
  }
  cfg.concurrency = 3;
  cfg.lm.kind = LmBackendConfig::Kind::http;
  cfg.lm.endpoint = server->url();
  cfg.lm.record_path = dir / "rec.jsonl";
  {
    auto http = make_backend(cfg.lm);
    write_jsonl(dir / "live.jsonl", regenerate_answers(xs, cfg, *http));
  }
  cfg.lm = LmBackendConfig{};
  cfg.lm.kind = LmBackendConfig::Kind::replay;
  cfg.lm.replay_path = dir / "rec.jsonl";
  auto replay = make_backend(cfg.lm);
  write_jsonl(dir / "replayed.jsonl", regenerate_answers(xs, cfg, *replay));
  CHECK(q2d::test::read_text(dir / "live.jsonl") == q2d::test::read_text(dir / "replayed.jsonl"));
}
