#include <doctest.h>

#include <random>
#include <set>

#include "q2d/error.hpp"
#include "q2d/http.hpp"
#include "q2d/llm.hpp"
#include "test_support.hpp"

using namespace q2d;
using q2d::test::MockServer;
using q2d::test::TempDir;

namespace {

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

PromptSet one_example() {
  PromptSet ps;
  ps.instruction_forward = "Write a dialog.";
  ps.instruction_reverse = "Extract the question.";
  ps.examples.push_back({"q1", Dialog{{{Role::user, "a"}, {Role::assistant, "b"}, {Role::user, "c"}}}});
  return ps;
}

Dialog random_dialog(std::mt19937& rng) {
  static const std::vector<std::string> kWords{"where", "is", "the", "wall", "built", "42", "km", "Why", "ok.",
                                               "it's", "users", "questions?", "dialog", "assistant's", "café"};
  std::uniform_int_distribution<int> turns(0, 3);
  std::uniform_int_distribution<int> len(1, 8);
  std::uniform_int_distribution<std::size_t> pick(0, kWords.size() - 1);
  auto text = [&] {
    std::string s;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) s += (i ? " " : "") + kWords[pick(rng)];
    return s;
  };
  Dialog d;
  const int pairs = turns(rng);
  if (rng() % 2) d.turns.push_back({Role::assistant, text()});
  for (int i = 0; i < pairs; ++i) {
    d.turns.push_back({Role::user, text()});
    d.turns.push_back({Role::assistant, text()});
  }
  d.turns.push_back({Role::user, text()});
  return d;
}

}  // namespace

TEST_CASE("forward prompt layout") {
  const auto ps = one_example();
  const auto p = render_forward_prompt(ps, "q2");
  CHECK(ends_with(p, "Question: q2\nDialog:"));
  CHECK(p ==
        "Write a dialog.\n\n"
        "Question: q1\nDialog:\nUser: a\nAssistant: b\nUser: c\n\n"
        "Question: q2\nDialog:");
  CHECK(p == render_forward_prompt(ps, "q2"));
}

TEST_CASE("reverse and response prompt layout") {
  const auto ps = one_example();
  Dialog d{{{Role::user, "x"}, {Role::assistant, "y"}, {Role::user, "z"}}};
  CHECK(render_reverse_prompt(ps, d) ==
        "Extract the question.\n\n"
        "Dialog:\nUser: a\nAssistant: b\nUser: c\nQuestion: q1\n\n"
        "Dialog:\nUser: x\nAssistant: y\nUser: z\nQuestion:");
  const auto r = render_response_prompt(ps, d);
  CHECK(ends_with(r, "Dialog:\nUser: x\nAssistant: y\nUser: z\nAssistant:"));
  CHECK(r.rfind(kResponseInstruction, 0) == 0);
}

TEST_CASE("forward rendering is injective on the question") {
  const auto ps = PromptSet::load(q2d::test::prompts_path("qrecc"));
  std::set<std::string> prompts;
  const auto qa = q2d::test::make_qa(200);
  for (const auto& r : qa) prompts.insert(render_forward_prompt(ps, r.question));
  CHECK(prompts.size() == qa.size());
}

TEST_CASE("shipped prompt sets load") {
  for (const char* name : {"qrecc", "musique"}) {
    const auto ps = PromptSet::load(q2d::test::prompts_path(name));
    CHECK(ps.examples.size() == 3);
    CHECK(ps.instruction_reverse == "Given a dialog that asks an indirect question, extract the concrete question");
  }
}

TEST_CASE("prompt set validation") {
  auto ps = one_example();
  CHECK_NOTHROW(ps.validate());
  ps.examples[0].dialog.turns.pop_back();
  CHECK_THROWS_AS(ps.validate(), InputError);
  ps.examples.clear();
  CHECK_THROWS_AS(ps.validate(), InputError);
}

TEST_CASE("parse_dialog") {
  auto d = parse_dialog("User: a\nAssistant: b\nUser: c");
  REQUIRE(d.turns.size() == 3);
  CHECK(d.turns[2].role == Role::user);
  CHECK(d.final_text() == "c");

  try {
    parse_dialog("Assistant: only");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.raw() == "Assistant: only");
  }
  CHECK_THROWS_AS(parse_dialog("no labels here"), ParseError);
  CHECK_THROWS_AS(parse_dialog(""), ParseError);

  d = parse_dialog(" user : hi there\n  and more\nASSISTANT: yes\nUser: last?\n\nQuestion: extra\nUser: ignored");
  REQUIRE(d.turns.size() == 3);
  CHECK(d.turns[0].text == "hi there and more");
  CHECK(d.final_text() == "last?");

  d = parse_dialog("User: a\nAssistant: b\nUser: c\n\nDialog:\nUser: next example");
  CHECK(d.turns.size() == 3);
}

TEST_CASE("render/parse round trip") {
  std::mt19937 rng(1234);
  for (int i = 0; i < 300; ++i) {
    const auto d = random_dialog(rng);
    CHECK(parse_dialog(render_turns(d)) == d);
  }
}

TEST_CASE("completion cleanup") {
  CHECK(clean_reverse_completion("  Question: who built it?\nDialog:") == "who built it?");
  CHECK(clean_reverse_completion("\n\nwho built it?") == "who built it?");
  CHECK(clean_response(" Assistant: It was built in 1990.\nUser: thanks") == "It was built in 1990.");
  CHECK(clean_response("Sure.") == "Sure.");
  CHECK_THROWS_AS(clean_response("   \nUser: hi"), ParseError);
}

TEST_CASE("request keys hash the canonical request") {
  const auto ps = one_example();
  const auto a = forward_request(ps, "q");
  CHECK(a.temperature == 0.6);
  CHECK(a.max_tokens == 512);
  CHECK(a.key() == forward_request(ps, "q").key());
  CHECK(a.key() != forward_request(ps, "q", 0.7).key());
  CHECK(a.key() != forward_request(ps, "r").key());
  CHECK(LmRequest::from_json(a.to_json()).key() == a.key());
  const auto rev = reverse_request(ps, parse_dialog("User: x"));
  CHECK(rev.temperature == 0.0);
  CHECK(rev.max_tokens == 64);
}

TEST_CASE("echo backend contract") {
  const auto ps = one_example();
  EchoBackend echo;
  const auto fwd = echo.complete(forward_request(ps, "who won x"));
  const auto d = parse_dialog(fwd);
  CHECK(d.turns.size() == 2);
  CHECK(d.final_text() == "who won x");
  CHECK(clean_reverse_completion(echo.complete(reverse_request(ps, d))) == "who won x");
  CHECK(generate_response(echo, ps, d) == std::string(EchoBackend::kResponsePrefix) + "who won x");
  LmBackendConfig cfg;
  CHECK(generate_response(cfg, ps, d) == generate_response(echo, ps, d));
}

TEST_CASE("backend config validation") {
  LmBackendConfig c;
  c.kind = LmBackendConfig::Kind::http;
  CHECK_THROWS_AS(c.validate(), InputError);
  c.kind = LmBackendConfig::Kind::replay;
  CHECK_THROWS_AS(c.validate(), InputError);
  CHECK_THROWS_AS(lm_kind_from_string("gpt"), InputError);
  CHECK(lm_kind_from_string("replay") == LmBackendConfig::Kind::replay);
}

TEST_CASE("http backend records and replay reproduces") {
  TempDir dir;
  const auto ps = one_example();
  EchoBackend echo;
  auto server = q2d::test::lm_server(echo);

  LmBackendConfig cfg;
  cfg.kind = LmBackendConfig::Kind::http;
  cfg.endpoint = server->url() + "/v1/complete";
  cfg.record_path = dir / "rec.jsonl";
  std::vector<std::string> live;
  std::vector<LmRequest> reqs;
  for (const char* q : {"who won x", "where is y", "who won x"}) reqs.push_back(forward_request(ps, q));
  {
    HttpBackend http(cfg);
    for (const auto& r : reqs) live.push_back(http.complete(r));
    CHECK(http.remote_calls() == 2);
  }
  CHECK(server->requests() == 2);

  const auto lines = read_jsonl<Json>(dir / "rec.jsonl");
  REQUIRE(lines.size() == 2);
  CHECK(lines[0].at("key") == reqs[0].key());
  CHECK(lines[0].at("request") == reqs[0].to_json());
  CHECK(lines[0].at("completion") == live[0]);

  ReplayBackend replay(dir / "rec.jsonl");
  CHECK(replay.size() == 2);
  for (std::size_t i = 0; i < reqs.size(); ++i) CHECK(replay.complete(reqs[i]) == live[i]);

  const auto miss = forward_request(ps, "never asked");
  try {
    replay.complete(miss);
    FAIL("expected ReplayMissError");
  } catch (const ReplayMissError& e) {
    CHECK(e.key() == miss.key());
    CHECK(std::string(e.what()).find(miss.key()) != std::string::npos);
  }
}

TEST_CASE("http backend surfaces transport and protocol errors") {
  const auto req = forward_request(one_example(), "q");
  LmBackendConfig cfg;
  cfg.kind = LmBackendConfig::Kind::http;
  cfg.timeout = std::chrono::milliseconds(2000);

  cfg.endpoint = "http://127.0.0.1:9";
  CHECK_THROWS_AS(HttpBackend(cfg).complete(req), TransportError);

  MockServer unauthorized([](const std::string&, const std::string&) {
    return MockServer::Response{401, R"({"error":"no token"})"};
  });
  cfg.endpoint = unauthorized.url();
  CHECK_THROWS_AS(HttpBackend(cfg).complete(req), HttpStatusError);

  MockServer no_text([](const std::string&, const std::string&) { return MockServer::Response{200, R"({"t":1})"}; });
  cfg.endpoint = no_text.url();
  CHECK_THROWS_AS(HttpBackend(cfg).complete(req), ProtocolError);
}
