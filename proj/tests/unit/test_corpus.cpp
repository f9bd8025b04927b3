#include <doctest.h>

#include "q2d/corpus.hpp"
#include "q2d/error.hpp"
#include "q2d/hashing.hpp"
#include "test_support.hpp"

using namespace q2d;
using q2d::test::TempDir;
using q2d::test::read_text;
using q2d::test::write_text;

namespace {

GeneratedSample sample(int i) {
  GeneratedSample s;
  s.id = "s" + std::to_string(i);
  s.source_question = "who built tower " + std::to_string(i);
  s.answer = i % 3 == 0 ? "" : "builder " + std::to_string(i);
  s.dialog.turns = {{Role::user, "tell me about tower " + std::to_string(i)},
                    {Role::assistant, "It is tall. \"Quoted\" and ünïcode ✓"},
                    {Role::user, "who built it?"}};
  s.reversed_question = "who built tower " + std::to_string(i);
  s.scores = {1.0, 0.0, 0.25 * (i % 4), i % 2 ? std::optional<double>(0.5) : std::nullopt};
  if (i % 4 == 3) {
    s.verdict = {false, {FilterName::last_turn}};
  }
  return s;
}

}  // namespace

TEST_CASE("read_jsonl parses qa records in order") {
  TempDir dir;
  const auto p = dir / "a.qa.jsonl";
  write_text(p,
             "{\"id\":\"nq-1\",\"question\":\"who played ardra on star trek the next generation\","
             "\"answer\":\"Marta DuBois\"}\n"
             "{\"id\":\"nq-2\",\"question\":\"where is henry cavill from\",\"answer\":\"\"}\n"
             "\n"
             "{\"id\":\"nq-3\",\"question\":\"why was the wall built\",\"answer\":\"defence\",\"meta\":{\"src\":\"x\"}}\n");
  const auto recs = read_jsonl<QaRecord>(p);
  REQUIRE(recs.size() == 3);
  CHECK(recs[0].id == "nq-1");
  CHECK(recs[0].question == "who played ardra on star trek the next generation");
  CHECK(recs[0].answer == "Marta DuBois");
  CHECK(recs[1].answer.empty());
  CHECK(recs[2].meta.at("src") == "x");
}

TEST_CASE("read_jsonl reports the failing line") {
  TempDir dir;
  const auto p = dir / "bad.qa.jsonl";
  write_text(p, "{\"id\":\"a\",\"question\":\"q one\",\"answer\":\"\"}\n{\"id\":\"b\",\"answer\":\"x\"}\n");
  try {
    (void)read_jsonl<QaRecord>(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("question") != std::string::npos);
  }

  write_text(p, "{\"id\":\"a\",\"question\":\"q one\"}\nnot json\n");
  CHECK_THROWS_AS(read_jsonl<QaRecord>(p), DataError);

  write_text(p, "{\"id\":\"a\",\"question\":\"   \"}\n");
  CHECK_THROWS_AS(read_jsonl<QaRecord>(p), DataError);
}

TEST_CASE("duplicate ids name both lines") {
  TempDir dir;
  const auto p = dir / "dup.qa.jsonl";
  write_text(p,
             "{\"id\":\"a\",\"question\":\"one\"}\n{\"id\":\"b\",\"question\":\"two\"}\n"
             "{\"id\":\"a\",\"question\":\"three\"}\n");
  try {
    (void)read_jsonl<QaRecord>(p);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("samples round-trip through write/read") {
  TempDir dir;
  std::vector<GeneratedSample> xs;
  for (int i = 0; i < 10; ++i) xs.push_back(sample(i));
  CHECK(write_jsonl(dir / "a.jsonl", xs) == 10);
  CHECK(read_jsonl<GeneratedSample>(dir / "a.jsonl") == xs);

  write_jsonl(dir / "b.jsonl", xs);
  CHECK(sha256_file(dir / "a.jsonl") == sha256_file(dir / "b.jsonl"));
}

TEST_CASE("empty sequence writes an empty file") {
  TempDir dir;
  CHECK(write_jsonl(dir / "e.jsonl", std::vector<GeneratedSample>{}) == 0);
  CHECK(read_text(dir / "e.jsonl").empty());
  CHECK(read_jsonl<GeneratedSample>(dir / "e.jsonl").empty());
}

TEST_CASE("canonical serialization sorts keys and is stable") {
  Json j = sample(1);
  const auto a = canonical_dump(j);
  CHECK(a == canonical_dump(Json::parse(a)));
  CHECK(a.find('\n') == std::string::npos);
  CHECK(a.find("\"answer\"") < a.find("\"dialog\""));
  CHECK(a.find("\"dialog\"") < a.find("\"id\""));
  CHECK_THROWS(canonical_dump(Json("\xff\xfe")));
}

TEST_CASE("verdict and score invariants are enforced on read") {
  Json j = sample(3);
  j["verdict"]["retained"] = true;  // failures listed but retained
  CHECK_THROWS_AS(j.get<GeneratedSample>(), InputError);

  j = sample(2);
  j["scores"]["intent_similarity"] = 1.5;
  CHECK_THROWS_AS(j.get<GeneratedSample>(), InputError);

  j = sample(2);
  j["dialog"][0]["role"] = "system";
  CHECK_THROWS_AS(j.get<GeneratedSample>(), InputError);
}

TEST_CASE("validate_dialog") {
  Dialog d;
  CHECK_THROWS_AS(validate_dialog(d), InputError);
  d.turns = {{Role::user, "a"}, {Role::assistant, "b"}};
  CHECK_THROWS_AS(validate_dialog(d), InputError);
  d.turns.push_back({Role::user, "c"});
  CHECK_NOTHROW(validate_dialog(d));
  d.turns[1].text.clear();
  CHECK_THROWS_AS(validate_dialog(d), InputError);
}

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
