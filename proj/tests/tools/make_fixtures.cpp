// Regenerates the files under tests/fixtures/. Run after changing prompt
// templates or the shipped prompt sets:
//   q2d_make_fixtures <repo>/tests/fixtures <repo>/prompts/qrecc.json

#include <filesystem>
#include <iostream>

#include "q2d/corpus.hpp"
#include "q2d/eval.hpp"
#include "q2d/llm.hpp"
#include "q2d/scoring.hpp"

namespace fs = std::filesystem;
using namespace q2d;

namespace {

const char* const kQuestion = "Who played Ardra on star trek the next generation?";
const char* const kAnswer = "Marta DuBois";
const char* const kForward =
    "\nUser: I've been rewatching star trek the next generation\n"
    "Assistant: It is a great show. It ran for seven seasons and had many memorable guest characters.\n"
    "User: there is an episode where a woman claims to be the devil Ardra\n"
    "Assistant: That is the season four episode Devil's Due, where a con artist poses as Ardra to claim a planet.\n"
    "User: who played the character?";
const char* const kReverse = " Who played Ardra on star trek the next generation?";

void ardra(const fs::path& dir, const PromptSet& ps) {
  fs::create_directories(dir);
  QaRecord qa{"nq-ardra", kQuestion, kAnswer, {{"source", "natural_questions"}}};
  write_jsonl(dir / "qa.jsonl", std::vector<QaRecord>{qa});

  const auto fwd = forward_request(ps, kQuestion);
  const auto dialog = parse_dialog(kForward);
  const auto rev = reverse_request(ps, dialog);
  JsonlWriter replay(dir / "replay.jsonl");
  replay.write_line(canonical_dump(Json{{"key", fwd.key()}, {"request", fwd.to_json()}, {"completion", kForward}}));
  replay.write_line(canonical_dump(Json{{"key", rev.key()}, {"request", rev.to_json()}, {"completion", kReverse}}));

  // Embedding responses as a remote scorer would cache them.
  fs::remove(dir / "scores.jsonl");
  ScoreCache cache(dir / "scores.jsonl");
  for (const std::string text : {std::string(kQuestion), clean_reverse_completion(kReverse), dialog.final_text()}) {
    cache.insert(ScoreCache::embed_key(text), "embed",
                 Json{{"vectors", {builtin_embed(text).values}}, {"dim", kBuiltinEmbeddingDim}});
  }
}

std::vector<std::string> urls(const std::string& host, int from, int to) {
  std::vector<std::string> out;
  for (int i = from; i < to; ++i) out.push_back("https://" + host + "/wiki/Page_" + std::to_string(i));
  return out;
}

void recall(const fs::path& dir) {
  fs::create_directories(dir);
  fs::remove(dir / "pages.jsonl");
  auto add = [&](const std::string& q, std::vector<std::string> u) {
    append_fixture(dir / "pages.jsonl", SearchResultPage::make(q, u));
  };
  add("who played ardra on star trek the next generation", urls("en.wikipedia.org", 0, 10));
  add("capital of assam", urls("assam.example.org", 0, 10));
  // five shared with the first page, five new
  auto mixed = urls("en.wikipedia.org", 5, 10);
  for (const auto& u : urls("fandom.example.com", 0, 5)) mixed.push_back(u);
  add("ardra star trek actress", mixed);
  // same pages as the first query, spelled differently
  std::vector<std::string> variants;
  for (const auto& u : urls("En.Wikipedia.org", 0, 10)) variants.push_back(u + "/");
  variants[0] = "http://en.wikipedia.org/wiki/Page_0#Cast";
  add("ardra actor next generation", variants);

  std::vector<EvalRecord> recs{
      {"identical", parse_dialog("User: who played ardra on star trek the next generation"),
       "who played ardra on star trek the next generation", "who played ardra on star trek the next generation"},
      {"disjoint", parse_dialog("User: I love star trek\nAssistant: Me too.\nUser: who played ardra?"),
       "who played ardra on star trek the next generation", "capital of assam"},
      {"half", parse_dialog("User: I love star trek\nAssistant: Me too.\nUser: who played ardra?"),
       "who played ardra on star trek the next generation", "ardra star trek actress"},
      {"normalized", parse_dialog("User: I love star trek\nAssistant: Me too.\nUser: who played ardra?"),
       "who played ardra on star trek the next generation", "ardra actor next generation"},
  };
  write_jsonl(dir / "predictions.eval.jsonl", recs);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: q2d_make_fixtures <fixtures-dir> <qrecc-prompts.json>\n";
    return 2;
  }
  try {
    const fs::path root = argv[1];
    ardra(root / "ardra", PromptSet::load(argv[2]));
    recall(root / "recall");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
