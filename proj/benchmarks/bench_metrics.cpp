#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "q2d/filter.hpp"
#include "q2d/llm.hpp"
#include "q2d/scoring.hpp"
#include "q2d/textmetrics.hpp"

namespace {

const std::string kDialog =
    "User: I've been rewatching star trek the next generation. Assistant: It is a great show, it ran for seven "
    "seasons and had many memorable guest characters. User: there is an episode where a woman claims to be the "
    "devil Ardra. Assistant: That is Devil's Due, where a con artist poses as Ardra. User: who played the character?";

void BM_Tokenize(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(q2d::tokenize(kDialog));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * kDialog.size()));
}
BENCHMARK(BM_Tokenize);

void BM_AnswerLeak(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(q2d::contains_overlap(kDialog, "Marta DuBois"));
}
BENCHMARK(BM_AnswerLeak);

void BM_Rouge1PreTokenized(benchmark::State& state) {
  const auto ref = q2d::tokenize("who played ardra on star trek the next generation");
  const auto cand = q2d::tokenize(kDialog);
  for (auto _ : state) benchmark::DoNotOptimize(q2d::rouge1_recall(ref, cand));
}
BENCHMARK(BM_Rouge1PreTokenized);

void BM_BuiltinEmbed(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(q2d::builtin_embed(kDialog));
}
BENCHMARK(BM_BuiltinEmbed);

void BM_Sweep(benchmark::State& state) {
  std::vector<q2d::FilterScores> scores(static_cast<std::size_t>(state.range(0)));
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i].intent_similarity = static_cast<double>(i % 1000) / 1000.0;
  for (auto _ : state) benchmark::DoNotOptimize(q2d::sweep_thresholds(scores, q2d::kAblationGrid));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Sweep)->Arg(1000)->Arg(100000);

void BM_ParseDialog(benchmark::State& state) {
  const std::string completion =
      "User: where is the great wall of china located\nAssistant: It is built across the historical northern "
      "borders of China.\nUser: how long is the wall\nAssistant: The Great Wall is 21,196 km.\nUser: why was it built";
  for (auto _ : state) benchmark::DoNotOptimize(q2d::parse_dialog(completion));
}
BENCHMARK(BM_ParseDialog);

}  // namespace
BENCHMARK_MAIN();
