#include <benchmark/benchmark.h>

#include <random>

#include "calltide/chunking.hpp"
#include "calltide/classify.hpp"
#include "calltide/text_prep.hpp"

using namespace calltide;

namespace {

const std::vector<std::string> kWords{"revenue", "growing",  "margins",   "expanded", "guidance", "analysts",
                                      "quarter", "declined", "operating", "strongly", "the",      "and",
                                      "cash",    "flows",    "increased", "headwinds"};

std::string synthetic_text(std::size_t words, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::string out;
    for (std::size_t i = 0; i < words; ++i) {
        if (i) out += (i % 17 == 0) ? ". " : " ";
        out += kWords[rng() % kWords.size()];
    }
    return out;
}

void BM_PorterStem(benchmark::State& state) {
    std::size_t i = 0;
    for (auto _ : state) benchmark::DoNotOptimize(porter_stem(kWords[i++ % kWords.size()]));
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_PorterStem);

void BM_Preprocess(benchmark::State& state) {
    const std::string text = synthetic_text(static_cast<std::size_t>(state.range(0)), 1);
    for (auto _ : state) benchmark::DoNotOptimize(preprocess(text));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Preprocess)->Arg(1'000)->Arg(10'000);

void BM_Chunk(benchmark::State& state) {
    const Tokens tokens = tokenize(synthetic_text(static_cast<std::size_t>(state.range(0)), 2));
    for (auto _ : state) benchmark::DoNotOptimize(chunk("T", tokens, 384));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Chunk)->Arg(10'000);

void BM_BaselineScore(benchmark::State& state) {
    std::vector<TrainingDocument> docs;
    for (int c = 0; c < 3; ++c) {
        for (std::uint64_t k = 0; k < 50; ++k) {
            docs.push_back({preprocess(synthetic_text(200, 100 * c + k)), static_cast<Label>(c)});
        }
    }
    BaselineClassifier clf(train_baseline(docs));
    const std::string query = join_tokens(preprocess(synthetic_text(384, 9)));
    for (auto _ : state) benchmark::DoNotOptimize(clf.score(query));
}
BENCHMARK(BM_BaselineScore);

}  // namespace

BENCHMARK_MAIN();
