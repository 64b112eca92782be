#include <benchmark/benchmark.h>

#include <random>

#include "fet/metrics.hpp"
#include "fet/selfsup.hpp"
#include "fet/training.hpp"
#include "fet/typing_model.hpp"
#include "synthetic_world.hpp"

using namespace fet;

namespace {

std::vector<EntityType> random_types(std::size_t n, std::mt19937_64& rng) {
  static const char* level[] = {"a", "b", "c", "d"};
  std::vector<EntityType> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string id = level[rng() % 4];
    for (std::size_t d = rng() % 3; d > 0; --d) id += std::string("/") + level[rng() % 4];
    out.push_back(EntityType::parse(id));
  }
  return out;
}

const fet::testing::SyntheticWorld& world() {
  static const fet::testing::SyntheticWorld w;
  return w;
}

}  // namespace

static void BM_Evaluate(benchmark::State& state) {
  std::mt19937_64 rng(1);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = random_types(n, rng);
  const auto g = random_types(n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(p, g));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Evaluate)->Arg(1000)->Arg(100000);

static void BM_JsSimilarity(benchmark::State& state) {
  std::mt19937_64 rng(2);
  std::gamma_distribution<double> gamma(0.7, 1.0);
  const auto n = static_cast<std::size_t>(state.range(0));
  std::vector<double> p(n), q(n);
  double sp = 0, sq = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sp += p[i] = gamma(rng);
    sq += q[i] = gamma(rng);
  }
  for (std::size_t i = 0; i < n; ++i) {
    p[i] /= sp;
    q[i] /= sq;
  }
  for (auto _ : state) benchmark::DoNotOptimize(js_similarity(p, q));
}
BENCHMARK(BM_JsSimilarity)->Arg(64)->Arg(4096);

static void BM_MaskDistribution(benchmark::State& state) {
  const auto backend = world().backend();
  const auto s = world().initial_state(0);
  const auto data = world().dataset("bench", 1, false, 3);
  const auto input = render(TemplateSpec::hard(HardTemplate::t3), data.examples.front());
  for (auto _ : state) benchmark::DoNotOptimize(backend.mask_distribution(input, s));
}
BENCHMARK(BM_MaskDistribution);

static void BM_PromptLossBackward(benchmark::State& state) {
  const auto backend = world().backend();
  const auto s = world().initial_state(0);
  const auto batch = render_dataset(world().dataset("bench", 3, false, 3), TemplateSpec::hard(HardTemplate::t3),
                                    world().schema());
  const LabelWordIndex index(world().verbalizer(), backend, s);
  auto grad = PromptGradient::zeros_like(s, world().verbalizer());
  for (auto _ : state) benchmark::DoNotOptimize(prompt_loss(batch, world().verbalizer(), index, backend, s, &grad));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.size()));
}
BENCHMARK(BM_PromptLossBackward);

static void BM_GeneratePairs(benchmark::State& state) {
  const auto corpus = world().linked_corpus(10000, 4);
  const auto dict = world().dictionary();
  SelfSupConfig cfg;
  cfg.c = static_cast<std::size_t>(state.range(0));
  const auto shards = static_cast<std::size_t>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(generate_pairs_sharded(corpus, dict, cfg, shards));
  state.SetItemsProcessed(state.iterations() * state.range(0) * 2);
}
BENCHMARK(BM_GeneratePairs)->Args({5000, 1})->Args({5000, 4})->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
