#include <benchmark/benchmark.h>

#include <random>

#include "sail/embedding_store.hpp"
#include "sail/probe.hpp"
#include "sail/random.hpp"
#include "sail/retrieval.hpp"
#include "sail/sae.hpp"

using namespace sail;

namespace {

Matrix gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  auto rng = make_rng(seed, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix m(rows, cols);
  for (auto& v : m.values()) v = g(rng);
  return m;
}

SaeConfig matryoshka(std::size_t d, std::size_t top) {
  return {d, {top / 64, top / 16, top / 4, top}, {16, 32, 64, 128}};
}

void BM_BatchTopK(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto cfg = matryoshka(64, 4096);
  auto z = gaussian(batch, cfg.dict_size(), 1);
  for (auto& v : z.values()) v = std::max(0.0, v);
  for (auto _ : state) benchmark::DoNotOptimize(batch_topk(z, cfg.levels(), cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_BatchTopK)->Arg(64)->Arg(256);

void BM_ForwardBackward(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  const auto cfg = matryoshka(64, 1024);
  const auto x = gaussian(batch, cfg.input_dim, 2);
  const std::vector<double> mean(cfg.input_dim, 0.0);
  const auto params = init_params(cfg, 3, mean);
  for (auto _ : state) benchmark::DoNotOptimize(forward_backward(params, x, cfg));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(batch));
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(128);

void BM_EncodeInference(benchmark::State& state) {
  const auto cfg = matryoshka(64, 1024);
  const auto x = gaussian(256, cfg.input_dim, 4);
  const std::vector<double> mean(cfg.input_dim, 0.0);
  const auto params = init_params(cfg, 5, mean);
  for (auto _ : state) benchmark::DoNotOptimize(encode_inference(params, x, cfg, cfg.levels()));
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_EncodeInference);

RetrievalIndex random_index(std::size_t n, std::size_t features, std::size_t k) {
  auto rng = make_rng(6, 0);
  std::uniform_int_distribution<std::uint32_t> pick(0, static_cast<std::uint32_t>(features - 1));
  std::uniform_real_distribution<double> u(0.01, 1.0);
  std::vector<std::string> ids;
  std::vector<Fingerprint> fps;
  for (std::size_t i = 0; i < n; ++i) {
    ids.push_back("s" + std::to_string(i));
    SparseCode c;
    std::vector<std::uint32_t> idx;
    while (idx.size() < k) {
      const auto j = pick(rng);
      if (std::find(idx.begin(), idx.end(), j) == idx.end()) idx.push_back(j);
    }
    std::sort(idx.begin(), idx.end());
    for (auto j : idx) c.entries.push_back({j, u(rng)});
    fps.push_back(fingerprint(c, k));
  }
  return RetrievalIndex(ids, fps, gaussian(n, 32, 7));
}

void BM_RetrieveScan(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto index = random_index(n, 8192, 20);
  std::size_t q = 0;
  for (auto _ : state) benchmark::DoNotOptimize(retrieve(index.fingerprints()[q++ % n], index, 5));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_RetrieveScan)->Arg(1000)->Arg(10000);

void BM_RocAuc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto rng = make_rng(8, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> scores(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = i % 4 == 0;
    scores[i] = g(rng) + labels[i];
  }
  for (auto _ : state) benchmark::DoNotOptimize(roc_auc(scores, labels));
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n));
}
BENCHMARK(BM_RocAuc)->Arg(1000)->Arg(100000);

void BM_SynthDataset(benchmark::State& state) {
  SynthSpec spec;
  spec.n_samples = 2000;
  for (auto _ : state) benchmark::DoNotOptimize(synth_dataset(spec));
}
BENCHMARK(BM_SynthDataset);

}  // namespace

BENCHMARK_MAIN();
