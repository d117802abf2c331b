// Copyright 2026 The Empathic Retrieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstddef>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "empathic/corpus.hpp"
#include "empathic/embedding.hpp"
#include "empathic/metrics.hpp"
#include "empathic/retrieval.hpp"
#include "empathic/rng.hpp"
#include "empathic/simhead.hpp"

namespace {

using namespace empathic;

embedding::EmbeddingVector RandomVector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.Normal();
  return embedding::EmbeddingVector(std::move(v));
}

std::vector<corpus::Story> Stories(std::size_t n) {
  static const char* kWords[] = {"rain", "train", "mother", "late", "lost", "found", "letter",
                                 "dog", "winter", "promise", "kitchen", "fight", "laugh"};
  Rng rng(n);
  std::vector<corpus::Story> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = "s" + std::to_string(i);
    for (int w = 0; w < 40; ++w) out[i].text += std::string(kWords[rng.UniformIndex(13)]) + " ";
  }
  return out;
}

void BM_RetrievalScan(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  embedding::StubBackend backend(256, 1);
  const auto head = simhead::ProjectionHead::NoisyIdentity(256, backend.name(), 0.05, 2);
  const auto index = retrieval::BuildIndex(Stories(n), backend, head).index;
  Rng rng(3);
  const auto query = simhead::Project(head, RandomVector(rng, 256));
  for (auto _ : state) {
    benchmark::DoNotOptimize(retrieval::QueryVector(index, query, 5));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_RetrievalScan)->RangeMultiplier(4)->Range(256, 16384)->Complexity();

void BM_KendallTau(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<double>(rng.UniformIndex(50));
    y[i] = x[i] + rng.Normal() * 10.0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(metrics::KendallTau(x, y));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KendallTau)->RangeMultiplier(4)->Range(64, 65536)->Complexity(benchmark::oNLogN);

void BM_PairGradient(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const auto head = simhead::ProjectionHead::NoisyIdentity(dim, "bench", 0.1, 6);
  const auto u = RandomVector(rng, dim), v = RandomVector(rng, dim);
  for (auto _ : state) benchmark::DoNotOptimize(simhead::PairLossGradient(head, u, v, 0.4));
}
BENCHMARK(BM_PairGradient)->Arg(64)->Arg(384)->Arg(768);

// one epoch over 1000 pairs, batch 8
void BM_TrainEpoch(benchmark::State& state) {
  const auto dim = static_cast<std::size_t>(state.range(0));
  Rng rng(7);
  std::vector<simhead::TrainingPair> pairs;
  for (int i = 0; i < 1000; ++i) {
    pairs.push_back({RandomVector(rng, dim), RandomVector(rng, dim), rng.Uniform01()});
  }
  simhead::TrainConfig config;
  config.epochs = 1;
  const auto init = simhead::ProjectionHead::Identity(dim, "bench");
  for (auto _ : state) benchmark::DoNotOptimize(simhead::Train(init, pairs, {}, config));
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_TrainEpoch)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
