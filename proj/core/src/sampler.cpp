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

#include "empathic/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "empathic/error.hpp"
#include "empathic/rng.hpp"

namespace empathic::sampler {

std::size_t BinnedPairs::total() const {
  std::size_t n = 0;
  for (const auto& bin : bins) n += bin.size();
  return n;
}

std::vector<double> DecayWeights(std::size_t bins) {
  std::vector<double> w(bins);
  for (std::size_t i = 0; i < bins; ++i) w[i] = std::exp(-0.5 * static_cast<double>(i));
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= sum;
  return w;
}

BinnedPairs BinPairs(std::vector<ScoredPair> scored) {
  if (scored.empty()) {
    Fail(ErrorKind::kArgument, "sampler.empty", "no pairs to bin");
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredPair& a, const ScoredPair& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.pair < b.pair;
  });
  BinnedPairs binned;
  const std::size_t n = scored.size();
  const std::size_t bin_count = std::min(kPercentileBins, n);
  binned.reduced = bin_count < kPercentileBins;
  binned.bins.resize(bin_count);
  // Equal shares; the n mod bins leftover pairs go one each to the top bins.
  const std::size_t base = n / bin_count;
  const std::size_t extra = n % bin_count;
  std::size_t next = 0;
  for (std::size_t b = 0; b < bin_count; ++b) {
    const std::size_t size = base + (b < extra ? 1 : 0);
    auto& bin = binned.bins[b];
    bin.reserve(size);
    for (std::size_t j = 0; j < size; ++j) bin.push_back(std::move(scored[next++].pair));
  }
  binned.weights = DecayWeights(bin_count);
  return binned;
}

std::vector<SampleDraw> SampleWithBins(const BinnedPairs& binned, std::size_t n,
                                       std::uint64_t seed) {
  if (n > binned.total()) {
    Fail(ErrorKind::kArgument, "sampler.too_many",
         "requested " + std::to_string(n) + " pairs but only " +
             std::to_string(binned.total()) + " are available");
  }
  // Remaining indices per bin; drawn entries are swapped to the back.
  std::vector<std::vector<std::size_t>> remaining(binned.bins.size());
  for (std::size_t b = 0; b < binned.bins.size(); ++b) {
    remaining[b].resize(binned.bins[b].size());
    std::iota(remaining[b].begin(), remaining[b].end(), std::size_t{0});
  }
  std::vector<double> live(binned.weights);
  for (std::size_t b = 0; b < live.size(); ++b) {
    if (remaining[b].empty()) live[b] = 0.0;
  }
  double live_total = std::accumulate(live.begin(), live.end(), 0.0);

  Rng rng(seed);
  std::vector<SampleDraw> out;
  out.reserve(n);
  while (out.size() < n) {
    const double target = rng.Uniform01() * live_total;
    std::size_t bin = live.size();
    double cumulative = 0.0;
    for (std::size_t b = 0; b < live.size(); ++b) {
      if (live[b] == 0.0) continue;
      bin = b;  // last live bin absorbs rounding at the top end
      cumulative += live[b];
      if (target < cumulative) break;
    }
    auto& slots = remaining[bin];
    const std::size_t pick = rng.UniformIndex(slots.size());
    std::swap(slots[pick], slots.back());
    out.push_back({binned.bins[bin][slots.back()], bin});
    slots.pop_back();
    if (slots.empty()) {
      live[bin] = 0.0;
      live_total = std::accumulate(live.begin(), live.end(), 0.0);
    }
  }
  return out;
}

std::vector<StoryPair> SamplePairs(const BinnedPairs& binned, std::size_t n,
                                   std::uint64_t seed) {
  std::vector<StoryPair> out;
  out.reserve(n);
  for (SampleDraw& d : SampleWithBins(binned, n, seed)) out.push_back(std::move(d.pair));
  return out;
}

std::vector<StoryPair> CandidatePairs(std::vector<std::string> ids,
                                      std::optional<std::size_t> cap, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) {
    Fail(ErrorKind::kArgument, "sampler.too_few_stories", "need at least two stories");
  }
  const std::size_t n = ids.size();
  const std::size_t total = n * (n - 1) / 2;
  const std::size_t wanted = cap ? std::min(*cap, total) : total;
  std::vector<StoryPair> out;
  out.reserve(wanted);
  if (wanted == total) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) out.push_back({ids[i], ids[j]});
    }
    return out;
  }
  // Selection sampling: visit pairs in order, keeping each with probability
  // still_needed / still_unvisited.
  Rng rng(seed);
  std::size_t visited = 0;
  for (std::size_t i = 0; i < n && out.size() < wanted; ++i) {
    for (std::size_t j = i + 1; j < n && out.size() < wanted; ++j, ++visited) {
      if (rng.UniformIndex(total - visited) < wanted - out.size()) {
        out.push_back({ids[i], ids[j]});
      }
    }
  }
  return out;
}

std::vector<ScoredPair> ScorePairs(embedding::EmbeddingBackend& backend,
                                   const corpus::Corpus& corpus,
                                   const std::vector<StoryPair>& pairs) {
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (const StoryPair& p : pairs) {
    out.push_back({p, embedding::CompositeSimilarity(backend, corpus.Get(p.story_a),
                                                     corpus.Get(p.story_b))});
  }
  return out;
}

}  // namespace empathic::sampler
