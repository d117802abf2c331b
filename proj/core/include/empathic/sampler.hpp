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

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "empathic/corpus.hpp"
#include "empathic/embedding.hpp"

namespace empathic::sampler {

using corpus::StoryPair;

struct ScoredPair {
  StoryPair pair;
  double score = 0.0;
};

inline constexpr std::size_t kPercentileBins = 100;

// Pairs cut into equal-population bins by descending composite similarity.
// Bin 0 holds the highest-similarity percentile; weight_i is proportional to
// exp(-i/2).
struct BinnedPairs {
  std::vector<std::vector<StoryPair>> bins;
  std::vector<double> weights;
  // Fewer than kPercentileBins pairs were supplied, so each pair got its own bin.
  bool reduced = false;

  std::size_t total() const;
};

// Normalized exp(-i/2) weights for the given bin count.
std::vector<double> DecayWeights(std::size_t bins);

BinnedPairs BinPairs(std::vector<ScoredPair> scored);

// Draws n distinct pairs: each draw picks a non-empty bin by renormalized
// weight, then a uniform pair inside it.
std::vector<StoryPair> SamplePairs(const BinnedPairs& binned, std::size_t n,
                                   std::uint64_t seed);

// Same draws, also reporting the bin index each pair came from.
struct SampleDraw {
  StoryPair pair;
  std::size_t bin = 0;
};
std::vector<SampleDraw> SampleWithBins(const BinnedPairs& binned, std::size_t n,
                                       std::uint64_t seed);

// All unordered pairs of the given ids, or a seeded uniform subset of size cap.
std::vector<StoryPair> CandidatePairs(std::vector<std::string> ids,
                                      std::optional<std::size_t> cap = std::nullopt,
                                      std::uint64_t seed = 0);

std::vector<ScoredPair> ScorePairs(embedding::EmbeddingBackend& backend,
                                   const corpus::Corpus& corpus,
                                   const std::vector<StoryPair>& pairs);

}  // namespace empathic::sampler
