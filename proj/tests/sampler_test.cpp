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

#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "empathic/error.hpp"
#include "empathic/rng.hpp"
#include "empathic/sampler.hpp"
#include "support/fixtures.hpp"

namespace empathic::sampler {
namespace {

std::vector<ScoredPair> Scored(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<ScoredPair> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({StoryPair::Canonical("q" + std::to_string(i), "r" + std::to_string(i)),
                   rng.Uniform01()});
  }
  return out;
}

TEST(DecayWeights, NormalizedExponential) {
  const auto w = DecayWeights(100);
  double sum = 0;
  for (double x : w) sum += x;
  EXPECT_NEAR(sum, 1.0, 1e-9);
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_NEAR(w[i] / w[i - 1], std::exp(-0.5), 1e-12);
}

TEST(BinPairs, TwoHundredPairsGiveBinsOfTwo) {
  const auto binned = BinPairs(Scored(200, 1));
  ASSERT_EQ(binned.bins.size(), 100u);
  EXPECT_FALSE(binned.reduced);
  for (const auto& bin : binned.bins) EXPECT_EQ(bin.size(), 2u);
}

TEST(BinPairs, FivePairsReduceToSingletons) {
  const auto binned = BinPairs(Scored(5, 2));
  ASSERT_EQ(binned.bins.size(), 5u);
  EXPECT_TRUE(binned.reduced);
  double z = 0;
  for (int i = 0; i < 5; ++i) z += std::exp(-i / 2.0);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(binned.bins[i].size(), 1u);
    EXPECT_NEAR(binned.weights[i], std::exp(-i / 2.0) / z, 1e-12);
  }
}

TEST(BinPairs, EmptyRejected) {
  EXPECT_THROW(BinPairs({}), Error);
}

// Boundaries against a direct sort and percentile cut of the same scores.
TEST(BinPairs, BoundariesMatchSortOracle) {
  auto scored = Scored(1000, 3);
  const auto binned = BinPairs(scored);
  std::vector<double> scores;
  for (const auto& s : scored) scores.push_back(s.score);
  std::sort(scores.rbegin(), scores.rend());
  std::map<StoryPair, double> score_of;
  for (const auto& s : scored) score_of[s.pair] = s.score;
  for (std::size_t b = 0; b < 100; ++b) {
    ASSERT_EQ(binned.bins[b].size(), 10u);
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& p : binned.bins[b]) {
      lo = std::min(lo, score_of.at(p));
      hi = std::max(hi, score_of.at(p));
    }
    EXPECT_EQ(hi, scores[b * 10]);
    EXPECT_EQ(lo, scores[b * 10 + 9]);
  }
}

TEST(BinPairs, LeftoverGoesToTopBins) {
  const auto binned = BinPairs(Scored(1003, 4));
  for (std::size_t b = 0; b < 100; ++b) EXPECT_EQ(binned.bins[b].size(), b < 3 ? 11u : 10u);
  EXPECT_EQ(binned.total(), 1003u);
}

TEST(BinPairs, EveryPairInExactlyOneBin) {
  const auto scored = Scored(777, 5);
  const auto binned = BinPairs(scored);
  std::multiset<StoryPair> seen;
  for (const auto& bin : binned.bins) seen.insert(bin.begin(), bin.end());
  EXPECT_EQ(seen.size(), scored.size());
  for (const auto& s : scored) EXPECT_EQ(seen.count(s.pair), 1u);
}

TEST(SamplePairs, AllPairsWhenNEqualsTotal) {
  const auto binned = BinPairs(Scored(250, 6));
  const auto sample = SamplePairs(binned, 250, 1);
  EXPECT_EQ(std::set<StoryPair>(sample.begin(), sample.end()).size(), 250u);
}

TEST(SamplePairs, DeterministicGivenSeed) {
  const auto binned = BinPairs(Scored(500, 7));
  EXPECT_EQ(SamplePairs(binned, 100, 42), SamplePairs(binned, 100, 42));
  EXPECT_NE(SamplePairs(binned, 100, 42), SamplePairs(binned, 100, 43));
}

TEST(SamplePairs, TooManyRejected) {
  const auto binned = BinPairs(Scored(50, 8));
  EXPECT_THROW(SamplePairs(binned, 51, 0), Error);
}

TEST(SamplePairs, NoDuplicatesOrSelfPairs) {
  const auto ids = [] {
    std::vector<std::string> v;
    for (int i = 0; i < 40; ++i) v.push_back("s" + std::to_string(i));
    return v;
  }();
  std::vector<ScoredPair> scored;
  Rng rng(9);
  for (const auto& p : CandidatePairs(ids)) scored.push_back({p, rng.Uniform01()});
  const auto binned = BinPairs(scored);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto sample = SamplePairs(binned, 500, seed);
    std::set<StoryPair> unique(sample.begin(), sample.end());
    EXPECT_EQ(unique.size(), sample.size());
    for (const auto& p : sample) EXPECT_NE(p.story_a, p.story_b);
  }
}

TEST(SampleWithBins, FrequenciesFollowWeights) {
  // Bins large enough that none runs dry within the draw.
  const auto binned = BinPairs(Scored(100 * 2000, 10));
  const auto draws = SampleWithBins(binned, 2000, 11);
  std::vector<double> freq(100, 0.0);
  for (const auto& d : draws) freq[d.bin] += 1.0 / draws.size();
  double worst = 0;
  for (std::size_t b = 0; b < 100; ++b) worst = std::max(worst, std::abs(freq[b] - binned.weights[b]));
  EXPECT_LT(worst, 0.04);
}

// Mean draws per bin over many seeds must not increase with bin index.
TEST(SampleWithBins, MonotoneExpectation) {
  const auto binned = BinPairs(Scored(60, 12));  // 60 singleton-ish bins
  std::vector<double> mean(binned.bins.size(), 0.0);
  const int reps = 3000;
  for (int r = 0; r < reps; ++r) {
    for (const auto& d : SampleWithBins(binned, 20, r)) mean[d.bin] += 1.0 / reps;
  }
  for (std::size_t b = 1; b < mean.size(); ++b) {
    EXPECT_GE(mean[b - 1] + 0.03, mean[b]) << "bin " << b;
  }
  EXPECT_GT(mean.front(), mean.back());
}

TEST(SampleWithBins, ExhaustedBinsRenormalize) {
  // Two-pair bins: after the top bins drain, draws continue from the rest.
  const auto binned = BinPairs(Scored(200, 13));
  const auto draws = SampleWithBins(binned, 200, 5);
  std::vector<int> count(100, 0);
  for (const auto& d : draws) ++count[d.bin];
  for (int c : count) EXPECT_EQ(c, 2);
}

TEST(CandidatePairs, AllPairs) {
  EXPECT_EQ(CandidatePairs({"a", "b", "c", "d"}).size(), 6u);
  const auto pairs = CandidatePairs({"d", "c", "b", "a"});
  for (const auto& p : pairs) EXPECT_LT(p.story_a, p.story_b);
}

TEST(CandidatePairs, CapIsSeededSubset) {
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  const auto a = CandidatePairs(ids, 3, 1);
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(a, CandidatePairs(ids, 3, 1));
  const auto all = CandidatePairs(ids);
  for (const auto& p : a) EXPECT_NE(std::find(all.begin(), all.end(), p), all.end());
}

TEST(CandidatePairs, TrainSplitSizedCount) {
  std::vector<std::string> ids;
  for (int i = 0; i < 1176; ++i) ids.push_back("s" + std::to_string(i));
  EXPECT_EQ(CandidatePairs(ids).size(), 690900u);
}

TEST(CandidatePairs, NeedsTwoStories) {
  EXPECT_THROW(CandidatePairs({"a"}), Error);
}

TEST(ScorePairs, UsesCompositeSimilarity) {
  const auto stories = fixtures::SyntheticStories(6, 1);
  const corpus::Corpus c(stories, {});
  embedding::StubBackend stub(8, 1);
  std::vector<std::string> ids;
  for (const auto& s : stories) ids.push_back(s.id);
  const auto pairs = CandidatePairs(ids);
  const auto scored = ScorePairs(stub, c, pairs);
  ASSERT_EQ(scored.size(), pairs.size());
  for (const auto& s : scored) {
    EXPECT_NEAR(s.score,
                embedding::CompositeSimilarity(stub, c.Get(s.pair.story_a), c.Get(s.pair.story_b)),
                1e-12);
  }
}

}  // namespace
}  // namespace empathic::sampler
