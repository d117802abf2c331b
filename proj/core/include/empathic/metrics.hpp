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

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace empathic::metrics {

// Sample Pearson correlation. Requires equal lengths >= 2 and non-constant
// series; raises a computation error otherwise.
double Pearson(std::span<const double> x, std::span<const double> y);

// 1-based ranks, ties sharing the average of the ranks they span.
std::vector<double> FractionalRanks(std::span<const double> x);

// Pearson over fractional ranks.
double Spearman(std::span<const double> x, std::span<const double> y);

// Kendall tau-b in O(n log n) (Knight's merge-sort count).
double KendallTau(std::span<const double> x, std::span<const double> y);

enum class Label { kDissimilar, kSimilar };
enum class ScoreScale { kLikert, kNormalized };

inline constexpr double kLikertThreshold = 2.5;
inline constexpr double kNormalizedThreshold = 0.5;

// Similar iff the score strictly exceeds the scale's midpoint.
Label Binarize(double score, ScoreScale scale);
Label BinarizeAt(double score, double threshold);

struct ClassificationScores {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool precision_undefined = false;  // no positive predictions
  bool recall_undefined = false;     // no positive gold labels
};

// "similar" is the positive class.
ClassificationScores Classify(std::span<const Label> gold, std::span<const Label> predicted);

struct RankingInstance {
  std::string query_id;
  std::vector<std::string> candidates;
  std::vector<double> human_scores;
  std::vector<double> model_scores;
};

// Fraction of instances whose model-top candidate has the maximal human score.
// Model ties go to the lexicographically smallest candidate id.
double PrecisionAt1(std::span<const RankingInstance> instances);

struct RankingCorrelations {
  double kendall = 0.0;
  double spearman = 0.0;
  std::size_t used = 0;
  std::size_t skipped = 0;  // constant human (or model) scores
};

// Per-instance tau-b and Spearman, macro-averaged.
RankingCorrelations RankingCorrelation(std::span<const RankingInstance> instances);

struct Prediction {
  std::string story_a;
  std::string story_b;
  double gold = 0.0;       // Likert 1-4
  double predicted = 0.0;  // cosine
};

struct SimilarityEval {
  double pearson_r = 0.0;
  double spearman_rho = 0.0;
  ClassificationScores classification;
  std::optional<double> p_at_1;
  std::optional<RankingCorrelations> ranking;
  std::size_t pairs = 0;
};

SimilarityEval EvaluateSimilarity(std::span<const Prediction> predictions,
                                  std::span<const RankingInstance> instances = {});

}  // namespace empathic::metrics
