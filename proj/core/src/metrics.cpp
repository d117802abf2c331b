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

#include "empathic/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "empathic/error.hpp"

namespace empathic::metrics {
namespace {

void CheckPaired(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    Fail(ErrorKind::kArgument, "metrics.length_mismatch",
         "series lengths differ: " + std::to_string(x.size()) + " vs " +
             std::to_string(y.size()));
  }
  if (x.size() < 2) {
    Fail(ErrorKind::kArgument, "metrics.too_short", "need at least two observations");
  }
}

// Counts inversions of v while merge-sorting it in place.
std::uint64_t CountSwaps(std::vector<double>& v, std::vector<double>& scratch,
                         std::size_t lo, std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::uint64_t swaps = CountSwaps(v, scratch, lo, mid) + CountSwaps(v, scratch, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      swaps += mid - i;
      scratch[k++] = v[j++];
    } else {
      scratch[k++] = v[i++];
    }
  }
  while (i < mid) scratch[k++] = v[i++];
  while (j < hi) scratch[k++] = v[j++];
  std::copy(scratch.begin() + lo, scratch.begin() + hi, v.begin() + lo);
  return swaps;
}

// Number of tied pairs in a sorted sequence.
template <typename Eq>
std::uint64_t TiedPairs(std::size_t n, Eq equal) {
  std::uint64_t pairs = 0;
  std::size_t run = 1;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i < n && equal(i - 1, i)) {
      ++run;
    } else {
      pairs += static_cast<std::uint64_t>(run) * (run - 1) / 2;
      run = 1;
    }
  }
  return pairs;
}

}  // namespace

double Pearson(std::span<const double> x, std::span<const double> y) {
  CheckPaired(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    Fail(ErrorKind::kComputation, "metrics.constant_series",
         "correlation undefined for a constant series");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> FractionalRanks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && x[order[j]] == x[order[i]]) ++j;
    const double rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = rank;
    i = j;
  }
  return ranks;
}

double Spearman(std::span<const double> x, std::span<const double> y) {
  CheckPaired(x, y);
  const std::vector<double> rx = FractionalRanks(x);
  const std::vector<double> ry = FractionalRanks(y);
  return Pearson(rx, ry);
}

double KendallTau(std::span<const double> x, std::span<const double> y) {
  CheckPaired(x, y);
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return y[a] < y[b];
  });
  const std::uint64_t x_ties =
      TiedPairs(n, [&](std::size_t i, std::size_t j) { return x[order[i]] == x[order[j]]; });
  const std::uint64_t joint_ties = TiedPairs(n, [&](std::size_t i, std::size_t j) {
    return x[order[i]] == x[order[j]] && y[order[i]] == y[order[j]];
  });
  std::vector<double> ys(n), scratch(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = y[order[i]];
  const std::uint64_t swaps = CountSwaps(ys, scratch, 0, n);
  const std::uint64_t y_ties =
      TiedPairs(n, [&](std::size_t i, std::size_t j) { return ys[i] == ys[j]; });

  const double total = static_cast<double>(n) * static_cast<double>(n - 1) / 2.0;
  const double untied_x = total - static_cast<double>(x_ties);
  const double untied_y = total - static_cast<double>(y_ties);
  if (untied_x == 0.0 || untied_y == 0.0) {
    Fail(ErrorKind::kComputation, "metrics.all_tied",
         "Kendall tau undefined when every pair is tied in one series");
  }
  const double s = total - static_cast<double>(x_ties) - static_cast<double>(y_ties) +
                   static_cast<double>(joint_ties) - 2.0 * static_cast<double>(swaps);
  return std::clamp(s / std::sqrt(untied_x * untied_y), -1.0, 1.0);
}

Label BinarizeAt(double score, double threshold) {
  return score > threshold ? Label::kSimilar : Label::kDissimilar;
}

Label Binarize(double score, ScoreScale scale) {
  return BinarizeAt(score, scale == ScoreScale::kLikert ? kLikertThreshold
                                                        : kNormalizedThreshold);
}

ClassificationScores Classify(std::span<const Label> gold, std::span<const Label> predicted) {
  if (gold.size() != predicted.size() || gold.empty()) {
    Fail(ErrorKind::kArgument, "metrics.length_mismatch",
         "gold and predicted labels must be equal-length and non-empty");
  }
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const bool g = gold[i] == Label::kSimilar;
    const bool p = predicted[i] == Label::kSimilar;
    if (g && p) ++tp;
    else if (!g && p) ++fp;
    else if (g && !p) ++fn;
    else ++tn;
  }
  ClassificationScores s;
  s.accuracy = static_cast<double>(tp + tn) / static_cast<double>(gold.size());
  s.precision_undefined = tp + fp == 0;
  s.recall_undefined = tp + fn == 0;
  s.precision = s.precision_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  s.recall = s.recall_undefined ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  s.f1 = s.precision + s.recall == 0.0
             ? 0.0
             : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

namespace {

void CheckInstance(const RankingInstance& inst) {
  if (inst.candidates.size() < 2) {
    Fail(ErrorKind::kArgument, "metrics.bad_instance",
         "ranking instance '" + inst.query_id + "' needs at least two candidates");
  }
  if (inst.human_scores.size() != inst.candidates.size() ||
      inst.model_scores.size() != inst.candidates.size()) {
    Fail(ErrorKind::kArgument, "metrics.bad_instance",
         "ranking instance '" + inst.query_id + "' has mismatched score lengths");
  }
}

bool IsConstant(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

}  // namespace

double PrecisionAt1(std::span<const RankingInstance> instances) {
  if (instances.empty()) {
    Fail(ErrorKind::kArgument, "metrics.no_instances", "no ranking instances");
  }
  std::size_t hits = 0;
  for (const RankingInstance& inst : instances) {
    CheckInstance(inst);
    std::size_t top = 0;
    for (std::size_t i = 1; i < inst.candidates.size(); ++i) {
      const double s = inst.model_scores[i], best = inst.model_scores[top];
      if (s > best || (s == best && inst.candidates[i] < inst.candidates[top])) top = i;
    }
    const double human_max =
        *std::max_element(inst.human_scores.begin(), inst.human_scores.end());
    if (inst.human_scores[top] == human_max) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(instances.size());
}

RankingCorrelations RankingCorrelation(std::span<const RankingInstance> instances) {
  RankingCorrelations out;
  double tau_sum = 0.0, rho_sum = 0.0;
  for (const RankingInstance& inst : instances) {
    CheckInstance(inst);
    if (IsConstant(inst.human_scores) || IsConstant(inst.model_scores)) {
      ++out.skipped;
      continue;
    }
    tau_sum += KendallTau(inst.model_scores, inst.human_scores);
    rho_sum += Spearman(inst.model_scores, inst.human_scores);
    ++out.used;
  }
  if (out.used == 0) {
    Fail(ErrorKind::kComputation, "metrics.no_instances",
         "every ranking instance was skipped for constant scores");
  }
  out.kendall = tau_sum / static_cast<double>(out.used);
  out.spearman = rho_sum / static_cast<double>(out.used);
  return out;
}

SimilarityEval EvaluateSimilarity(std::span<const Prediction> predictions,
                                  std::span<const RankingInstance> instances) {
  std::vector<double> gold, predicted;
  std::vector<Label> gold_labels, predicted_labels;
  for (const Prediction& p : predictions) {
    gold.push_back(p.gold);
    predicted.push_back(p.predicted);
    gold_labels.push_back(Binarize(p.gold, ScoreScale::kLikert));
    predicted_labels.push_back(Binarize(p.predicted, ScoreScale::kNormalized));
  }
  SimilarityEval eval;
  eval.pairs = predictions.size();
  eval.pearson_r = Pearson(predicted, gold);
  eval.spearman_rho = Spearman(predicted, gold);
  eval.classification = Classify(gold_labels, predicted_labels);
  if (!instances.empty()) {
    eval.p_at_1 = PrecisionAt1(instances);
    eval.ranking = RankingCorrelation(instances);
  }
  return eval;
}

}  // namespace empathic::metrics
