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

#include "empathic/agreement.hpp"

#include <map>

#include "empathic/error.hpp"

namespace empathic::corpus {

AgreementResult PairwisePercentAgreement(const ItemRatings& items) {
  AgreementResult result;
  double total = 0.0;
  for (const std::vector<int>& ratings : items) {
    if (ratings.size() < 2) {
      ++result.items_skipped;
      continue;
    }
    std::size_t agreeing = 0, pairs = 0;
    for (std::size_t i = 0; i < ratings.size(); ++i) {
      for (std::size_t j = i + 1; j < ratings.size(); ++j) {
        ++pairs;
        if ((ratings[i] > 2) == (ratings[j] > 2)) ++agreeing;
      }
    }
    total += static_cast<double>(agreeing) / static_cast<double>(pairs);
    ++result.items_used;
  }
  if (result.items_used == 0) {
    Fail(ErrorKind::kComputation, "agreement.no_items",
         "no item carries two or more ratings");
  }
  result.value = total / static_cast<double>(result.items_used);
  return result;
}

AgreementResult KrippendorffAlpha(const ItemRatings& items, MeasurementLevel level) {
  AgreementResult result;
  // Coincidence matrix over the observed values, kept sorted for the ordinal
  // metric's cumulative marginals.
  std::map<int, std::size_t> value_index;
  for (const std::vector<int>& ratings : items) {
    if (ratings.size() < 2) continue;
    for (int v : ratings) value_index.emplace(v, 0);
  }
  if (value_index.empty()) {
    Fail(ErrorKind::kComputation, "agreement.no_items",
         "no item carries two or more ratings");
  }
  std::vector<int> values;
  for (auto& [v, idx] : value_index) {
    idx = values.size();
    values.push_back(v);
  }
  const std::size_t k = values.size();
  std::vector<std::vector<double>> coincidence(k, std::vector<double>(k, 0.0));

  for (const std::vector<int>& ratings : items) {
    const std::size_t m = ratings.size();
    if (m < 2) {
      ++result.items_skipped;
      continue;
    }
    ++result.items_used;
    std::vector<double> counts(k, 0.0);
    for (int v : ratings) counts[value_index[v]] += 1.0;
    const double weight = 1.0 / static_cast<double>(m - 1);
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0.0) continue;
      for (std::size_t d = 0; d < k; ++d) {
        const double pairs = c == d ? counts[c] * (counts[c] - 1.0) : counts[c] * counts[d];
        coincidence[c][d] += pairs * weight;
      }
    }
  }

  std::vector<double> marginal(k, 0.0);
  double n = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) marginal[c] += coincidence[c][d];
    n += marginal[c];
  }

  auto delta2 = [&](std::size_t c, std::size_t d) -> double {
    if (c == d) return 0.0;
    switch (level) {
      case MeasurementLevel::kNominal:
        return 1.0;
      case MeasurementLevel::kInterval: {
        const double diff = values[c] - values[d];
        return diff * diff;
      }
      case MeasurementLevel::kOrdinal: {
        const std::size_t lo = std::min(c, d), hi = std::max(c, d);
        double span = 0.0;
        for (std::size_t g = lo; g <= hi; ++g) span += marginal[g];
        span -= (marginal[c] + marginal[d]) / 2.0;
        return span * span;
      }
    }
    return 0.0;
  };

  double observed = 0.0, expected = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t d = 0; d < k; ++d) {
      const double delta = delta2(c, d);
      observed += coincidence[c][d] * delta;
      expected += marginal[c] * marginal[d] * delta;
    }
  }
  observed /= n;
  expected /= n * (n - 1.0);
  if (expected == 0.0) {
    result.value = 1.0;
    result.degenerate = true;
    return result;
  }
  result.value = 1.0 - observed / expected;
  return result;
}

ItemRatings RatingsForAxis(const std::vector<PairAnnotation>& pairs, Axis axis) {
  ItemRatings items;
  items.reserve(pairs.size());
  for (const PairAnnotation& p : pairs) {
    std::vector<int>& ratings = items.emplace_back();
    for (const AnnotatorRating& r : p.ratings) ratings.push_back(r[axis]);
  }
  return items;
}

}  // namespace empathic::corpus
