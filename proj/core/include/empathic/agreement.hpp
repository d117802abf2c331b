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

#include <cstddef>
#include <vector>

#include "empathic/corpus.hpp"

namespace empathic::corpus {

// Ratings grouped by item; annotator identity is irrelevant to both measures.
using ItemRatings = std::vector<std::vector<int>>;

struct AgreementResult {
  double value = 0.0;
  std::size_t items_used = 0;
  std::size_t items_skipped = 0;  // items with fewer than two ratings
  // Alpha only: every pairable rating had the same value, so expected
  // disagreement is zero and the value is 1 by convention.
  bool degenerate = false;
};

enum class MeasurementLevel { kNominal, kOrdinal, kInterval };

// Pairwise percent agreement: two ratings agree when both fall on the same
// side of the Likert midpoint (<= 2 vs > 2).
AgreementResult PairwisePercentAgreement(const ItemRatings& items);

// Krippendorff's alpha from the coincidence matrix. Items with a single
// rating are not pairable and are skipped.
AgreementResult KrippendorffAlpha(const ItemRatings& items,
                                  MeasurementLevel level = MeasurementLevel::kOrdinal);

// Per-item ratings on one axis.
ItemRatings RatingsForAxis(const std::vector<PairAnnotation>& pairs, Axis axis);

}  // namespace empathic::corpus
