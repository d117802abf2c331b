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

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace empathic::metrics {

// Lowercased word tokens; every ASCII punctuation character is its own token.
std::vector<std::string> Tokenize(std::string_view text);

struct BleuSegment {
  std::string candidate;
  std::vector<std::string> references;
};

// Corpus BLEU up to max_n with a brevity penalty against the closest reference
// length. Clipped n-gram counts are pooled over segments; for orders >= 2 the
// pooled precision is add-one smoothed, (matches + 1) / (total + 1). Zero
// unigram matches give 0.
double CorpusBleu(std::span<const BleuSegment> segments, int max_n = 4);

double Bleu(std::string_view candidate, std::span<const std::string> references,
            int max_n = 4);

struct RougeScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// ROUGE-L from the longest common token subsequence: precision over the
// candidate length, recall over the reference length.
RougeScores RougeL(std::string_view candidate, std::string_view reference);

std::size_t LcsLength(std::span<const std::string> a, std::span<const std::string> b);

}  // namespace empathic::metrics
