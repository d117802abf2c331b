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

#include "empathic/text_metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "empathic/error.hpp"

namespace empathic::metrics {
namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts CountNgrams(const std::vector<std::string>& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

std::vector<std::string> RequireTokens(std::string_view text, const char* what) {
  std::vector<std::string> tokens = Tokenize(text);
  if (tokens.empty()) {
    Fail(ErrorKind::kComputation, "metrics.empty_tokens",
         std::string(what) + " has no tokens after tokenization");
  }
  return tokens;
}

}  // namespace

std::vector<std::string> Tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string word;
  auto flush = [&] {
    if (!word.empty()) tokens.push_back(std::move(word));
    word.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (c >= 0x80 || std::isalnum(c)) {
      word.push_back(static_cast<char>(std::tolower(c)));
    } else if (std::isspace(c)) {
      flush();
    } else {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

double CorpusBleu(std::span<const BleuSegment> segments, int max_n) {
  if (segments.empty() || max_n < 1) {
    Fail(ErrorKind::kArgument, "metrics.bad_bleu_input", "BLEU needs segments and max_n >= 1");
  }
  std::vector<double> matches(max_n, 0.0), totals(max_n, 0.0);
  double candidate_length = 0.0, reference_length = 0.0;
  for (const BleuSegment& seg : segments) {
    const std::vector<std::string> cand = RequireTokens(seg.candidate, "candidate");
    if (seg.references.empty()) {
      Fail(ErrorKind::kComputation, "metrics.empty_tokens", "BLEU needs a reference");
    }
    std::vector<std::vector<std::string>> refs;
    for (const std::string& r : seg.references) refs.push_back(RequireTokens(r, "reference"));

    for (int n = 1; n <= max_n; ++n) {
      const NgramCounts cand_counts = CountNgrams(cand, n);
      NgramCounts max_ref;
      for (const auto& ref : refs) {
        for (const auto& [gram, count] : CountNgrams(ref, n)) {
          max_ref[gram] = std::max(max_ref[gram], count);
        }
      }
      for (const auto& [gram, count] : cand_counts) {
        auto it = max_ref.find(gram);
        if (it != max_ref.end()) matches[n - 1] += static_cast<double>(std::min(count, it->second));
        totals[n - 1] += static_cast<double>(count);
      }
    }

    // Closest reference length, shorter on ties.
    const double c = static_cast<double>(cand.size());
    double best = static_cast<double>(refs.front().size());
    for (const auto& ref : refs) {
      const double r = static_cast<double>(ref.size());
      if (std::abs(r - c) < std::abs(best - c) ||
          (std::abs(r - c) == std::abs(best - c) && r < best)) {
        best = r;
      }
    }
    candidate_length += c;
    reference_length += best;
  }

  if (matches[0] == 0.0) return 0.0;
  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const double p = n == 1 ? matches[0] / totals[0]
                            : (matches[n - 1] + 1.0) / (totals[n - 1] + 1.0);
    log_sum += std::log(p) / static_cast<double>(max_n);
  }
  const double brevity = candidate_length > reference_length
                             ? 1.0
                             : std::exp(1.0 - reference_length / candidate_length);
  return std::clamp(brevity * std::exp(log_sum), 0.0, 1.0);
}

double Bleu(std::string_view candidate, std::span<const std::string> references, int max_n) {
  const BleuSegment segment{std::string(candidate),
                            std::vector<std::string>(references.begin(), references.end())};
  return CorpusBleu(std::span(&segment, 1), max_n);
}

std::size_t LcsLength(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScores RougeL(std::string_view candidate, std::string_view reference) {
  const std::vector<std::string> cand = RequireTokens(candidate, "candidate");
  const std::vector<std::string> ref = RequireTokens(reference, "reference");
  const double lcs = static_cast<double>(LcsLength(cand, ref));
  RougeScores s;
  s.precision = lcs / static_cast<double>(cand.size());
  s.recall = lcs / static_cast<double>(ref.size());
  s.f1 = lcs == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / (s.precision + s.recall);
  return s;
}

}  // namespace empathic::metrics
