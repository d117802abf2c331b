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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace empathic::corpus {

enum class Source { kReddit, kHippocorpus, kRoadtrip, kConfessions, kUserSubmitted };
enum class Split { kTrain, kDev, kTest, kUnsplit };

std::string_view ToString(Source source);
std::string_view ToString(Split split);
Source ParseSource(std::string_view text);
Split ParseSplit(std::string_view text);

struct Story {
  std::string id;
  std::string text;
  std::string event;
  std::string emotion;
  std::string moral;
  std::optional<std::string> empathy_reasons;
  Source source = Source::kReddit;
  Split split = Split::kUnsplit;

  // True when event, emotion and moral are all present, which composite
  // similarity requires.
  bool HasFeatures() const {
    return !event.empty() && !emotion.empty() && !moral.empty();
  }

  friend bool operator==(const Story&, const Story&) = default;
};

enum class Axis { kEmpathy = 0, kEvent = 1, kEmotion = 2, kMoral = 3 };
inline constexpr std::array<Axis, 4> kAllAxes = {Axis::kEmpathy, Axis::kEvent,
                                                 Axis::kEmotion, Axis::kMoral};
std::string_view ToString(Axis axis);

struct AnnotatorRating {
  std::string annotator;
  std::array<int, 4> scores{};  // indexed by Axis

  int operator[](Axis axis) const { return scores[static_cast<int>(axis)]; }
  friend bool operator==(const AnnotatorRating&, const AnnotatorRating&) = default;
};

// Unordered story pair stored with story_a < story_b.
struct StoryPair {
  std::string story_a;
  std::string story_b;

  static StoryPair Canonical(std::string x, std::string y);
  auto operator<=>(const StoryPair&) const = default;
};

struct PairAnnotation {
  StoryPair pair;
  std::vector<AnnotatorRating> ratings;
  std::array<double, 4> gold{};  // per-axis mean of annotator ratings

  double Gold(Axis axis) const { return gold[static_cast<int>(axis)]; }
  void RecomputeGold();
  friend bool operator==(const PairAnnotation&, const PairAnnotation&) = default;
};

// Loaded, validated corpus. Immutable after construction.
class Corpus {
 public:
  Corpus() = default;
  // Validates invariants (unique ids, non-empty text, Likert range, known
  // story references) and merges duplicate pair orientations.
  Corpus(std::vector<Story> stories, std::vector<PairAnnotation> pairs);

  const std::vector<Story>& stories() const { return stories_; }
  const std::vector<PairAnnotation>& pairs() const { return pairs_; }

  const Story* Find(std::string_view id) const;
  const Story& Get(std::string_view id) const;

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.stories_ == b.stories_ && a.pairs_ == b.pairs_;
  }

 private:
  std::vector<Story> stories_;
  std::vector<PairAnnotation> pairs_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

// Line-record (de)serialization. line is only used in error messages.
nlohmann::json StoryToJson(const Story& story);
Story StoryFromJson(const nlohmann::json& record, std::size_t line = 0);
nlohmann::json PairToJson(const PairAnnotation& pair);
PairAnnotation PairFromJson(const nlohmann::json& record, std::size_t line = 0);

Corpus LoadCorpus(const std::filesystem::path& stories_path,
                  const std::optional<std::filesystem::path>& pairs_path = std::nullopt);
void WriteStories(const std::filesystem::path& path, const std::vector<Story>& stories);
void WritePairs(const std::filesystem::path& path,
                const std::vector<PairAnnotation>& pairs);

struct CorpusSplit {
  std::set<std::string> train, dev, test;
  std::vector<StoryPair> train_pairs, dev_pairs, test_pairs;

  const std::set<std::string>& Stories(Split split) const;
  std::optional<Split> SplitOf(std::string_view id) const;
};

struct SplitRatios {
  double train = 0.75;
  double dev = 0.05;
  double test = 0.20;
};

// Largest-remainder shares of n for the given ratios (ties go to the earlier
// split).
std::array<std::size_t, 3> SplitSizes(std::size_t n, const SplitRatios& ratios);

// Seeded shuffle of story ids cut at SplitSizes. Pairs are attached from
// pairs whose members land in the same split.
CorpusSplit AssignSplits(const std::vector<Story>& stories, const SplitRatios& ratios,
                         std::uint64_t seed,
                         const std::vector<PairAnnotation>& pairs = {});

// Split recorded on the stories themselves; unsplit stories are left out.
CorpusSplit SplitFromStories(const Corpus& corpus);

// Returns a copy of the stories with split fields set from the assignment.
std::vector<Story> ApplySplit(std::vector<Story> stories, const CorpusSplit& split);

}  // namespace empathic::corpus
