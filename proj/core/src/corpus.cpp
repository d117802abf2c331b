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

#include "empathic/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "empathic/error.hpp"
#include "empathic/jsonl.hpp"
#include "empathic/rng.hpp"

namespace empathic::corpus {
namespace {

using jsonl::Json;

constexpr std::array<std::pair<Source, std::string_view>, 5> kSources = {{
    {Source::kReddit, "reddit"},
    {Source::kHippocorpus, "hippocorpus"},
    {Source::kRoadtrip, "roadtrip"},
    {Source::kConfessions, "confessions"},
    {Source::kUserSubmitted, "user_submitted"},
}};

constexpr std::array<std::pair<Split, std::string_view>, 4> kSplits = {{
    {Split::kTrain, "train"},
    {Split::kDev, "dev"},
    {Split::kTest, "test"},
    {Split::kUnsplit, "unsplit"},
}};

constexpr std::array<std::string_view, 4> kAxisNames = {"empathy", "event", "emotion",
                                                        "moral"};

// Folds the annotator ratings of a duplicate record into an existing pair.
void MergeInto(PairAnnotation& into, const PairAnnotation& other) {
  for (const AnnotatorRating& rating : other.ratings) {
    auto same = std::find_if(into.ratings.begin(), into.ratings.end(),
                             [&](const AnnotatorRating& r) {
                               return r.annotator == rating.annotator;
                             });
    if (same == into.ratings.end()) {
      into.ratings.push_back(rating);
    } else if (*same != rating) {
      Fail(ErrorKind::kValidation, "corpus.conflicting_duplicate",
           "pair (" + into.pair.story_a + ", " + into.pair.story_b + "): annotator '" +
               rating.annotator + "' rated it twice with different scores");
    }
  }
  into.RecomputeGold();
}

}  // namespace

Story StoryFromJson(const Json& r, std::size_t line) {
  Story s;
  s.id = jsonl::RequireString(r, "id", line);
  s.text = jsonl::RequireString(r, "text", line);
  s.event = jsonl::RequireString(r, "event", line);
  s.emotion = jsonl::RequireString(r, "emotion", line);
  s.moral = jsonl::RequireString(r, "moral", line);
  if (auto it = r.find("empathy_reasons"); it != r.end() && !it->is_null()) {
    s.empathy_reasons = jsonl::RequireString(r, "empathy_reasons", line);
  }
  try {
    s.source = ParseSource(jsonl::RequireString(r, "source", line));
    if (auto it = r.find("split"); it != r.end() && !it->is_null()) {
      s.split = ParseSplit(jsonl::RequireString(r, "split", line));
    }
  } catch (const Error& e) {
    Fail(ErrorKind::kParse, e.error_class(),
         "line " + std::to_string(line) + ": " + e.what());
  }
  return s;
}

Json StoryToJson(const Story& s) {
  Json r = {{"id", s.id},         {"text", s.text},   {"event", s.event},
            {"emotion", s.emotion}, {"moral", s.moral}, {"source", ToString(s.source)},
            {"split", ToString(s.split)}};
  if (s.empathy_reasons) r["empathy_reasons"] = *s.empathy_reasons;
  return r;
}

PairAnnotation PairFromJson(const Json& r, std::size_t line) {
  std::string a = jsonl::RequireString(r, "story_a", line);
  std::string b = jsonl::RequireString(r, "story_b", line);
  if (a == b) {
    Fail(ErrorKind::kValidation, "corpus.self_pair",
         "line " + std::to_string(line) + ": pair of story '" + a + "' with itself");
  }
  PairAnnotation p;
  p.pair = StoryPair::Canonical(std::move(a), std::move(b));
  const Json& ratings = jsonl::RequireField(r, "ratings", line);
  if (!ratings.is_array()) {
    Fail(ErrorKind::kParse, "parse.bad_field",
         "line " + std::to_string(line) + ": 'ratings' must be an array");
  }
  for (const Json& entry : ratings) {
    if (!entry.is_object()) {
      Fail(ErrorKind::kParse, "parse.bad_field",
           "line " + std::to_string(line) + ": rating must be an object");
    }
    AnnotatorRating rating;
    rating.annotator = jsonl::RequireString(entry, "annotator", line);
    for (Axis axis : kAllAxes) {
      const char* name = kAxisNames[static_cast<int>(axis)].data();
      const Json& v = jsonl::RequireField(entry, name, line);
      if (!v.is_number_integer()) {
        Fail(ErrorKind::kValidation, "corpus.rating_out_of_range",
             "line " + std::to_string(line) + ": " + name + " rating must be an integer");
      }
      const int score = v.get<int>();
      if (score < 1 || score > 4) {
        Fail(ErrorKind::kValidation, "corpus.rating_out_of_range",
             "line " + std::to_string(line) + ": " + name + " rating " +
                 std::to_string(score) + " outside 1-4");
      }
      rating.scores[static_cast<int>(axis)] = score;
    }
    p.ratings.push_back(std::move(rating));
  }
  p.RecomputeGold();
  return p;
}

Json PairToJson(const PairAnnotation& p) {
  Json ratings = Json::array();
  for (const AnnotatorRating& r : p.ratings) {
    Json entry = {{"annotator", r.annotator}};
    for (Axis axis : kAllAxes) entry[std::string(ToString(axis))] = r[axis];
    ratings.push_back(std::move(entry));
  }
  return {{"story_a", p.pair.story_a}, {"story_b", p.pair.story_b}, {"ratings", ratings}};
}

std::string_view ToString(Source source) {
  for (const auto& [value, name] : kSources) {
    if (value == source) return name;
  }
  return "reddit";
}

std::string_view ToString(Split split) {
  for (const auto& [value, name] : kSplits) {
    if (value == split) return name;
  }
  return "unsplit";
}

std::string_view ToString(Axis axis) { return kAxisNames[static_cast<int>(axis)]; }

Source ParseSource(std::string_view text) {
  for (const auto& [value, name] : kSources) {
    if (name == text) return value;
  }
  Fail(ErrorKind::kParse, "parse.bad_enum", "unknown story source '" + std::string(text) + "'");
}

Split ParseSplit(std::string_view text) {
  for (const auto& [value, name] : kSplits) {
    if (name == text) return value;
  }
  Fail(ErrorKind::kParse, "parse.bad_enum", "unknown split '" + std::string(text) + "'");
}

StoryPair StoryPair::Canonical(std::string x, std::string y) {
  if (y < x) std::swap(x, y);
  return StoryPair{std::move(x), std::move(y)};
}

void PairAnnotation::RecomputeGold() {
  gold.fill(0.0);
  if (ratings.empty()) return;
  for (const AnnotatorRating& r : ratings) {
    for (int axis = 0; axis < 4; ++axis) gold[axis] += r.scores[axis];
  }
  for (double& g : gold) g /= static_cast<double>(ratings.size());
}

Corpus::Corpus(std::vector<Story> stories, std::vector<PairAnnotation> pairs)
    : stories_(std::move(stories)) {
  for (std::size_t i = 0; i < stories_.size(); ++i) {
    const Story& s = stories_[i];
    if (s.id.empty()) {
      Fail(ErrorKind::kValidation, "corpus.empty_id", "story with empty id");
    }
    if (s.text.empty()) {
      Fail(ErrorKind::kValidation, "corpus.empty_text", "story '" + s.id + "' has empty text");
    }
    if (!by_id_.emplace(s.id, i).second) {
      Fail(ErrorKind::kValidation, "corpus.duplicate_id", "duplicate story id '" + s.id + "'");
    }
  }

  std::map<StoryPair, std::size_t> seen;
  for (PairAnnotation& p : pairs) {
    p.pair = StoryPair::Canonical(std::move(p.pair.story_a), std::move(p.pair.story_b));
    if (p.pair.story_a == p.pair.story_b) {
      Fail(ErrorKind::kValidation, "corpus.self_pair",
           "pair of story '" + p.pair.story_a + "' with itself");
    }
    for (const std::string* id : {&p.pair.story_a, &p.pair.story_b}) {
      if (!by_id_.contains(*id)) {
        Fail(ErrorKind::kValidation, "corpus.unknown_story",
             "pair references unknown story id '" + *id + "'");
      }
    }
    std::set<std::string> annotators;
    for (const AnnotatorRating& r : p.ratings) {
      for (int score : r.scores) {
        if (score < 1 || score > 4) {
          Fail(ErrorKind::kValidation, "corpus.rating_out_of_range",
               "rating " + std::to_string(score) + " outside 1-4");
        }
      }
      if (!annotators.insert(r.annotator).second) {
        Fail(ErrorKind::kValidation, "corpus.duplicate_annotator",
             "annotator '" + r.annotator + "' appears twice on one pair record");
      }
    }
    p.RecomputeGold();
    auto [it, inserted] = seen.emplace(p.pair, pairs_.size());
    if (inserted) {
      pairs_.push_back(std::move(p));
    } else {
      MergeInto(pairs_[it->second], p);
    }
  }
}

const Story* Corpus::Find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &stories_[it->second];
}

const Story& Corpus::Get(std::string_view id) const {
  const Story* s = Find(id);
  if (s == nullptr) {
    Fail(ErrorKind::kLookup, "corpus.unknown_story", "unknown story id '" + std::string(id) + "'");
  }
  return *s;
}

Corpus LoadCorpus(const std::filesystem::path& stories_path,
                  const std::optional<std::filesystem::path>& pairs_path) {
  std::vector<Story> stories;
  jsonl::ForEachRecord(stories_path, [&](const Json& r, std::size_t line) {
    stories.push_back(StoryFromJson(r, line));
  });
  std::vector<PairAnnotation> pairs;
  if (pairs_path) {
    jsonl::ForEachRecord(*pairs_path, [&](const Json& r, std::size_t line) {
      pairs.push_back(PairFromJson(r, line));
    });
  }
  return Corpus(std::move(stories), std::move(pairs));
}

void WriteStories(const std::filesystem::path& path, const std::vector<Story>& stories) {
  std::vector<Json> records;
  records.reserve(stories.size());
  for (const Story& s : stories) records.push_back(StoryToJson(s));
  jsonl::WriteAll(path, records);
}

void WritePairs(const std::filesystem::path& path, const std::vector<PairAnnotation>& pairs) {
  std::vector<Json> records;
  records.reserve(pairs.size());
  for (const PairAnnotation& p : pairs) records.push_back(PairToJson(p));
  jsonl::WriteAll(path, records);
}

const std::set<std::string>& CorpusSplit::Stories(Split split) const {
  switch (split) {
    case Split::kTrain: return train;
    case Split::kDev: return dev;
    case Split::kTest: return test;
    case Split::kUnsplit: break;
  }
  Fail(ErrorKind::kArgument, "corpus.bad_split", "no story set for the unsplit bucket");
}

std::optional<Split> CorpusSplit::SplitOf(std::string_view id) const {
  const std::string key(id);
  if (train.contains(key)) return Split::kTrain;
  if (dev.contains(key)) return Split::kDev;
  if (test.contains(key)) return Split::kTest;
  return std::nullopt;
}

std::array<std::size_t, 3> SplitSizes(std::size_t n, const SplitRatios& ratios) {
  const std::array<double, 3> r = {ratios.train, ratios.dev, ratios.test};
  for (double x : r) {
    if (!(x > 0.0)) {
      Fail(ErrorKind::kArgument, "corpus.bad_ratios", "split ratios must be positive");
    }
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    Fail(ErrorKind::kArgument, "corpus.bad_ratios", "split ratios must sum to 1");
  }
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double share = r[i] * static_cast<double>(n);
    // Snap values that are integral up to rounding noise (0.75 * 20 etc.).
    const double nearest = std::round(share);
    const double exact = std::abs(share - nearest) < 1e-9 ? nearest : share;
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    remainders[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k % 3]];
  return sizes;
}

namespace {

void AttachPairs(CorpusSplit& split, const std::vector<PairAnnotation>& pairs) {
  for (const PairAnnotation& p : pairs) {
    const auto a = split.SplitOf(p.pair.story_a);
    const auto b = split.SplitOf(p.pair.story_b);
    if (!a || a != b) continue;
    switch (*a) {
      case Split::kTrain: split.train_pairs.push_back(p.pair); break;
      case Split::kDev: split.dev_pairs.push_back(p.pair); break;
      case Split::kTest: split.test_pairs.push_back(p.pair); break;
      case Split::kUnsplit: break;
    }
  }
}

}  // namespace

CorpusSplit AssignSplits(const std::vector<Story>& stories, const SplitRatios& ratios,
                         std::uint64_t seed, const std::vector<PairAnnotation>& pairs) {
  if (stories.empty()) {
    Fail(ErrorKind::kArgument, "corpus.empty", "cannot split an empty story list");
  }
  const auto sizes = SplitSizes(stories.size(), ratios);
  std::vector<std::string> ids;
  ids.reserve(stories.size());
  for (const Story& s : stories) ids.push_back(s.id);
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.Shuffle(ids);

  CorpusSplit split;
  std::size_t i = 0;
  for (; i < sizes[0]; ++i) split.train.insert(ids[i]);
  for (; i < sizes[0] + sizes[1]; ++i) split.dev.insert(ids[i]);
  for (; i < ids.size(); ++i) split.test.insert(ids[i]);
  AttachPairs(split, pairs);
  return split;
}

CorpusSplit SplitFromStories(const Corpus& corpus) {
  CorpusSplit split;
  for (const Story& s : corpus.stories()) {
    switch (s.split) {
      case Split::kTrain: split.train.insert(s.id); break;
      case Split::kDev: split.dev.insert(s.id); break;
      case Split::kTest: split.test.insert(s.id); break;
      case Split::kUnsplit: break;
    }
  }
  AttachPairs(split, corpus.pairs());
  return split;
}

std::vector<Story> ApplySplit(std::vector<Story> stories, const CorpusSplit& split) {
  for (Story& s : stories) s.split = split.SplitOf(s.id).value_or(Split::kUnsplit);
  return stories;
}

}  // namespace empathic::corpus
