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

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "empathic/corpus.hpp"
#include "empathic/embedding.hpp"
#include "empathic/simhead.hpp"

namespace empathic::retrieval {

using embedding::EmbeddingVector;

struct IndexEntry {
  std::string id;
  EmbeddingVector vector;  // projected
  double norm = 0.0;

  friend bool operator==(const IndexEntry&, const IndexEntry&) = default;
};

// Projected story embeddings for exhaustive cosine search. Immutable once
// built; entries are kept sorted by id.
class StoryIndex {
 public:
  StoryIndex() = default;
  StoryIndex(std::string backbone_name, std::string head_id, std::size_t dim,
             std::vector<IndexEntry> entries);

  const std::string& backbone_name() const { return backbone_name_; }
  const std::string& head_id() const { return head_id_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::vector<IndexEntry>& entries() const { return entries_; }

  void Save(const std::filesystem::path& path) const;
  static StoryIndex Load(const std::filesystem::path& path);

  friend bool operator==(const StoryIndex&, const StoryIndex&) = default;

 private:
  std::string backbone_name_;
  std::string head_id_;
  std::size_t dim_ = 0;
  std::vector<IndexEntry> entries_;
};

struct BuildResult {
  StoryIndex index;
  std::vector<std::string> skipped;  // zero projected norm
};

// Embeds each story's text, projects it through the head and indexes it.
BuildResult BuildIndex(const std::vector<corpus::Story>& stories,
                       embedding::EmbeddingBackend& backend,
                       const simhead::ProjectionHead& head);

struct Hit {
  std::string id;
  double similarity = 0.0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

struct RetrievalResult {
  std::vector<Hit> hits;  // non-increasing similarity, ties by id
  std::string head_id;
  std::size_t k = 0;
  std::size_t candidates = 0;  // index entries left after exclusions
};

// Top-k by cosine against an already projected query vector.
RetrievalResult QueryVector(const StoryIndex& index, const EmbeddingVector& projected_query,
                            std::size_t k, const std::set<std::string>& exclude = {});

RetrievalResult Query(const StoryIndex& index, std::string_view query_text,
                      embedding::EmbeddingBackend& backend,
                      const simhead::ProjectionHead& head, std::size_t k,
                      const std::set<std::string>& exclude = {});

// One study condition: an index and the head that built it.
struct ConditionModel {
  const StoryIndex& index;
  const simhead::ProjectionHead& head;
};

struct ConditionPicks {
  Hit tuned;
  Hit baseline;
  bool baseline_fell_back = false;  // both picked the same story
};

// Top-1 from each condition, guaranteeing two distinct stories: on a
// collision the baseline takes its rank-2 story.
ConditionPicks QueryPairConditions(const ConditionModel& tuned, const ConditionModel& baseline,
                                   std::string_view query_text,
                                   embedding::EmbeddingBackend& backend,
                                   const std::set<std::string>& exclude = {});

}  // namespace empathic::retrieval
