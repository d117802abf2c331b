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

#include "empathic/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "empathic/error.hpp"
#include "empathic/jsonl.hpp"

namespace empathic::retrieval {
namespace {

using jsonl::Json;

bool Ranks(const Hit& a, const Hit& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.id < b.id;
}

}  // namespace

StoryIndex::StoryIndex(std::string backbone_name, std::string head_id, std::size_t dim,
                       std::vector<IndexEntry> entries)
    : backbone_name_(std::move(backbone_name)),
      head_id_(std::move(head_id)),
      dim_(dim),
      entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(),
            [](const IndexEntry& a, const IndexEntry& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const IndexEntry& e = entries_[i];
    if (i > 0 && entries_[i - 1].id == e.id) {
      Fail(ErrorKind::kValidation, "index.duplicate_id", "duplicate index entry '" + e.id + "'");
    }
    if (e.vector.dim() != dim_) {
      Fail(ErrorKind::kValidation, "index.dim_mismatch",
           "entry '" + e.id + "' has dimension " + std::to_string(e.vector.dim()));
    }
    if (!(e.norm > 0.0)) {
      Fail(ErrorKind::kValidation, "index.zero_norm", "entry '" + e.id + "' has zero norm");
    }
  }
}

void StoryIndex::Save(const std::filesystem::path& path) const {
  std::vector<Json> records;
  records.reserve(entries_.size() + 1);
  records.push_back({{"backbone_name", backbone_name_},
                     {"head_id", head_id_},
                     {"dim", dim_},
                     {"count", entries_.size()}});
  for (const IndexEntry& e : entries_) {
    records.push_back({{"id", e.id}, {"norm", e.norm}, {"vector", e.vector.raw()}});
  }
  jsonl::WriteAll(path, records);
}

StoryIndex StoryIndex::Load(const std::filesystem::path& path) {
  std::string backbone, head_id;
  std::size_t dim = 0, count = 0;
  bool have_header = false;
  std::vector<IndexEntry> entries;
  jsonl::ForEachRecord(path, [&](const Json& r, std::size_t line) {
    try {
      if (!have_header) {
        backbone = r.at("backbone_name").get<std::string>();
        head_id = r.at("head_id").get<std::string>();
        dim = r.at("dim").get<std::size_t>();
        count = r.at("count").get<std::size_t>();
        have_header = true;
        return;
      }
      entries.push_back({r.at("id").get<std::string>(),
                         EmbeddingVector(r.at("vector").get<std::vector<double>>()),
                         r.at("norm").get<double>()});
    } catch (const Json::exception& e) {
      Fail(ErrorKind::kParse, "parse.bad_index",
           path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  if (!have_header) {
    Fail(ErrorKind::kParse, "parse.bad_index", path.string() + ": missing header");
  }
  if (entries.size() != count) {
    Fail(ErrorKind::kParse, "parse.bad_index",
         path.string() + ": header count " + std::to_string(count) + " but " +
             std::to_string(entries.size()) + " entries");
  }
  return StoryIndex(std::move(backbone), std::move(head_id), dim, std::move(entries));
}

BuildResult BuildIndex(const std::vector<corpus::Story>& stories,
                       embedding::EmbeddingBackend& backend,
                       const simhead::ProjectionHead& head) {
  if (head.dim() != backend.dimension() && backend.dimension() != 0) {
    Fail(ErrorKind::kArgument, "index.dim_mismatch",
         "head dimension " + std::to_string(head.dim()) + " vs backend dimension " +
             std::to_string(backend.dimension()));
  }
  BuildResult result;
  std::vector<IndexEntry> entries;
  entries.reserve(stories.size());
  for (const corpus::Story& story : stories) {
    EmbeddingVector projected;
    try {
      projected = simhead::Project(head, embedding::Embed(backend, story.text));
    } catch (const Error& e) {
      Fail(ErrorKind::kRetrieval, "index.embedding_failed",
           "story '" + story.id + "': " + e.what());
    }
    const double norm = embedding::Norm(projected.values());
    if (norm == 0.0) {
      result.skipped.push_back(story.id);
      continue;
    }
    entries.push_back({story.id, std::move(projected), norm});
  }
  result.index = StoryIndex(head.backbone_name, head.Id(), head.dim(), std::move(entries));
  return result;
}

RetrievalResult QueryVector(const StoryIndex& index, const EmbeddingVector& projected_query,
                            std::size_t k, const std::set<std::string>& exclude) {
  if (k == 0) Fail(ErrorKind::kArgument, "retrieval.bad_k", "k must be positive");
  if (projected_query.dim() != index.dim()) {
    Fail(ErrorKind::kArgument, "retrieval.dim_mismatch", "query dimension differs from index");
  }
  const double query_norm = embedding::Norm(projected_query.values());
  if (query_norm == 0.0) {
    Fail(ErrorKind::kComputation, "retrieval.zero_query", "projected query has zero norm");
  }
  std::vector<Hit> hits;
  hits.reserve(index.size());
  for (const IndexEntry& e : index.entries()) {
    if (exclude.contains(e.id)) continue;
    // Same expression as embedding::Cosine so identity-head scores match a
    // raw-backbone scan bit for bit.
    const double cosine = std::clamp(
        embedding::Dot(projected_query.values(), e.vector.values()) / (query_norm * e.norm),
        -1.0, 1.0);
    hits.push_back({e.id, cosine});
  }
  if (hits.empty()) {
    Fail(ErrorKind::kRetrieval, "retrieval.empty_pool",
         "no indexed stories remain after exclusions");
  }
  RetrievalResult result;
  result.head_id = index.head_id();
  result.k = k;
  result.candidates = hits.size();
  const std::size_t take = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                    Ranks);
  hits.resize(take);
  result.hits = std::move(hits);
  return result;
}

RetrievalResult Query(const StoryIndex& index, std::string_view query_text,
                      embedding::EmbeddingBackend& backend,
                      const simhead::ProjectionHead& head, std::size_t k,
                      const std::set<std::string>& exclude) {
  if (head.Id() != index.head_id()) {
    Fail(ErrorKind::kArgument, "retrieval.head_mismatch",
         "head " + head.Id() + " did not build index " + index.head_id());
  }
  return QueryVector(index, simhead::Project(head, embedding::Embed(backend, query_text)), k,
                     exclude);
}

ConditionPicks QueryPairConditions(const ConditionModel& tuned, const ConditionModel& baseline,
                                   std::string_view query_text,
                                   embedding::EmbeddingBackend& backend,
                                   const std::set<std::string>& exclude) {
  const EmbeddingVector raw = embedding::Embed(backend, query_text);
  const RetrievalResult t =
      QueryVector(tuned.index, simhead::Project(tuned.head, raw), 1, exclude);
  const RetrievalResult b =
      QueryVector(baseline.index, simhead::Project(baseline.head, raw), 2, exclude);
  ConditionPicks picks{t.hits.front(), b.hits.front(), false};
  if (picks.baseline.id == picks.tuned.id) {
    if (b.hits.size() < 2) {
      Fail(ErrorKind::kRetrieval, "retrieval.no_distinct_story",
           "cannot furnish two distinct stories from the remaining pool");
    }
    picks.baseline = b.hits[1];
    picks.baseline_fell_back = true;
  }
  return picks;
}

}  // namespace empathic::retrieval
