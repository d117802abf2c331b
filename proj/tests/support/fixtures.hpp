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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "empathic/corpus.hpp"
#include "empathic/embedding.hpp"
#include "empathic/rng.hpp"
#include "empathic/retrieval.hpp"
#include "empathic/simhead.hpp"
#include "empathic/study.hpp"

namespace empathic::fixtures {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string Sentence(Rng& rng, std::size_t words);
std::string Paragraph(Rng& rng, std::size_t sentences);

// Stories with all three features, unsplit.
std::vector<corpus::Story> SyntheticStories(std::size_t n, std::uint64_t seed);

// Stories split 75:5:20 plus annotated pairs drawn inside each split, each
// rated by 2-3 of the given annotators.
corpus::Corpus SyntheticCorpus(std::size_t n_stories, std::size_t n_pairs, std::uint64_t seed,
                               std::size_t annotators = 4);

// Two latent clusters. Backbone vectors are N(0, I) plus +/-separation on
// axis 0, so the cluster signal is diluted under the raw cosine; gold is 0.9
// inside a cluster and 0.1 across.
struct PlantedConfig {
  std::size_t dim = 32;
  double separation = 1.5;
  std::size_t train_stories = 1000, train_pairs = 10000;
  std::size_t dev_stories = 250, dev_pairs = 2500;
  std::size_t test_stories = 500, test_pairs = 5000;
  std::uint64_t seed = 7;
};

struct PlantedData {
  std::vector<simhead::TrainingPair> train, dev, test;
};

PlantedData MakePlanted(const PlantedConfig& config = {});

// Analytic PairLossGradient against central differences of PairLoss on
// random instances; relative error per entry is |a - f| / max(|a|, |f|, floor).
struct GradientCheckResult {
  double worst_relative_error = 0.0;
  std::size_t instances = 0;
  std::size_t entries = 0;
};

GradientCheckResult GradientCheck(std::size_t dim, std::size_t instances, std::uint64_t seed,
                                  double step = 1e-5, double floor = 1e-7);

// Brute-force top-k: cosine of raw backbone embeddings, sorted by
// (similarity desc, id asc). No projection, no index.
std::vector<retrieval::Hit> RawScanTopK(embedding::EmbeddingBackend& backend,
                                        const std::vector<corpus::Story>& stories,
                                        std::string_view query, std::size_t k,
                                        const std::set<std::string>& exclude = {});

// Stub-backed retrieval models for the study service: a noisy tuned head
// and the identity baseline over the same stories.
struct StudyFixture {
  std::shared_ptr<embedding::StubBackend> backend;
  std::shared_ptr<const study::StudyModels> models;

  static StudyFixture Make(std::size_t n_stories = 40, std::size_t dim = 16,
                           std::uint64_t seed = 3);
};

// Walks one participant through create, story, both ratings and
// demographics. Ratings are drawn from seed; returns the session id.
std::string RunParticipant(study::StudyService& service, std::uint64_t seed);

// Same walk over HTTP against a StudyServer on host:port. Throws
// std::runtime_error on any unexpected status; returns the session id.
std::string RunParticipantHttp(const std::string& host, int port, std::uint64_t seed);

// A participant story comfortably inside the default length bounds.
std::string ParticipantStory(std::uint64_t seed);

}  // namespace empathic::fixtures
