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

#include "fixtures.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <set>
#include <stdexcept>
#include <unistd.h>

#include "empathic/retrieval.hpp"

// after the empathic headers; resolv.h defines _res
#include <httplib.h>
#include <nlohmann/json.hpp>

namespace empathic::fixtures {
namespace {

constexpr std::array<const char*, 48> kWords = {
    "i",       "my",     "we",       "the",    "a",       "friend",  "mother",  "brother",
    "job",     "school", "moved",    "lost",   "found",   "felt",    "happy",   "scared",
    "alone",   "proud",  "tired",    "angry",  "hospital", "summer", "city",    "dog",
    "after",   "before", "finally",  "never",  "always",  "home",    "work",    "trip",
    "call",    "letter", "wedding",  "exam",   "failed",  "passed",  "learned", "trust",
    "quietly", "again",  "together", "week",   "year",    "night",   "morning", "kind"};

std::atomic<int> temp_counter{0};

}  // namespace

TempDir::TempDir() {
  const auto tick = std::chrono::steady_clock::now().time_since_epoch().count();
  path_ = std::filesystem::temp_directory_path() /
          ("empathic-" + std::to_string(::getpid()) + "-" + std::to_string(tick) + "-" +
           std::to_string(temp_counter++));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string Sentence(Rng& rng, std::size_t words) {
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    std::string w = kWords[rng.UniformIndex(kWords.size())];
    if (i == 0) w[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(w[0])));
    out += (i ? " " : "") + w;
  }
  return out + ".";
}

std::string Paragraph(Rng& rng, std::size_t sentences) {
  std::string out;
  for (std::size_t i = 0; i < sentences; ++i) {
    out += (i ? " " : "") + Sentence(rng, 6 + rng.UniformIndex(8));
  }
  return out;
}

std::vector<corpus::Story> SyntheticStories(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  constexpr std::array<corpus::Source, 4> kSources = {
      corpus::Source::kReddit, corpus::Source::kHippocorpus, corpus::Source::kRoadtrip,
      corpus::Source::kConfessions};
  std::vector<corpus::Story> out;
  for (std::size_t i = 0; i < n; ++i) {
    corpus::Story s;
    char id[32];
    std::snprintf(id, sizeof id, "s%04zu", i);
    s.id = id;
    s.text = Paragraph(rng, 3 + rng.UniformIndex(4));
    s.event = Sentence(rng, 5);
    s.emotion = Sentence(rng, 4);
    s.moral = Sentence(rng, 6);
    s.source = kSources[i % kSources.size()];
    out.push_back(std::move(s));
  }
  return out;
}

corpus::Corpus SyntheticCorpus(std::size_t n_stories, std::size_t n_pairs, std::uint64_t seed,
                               std::size_t annotators) {
  auto stories = SyntheticStories(n_stories, seed);
  const auto split = corpus::AssignSplits(stories, {}, seed);
  stories = corpus::ApplySplit(std::move(stories), split);
  std::vector<std::vector<std::string>> groups(3);
  for (const auto& s : stories) {
    if (s.split != corpus::Split::kUnsplit) groups[static_cast<int>(s.split)].push_back(s.id);
  }
  Rng rng(seed ^ 0x5bd1e995ULL);
  std::set<corpus::StoryPair> seen;
  std::vector<corpus::PairAnnotation> pairs;
  std::size_t attempts = 0;
  while (pairs.size() < n_pairs && attempts++ < n_pairs * 50) {
    // Pairs land in splits roughly by story share.
    const double u = rng.Uniform01();
    const auto& g = groups[u < 0.75 ? 0 : (u < 0.80 ? 1 : 2)];
    if (g.size() < 2) continue;
    const auto a = g[rng.UniformIndex(g.size())];
    const auto b = g[rng.UniformIndex(g.size())];
    if (a == b) continue;
    auto key = corpus::StoryPair::Canonical(a, b);
    if (!seen.insert(key).second) continue;
    corpus::PairAnnotation p;
    p.pair = key;
    // A latent score per pair keeps annotators correlated.
    const int latent = 1 + static_cast<int>(rng.UniformIndex(4));
    const std::size_t raters = 2 + rng.UniformIndex(2);
    std::vector<std::size_t> who(annotators);
    for (std::size_t i = 0; i < annotators; ++i) who[i] = i;
    rng.Shuffle(who);
    for (std::size_t r = 0; r < std::min(raters, annotators); ++r) {
      corpus::AnnotatorRating rating;
      rating.annotator = "ann" + std::to_string(who[r]);
      for (auto axis : corpus::kAllAxes) {
        const int jitter = static_cast<int>(rng.UniformIndex(3)) - 1;
        rating.scores[static_cast<int>(axis)] = std::clamp(latent + jitter, 1, 4);
      }
      p.ratings.push_back(rating);
    }
    p.RecomputeGold();
    pairs.push_back(std::move(p));
  }
  return corpus::Corpus(std::move(stories), std::move(pairs));
}

namespace {

struct PlantedStory {
  embedding::EmbeddingVector vector;
  int cluster;
};

std::vector<PlantedStory> PlantedStories(Rng& rng, std::size_t n, const PlantedConfig& c) {
  std::vector<PlantedStory> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int cluster = static_cast<int>(i % 2);
    std::vector<double> v(c.dim);
    for (double& x : v) x = rng.Normal();
    v[0] += cluster ? c.separation : -c.separation;
    out.push_back({embedding::EmbeddingVector(std::move(v)), cluster});
  }
  return out;
}

std::vector<simhead::TrainingPair> PlantedPairs(Rng& rng, const std::vector<PlantedStory>& s,
                                                std::size_t n) {
  std::vector<simhead::TrainingPair> out;
  while (out.size() < n) {
    const std::size_t i = rng.UniformIndex(s.size());
    const std::size_t j = rng.UniformIndex(s.size());
    if (i == j) continue;
    out.push_back({s[i].vector, s[j].vector, s[i].cluster == s[j].cluster ? 0.9 : 0.1});
  }
  return out;
}

}  // namespace

PlantedData MakePlanted(const PlantedConfig& c) {
  Rng rng(c.seed);
  const auto train = PlantedStories(rng, c.train_stories, c);
  const auto dev = PlantedStories(rng, c.dev_stories, c);
  const auto test = PlantedStories(rng, c.test_stories, c);
  PlantedData out;
  out.train = PlantedPairs(rng, train, c.train_pairs);
  out.dev = PlantedPairs(rng, dev, c.dev_pairs);
  out.test = PlantedPairs(rng, test, c.test_pairs);
  return out;
}

GradientCheckResult GradientCheck(std::size_t dim, std::size_t instances, std::uint64_t seed,
                                  double step, double floor) {
  Rng rng(seed);
  GradientCheckResult result;
  auto random_vector = [&] {
    std::vector<double> v(dim);
    for (double& x : v) x = rng.Normal();
    return embedding::EmbeddingVector(std::move(v));
  };
  for (std::size_t k = 0; k < instances; ++k) {
    simhead::ProjectionHead head{"fd", Eigen::MatrixXd(dim, dim)};
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) head.matrix(i, j) = (i == j ? 1.0 : 0.0) + 0.5 * rng.Normal();
    }
    const auto u = random_vector();
    const auto v = random_vector();
    const double gold = rng.Uniform01();
    const Eigen::MatrixXd analytic = simhead::PairLossGradient(head, u, v, gold);
    for (std::size_t i = 0; i < dim; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        simhead::ProjectionHead plus = head, minus = head;
        plus.matrix(i, j) += step;
        minus.matrix(i, j) -= step;
        const double fd =
            (simhead::PairLoss(plus, u, v, gold) - simhead::PairLoss(minus, u, v, gold)) /
            (2.0 * step);
        const double a = analytic(i, j);
        const double scale = std::max({std::abs(a), std::abs(fd), floor});
        result.worst_relative_error = std::max(result.worst_relative_error, std::abs(a - fd) / scale);
        ++result.entries;
      }
    }
    ++result.instances;
  }
  return result;
}

std::vector<retrieval::Hit> RawScanTopK(embedding::EmbeddingBackend& backend,
                                        const std::vector<corpus::Story>& stories,
                                        std::string_view query, std::size_t k,
                                        const std::set<std::string>& exclude) {
  const auto q = embedding::Embed(backend, query);
  std::vector<retrieval::Hit> all;
  for (const auto& s : stories) {
    if (exclude.contains(s.id)) continue;
    all.push_back({s.id, embedding::Cosine(q, embedding::Embed(backend, s.text))});
  }
  std::sort(all.begin(), all.end(), [](const retrieval::Hit& a, const retrieval::Hit& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

StudyFixture StudyFixture::Make(std::size_t n_stories, std::size_t dim, std::uint64_t seed) {
  StudyFixture f;
  f.backend = std::make_shared<embedding::StubBackend>(dim, seed);
  auto stories = std::make_shared<corpus::Corpus>(SyntheticStories(n_stories, seed),
                                                  std::vector<corpus::PairAnnotation>{});
  auto models = std::make_shared<study::StudyModels>();
  models->backend = f.backend;
  models->stories = stories;
  models->tuned_head =
      simhead::ProjectionHead::NoisyIdentity(dim, f.backend->name(), 0.5, seed + 1);
  models->baseline_head = simhead::ProjectionHead::Identity(dim, f.backend->name());
  models->tuned_index =
      retrieval::BuildIndex(stories->stories(), *f.backend, models->tuned_head).index;
  models->baseline_index =
      retrieval::BuildIndex(stories->stories(), *f.backend, models->baseline_head).index;
  f.models = models;
  return f;
}

std::string ParticipantStory(std::uint64_t seed) {
  Rng rng(seed * 7919 + 17);
  return Paragraph(rng, 6);
}

std::string RunParticipant(study::StudyService& service, std::uint64_t seed) {
  Rng rng(seed);
  const std::string id = service.CreateSession().at("session_id").get<std::string>();
  study::StorySubmission sub;
  sub.mood = 1 + static_cast<int>(rng.UniformIndex(5));
  sub.text = ParticipantStory(seed);
  sub.event = Sentence(rng, 8);
  sub.emotion = Sentence(rng, 8);
  sub.moral = Sentence(rng, 8);
  service.SubmitStory(id, sub);
  const auto& survey = service.config().survey;
  for (int ordinal = 1; ordinal <= 2; ++ordinal) {
    std::vector<int> items(study::kSurveyItems);
    for (int& v : items) {
      v = survey.scale_min +
          static_cast<int>(rng.UniformIndex(survey.scale_max - survey.scale_min + 1));
    }
    service.SubmitRating(id, ordinal, items, "because " + Sentence(rng, 8));
  }
  study::Demographics d;
  d.age = 18 + static_cast<int>(rng.UniformIndex(60));
  d.self_rated_empathy = 1 + static_cast<int>(rng.UniformIndex(5));
  service.SubmitDemographics(id, d);
  return id;
}

std::string RunParticipantHttp(const std::string& host, int port, std::uint64_t seed) {
  Rng rng(seed);
  httplib::Client client(host, port);
  client.set_read_timeout(30, 0);
  auto post = [&](const std::string& path, const nlohmann::json& body, int want) {
    auto res = client.Post(path, body.dump(), "application/json");
    if (!res) throw std::runtime_error(path + ": " + httplib::to_string(res.error()));
    if (res->status != want) {
      throw std::runtime_error(path + ": HTTP " + std::to_string(res->status) + " " + res->body);
    }
    return nlohmann::json::parse(res->body);
  };
  const auto created = post("/sessions", nlohmann::json::object(), 201);
  const std::string id = created.at("session_id").get<std::string>();
  const std::string base = "/sessions/" + id;
  post(base + "/story",
       {{"mood", 1 + static_cast<int>(rng.UniformIndex(5))},
        {"text", ParticipantStory(seed)},
        {"event", Sentence(rng, 8)},
        {"emotion", Sentence(rng, 8)},
        {"moral", Sentence(rng, 8)}},
       200);
  for (int ordinal = 1; ordinal <= 2; ++ordinal) {
    std::vector<int> items(study::kSurveyItems);
    for (int& v : items) v = 1 + static_cast<int>(rng.UniformIndex(5));
    post(base + "/ratings/" + std::to_string(ordinal),
         {{"items", items}, {"explanation", Sentence(rng, 5)}}, 200);
  }
  const auto done = post(base + "/demographics",
                         {{"age", 18 + static_cast<int>(rng.UniformIndex(60))},
                          {"gender", nullptr},
                          {"ethnicity", nullptr},
                          {"self_rated_empathy", 1 + static_cast<int>(rng.UniformIndex(5))}},
                         200);
  if (done.at("status") != "completed") throw std::runtime_error("not completed");
  return id;
}

}  // namespace empathic::fixtures
