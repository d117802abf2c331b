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
#include <chrono>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <tuple>
#include <string>
#include <string_view>
#include <vector>

#include "empathic/corpus.hpp"
#include "empathic/metrics.hpp"

namespace empathic::reasoner {

enum class PromptKind { kEvent, kEmotion, kMoral, kEmpathyReasons, kPairScore };

std::string_view ToString(PromptKind kind);
PromptKind ParsePromptKind(std::string_view text);

struct PromptTemplate {
  PromptKind kind = PromptKind::kEvent;
  std::string instruction;
  std::size_t k_examples = 0;

  // Built-in instruction text for the kind.
  static PromptTemplate Default(PromptKind kind, std::size_t k_examples = 0);
  bool IsSummary() const { return kind != PromptKind::kPairScore; }
};

struct PairExample {
  const corpus::Story* a = nullptr;
  const corpus::Story* b = nullptr;
  int score = 0;  // empathy rating 1-4
};

// Instruction, then the exemplars in the given order, then the target. Every
// exemplar story must come from the train split.
std::string BuildSummaryPrompt(const PromptTemplate& tmpl, const corpus::Story& target,
                               std::span<const corpus::Story* const> examples);
std::string BuildPairPrompt(const PromptTemplate& tmpl, const corpus::Story& a,
                            const corpus::Story& b, std::span<const PairExample> examples);

// Reference answer used for a summary exemplar.
const std::string& SummaryField(const corpus::Story& story, PromptKind kind);

struct Decoding {
  int max_tokens = 256;
  double temperature = 0.0;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string Complete(const std::string& prompt, const Decoding& decoding) = 0;
};

// Offline backend. Answers from a scripted queue when one is loaded, else from
// a responder function of the prompt; the default responder is deterministic.
class StubLlmBackend : public LlmBackend {
 public:
  using Responder = std::function<std::string(const std::string& prompt)>;

  StubLlmBackend();
  explicit StubLlmBackend(Responder responder);

  std::string name() const override { return "stub"; }
  std::string Complete(const std::string& prompt, const Decoding& decoding) override;

  void Script(std::vector<std::string> completions);
  std::vector<std::string> prompts() const;

 private:
  mutable std::mutex mu_;
  Responder responder_;
  std::deque<std::string> scripted_;
  std::vector<std::string> prompts_;
};

struct HttpLlmConfig {
  std::string base_url = "http://127.0.0.1:8082";
  std::string path = "/complete";
  std::string name = "http";
  std::string api_key_env = "EMPATHIC_LLM_API_KEY";
  std::chrono::milliseconds timeout{60000};
  int max_retries = 2;
};

// POSTs {prompt, max_tokens, temperature} and expects {completion}. A bearer
// token is sent when the configured environment variable is set.
class HttpLlmBackend : public LlmBackend {
 public:
  explicit HttpLlmBackend(HttpLlmConfig config);
  std::string name() const override { return config_.name; }
  std::string Complete(const std::string& prompt, const Decoding& decoding) override;

 private:
  HttpLlmConfig config_;
};

// First standalone integer in 1-4, or nullopt.
std::optional<int> ParseScore(std::string_view completion);

inline constexpr std::string_view kScoreRetrySuffix =
    "\n\nRespond with a single number: 1, 2, 3 or 4.";

int ScorePair(LlmBackend& backend, const PromptTemplate& tmpl, const corpus::Story& a,
              const corpus::Story& b, std::span<const PairExample> examples = {},
              const Decoding& decoding = {});

std::string Summarize(LlmBackend& backend, const PromptTemplate& tmpl,
                      const corpus::Story& story,
                      std::span<const corpus::Story* const> examples = {},
                      const Decoding& decoding = {});

// Summaries persisted per (backend, kind, story id).
class SummaryCache {
 public:
  SummaryCache() = default;
  explicit SummaryCache(std::filesystem::path path);

  std::optional<std::string> Get(const std::string& backend, PromptKind kind,
                                 const std::string& story_id) const;
  void Put(const std::string& backend, PromptKind kind, const std::string& story_id,
           std::string summary);
  void Save() const;
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::tuple<std::string, std::string, std::string>, std::string> entries_;
};

// Summaries keyed by story id, issuing at most max_in_flight requests at once.
std::map<std::string, std::string> SummarizeBatch(
    LlmBackend& backend, const PromptTemplate& tmpl, std::span<const corpus::Story> stories,
    std::span<const corpus::Story* const> examples, SummaryCache* cache = nullptr,
    std::size_t max_in_flight = 4, const Decoding& decoding = {});

struct LlmComparison {
  std::size_t pairs = 0;
  std::optional<double> spearman;
  std::string spearman_error;  // set when Spearman is undefined
  double mse = 0.0;
  metrics::ClassificationScores classification;
  std::array<std::size_t, 4> llm_histogram{};  // counts of scores 1-4
};

LlmComparison CompareLlmToHuman(const std::map<corpus::StoryPair, int>& llm,
                                const std::map<corpus::StoryPair, double>& human);

}  // namespace empathic::reasoner
