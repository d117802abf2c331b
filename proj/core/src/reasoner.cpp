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

#include "empathic/reasoner.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <exception>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "empathic/embedding.hpp"
#include "empathic/error.hpp"
#include "empathic/jsonl.hpp"

namespace empathic::reasoner {
namespace {

using Json = nlohmann::json;

constexpr std::string_view kEventInstruction =
    "What is the main event being described in the story?\n"
    "Response must be at least 1 sentence and 50-1000 characters including spaces.";
constexpr std::string_view kEmotionInstruction =
    "Describe the emotions the narrator feels before and after the main event and why "
    "they feel this way.\n"
    "Answer as though you were explaining how the narrator felt to someone who knew "
    "nothing about the situation.\n"
    "Response must be at least 2 sentences and 150-1000 characters including spaces.";
constexpr std::string_view kMoralInstruction =
    "What is the high-level lesson or takeaway (ie. moral) of the story?\n"
    "Response must be at least 1 sentence and 100-1000 characters including spaces.";
constexpr std::string_view kReasonsInstruction =
    "List the reasons why another person might empathize with the narrator of this "
    "story.\n"
    "Response must be at least 1 sentence and 50-1000 characters including spaces.";
constexpr std::string_view kPairInstruction =
    "Rate the extent to which you agree with the statement \"the narrators of the two "
    "stories would empathize with each other.\"\n"
    "We define empathy as feeling, understanding, and relating to what another person is "
    "experiencing. Note that it is possible to have empathy even without sharing the exact "
    "same experience or circumstance. Importantly, for two stories to be empathetically "
    "similar, both narrators should be able to empathize with each other (if narrator A's "
    "story was shared in response to narrator B's story, narrator B would empathize with "
    "narrator A and vice versa).\n"
    "Give your answer on a scale from 1-4 (1 - not at all, 2 - not so much, 3 - very much, "
    "4 - extremely)";

constexpr std::array<std::pair<PromptKind, std::string_view>, 5> kKinds = {{
    {PromptKind::kEvent, "event"},
    {PromptKind::kEmotion, "emotion"},
    {PromptKind::kMoral, "moral"},
    {PromptKind::kEmpathyReasons, "empathy_reasons"},
    {PromptKind::kPairScore, "pair_score"},
}};

void RequireTrain(const corpus::Story& s) {
  if (s.split != corpus::Split::kTrain) {
    Fail(ErrorKind::kArgument, "reasoner.non_train_example",
         "exemplar story '" + s.id + "' is from the " + std::string(corpus::ToString(s.split)) +
             " split; only train stories may be used");
  }
}

std::string Trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

bool IsAlnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
bool IsDigit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

std::string FirstSentence(std::string_view text) {
  const auto end = text.find_first_of(".!?");
  return Trim(end == std::string_view::npos ? text : text.substr(0, end + 1));
}

// Deterministic default completions: a 1-4 score derived from the prompt hash
// for pair prompts, the target story's first sentence for summaries.
std::string DefaultResponder(const std::string& prompt) {
  if (prompt.find("Story B:") != std::string::npos) {
    return std::to_string(1 + embedding::TextHash(prompt) % 4);
  }
  const auto at = prompt.rfind("Story:");
  if (at == std::string::npos) return "No story given.";
  const auto end = prompt.find("\nAnswer:", at);
  return FirstSentence(std::string_view(prompt).substr(at + 6, end - at - 6));
}

std::string PostOnce(const HttpLlmConfig& config, const std::string& body,
                     std::string& last_error, bool& retryable) {
  httplib::Client client(config.base_url);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
  client.set_connection_timeout(seconds.count());
  client.set_read_timeout(seconds.count());
  httplib::Headers headers;
  if (const char* key = std::getenv(config.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = client.Post(config.path, headers, body, "application/json");
  retryable = true;
  if (!res) {
    last_error = httplib::to_string(res.error());
    return {};
  }
  if (res->status != 200) {
    last_error = "HTTP " + std::to_string(res->status);
    retryable = res->status >= 500;
    return {};
  }
  try {
    const Json reply = Json::parse(res->body);
    last_error.clear();
    return reply.at("completion").get<std::string>();
  } catch (const Json::exception& e) {
    Fail(ErrorKind::kTransport, "transport.bad_response",
         std::string("LLM service returned an unusable body: ") + e.what());
  }
}

}  // namespace

std::string_view ToString(PromptKind kind) {
  for (const auto& [k, name] : kKinds) {
    if (k == kind) return name;
  }
  return "event";
}

PromptKind ParsePromptKind(std::string_view text) {
  for (const auto& [k, name] : kKinds) {
    if (name == text) return k;
  }
  Fail(ErrorKind::kArgument, "reasoner.bad_kind", "unknown prompt kind '" + std::string(text) + "'");
}

PromptTemplate PromptTemplate::Default(PromptKind kind, std::size_t k_examples) {
  std::string_view text;
  switch (kind) {
    case PromptKind::kEvent: text = kEventInstruction; break;
    case PromptKind::kEmotion: text = kEmotionInstruction; break;
    case PromptKind::kMoral: text = kMoralInstruction; break;
    case PromptKind::kEmpathyReasons: text = kReasonsInstruction; break;
    case PromptKind::kPairScore: text = kPairInstruction; break;
  }
  return PromptTemplate{kind, std::string(text), k_examples};
}

const std::string& SummaryField(const corpus::Story& story, PromptKind kind) {
  static const std::string kEmpty;
  switch (kind) {
    case PromptKind::kEvent: return story.event;
    case PromptKind::kEmotion: return story.emotion;
    case PromptKind::kMoral: return story.moral;
    case PromptKind::kEmpathyReasons:
      return story.empathy_reasons ? *story.empathy_reasons : kEmpty;
    case PromptKind::kPairScore: break;
  }
  Fail(ErrorKind::kArgument, "reasoner.bad_kind", "pair_score has no summary field");
}

std::string BuildSummaryPrompt(const PromptTemplate& tmpl, const corpus::Story& target,
                               std::span<const corpus::Story* const> examples) {
  if (!tmpl.IsSummary()) {
    Fail(ErrorKind::kArgument, "reasoner.bad_kind", "template is not a summary template");
  }
  if (examples.size() < tmpl.k_examples) {
    Fail(ErrorKind::kArgument, "reasoner.too_few_examples",
         "template wants " + std::to_string(tmpl.k_examples) + " examples, got " +
             std::to_string(examples.size()));
  }
  std::string prompt = tmpl.instruction + "\n\n";
  for (std::size_t i = 0; i < tmpl.k_examples; ++i) {
    const corpus::Story& ex = *examples[i];
    RequireTrain(ex);
    prompt += "Example " + std::to_string(i + 1) + ":\nStory: " + ex.text +
              "\nAnswer: " + SummaryField(ex, tmpl.kind) + "\n\n";
  }
  prompt += "Story: " + target.text + "\nAnswer:";
  return prompt;
}

std::string BuildPairPrompt(const PromptTemplate& tmpl, const corpus::Story& a,
                            const corpus::Story& b, std::span<const PairExample> examples) {
  if (tmpl.kind != PromptKind::kPairScore) {
    Fail(ErrorKind::kArgument, "reasoner.bad_kind", "template is not a pair_score template");
  }
  if (examples.size() < tmpl.k_examples) {
    Fail(ErrorKind::kArgument, "reasoner.too_few_examples",
         "template wants " + std::to_string(tmpl.k_examples) + " examples, got " +
             std::to_string(examples.size()));
  }
  std::string prompt = tmpl.instruction + "\n\n";
  for (std::size_t i = 0; i < tmpl.k_examples; ++i) {
    const PairExample& ex = examples[i];
    RequireTrain(*ex.a);
    RequireTrain(*ex.b);
    prompt += "Example " + std::to_string(i + 1) + ":\nStory A: " + ex.a->text +
              "\nStory B: " + ex.b->text + "\nAnswer: " + std::to_string(ex.score) + "\n\n";
  }
  prompt += "Story A: " + a.text + "\nStory B: " + b.text + "\nAnswer:";
  return prompt;
}

StubLlmBackend::StubLlmBackend() : responder_(DefaultResponder) {}
StubLlmBackend::StubLlmBackend(Responder responder) : responder_(std::move(responder)) {}

std::string StubLlmBackend::Complete(const std::string& prompt, const Decoding&) {
  std::lock_guard lock(mu_);
  prompts_.push_back(prompt);
  if (!scripted_.empty()) {
    std::string next = std::move(scripted_.front());
    scripted_.pop_front();
    return next;
  }
  return responder_(prompt);
}

void StubLlmBackend::Script(std::vector<std::string> completions) {
  std::lock_guard lock(mu_);
  for (std::string& c : completions) scripted_.push_back(std::move(c));
}

std::vector<std::string> StubLlmBackend::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

HttpLlmBackend::HttpLlmBackend(HttpLlmConfig config) : config_(std::move(config)) {}

std::string HttpLlmBackend::Complete(const std::string& prompt, const Decoding& decoding) {
  const std::string body = Json{{"prompt", prompt},
                                {"max_tokens", decoding.max_tokens},
                                {"temperature", decoding.temperature}}
                               .dump();
  std::string last_error;
  const int attempts = config_.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    bool retryable = true;
    std::string completion = PostOnce(config_, body, last_error, retryable);
    if (last_error.empty()) return completion;
    if (!retryable) break;
  }
  Fail(ErrorKind::kTransport, "transport.unreachable",
       "LLM service " + config_.base_url + config_.path + " failed after " +
           std::to_string(attempts) + " attempt(s): " + last_error);
}

std::optional<int> ParseScore(std::string_view s) {
  for (std::size_t i = 0; i < s.size();) {
    if (!IsDigit(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && IsDigit(s[j])) ++j;
    const bool letter_before = i > 0 && IsAlnum(s[i - 1]);
    const bool letter_after = j < s.size() && IsAlnum(s[j]);
    // A digit run glued to a decimal point belongs to a larger number.
    const bool decimal_before = i >= 2 && (s[i - 1] == '.' || s[i - 1] == ',') && IsDigit(s[i - 2]);
    const bool decimal_after =
        j + 1 < s.size() && (s[j] == '.' || s[j] == ',') && IsDigit(s[j + 1]);
    if (!letter_before && !letter_after && !decimal_before && !decimal_after && j - i == 1) {
      const int value = s[i] - '0';
      if (value >= 1 && value <= 4) return value;
    }
    i = j;
  }
  return std::nullopt;
}

int ScorePair(LlmBackend& backend, const PromptTemplate& tmpl, const corpus::Story& a,
              const corpus::Story& b, std::span<const PairExample> examples,
              const Decoding& decoding) {
  const std::string prompt = BuildPairPrompt(tmpl, a, b, examples);
  const std::string first = backend.Complete(prompt, decoding);
  if (auto score = ParseScore(first)) return *score;
  const std::string second = backend.Complete(prompt + std::string(kScoreRetrySuffix), decoding);
  if (auto score = ParseScore(second)) return *score;
  Fail(ErrorKind::kScoring, "reasoner.unparseable_score",
       "no 1-4 score in completion after retry: \"" + second + "\"");
}

std::string Summarize(LlmBackend& backend, const PromptTemplate& tmpl,
                      const corpus::Story& story,
                      std::span<const corpus::Story* const> examples,
                      const Decoding& decoding) {
  const std::string prompt = BuildSummaryPrompt(tmpl, story, examples);
  std::string out = Trim(backend.Complete(prompt, decoding));
  if (out.starts_with(tmpl.instruction)) out = Trim(out.substr(tmpl.instruction.size()));
  if (out.starts_with("Answer:")) out = Trim(out.substr(7));
  if (out.empty()) {
    Fail(ErrorKind::kGeneration, "reasoner.empty_completion",
         "empty " + std::string(ToString(tmpl.kind)) + " summary for story '" + story.id + "'");
  }
  return out;
}

SummaryCache::SummaryCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  jsonl::ForEachRecord(path_, [&](const Json& r, std::size_t line) {
    entries_[{jsonl::RequireString(r, "backend", line), jsonl::RequireString(r, "kind", line),
              jsonl::RequireString(r, "story_id", line)}] =
        jsonl::RequireString(r, "summary", line);
  });
}

std::optional<std::string> SummaryCache::Get(const std::string& backend, PromptKind kind,
                                             const std::string& story_id) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find({backend, std::string(ToString(kind)), story_id});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void SummaryCache::Put(const std::string& backend, PromptKind kind, const std::string& story_id,
                       std::string summary) {
  std::lock_guard lock(mu_);
  entries_[{backend, std::string(ToString(kind)), story_id}] = std::move(summary);
}

void SummaryCache::Save() const {
  if (path_.empty()) return;
  std::vector<Json> records;
  {
    std::lock_guard lock(mu_);
    for (const auto& [key, summary] : entries_) {
      records.push_back({{"backend", std::get<0>(key)},
                         {"kind", std::get<1>(key)},
                         {"story_id", std::get<2>(key)},
                         {"summary", summary}});
    }
  }
  jsonl::WriteAll(path_, records);
}

std::size_t SummaryCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::map<std::string, std::string> SummarizeBatch(
    LlmBackend& backend, const PromptTemplate& tmpl, std::span<const corpus::Story> stories,
    std::span<const corpus::Story* const> examples, SummaryCache* cache,
    std::size_t max_in_flight, const Decoding& decoding) {
  std::vector<std::string> results(stories.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mu;
  std::exception_ptr first_error;

  auto worker = [&] {
    for (std::size_t i = next++; i < stories.size(); i = next++) {
      {
        std::lock_guard lock(error_mu);
        if (first_error) return;
      }
      const corpus::Story& story = stories[i];
      try {
        if (cache) {
          if (auto hit = cache->Get(backend.name(), tmpl.kind, story.id)) {
            results[i] = std::move(*hit);
            continue;
          }
        }
        results[i] = Summarize(backend, tmpl, story, examples, decoding);
        if (cache) cache->Put(backend.name(), tmpl.kind, story.id, results[i]);
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(max_in_flight, 1, std::max<std::size_t>(1, stories.size()));
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
  for (std::thread& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::map<std::string, std::string> out;
  for (std::size_t i = 0; i < stories.size(); ++i) out[stories[i].id] = std::move(results[i]);
  return out;
}

LlmComparison CompareLlmToHuman(const std::map<corpus::StoryPair, int>& llm,
                                const std::map<corpus::StoryPair, double>& human) {
  std::vector<double> llm_scores, human_scores;
  std::vector<metrics::Label> llm_labels, human_labels;
  LlmComparison out;
  for (const auto& [pair, score] : llm) {
    auto it = human.find(pair);
    if (it == human.end()) continue;
    llm_scores.push_back(score);
    human_scores.push_back(it->second);
    llm_labels.push_back(metrics::Binarize(score, metrics::ScoreScale::kLikert));
    human_labels.push_back(metrics::Binarize(it->second, metrics::ScoreScale::kLikert));
    if (score >= 1 && score <= 4) ++out.llm_histogram[score - 1];
  }
  if (llm_scores.empty()) {
    Fail(ErrorKind::kArgument, "reasoner.no_overlap",
         "no pair has both an LLM score and a human label");
  }
  out.pairs = llm_scores.size();
  try {
    out.spearman = metrics::Spearman(llm_scores, human_scores);
  } catch (const Error& e) {
    out.spearman_error = std::string(e.error_class()) + ": " + e.what();
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < llm_scores.size(); ++i) {
    const double d = llm_scores[i] - human_scores[i];
    sq += d * d;
  }
  out.mse = sq / static_cast<double>(llm_scores.size());
  out.classification = metrics::Classify(human_labels, llm_labels);
  return out;
}

}  // namespace empathic::reasoner
