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
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "empathic/corpus.hpp"
#include "empathic/embedding.hpp"
#include "empathic/paired_test.hpp"
#include "empathic/retrieval.hpp"
#include "empathic/rng.hpp"
#include "empathic/simhead.hpp"

namespace empathic::study {

using Json = nlohmann::json;

enum class Subscale { kAffective, kCognitive, kAssociative };
std::string_view ToString(Subscale s);
Subscale ParseSubscale(std::string_view text);

inline constexpr std::size_t kSurveyItems = 7;

struct SurveyItem {
  std::string text;
  Subscale subscale = Subscale::kAffective;
};

struct SurveyConfig {
  std::array<SurveyItem, kSurveyItems> items;
  int scale_min = 1;
  int scale_max = 5;

  static SurveyConfig Default();
};

struct EmpathyResponse {
  std::array<int, kSurveyItems> items{};
  int affective = 0;
  int cognitive = 0;
  int associative = 0;
  int total = 0;

  // Validates the range and recomputes the subscale and total sums.
  static EmpathyResponse FromItems(const std::vector<int>& items, const SurveyConfig& survey);
  int Subtotal(Subscale s) const;
};

struct Demographics {
  std::optional<int> age;
  std::optional<std::string> gender;
  std::optional<std::string> ethnicity;
  std::optional<int> self_rated_empathy;  // 1-5
};

enum class SessionState { kCreated, kStorySubmitted, kCondition1Rated, kCondition2Rated, kCompleted };
std::string_view ToString(SessionState s);

enum class ConditionOrder { kTunedFirst, kBaselineFirst };
enum class Model { kTuned, kBaseline };
std::string_view ToString(ConditionOrder o);
std::string_view ToString(Model m);

struct ConditionRecord {
  std::string story_id;
  double similarity = 0.0;
  std::optional<EmpathyResponse> response;
  std::string explanation;
};

struct StudySession {
  std::string id;
  std::string created_at;  // ISO-8601 UTC
  std::string prompt;
  ConditionOrder order = ConditionOrder::kTunedFirst;
  SessionState state = SessionState::kCreated;
  std::optional<int> mood;
  std::optional<corpus::Story> story;
  ConditionRecord tuned;
  ConditionRecord baseline;
  bool baseline_fell_back = false;
  std::optional<Demographics> demographics;
  std::uint64_t events = 0;

  // Which model is shown at ordinal 1 or 2.
  Model ModelAt(int ordinal) const;
  ConditionRecord& Condition(Model m) { return m == Model::kTuned ? tuned : baseline; }
  const ConditionRecord& Condition(Model m) const {
    return m == Model::kTuned ? tuned : baseline;
  }
};

// Event-log entries: {session, seq, type, at, data}. Replaying a session's
// events in order rebuilds its state; an out-of-order event is rejected.
void ApplyEvent(StudySession& session, const Json& event, const SurveyConfig& survey);
StudySession Replay(const std::vector<Json>& events, const SurveyConfig& survey);

Json SessionToJson(const StudySession& session);
// Checks an exported record for every field a completed session must carry.
bool IsCompleteRecord(const Json& record, std::string* why = nullptr);

// Append-only event log in a single file, fsync'ed after every append.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path path);
  ~SessionStore();
  SessionStore(const SessionStore&) = delete;
  SessionStore& operator=(const SessionStore&) = delete;

  void Append(const Json& event);
  std::vector<Json> Events() const;  // all events in append order
  std::vector<Json> EventsFor(const std::string& session_id) const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::FILE* file_ = nullptr;
  std::vector<Json> events_;
};

struct StudyConfig {
  std::vector<std::string> prompts;
  std::size_t story_min_chars = 100;
  std::size_t story_max_chars = 10000;
  SurveyConfig survey = SurveyConfig::Default();
  bool demographics_optional = true;
  std::set<std::string> exclude;  // story ids never shown
  std::optional<std::uint64_t> seed;  // condition-order draws; random when unset
  std::string mood_question = "How are you feeling right now? (1 = very bad, 5 = very good)";

  static std::vector<std::string> DefaultPrompts();
};

// Retrieval models for both conditions plus the story texts to display.
struct StudyModels {
  std::shared_ptr<embedding::EmbeddingBackend> backend;
  simhead::ProjectionHead tuned_head;
  retrieval::StoryIndex tuned_index;
  simhead::ProjectionHead baseline_head;
  retrieval::StoryIndex baseline_index;
  std::shared_ptr<const corpus::Corpus> stories;

  void Validate() const;
};

struct StorySubmission {
  int mood = 0;
  std::string text;
  std::string event;
  std::string emotion;
  std::string moral;
};

struct ExportFilter {
  bool completed_only = false;
};

struct PairedRow {
  std::string session_id;
  std::array<double, 4> tuned{};     // total, affective, cognitive, associative
  std::array<double, 4> baseline{};
};

struct ExportResult {
  std::vector<Json> records;
  std::vector<PairedRow> table;              // completed sessions only
  std::map<std::string, PairedTTest> tests;  // "total", "affective", ...
  std::map<std::string, std::string> test_errors;

  Json AnalysisJson() const;
};

inline constexpr std::array<std::string_view, 4> kMeasures = {"total", "affective", "cognitive",
                                                             "associative"};

// The study protocol: create, story, two blinded ratings, demographics.
// Sessions are independent; calls on one session are serialized and a call
// that finds the session busy fails with a conflict.
class StudyService {
 public:
  StudyService(StudyConfig config, std::shared_ptr<SessionStore> store);

  // Atomically replaces the retrieval models.
  void SetModels(std::shared_ptr<const StudyModels> models);
  bool ready() const;

  Json CreateSession();
  Json SubmitStory(const std::string& session_id, const StorySubmission& submission);
  Json SubmitRating(const std::string& session_id, int ordinal, const std::vector<int>& items,
                    const std::string& explanation);
  Json SubmitDemographics(const std::string& session_id, const Demographics& demographics);

  ExportResult Export(const ExportFilter& filter = {}) const;
  std::optional<StudySession> Get(const std::string& session_id) const;
  const StudyConfig& config() const { return config_; }

 private:
  struct Slot {
    std::mutex mu;
    StudySession session;
  };

  std::shared_ptr<const StudyModels> models() const;
  std::shared_ptr<Slot> Lookup(const std::string& session_id) const;
  void Record(Slot& slot, const std::string& type, Json data);
  Json StoryPayload(int ordinal, const std::string& story_id) const;

  StudyConfig config_;
  std::shared_ptr<SessionStore> store_;
  mutable std::mutex models_mu_;
  std::shared_ptr<const StudyModels> models_;
  mutable std::shared_mutex sessions_mu_;
  std::map<std::string, std::shared_ptr<Slot>> sessions_;
  std::mutex rng_mu_;
  Rng order_rng_;
  std::atomic<std::uint64_t> prompt_cursor_{0};
};

}  // namespace empathic::study
