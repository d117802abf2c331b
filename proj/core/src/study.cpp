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

#include "empathic/study.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>

#include <unistd.h>

#include "empathic/error.hpp"
#include "empathic/jsonl.hpp"

namespace empathic::study {
namespace {

constexpr std::array<std::pair<SessionState, std::string_view>, 5> kStates = {{
    {SessionState::kCreated, "created"},
    {SessionState::kStorySubmitted, "story_submitted"},
    {SessionState::kCondition1Rated, "condition1_rated"},
    {SessionState::kCondition2Rated, "condition2_rated"},
    {SessionState::kCompleted, "completed"},
}};

ConditionOrder ParseOrder(std::string_view text) {
  if (text == "tuned_first") return ConditionOrder::kTunedFirst;
  if (text == "baseline_first") return ConditionOrder::kBaselineFirst;
  Fail(ErrorKind::kParse, "study.bad_order", "unknown condition order '" + std::string(text) + "'");
}

std::string NowIso8601() {
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

std::string RandomToken() {
  std::random_device device;
  const std::uint64_t hi = (static_cast<std::uint64_t>(device()) << 32) | device();
  const std::uint64_t lo = (static_cast<std::uint64_t>(device()) << 32) | device();
  return embedding::HashHex(hi) + embedding::HashHex(lo);
}

std::uint64_t RandomSeed() {
  std::random_device device;
  return (static_cast<std::uint64_t>(device()) << 32) | device();
}

// UTF-8 code points.
std::size_t CharCount(std::string_view s) {
  return static_cast<std::size_t>(std::count_if(
      s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

[[noreturn]] void Conflict(const StudySession& s, const std::string& action) {
  Fail(ErrorKind::kConflict, "study.wrong_state",
       "session " + s.id + " is in state '" + std::string(ToString(s.state)) + "'; cannot " +
           action);
}

void Expect(bool ok, const std::string& message) {
  if (!ok) Fail(ErrorKind::kValidation, "study.bad_replay", message);
}

Json ResponseToJson(const EmpathyResponse& r) {
  return {{"items", r.items},
          {"affective", r.affective},
          {"cognitive", r.cognitive},
          {"associative", r.associative},
          {"total", r.total}};
}

Json ConditionToJson(const ConditionRecord& c) {
  return {{"story_id", c.story_id},
          {"similarity", c.similarity},
          {"response", c.response ? ResponseToJson(*c.response) : Json(nullptr)},
          {"explanation", c.explanation}};
}

template <typename T>
Json Nullable(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Json DemographicsToJson(const Demographics& d) {
  return {{"age", Nullable(d.age)},
          {"gender", Nullable(d.gender)},
          {"ethnicity", Nullable(d.ethnicity)},
          {"self_rated_empathy", Nullable(d.self_rated_empathy)}};
}

template <typename T>
std::optional<T> OptionalField(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

Demographics DemographicsFromJson(const Json& j) {
  Demographics d;
  d.age = OptionalField<int>(j, "age");
  d.gender = OptionalField<std::string>(j, "gender");
  d.ethnicity = OptionalField<std::string>(j, "ethnicity");
  d.self_rated_empathy = OptionalField<int>(j, "self_rated_empathy");
  return d;
}

}  // namespace

std::string_view ToString(Subscale s) {
  switch (s) {
    case Subscale::kAffective: return "affective";
    case Subscale::kCognitive: return "cognitive";
    case Subscale::kAssociative: return "associative";
  }
  return "affective";
}

Subscale ParseSubscale(std::string_view text) {
  if (text == "affective") return Subscale::kAffective;
  if (text == "cognitive") return Subscale::kCognitive;
  if (text == "associative") return Subscale::kAssociative;
  Fail(ErrorKind::kConfig, "config.bad_subscale", "unknown subscale '" + std::string(text) + "'");
}

std::string_view ToString(SessionState s) {
  for (const auto& [state, name] : kStates) {
    if (state == s) return name;
  }
  return "created";
}

std::string_view ToString(ConditionOrder o) {
  return o == ConditionOrder::kTunedFirst ? "tuned_first" : "baseline_first";
}

std::string_view ToString(Model m) { return m == Model::kTuned ? "tuned" : "baseline"; }

SurveyConfig SurveyConfig::Default() {
  SurveyConfig c;
  c.items = {{
      {"The narrator's emotions are genuine.", Subscale::kAffective},
      {"I experienced the same emotions as the narrator while reading this story.",
       Subscale::kAffective},
      {"I was in a similar emotional state as the narrator when reading this story.",
       Subscale::kAffective},
      {"I can see the narrator's point of view.", Subscale::kCognitive},
      {"I recognize the narrator's situation.", Subscale::kCognitive},
      {"I can relate to what the narrator was going through in the story.",
       Subscale::kAssociative},
      {"I identified with the situation described in the story.", Subscale::kAssociative},
  }};
  return c;
}

EmpathyResponse EmpathyResponse::FromItems(const std::vector<int>& items,
                                           const SurveyConfig& survey) {
  if (items.size() != kSurveyItems) {
    Fail(ErrorKind::kValidation, "study.bad_survey",
         "expected " + std::to_string(kSurveyItems) + " survey items, got " +
             std::to_string(items.size()));
  }
  EmpathyResponse r;
  for (std::size_t i = 0; i < kSurveyItems; ++i) {
    if (items[i] < survey.scale_min || items[i] > survey.scale_max) {
      Fail(ErrorKind::kValidation, "study.bad_survey",
           "survey item " + std::to_string(i + 1) + " = " + std::to_string(items[i]) +
               " outside " + std::to_string(survey.scale_min) + "-" +
               std::to_string(survey.scale_max));
    }
    r.items[i] = items[i];
    switch (survey.items[i].subscale) {
      case Subscale::kAffective: r.affective += items[i]; break;
      case Subscale::kCognitive: r.cognitive += items[i]; break;
      case Subscale::kAssociative: r.associative += items[i]; break;
    }
    r.total += items[i];
  }
  return r;
}

int EmpathyResponse::Subtotal(Subscale s) const {
  switch (s) {
    case Subscale::kAffective: return affective;
    case Subscale::kCognitive: return cognitive;
    case Subscale::kAssociative: return associative;
  }
  return 0;
}

Model StudySession::ModelAt(int ordinal) const {
  const bool tuned_first = order == ConditionOrder::kTunedFirst;
  return (ordinal == 1) == tuned_first ? Model::kTuned : Model::kBaseline;
}

void ApplyEvent(StudySession& s, const Json& event, const SurveyConfig& survey) {
  const std::string type = event.at("type").get<std::string>();
  const std::uint64_t seq = event.at("seq").get<std::uint64_t>();
  const Json& data = event.at("data");
  Expect(seq == s.events, "event seq " + std::to_string(seq) + " but " +
                              std::to_string(s.events) + " events applied");
  if (type == "created") {
    Expect(s.events == 0, "created event must come first");
    s.id = event.at("session").get<std::string>();
    s.prompt = data.at("prompt").get<std::string>();
    s.order = ParseOrder(data.at("condition_order").get<std::string>());
    s.created_at = data.at("created_at").get<std::string>();
    s.state = SessionState::kCreated;
  } else if (type == "story_submitted") {
    Expect(s.events > 0 && s.state == SessionState::kCreated, "story before creation");
    s.mood = data.at("mood").get<int>();
    s.story = corpus::StoryFromJson(data.at("story"));
    s.tuned.story_id = data.at("tuned").at("story_id").get<std::string>();
    s.tuned.similarity = data.at("tuned").at("similarity").get<double>();
    s.baseline.story_id = data.at("baseline").at("story_id").get<std::string>();
    s.baseline.similarity = data.at("baseline").at("similarity").get<double>();
    s.baseline_fell_back = data.at("baseline_fell_back").get<bool>();
    s.state = SessionState::kStorySubmitted;
  } else if (type == "rated") {
    const int ordinal = data.at("ordinal").get<int>();
    Expect((ordinal == 1 && s.state == SessionState::kStorySubmitted) ||
               (ordinal == 2 && s.state == SessionState::kCondition1Rated),
           "rating " + std::to_string(ordinal) + " in state " + std::string(ToString(s.state)));
    ConditionRecord& c = s.Condition(s.ModelAt(ordinal));
    c.response = EmpathyResponse::FromItems(data.at("items").get<std::vector<int>>(), survey);
    c.explanation = data.at("explanation").get<std::string>();
    s.state = ordinal == 1 ? SessionState::kCondition1Rated : SessionState::kCondition2Rated;
  } else if (type == "demographics") {
    Expect(s.state == SessionState::kCondition2Rated, "demographics before both ratings");
    s.demographics = DemographicsFromJson(data);
    s.state = SessionState::kCompleted;
  } else {
    Expect(false, "unknown event type '" + type + "'");
  }
  ++s.events;
}

StudySession Replay(const std::vector<Json>& events, const SurveyConfig& survey) {
  StudySession s;
  for (const Json& e : events) ApplyEvent(s, e, survey);
  return s;
}

Json SessionToJson(const StudySession& s) {
  return {{"session_id", s.id},
          {"created_at", s.created_at},
          {"prompt", s.prompt},
          {"condition_order", ToString(s.order)},
          {"state", ToString(s.state)},
          {"mood", Nullable(s.mood)},
          {"story", s.story ? corpus::StoryToJson(*s.story) : Json(nullptr)},
          {"conditions",
           {{"tuned", ConditionToJson(s.tuned)}, {"baseline", ConditionToJson(s.baseline)}}},
          {"baseline_fell_back", s.baseline_fell_back},
          {"demographics", s.demographics ? DemographicsToJson(*s.demographics) : Json(nullptr)},
          {"events", s.events}};
}

bool IsCompleteRecord(const Json& r, std::string* why) {
  auto fail = [&](const std::string& reason) {
    if (why) *why = reason;
    return false;
  };
  try {
    if (r.at("state") != "completed") return fail("state is not completed");
    if (!r.at("mood").is_number_integer()) return fail("missing mood");
    const Json& story = r.at("story");
    if (!story.is_object() || story.at("text").get<std::string>().empty()) {
      return fail("missing story");
    }
    for (const char* key : {"event", "emotion", "moral"}) {
      if (story.at(key).get<std::string>().empty()) return fail(std::string("missing ") + key);
    }
    const Json& conditions = r.at("conditions");
    std::set<std::string> shown;
    for (const char* model : {"tuned", "baseline"}) {
      const Json& c = conditions.at(model);
      const std::string id = c.at("story_id").get<std::string>();
      if (id.empty()) return fail(std::string(model) + " story missing");
      shown.insert(id);
      const Json& resp = c.at("response");
      if (!resp.is_object()) return fail(std::string(model) + " response missing");
      const auto items = resp.at("items").get<std::vector<int>>();
      if (items.size() != kSurveyItems) return fail(std::string(model) + " item count");
      const int sum = std::accumulate(items.begin(), items.end(), 0);
      if (resp.at("total").get<int>() != sum ||
          resp.at("affective").get<int>() + resp.at("cognitive").get<int>() +
                  resp.at("associative").get<int>() !=
              sum) {
        return fail(std::string(model) + " sums inconsistent");
      }
      if (!c.at("explanation").is_string()) return fail(std::string(model) + " explanation");
    }
    if (shown.size() != 2) return fail("both conditions showed the same story");
    if (!r.at("demographics").is_object()) return fail("missing demographics");
  } catch (const Json::exception& e) {
    return fail(e.what());
  }
  return true;
}

// Store

SessionStore::SessionStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (std::filesystem::exists(path_)) {
    // A torn final line from a crash mid-append is dropped and cut from the
    // file so the next append starts on a fresh line; every earlier line was
    // fsync'ed before its transition was acknowledged.
    std::ifstream in(path_, std::ios::binary);
    const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::size_t start = 0, line_number = 0;
    std::optional<std::uintmax_t> truncate_at;
    bool needs_newline = false;
    while (start < content.size()) {
      const std::size_t nl = content.find('\n', start);
      const bool last = nl == std::string::npos;
      const std::string_view l(content.data() + start, (last ? content.size() : nl) - start);
      ++line_number;
      if (!l.empty()) {
        try {
          events_.push_back(Json::parse(l));
          needs_newline = last;
        } catch (const Json::parse_error&) {
          if (!last && content.find_first_not_of('\n', nl) != std::string::npos) {
            Fail(ErrorKind::kParse, "parse.malformed_record",
                 path_.string() + ":" + std::to_string(line_number) + ": corrupt event");
          }
          truncate_at = start;
        }
      }
      if (last) break;
      start = nl + 1;
    }
    if (truncate_at) std::filesystem::resize_file(path_, *truncate_at);
    if (needs_newline) std::ofstream(path_, std::ios::app | std::ios::binary) << '\n';
  }
  file_ = std::fopen(path_.c_str(), "a");
  if (file_ == nullptr) {
    Fail(ErrorKind::kIo, "io.unwritable", "cannot open session store " + path_.string());
  }
}

SessionStore::~SessionStore() {
  if (file_) std::fclose(file_);
}

void SessionStore::Append(const Json& event) {
  const std::string line = event.dump() + "\n";
  std::lock_guard lock(mu_);
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() ||
      std::fflush(file_) != 0 || ::fsync(fileno(file_)) != 0) {
    Fail(ErrorKind::kIo, "io.unwritable", "failed to persist session event");
  }
  events_.push_back(event);
}

std::vector<Json> SessionStore::Events() const {
  std::lock_guard lock(mu_);
  return events_;
}

std::vector<Json> SessionStore::EventsFor(const std::string& session_id) const {
  std::lock_guard lock(mu_);
  std::vector<Json> out;
  for (const Json& e : events_) {
    if (e.at("session") == session_id) out.push_back(e);
  }
  return out;
}

// Service

std::vector<std::string> StudyConfig::DefaultPrompts() {
  return {
      "Think about a high point in your life, a moment of intense joy or contentment. "
      "Describe what happened, who was involved, and what you were thinking and feeling.",
      "Think about a low point in your life, a time you felt discouraged or alone. "
      "Describe what happened and how it affected you.",
      "Describe a turning point, an episode where you underwent an important change in how "
      "you understood yourself or others.",
      "Describe a challenge you have faced recently and how you have tried to deal with it.",
      "Think of a time when someone helped you through something hard. What happened?",
  };
}

void StudyModels::Validate() const {
  if (!backend || !stories) {
    Fail(ErrorKind::kConfig, "config.bad_models", "models need a backend and a story corpus");
  }
  auto ids = [](const retrieval::StoryIndex& index) {
    std::vector<std::string> out;
    for (const auto& e : index.entries()) out.push_back(e.id);
    return out;
  };
  if (ids(tuned_index) != ids(baseline_index)) {
    Fail(ErrorKind::kConfig, "config.bad_models",
         "tuned and baseline indexes cover different story sets");
  }
  if (tuned_head.Id() != tuned_index.head_id() || baseline_head.Id() != baseline_index.head_id()) {
    Fail(ErrorKind::kConfig, "config.bad_models", "index was not built with its head");
  }
  for (const auto& e : tuned_index.entries()) {
    if (stories->Find(e.id) == nullptr) {
      Fail(ErrorKind::kConfig, "config.bad_models", "indexed story '" + e.id + "' has no text");
    }
  }
}

StudyService::StudyService(StudyConfig config, std::shared_ptr<SessionStore> store)
    : config_(std::move(config)),
      store_(std::move(store)),
      order_rng_(config_.seed ? *config_.seed : RandomSeed()) {
  if (config_.prompts.empty()) {
    Fail(ErrorKind::kConfig, "config.no_prompts", "at least one writing prompt is required");
  }
  if (!store_) Fail(ErrorKind::kConfig, "config.no_store", "a session store is required");
  std::map<std::string, std::vector<Json>> by_session;
  for (const Json& e : store_->Events()) by_session[e.at("session").get<std::string>()].push_back(e);
  for (auto& [id, events] : by_session) {
    auto slot = std::make_shared<Slot>();
    slot->session = Replay(events, config_.survey);
    sessions_.emplace(id, std::move(slot));
  }
  prompt_cursor_ = sessions_.size();
}

void StudyService::SetModels(std::shared_ptr<const StudyModels> models) {
  if (models) models->Validate();
  std::lock_guard lock(models_mu_);
  models_ = std::move(models);
}

std::shared_ptr<const StudyModels> StudyService::models() const {
  std::lock_guard lock(models_mu_);
  return models_;
}

bool StudyService::ready() const { return models() != nullptr; }

std::shared_ptr<StudyService::Slot> StudyService::Lookup(const std::string& session_id) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) {
    Fail(ErrorKind::kNotFound, "study.unknown_session", "no session '" + session_id + "'");
  }
  return it->second;
}

std::optional<StudySession> StudyService::Get(const std::string& session_id) const {
  std::shared_lock lock(sessions_mu_);
  auto it = sessions_.find(session_id);
  if (it == sessions_.end()) return std::nullopt;
  std::lock_guard slot_lock(it->second->mu);
  return it->second->session;
}

void StudyService::Record(Slot& slot, const std::string& type, Json data) {
  const Json event = {{"session", slot.session.id},
                      {"seq", slot.session.events},
                      {"type", type},
                      {"at", NowIso8601()},
                      {"data", std::move(data)}};
  StudySession next = slot.session;
  ApplyEvent(next, event, config_.survey);
  store_->Append(event);
  slot.session = std::move(next);
}

Json StudyService::StoryPayload(int ordinal, const std::string& story_id) const {
  const auto m = models();
  const corpus::Story* story = m ? m->stories->Find(story_id) : nullptr;
  if (story == nullptr) {
    Fail(ErrorKind::kUnavailable, "study.story_unavailable", "retrieved story is not loaded");
  }
  return {{"ordinal", ordinal}, {"story", {{"text", story->text}}}};
}

Json StudyService::CreateSession() {
  if (!ready()) {
    Fail(ErrorKind::kUnavailable, "study.models_not_loaded", "retrieval indexes are not loaded");
  }
  auto slot = std::make_shared<Slot>();
  ConditionOrder order;
  {
    std::lock_guard lock(rng_mu_);
    order = order_rng_.UniformIndex(2) == 0 ? ConditionOrder::kTunedFirst
                                            : ConditionOrder::kBaselineFirst;
  }
  const std::string prompt = config_.prompts[prompt_cursor_++ % config_.prompts.size()];
  std::string id;
  {
    std::unique_lock lock(sessions_mu_);
    do {
      id = RandomToken();
    } while (sessions_.contains(id));
    slot->session.id = id;
    sessions_.emplace(id, slot);
  }
  std::lock_guard slot_lock(slot->mu);
  try {
    Record(*slot, "created",
           {{"prompt", prompt}, {"condition_order", ToString(order)}, {"created_at", NowIso8601()}});
  } catch (...) {
    std::unique_lock lock(sessions_mu_);
    sessions_.erase(id);
    throw;
  }
  Json survey = Json::array();
  for (const SurveyItem& item : config_.survey.items) survey.push_back(item.text);
  return {{"session_id", id},
          {"prompt", prompt},
          {"mood_question", config_.mood_question},
          {"story_min_chars", config_.story_min_chars},
          {"story_max_chars", config_.story_max_chars},
          {"survey",
           {{"items", survey},
            {"scale_min", config_.survey.scale_min},
            {"scale_max", config_.survey.scale_max}}}};
}

namespace {

// Holds a session's mutex for one call; a concurrent call on the same
// session is refused rather than queued.
class SessionGuard {
 public:
  explicit SessionGuard(std::mutex& mu) : lock_(mu, std::try_to_lock) {
    if (!lock_.owns_lock()) {
      Fail(ErrorKind::kConflict, "study.session_busy",
           "another request for this session is in progress");
    }
  }

 private:
  std::unique_lock<std::mutex> lock_;
};

}  // namespace

Json StudyService::SubmitStory(const std::string& session_id, const StorySubmission& sub) {
  auto slot = Lookup(session_id);
  SessionGuard guard(slot->mu);
  StudySession& s = slot->session;
  if (s.state != SessionState::kCreated) Conflict(s, "submit a story");
  if (sub.mood < 1 || sub.mood > 5) {
    Fail(ErrorKind::kValidation, "study.bad_mood", "mood must be 1-5");
  }
  const std::size_t chars = CharCount(sub.text);
  if (chars < config_.story_min_chars || chars > config_.story_max_chars) {
    Fail(ErrorKind::kValidation, "study.story_length",
         "story has " + std::to_string(chars) + " characters; allowed " +
             std::to_string(config_.story_min_chars) + "-" +
             std::to_string(config_.story_max_chars));
  }
  if (sub.event.empty() || sub.emotion.empty() || sub.moral.empty()) {
    Fail(ErrorKind::kValidation, "study.missing_features",
         "main event, emotion and moral answers are required");
  }
  const auto m = models();
  if (!m) Fail(ErrorKind::kUnavailable, "study.models_not_loaded", "retrieval indexes are not loaded");

  const retrieval::ConditionPicks picks = retrieval::QueryPairConditions(
      {m->tuned_index, m->tuned_head}, {m->baseline_index, m->baseline_head}, sub.text,
      *m->backend, config_.exclude);

  corpus::Story story;
  story.id = "user-" + s.id;
  story.text = sub.text;
  story.event = sub.event;
  story.emotion = sub.emotion;
  story.moral = sub.moral;
  story.source = corpus::Source::kUserSubmitted;
  story.split = corpus::Split::kUnsplit;

  Record(*slot, "story_submitted",
         {{"mood", sub.mood},
          {"story", corpus::StoryToJson(story)},
          {"tuned", {{"story_id", picks.tuned.id}, {"similarity", picks.tuned.similarity}}},
          {"baseline", {{"story_id", picks.baseline.id}, {"similarity", picks.baseline.similarity}}},
          {"baseline_fell_back", picks.baseline_fell_back}});
  return StoryPayload(1, s.Condition(s.ModelAt(1)).story_id);
}

Json StudyService::SubmitRating(const std::string& session_id, int ordinal,
                                const std::vector<int>& items, const std::string& explanation) {
  if (ordinal != 1 && ordinal != 2) {
    Fail(ErrorKind::kValidation, "study.bad_ordinal", "condition ordinal must be 1 or 2");
  }
  auto slot = Lookup(session_id);
  SessionGuard guard(slot->mu);
  StudySession& s = slot->session;
  const SessionState required =
      ordinal == 1 ? SessionState::kStorySubmitted : SessionState::kCondition1Rated;
  if (s.state != required) Conflict(s, "rate condition " + std::to_string(ordinal));
  // Validates before anything is persisted.
  EmpathyResponse::FromItems(items, config_.survey);
  Record(*slot, "rated",
         {{"ordinal", ordinal},
          {"model", ToString(s.ModelAt(ordinal))},
          {"items", items},
          {"explanation", explanation}});
  if (ordinal == 1) return StoryPayload(2, s.Condition(s.ModelAt(2)).story_id);
  return {{"next", "demographics"},
          {"form",
           {{"fields",
             {{{"name", "age"}, {"type", "integer"}},
              {{"name", "gender"}, {"type", "string"}},
              {{"name", "ethnicity"}, {"type", "string"}},
              {{"name", "self_rated_empathy"}, {"type", "integer"}, {"min", 1}, {"max", 5}}}},
            {"optional", config_.demographics_optional}}}};
}

Json StudyService::SubmitDemographics(const std::string& session_id, const Demographics& d) {
  auto slot = Lookup(session_id);
  SessionGuard guard(slot->mu);
  StudySession& s = slot->session;
  if (s.state != SessionState::kCondition2Rated) Conflict(s, "submit demographics");
  if (!config_.demographics_optional &&
      (!d.age || !d.gender || !d.ethnicity || !d.self_rated_empathy)) {
    Fail(ErrorKind::kValidation, "study.missing_demographics", "all demographic fields are required");
  }
  if (d.age && (*d.age < 0 || *d.age > 130)) {
    Fail(ErrorKind::kValidation, "study.bad_demographics", "age out of range");
  }
  if (d.self_rated_empathy && (*d.self_rated_empathy < 1 || *d.self_rated_empathy > 5)) {
    Fail(ErrorKind::kValidation, "study.bad_demographics", "self-rated empathy must be 1-5");
  }
  Record(*slot, "demographics", DemographicsToJson(d));
  return {{"status", "completed"},
          {"receipt", embedding::HashHex(embedding::TextHash(s.id + ":" + s.created_at))}};
}

Json ExportResult::AnalysisJson() const {
  Json rows = Json::array();
  for (const PairedRow& r : table) {
    Json row = {{"session_id", r.session_id}};
    for (std::size_t m = 0; m < kMeasures.size(); ++m) {
      row[std::string(kMeasures[m]) + "_tuned"] = r.tuned[m];
      row[std::string(kMeasures[m]) + "_baseline"] = r.baseline[m];
    }
    rows.push_back(std::move(row));
  }
  Json tests_json = Json::object();
  for (const auto& [measure, t] : tests) {
    auto finite = [](double x) { return std::isfinite(x) ? Json(x) : Json(x > 0 ? "inf" : "-inf"); };
    tests_json[measure] = {{"n", t.n},
                           {"mean_difference", t.mean_difference},
                           {"sd_difference", t.sd_difference},
                           {"t", finite(t.t)},
                           {"df", t.df},
                           {"p_two_tailed", t.p_two_tailed},
                           {"p_one_tailed", t.p_one_tailed},
                           {"cohens_d", finite(t.cohens_d)},
                           {"note", t.note}};
  }
  for (const auto& [measure, error] : test_errors) tests_json[measure] = {{"error", error}};
  return {{"table", rows}, {"tests", tests_json}};
}

ExportResult StudyService::Export(const ExportFilter& filter) const {
  std::vector<std::shared_ptr<Slot>> slots;
  {
    std::shared_lock lock(sessions_mu_);
    for (const auto& [id, slot] : sessions_) slots.push_back(slot);
  }
  ExportResult out;
  for (const auto& slot : slots) {
    StudySession s;
    {
      std::lock_guard lock(slot->mu);
      s = slot->session;
    }
    const bool completed = s.state == SessionState::kCompleted;
    if (filter.completed_only && !completed) continue;
    out.records.push_back(SessionToJson(s));
    if (!completed) continue;
    PairedRow row{s.id, {}, {}};
    const EmpathyResponse& t = *s.tuned.response;
    const EmpathyResponse& b = *s.baseline.response;
    row.tuned = {double(t.total), double(t.affective), double(t.cognitive), double(t.associative)};
    row.baseline = {double(b.total), double(b.affective), double(b.cognitive),
                    double(b.associative)};
    out.table.push_back(row);
  }
  if (out.table.empty()) return out;
  for (std::size_t m = 0; m < kMeasures.size(); ++m) {
    std::vector<double> tuned, baseline;
    for (const PairedRow& r : out.table) {
      tuned.push_back(r.tuned[m]);
      baseline.push_back(r.baseline[m]);
    }
    try {
      out.tests.emplace(std::string(kMeasures[m]), PairedT(tuned, baseline));
    } catch (const Error& e) {
      out.test_errors.emplace(std::string(kMeasures[m]), e.what());
    }
  }
  return out;
}

}  // namespace empathic::study
