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

#include <atomic>
#include <condition_variable>
#include <fstream>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <gtest/gtest.h>

#include "empathic/error.hpp"
#include "empathic/study.hpp"
#include "support/fixtures.hpp"

namespace empathic::study {
namespace {

using fixtures::StudyFixture;
using fixtures::TempDir;

StorySubmission Submission(std::uint64_t seed) {
  Rng rng(seed);
  return {3, fixtures::ParticipantStory(seed), fixtures::Sentence(rng, 6),
          fixtures::Sentence(rng, 6), fixtures::Sentence(rng, 6)};
}

const std::vector<int> kItems = {5, 4, 4, 3, 5, 2, 4};

struct Harness {
  TempDir dir;
  StudyFixture fixture = StudyFixture::Make();
  std::shared_ptr<StudyService> service;

  explicit Harness(StudyConfig config = {}) {
    if (config.prompts.empty()) config.prompts = StudyConfig::DefaultPrompts();
    service = std::make_shared<StudyService>(
        config, std::make_shared<SessionStore>(dir / "sessions.jsonl"));
    service->SetModels(fixture.models);
  }
  std::string Create() { return service->CreateSession().at("session_id").get<std::string>(); }
};

std::string ErrorClassOf(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return std::string(e.error_class());
  }
  return "";
}

TEST(Survey, DefaultHasSevenItemsOverThreeSubscales) {
  const auto s = SurveyConfig::Default();
  EXPECT_EQ(s.items.size(), 7u);
  EXPECT_EQ(s.scale_min, 1);
  EXPECT_EQ(s.scale_max, 5);
  std::set<Subscale> seen;
  for (const auto& item : s.items) seen.insert(item.subscale);
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Survey, ResponseSubtotals) {
  const auto r = EmpathyResponse::FromItems(kItems, SurveyConfig::Default());
  EXPECT_EQ(r.affective, 13);
  EXPECT_EQ(r.cognitive, 8);
  EXPECT_EQ(r.associative, 6);
  EXPECT_EQ(r.total, 27);
  EXPECT_EQ(r.affective + r.cognitive + r.associative, r.total);
  EXPECT_EQ(ErrorClassOf([] { EmpathyResponse::FromItems({1, 2, 3}, SurveyConfig::Default()); }),
            "study.bad_survey");
  EXPECT_EQ(ErrorClassOf([] {
              EmpathyResponse::FromItems({1, 2, 3, 4, 5, 6, 1}, SurveyConfig::Default());
            }),
            "study.bad_survey");
}

TEST(StudyService, CreateWithoutModelsIsUnavailable) {
  TempDir dir;
  StudyService s({StudyConfig::DefaultPrompts()}, std::make_shared<SessionStore>(dir / "s.jsonl"));
  EXPECT_FALSE(s.ready());
  try {
    s.CreateSession();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kUnavailable);
  }
}

TEST(StudyService, CreateReturnsPromptAndSurvey) {
  Harness h;
  const Json a = h.service->CreateSession();
  const Json b = h.service->CreateSession();
  EXPECT_EQ(a.at("session_id").get<std::string>().size(), 32u);
  EXPECT_NE(a.at("session_id"), b.at("session_id"));
  EXPECT_NE(a.at("prompt"), b.at("prompt"));  // rotation
  EXPECT_EQ(a.at("survey").at("items").size(), 7u);
  EXPECT_EQ(a.at("story_min_chars"), 100);
}

TEST(StudyService, FullFlowIsBlinded) {
  Harness h;
  const std::string id = h.Create();
  const Json first = h.service->SubmitStory(id, Submission(1));
  EXPECT_EQ(first.at("ordinal"), 1);
  const Json second = h.service->SubmitRating(id, 1, kItems, "felt close");
  EXPECT_EQ(second.at("ordinal"), 2);
  const Json form = h.service->SubmitRating(id, 2, {1, 1, 1, 1, 1, 1, 1}, "");
  EXPECT_EQ(form.at("next"), "demographics");
  EXPECT_TRUE(form.at("form").at("optional").get<bool>());
  const Json done = h.service->SubmitDemographics(id, {});
  EXPECT_EQ(done.at("status"), "completed");
  for (const Json& payload : {first, second, form, done}) {
    const std::string text = payload.dump();
    for (const char* leak : {"tuned", "baseline", "similarity", "model", "story_id", "condition"}) {
      EXPECT_EQ(text.find(leak), std::string::npos) << leak << " in " << text;
    }
  }
  const auto s = *h.service->Get(id);
  EXPECT_EQ(s.state, SessionState::kCompleted);
  EXPECT_NE(s.tuned.story_id, s.baseline.story_id);
  // ordinal 1 was rated with kItems; it belongs to whichever model was shown first
  const Model m1 = s.ModelAt(1);
  EXPECT_EQ(s.Condition(m1).response->total, 27);
  EXPECT_EQ(s.Condition(m1 == Model::kTuned ? Model::kBaseline : Model::kTuned).response->total, 7);
  EXPECT_EQ(s.story->id, "user-" + id);
  // the shown texts are the corpus texts of the recorded stories
  const auto* shown = h.fixture.models->stories->Find(s.Condition(m1).story_id);
  ASSERT_NE(shown, nullptr);
  EXPECT_EQ(first.at("story").at("text"), shown->text);
}

TEST(StudyService, StateMachineRejectsOutOfOrderCalls) {
  Harness h;
  const std::string id = h.Create();
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitRating(id, 1, kItems, ""); }), "study.wrong_state");
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitDemographics(id, {}); }), "study.wrong_state");
  h.service->SubmitStory(id, Submission(2));
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitStory(id, Submission(2)); }), "study.wrong_state");
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitRating(id, 2, kItems, ""); }), "study.wrong_state");
  h.service->SubmitRating(id, 1, kItems, "");
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitRating(id, 1, kItems, ""); }), "study.wrong_state");
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitRating(id, 3, kItems, ""); }), "study.bad_ordinal");
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitStory("nope", Submission(2)); }),
            "study.unknown_session");
}

TEST(StudyService, ValidatesSubmissions) {
  Harness h;
  const std::string id = h.Create();
  auto sub = Submission(3);
  sub.mood = 0;
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitStory(id, sub); }), "study.bad_mood");
  sub = Submission(3);
  sub.text = std::string(99, 'x');
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitStory(id, sub); }), "study.story_length");
  // 100 code points, 200 bytes
  sub.text.clear();
  for (int i = 0; i < 100; ++i) sub.text += "\xC3\xA9";
  sub.moral.clear();
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitStory(id, sub); }), "study.missing_features");
  sub.moral = "m";
  EXPECT_NO_THROW(h.service->SubmitStory(id, sub));
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitRating(id, 1, {9, 9, 9, 9, 9, 9, 9}, ""); }),
            "study.bad_survey");
  EXPECT_EQ(h.service->Get(id)->state, SessionState::kStorySubmitted);
}

TEST(StudyService, RequiredDemographics) {
  StudyConfig c;
  c.demographics_optional = false;
  Harness h(c);
  const std::string id = h.Create();
  h.service->SubmitStory(id, Submission(4));
  h.service->SubmitRating(id, 1, kItems, "");
  h.service->SubmitRating(id, 2, kItems, "");
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitDemographics(id, {}); }),
            "study.missing_demographics");
  Demographics d{30, "f", "x", 9};
  EXPECT_EQ(ErrorClassOf([&] { h.service->SubmitDemographics(id, d); }), "study.bad_demographics");
  d.self_rated_empathy = 4;
  EXPECT_NO_THROW(h.service->SubmitDemographics(id, d));
}

TEST(StudyService, ExcludedStoriesNeverShown) {
  Harness probe;
  const std::string id = probe.Create();
  probe.service->SubmitStory(id, Submission(5));
  const auto s = *probe.service->Get(id);
  StudyConfig c;
  c.exclude = {s.tuned.story_id, s.baseline.story_id};
  Harness h(c);
  const std::string id2 = h.Create();
  h.service->SubmitStory(id2, Submission(5));
  const auto s2 = *h.service->Get(id2);
  EXPECT_FALSE(c.exclude.contains(s2.tuned.story_id));
  EXPECT_FALSE(c.exclude.contains(s2.baseline.story_id));
}

TEST(StudyService, ConditionOrderIsBalanced) {
  Harness h;
  int tuned_first = 0;
  for (int i = 0; i < 1000; ++i) {
    if (h.service->Get(h.Create())->order == ConditionOrder::kTunedFirst) ++tuned_first;
  }
  EXPECT_GE(tuned_first, 450);
  EXPECT_LE(tuned_first, 550);
}

// Blocks any embed call whose text contains "HOLD" until released.
class GatedBackend : public embedding::EmbeddingBackend {
 public:
  explicit GatedBackend(std::shared_ptr<embedding::EmbeddingBackend> inner)
      : inner_(std::move(inner)) {}
  std::string name() const override { return inner_->name(); }
  std::size_t dimension() const override { return inner_->dimension(); }
  std::vector<embedding::EmbeddingVector> EmbedBatch(std::span<const std::string> texts) override {
    for (const auto& t : texts) {
      if (t.find("HOLD") != std::string::npos) {
        std::unique_lock lock(mu_);
        entered_ = true;
        cv_.notify_all();
        cv_.wait(lock, [&] { return released_; });
      }
    }
    return inner_->EmbedBatch(texts);
  }
  void WaitEntered() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return entered_; });
  }
  void Release() {
    std::lock_guard lock(mu_);
    released_ = true;
    cv_.notify_all();
  }

 private:
  std::shared_ptr<embedding::EmbeddingBackend> inner_;
  std::mutex mu_;
  std::condition_variable cv_;
  bool entered_ = false;
  bool released_ = false;
};

TEST(StudyService, ConcurrentCallOnSameSessionConflicts) {
  Harness h;
  auto gated = std::make_shared<GatedBackend>(h.fixture.backend);
  auto models = std::make_shared<StudyModels>(*h.fixture.models);
  models->backend = gated;
  h.service->SetModels(models);
  const std::string id = h.Create();
  auto sub = Submission(6);
  sub.text += " HOLD";
  std::thread slow([&] { h.service->SubmitStory(id, sub); });
  gated->WaitEntered();
  try {
    h.service->SubmitStory(id, Submission(6));
    ADD_FAILURE() << "expected conflict";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConflict);
    EXPECT_EQ(std::string(e.error_class()), "study.session_busy");
  }
  // other sessions are unaffected
  EXPECT_NO_THROW(h.Create());
  gated->Release();
  slow.join();
  EXPECT_EQ(h.service->Get(id)->state, SessionState::kStorySubmitted);
}

TEST(StudyService, FiftyConcurrentParticipants) {
  Harness h;
  std::vector<std::string> ids(50);
  std::atomic<int> failures{0};
  std::vector<std::thread> threads;
  for (int i = 0; i < 50; ++i) {
    threads.emplace_back([&, i] {
      try {
        ids[i] = fixtures::RunParticipant(*h.service, 100 + i);
      } catch (...) {
        ++failures;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(failures.load(), 0);
  const auto out = h.service->Export({.completed_only = true});
  EXPECT_EQ(out.records.size(), 50u);
  EXPECT_EQ(out.table.size(), 50u);
  for (const Json& r : out.records) EXPECT_TRUE(IsCompleteRecord(r));
  // every session was replayable from the shared log
  SessionStore reread(h.dir / "sessions.jsonl");
  for (const auto& id : ids) {
    const auto replayed = Replay(reread.EventsFor(id), SurveyConfig::Default());
    EXPECT_EQ(SessionToJson(replayed), SessionToJson(*h.service->Get(id)));
  }
}

TEST(StudyService, RestartReplaysSessions) {
  TempDir dir;
  const auto fixture = StudyFixture::Make();
  std::string done, partial;
  Json before_done, before_partial;
  {
    StudyService s({StudyConfig::DefaultPrompts()},
                   std::make_shared<SessionStore>(dir / "s.jsonl"));
    s.SetModels(fixture.models);
    done = fixtures::RunParticipant(s, 1);
    partial = s.CreateSession().at("session_id").get<std::string>();
    s.SubmitStory(partial, Submission(9));
    before_done = SessionToJson(*s.Get(done));
    before_partial = SessionToJson(*s.Get(partial));
  }
  StudyService s({StudyConfig::DefaultPrompts()}, std::make_shared<SessionStore>(dir / "s.jsonl"));
  s.SetModels(fixture.models);
  EXPECT_EQ(SessionToJson(*s.Get(done)), before_done);
  EXPECT_EQ(SessionToJson(*s.Get(partial)), before_partial);
  // resumes where it stopped
  EXPECT_NO_THROW(s.SubmitRating(partial, 1, kItems, ""));
}

TEST(SessionStore, ToleratesTornFinalLine) {
  TempDir dir;
  const auto fixture = StudyFixture::Make();
  std::string id;
  {
    StudyService s({StudyConfig::DefaultPrompts()},
                   std::make_shared<SessionStore>(dir / "s.jsonl"));
    s.SetModels(fixture.models);
    id = s.CreateSession().at("session_id").get<std::string>();
    s.SubmitStory(id, Submission(10));
  }
  {
    std::ofstream f(dir / "s.jsonl", std::ios::app);
    f << R"({"session":")" << id << R"(","seq":2,"type":"rat)";
  }
  StudyService s({StudyConfig::DefaultPrompts()}, std::make_shared<SessionStore>(dir / "s.jsonl"));
  s.SetModels(fixture.models);
  EXPECT_EQ(s.Get(id)->state, SessionState::kStorySubmitted);
  EXPECT_NO_THROW(s.SubmitRating(id, 1, kItems, ""));
  SessionStore reread(dir / "s.jsonl");
  EXPECT_EQ(Replay(reread.EventsFor(id), SurveyConfig::Default()).state,
            SessionState::kCondition1Rated);
}

TEST(SessionStore, UnterminatedFinalEventIsKept) {
  TempDir dir;
  const std::string e0 = R"({"session":"a","seq":0,"type":"created","at":"t","data":{}})";
  {
    std::ofstream f(dir / "s.jsonl");
    f << e0;
  }
  {
    SessionStore store(dir / "s.jsonl");
    EXPECT_EQ(store.Events().size(), 1u);
    store.Append({{"session", "b"}, {"seq", 0}, {"type", "created"}, {"at", "t"},
                  {"data", Json::object()}});
  }
  EXPECT_EQ(SessionStore(dir / "s.jsonl").Events().size(), 2u);
}

TEST(SessionStore, CorruptMiddleLineIsParseError) {
  TempDir dir;
  {
    std::ofstream f(dir / "s.jsonl");
    f << "garbage\n" << R"({"session":"a","seq":0,"type":"created","at":"x","data":{}})" << "\n";
  }
  EXPECT_THROW(SessionStore(dir / "s.jsonl"), Error);
}

TEST(Replay, RejectsGaps) {
  const Json created = {{"session", "a"}, {"seq", 0}, {"type", "created"}, {"at", "t"},
                        {"data", {{"prompt", "p"}, {"condition_order", "tuned_first"},
                                  {"created_at", "t"}}}};
  Json skipped = {{"session", "a"}, {"seq", 2}, {"type", "demographics"}, {"at", "t"},
                  {"data", Json::object()}};
  EXPECT_EQ(ErrorClassOf([&] { Replay({created, skipped}, SurveyConfig::Default()); }),
            "study.bad_replay");
}

TEST(Export, TableAndTests) {
  Harness h;
  for (int i = 0; i < 6; ++i) fixtures::RunParticipant(*h.service, 200 + i);
  const std::string partial = h.Create();
  const auto all = h.service->Export();
  EXPECT_EQ(all.records.size(), 7u);
  EXPECT_EQ(all.table.size(), 6u);
  const auto done = h.service->Export({.completed_only = true});
  EXPECT_EQ(done.records.size(), 6u);
  for (auto m : kMeasures) {
    const std::string key(m);
    EXPECT_TRUE(done.tests.contains(key) || done.test_errors.contains(key)) << key;
  }
  // totals in the table match a direct t-test
  std::vector<double> t, b;
  for (const auto& r : done.table) {
    t.push_back(r.tuned[0]);
    b.push_back(r.baseline[0]);
    EXPECT_EQ(r.tuned[0], r.tuned[1] + r.tuned[2] + r.tuned[3]);
  }
  ASSERT_TRUE(done.tests.contains("total"));
  EXPECT_DOUBLE_EQ(done.tests.at("total").t, PairedT(t, b).t);
  const Json analysis = done.AnalysisJson();
  EXPECT_EQ(analysis.at("table").size(), 6u);
  EXPECT_TRUE(analysis.at("tests").contains("total"));
  std::string why;
  const Json* rec = nullptr;
  for (const Json& r : all.records) {
    if (r.at("session_id") == partial) rec = &r;
  }
  ASSERT_NE(rec, nullptr);
  EXPECT_FALSE(IsCompleteRecord(*rec, &why));
  EXPECT_FALSE(why.empty());
}

TEST(Export, SingleSessionReportsTestError) {
  Harness h;
  fixtures::RunParticipant(*h.service, 300);
  const auto out = h.service->Export();
  EXPECT_TRUE(out.tests.empty());
  EXPECT_EQ(out.test_errors.size(), 4u);
}

TEST(StudyModels, ValidateRejectsMismatchedIndex) {
  const auto f = StudyFixture::Make();
  StudyModels m = *f.models;
  std::swap(m.tuned_index, m.baseline_index);
  EXPECT_EQ(ErrorClassOf([&] { m.Validate(); }), "config.bad_models");
}

}  // namespace
}  // namespace empathic::study
