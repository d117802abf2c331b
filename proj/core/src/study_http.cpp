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

#include "empathic/study_http.hpp"

#include <fstream>

#include <httplib.h>

#include "empathic/error.hpp"
#include "empathic/simhead.hpp"

namespace empathic::study {
namespace {

using Json = nlohmann::json;

std::filesystem::path Resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

std::filesystem::path RequirePath(const Json& j, const char* key,
                                  const std::filesystem::path& base) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) {
    Fail(ErrorKind::kConfig, "config.missing_field", std::string("models.") + key + " is required");
  }
  return Resolve(base, it->get<std::string>());
}

void CheckExists(const std::filesystem::path& p) {
  if (!std::filesystem::exists(p)) {
    Fail(ErrorKind::kConfig, "config.path_missing", "no such file: " + p.string());
  }
}

Json ErrorBody(const std::string& cls, const std::string& message) {
  return {{"error", {{"class", cls}, {"message", message}}}};
}

void Reply(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

Json ParseBody(const httplib::Request& req) {
  Json body = Json::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    Fail(ErrorKind::kParse, "request.bad_json", "request body must be a JSON object");
  }
  return body;
}

template <typename T>
T Field(const Json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end()) {
    Fail(ErrorKind::kValidation, "request.missing_field", std::string("missing field '") + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const Json::exception&) {
    Fail(ErrorKind::kValidation, "request.bad_field", std::string("field '") + key + "' has the wrong type");
  }
}

template <typename T>
std::optional<T> OptionalField(const Json& body, const char* key) {
  auto it = body.find(key);
  if (it == body.end() || it->is_null()) return std::nullopt;
  return Field<T>(body, key);
}

bool IsLoopback(const std::string& address) {
  return address == "127.0.0.1" || address == "::1" || address == "::ffff:127.0.0.1";
}

}  // namespace

namespace {

ServiceConfig ParseServiceConfig(const Json& j, const std::filesystem::path& base) {
  ServiceConfig c;
  StudyConfig& s = c.study;
  s.prompts = j.value("prompts", StudyConfig::DefaultPrompts());
  s.story_min_chars = j.value("story_min_chars", s.story_min_chars);
  s.story_max_chars = j.value("story_max_chars", s.story_max_chars);
  if (s.story_min_chars > s.story_max_chars) {
    Fail(ErrorKind::kConfig, "config.bad_bounds", "story_min_chars exceeds story_max_chars");
  }
  s.demographics_optional = j.value("demographics_optional", s.demographics_optional);
  s.mood_question = j.value("mood_question", s.mood_question);
  if (j.contains("exclude")) s.exclude = j.at("exclude").get<std::set<std::string>>();
  if (j.contains("seed") && !j.at("seed").is_null()) s.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("survey")) {
    const Json& sv = j.at("survey");
    s.survey.scale_min = sv.value("scale_min", s.survey.scale_min);
    s.survey.scale_max = sv.value("scale_max", s.survey.scale_max);
    if (sv.contains("items")) {
      const Json& items = sv.at("items");
      if (!items.is_array() || items.size() != kSurveyItems) {
        Fail(ErrorKind::kConfig, "config.bad_survey",
             "survey.items must list exactly " + std::to_string(kSurveyItems) + " items");
      }
      for (std::size_t i = 0; i < kSurveyItems; ++i) {
        s.survey.items[i] = {items[i].at("text").get<std::string>(),
                             ParseSubscale(items[i].at("subscale").get<std::string>())};
      }
    }
    if (s.survey.scale_min >= s.survey.scale_max) {
      Fail(ErrorKind::kConfig, "config.bad_survey", "survey scale_min must be below scale_max");
    }
  }
  c.server.host = j.value("host", c.server.host);
  c.server.port = j.value("port", c.server.port);
  c.server.rate_limit_per_minute = j.value("rate_limit_per_minute", c.server.rate_limit_per_minute);
  c.server.export_loopback_only = j.value("export_loopback_only", c.server.export_loopback_only);
  c.server.threads = j.value("threads", c.server.threads);
  if (j.contains("store_path")) c.store_path = Resolve(base, j.at("store_path").get<std::string>());
  else c.store_path = Resolve(base, c.store_path.string());
  if (j.contains("models")) {
    const Json& m = j.at("models");
    ModelPaths p;
    p.backend = embedding::BackendSpecFromJson(m.value("backend", Json::object()), base);
    p.stories = RequirePath(m, "stories", base);
    p.tuned_checkpoint = RequirePath(m, "tuned_checkpoint", base);
    p.tuned_index = RequirePath(m, "tuned_index", base);
    if (m.contains("baseline_checkpoint")) {
      p.baseline_checkpoint = RequirePath(m, "baseline_checkpoint", base);
    }
    p.baseline_index = RequirePath(m, "baseline_index", base);
    c.models = std::move(p);
  }
  return c;
}

}  // namespace

ServiceConfig ServiceConfigFromJson(const Json& j, const std::filesystem::path& base) {
  try {
    return ParseServiceConfig(j, base);
  } catch (const Json::exception& e) {
    Fail(ErrorKind::kConfig, "config.bad_value", e.what());
  }
}

ServiceConfig LoadServiceConfig(const std::filesystem::path& path) {
  CheckExists(path);
  std::ifstream in(path);
  Json j = Json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    Fail(ErrorKind::kConfig, "config.bad_file", path.string() + " is not a JSON object");
  }
  return ServiceConfigFromJson(j, path.parent_path());
}

std::shared_ptr<const StudyModels> LoadModels(const ModelPaths& paths) {
  for (const auto* p : {&paths.stories, &paths.tuned_checkpoint, &paths.tuned_index,
                        &paths.baseline_index}) {
    CheckExists(*p);
  }
  auto models = std::make_shared<StudyModels>();
  models->backend = embedding::MakeBackend(paths.backend).backend;
  models->stories = std::make_shared<const corpus::Corpus>(corpus::LoadCorpus(paths.stories));
  models->tuned_head = simhead::LoadCheckpoint(paths.tuned_checkpoint).head;
  models->tuned_index = retrieval::StoryIndex::Load(paths.tuned_index);
  if (paths.baseline_checkpoint) {
    CheckExists(*paths.baseline_checkpoint);
    models->baseline_head = simhead::LoadCheckpoint(*paths.baseline_checkpoint).head;
  } else {
    models->baseline_head = simhead::ProjectionHead::Identity(models->backend->dimension(),
                                                              models->backend->name());
  }
  models->baseline_index = retrieval::StoryIndex::Load(paths.baseline_index);
  models->Validate();
  return models;
}

int HttpStatus(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParse:
    case ErrorKind::kArgument: return 400;
    case ErrorKind::kNotFound: return 404;
    case ErrorKind::kConflict: return 409;
    case ErrorKind::kValidation: return 422;
    case ErrorKind::kUnavailable: return 503;
    default: return 500;
  }
}

class StudyServer::Impl {
 public:
  httplib::Server http;
};

StudyServer::StudyServer(std::shared_ptr<StudyService> service, ServerConfig config)
    : service_(std::move(service)), config_(std::move(config)), impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;
  const int threads = std::max(1, config_.threads);
  http.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };

  // Wraps a handler with rate limiting and error mapping.
  auto route = [this](auto handler) {
    return [this, handler](const httplib::Request& req, httplib::Response& res) {
      if (!Admit(req.remote_addr)) {
        Reply(res, 429, ErrorBody("request.rate_limited", "too many requests"));
        return;
      }
      try {
        handler(req, res);
      } catch (const Error& e) {
        Reply(res, HttpStatus(e.kind()), ErrorBody(e.error_class(), e.what()));
      } catch (const std::exception& e) {
        Reply(res, 500, ErrorBody("internal", e.what()));
      }
    };
  };

  http.Post("/sessions", route([this](const httplib::Request&, httplib::Response& res) {
              Reply(res, 201, service_->CreateSession());
            }));

  http.Post("/sessions/:id/story", route([this](const httplib::Request& req, httplib::Response& res) {
              const Json body = ParseBody(req);
              StorySubmission sub;
              sub.mood = Field<int>(body, "mood");
              sub.text = Field<std::string>(body, "text");
              sub.event = Field<std::string>(body, "event");
              sub.emotion = Field<std::string>(body, "emotion");
              sub.moral = Field<std::string>(body, "moral");
              Reply(res, 200, service_->SubmitStory(req.path_params.at("id"), sub));
            }));

  http.Post("/sessions/:id/ratings/:ordinal",
            route([this](const httplib::Request& req, httplib::Response& res) {
              const std::string& raw = req.path_params.at("ordinal");
              if (raw != "1" && raw != "2") {
                Fail(ErrorKind::kValidation, "study.bad_ordinal", "condition ordinal must be 1 or 2");
              }
              const Json body = ParseBody(req);
              Reply(res, 200,
                    service_->SubmitRating(req.path_params.at("id"), raw == "1" ? 1 : 2,
                                           Field<std::vector<int>>(body, "items"),
                                           body.value("explanation", std::string())));
            }));

  http.Post("/sessions/:id/demographics",
            route([this](const httplib::Request& req, httplib::Response& res) {
              const Json body = ParseBody(req);
              Demographics d;
              d.age = OptionalField<int>(body, "age");
              d.gender = OptionalField<std::string>(body, "gender");
              d.ethnicity = OptionalField<std::string>(body, "ethnicity");
              d.self_rated_empathy = OptionalField<int>(body, "self_rated_empathy");
              Reply(res, 200, service_->SubmitDemographics(req.path_params.at("id"), d));
            }));

  http.Get("/export", route([this](const httplib::Request& req, httplib::Response& res) {
             if (config_.export_loopback_only && !IsLoopback(req.remote_addr)) {
               Reply(res, 403, ErrorBody("request.forbidden", "export is restricted to loopback"));
               return;
             }
             ExportFilter filter;
             filter.completed_only = req.get_param_value("completed_only") == "true";
             const ExportResult result = service_->Export(filter);
             if (req.get_param_value("format") == "jsonl") {
               std::string out;
               for (const Json& r : result.records) out += r.dump() + "\n";
               res.set_content(out, "application/x-ndjson");
               return;
             }
             Json analysis = result.AnalysisJson();
             Reply(res, 200, {{"records", result.records},
                              {"table", analysis["table"]},
                              {"tests", analysis["tests"]}});
           }));

  http.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
    Reply(res, service_->ready() ? 200 : 503, {{"ready", service_->ready()}});
  });
}

StudyServer::~StudyServer() { Stop(); }

int StudyServer::Bind() {
  auto& http = impl_->http;
  if (config_.port == 0) {
    port_ = http.bind_to_any_port(config_.host);
  } else {
    port_ = http.bind_to_port(config_.host, config_.port) ? config_.port : -1;
  }
  if (port_ < 0) {
    Fail(ErrorKind::kIo, "service.bind_failed",
         "cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  return port_;
}

void StudyServer::Run() {
  if (port_ < 0) Bind();
  impl_->http.listen_after_bind();
}

void StudyServer::Stop() {
  if (impl_) impl_->http.stop();
}

bool StudyServer::Admit(const std::string& address) {
  if (config_.rate_limit_per_minute <= 0) return true;
  const double capacity = config_.rate_limit_per_minute;
  const auto now = std::chrono::steady_clock::now();
  std::lock_guard lock(buckets_mu_);
  auto [it, fresh] = buckets_.try_emplace(address, Bucket{capacity, now});
  Bucket& b = it->second;
  if (!fresh) {
    const double minutes = std::chrono::duration<double>(now - b.at).count() / 60.0;
    b.tokens = std::min(capacity, b.tokens + minutes * capacity);
    b.at = now;
  }
  if (b.tokens < 1.0) return false;
  b.tokens -= 1.0;
  return true;
}

}  // namespace empathic::study
