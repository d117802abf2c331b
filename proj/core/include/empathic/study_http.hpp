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

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "empathic/backend_factory.hpp"
#include "empathic/error.hpp"
#include "empathic/study.hpp"

namespace empathic::study {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;                  // 0 picks a free port
  double rate_limit_per_minute = 600;  // per client address; 0 disables
  bool export_loopback_only = true;
  int threads = 8;
};

struct ModelPaths {
  embedding::BackendSpec backend;
  std::filesystem::path stories;
  std::filesystem::path tuned_checkpoint;
  std::filesystem::path tuned_index;
  std::optional<std::filesystem::path> baseline_checkpoint;  // identity head when unset
  std::filesystem::path baseline_index;
};

struct ServiceConfig {
  StudyConfig study;
  ServerConfig server;
  std::filesystem::path store_path = "sessions.jsonl";
  std::optional<ModelPaths> models;
};

// Relative paths resolve against the config file's directory.
ServiceConfig ServiceConfigFromJson(const nlohmann::json& j,
                                    const std::filesystem::path& base_dir = {});
ServiceConfig LoadServiceConfig(const std::filesystem::path& path);

std::shared_ptr<const StudyModels> LoadModels(const ModelPaths& paths);

// 400 parse/argument, 404 not found, 409 conflict, 422 validation,
// 503 unavailable, 500 otherwise.
int HttpStatus(ErrorKind kind);

class StudyServer {
 public:
  StudyServer(std::shared_ptr<StudyService> service, ServerConfig config);
  ~StudyServer();
  StudyServer(const StudyServer&) = delete;
  StudyServer& operator=(const StudyServer&) = delete;

  // Binds and returns the bound port.
  int Bind();
  // Blocks until Stop().
  void Run();
  void Stop();
  int port() const { return port_; }

 private:
  class Impl;
  bool Admit(const std::string& address);

  std::shared_ptr<StudyService> service_;
  ServerConfig config_;
  std::unique_ptr<Impl> impl_;
  int port_ = -1;

  struct Bucket {
    double tokens;
    std::chrono::steady_clock::time_point at;
  };
  std::mutex buckets_mu_;
  std::map<std::string, Bucket> buckets_;
};

}  // namespace empathic::study
