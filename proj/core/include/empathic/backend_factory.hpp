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

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "empathic/embedding.hpp"

namespace empathic::embedding {

struct BackendSpec {
  std::string kind = "stub";  // stub | file | http
  std::size_t dim = 64;       // stub only
  std::uint64_t seed = 0;     // stub only
  std::filesystem::path vectors;  // file only
  HttpBackendConfig http;
  std::optional<std::filesystem::path> cache;
};

// Reads {kind, dim, seed, vectors, url, path, timeout_ms, max_batch,
// max_retries, cache}; relative paths resolve against base_dir.
BackendSpec BackendSpecFromJson(const nlohmann::json& j,
                                const std::filesystem::path& base_dir = {});

struct BackendHandle {
  std::shared_ptr<EmbeddingBackend> backend;
  std::shared_ptr<EmbeddingCache> cache;  // null without a cache path

  void SaveCache() const {
    if (cache) cache->Save();
  }
};

BackendHandle MakeBackend(const BackendSpec& spec);

}  // namespace empathic::embedding
