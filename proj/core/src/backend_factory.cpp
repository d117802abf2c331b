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

#include "empathic/backend_factory.hpp"

#include "empathic/error.hpp"

namespace empathic::embedding {

BackendSpec BackendSpecFromJson(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  BackendSpec spec;
  try {
    spec.kind = j.value("kind", spec.kind);
    spec.dim = j.value("dim", spec.dim);
    spec.seed = j.value("seed", spec.seed);
    if (j.contains("vectors")) spec.vectors = resolve(j["vectors"].get<std::string>());
    spec.http.base_url = j.value("url", spec.http.base_url);
    spec.http.path = j.value("path", spec.http.path);
    spec.http.name = j.value("name", spec.http.name);
    spec.http.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000));
    spec.http.max_batch = j.value("max_batch", spec.http.max_batch);
    spec.http.max_retries = j.value("max_retries", spec.http.max_retries);
    if (j.contains("cache")) spec.cache = resolve(j["cache"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorKind::kConfig, "config.bad_backend", e.what());
  }
  return spec;
}

BackendHandle MakeBackend(const BackendSpec& spec) {
  BackendHandle handle;
  if (spec.kind == "stub") {
    handle.backend = std::make_shared<StubBackend>(spec.dim, spec.seed);
  } else if (spec.kind == "file") {
    if (!std::filesystem::exists(spec.vectors)) {
      Fail(ErrorKind::kConfig, "config.path_missing",
           "vector file not found: " + spec.vectors.string());
    }
    handle.backend = std::make_shared<FileBackend>(spec.vectors);
  } else if (spec.kind == "http") {
    handle.backend = std::make_shared<HttpBackend>(spec.http);
  } else {
    Fail(ErrorKind::kConfig, "config.bad_backend", "unknown backend kind '" + spec.kind + "'");
  }
  if (spec.cache) {
    handle.cache = std::make_shared<EmbeddingCache>(*spec.cache);
    handle.backend = std::make_shared<CachingBackend>(handle.backend, handle.cache);
  }
  return handle;
}

}  // namespace empathic::embedding
