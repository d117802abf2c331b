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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "empathic/corpus.hpp"

namespace empathic::embedding {

// Pooled sentence embedding produced by a backend.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& raw() const { return values_; }

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  std::vector<double> values_;
};

double Dot(std::span<const double> u, std::span<const double> v);
double Norm(std::span<const double> u);

// Cosine similarity clamped to [-1, 1]. Dimension mismatch is an argument
// error; a zero-norm input is a computation error.
double Cosine(const EmbeddingVector& u, const EmbeddingVector& v);

// 64-bit FNV-1a over the NFC-normalized UTF-8 text.
std::uint64_t TextHash(std::string_view text);
std::string HashHex(std::uint64_t hash);
std::uint64_t ParseHashHex(std::string_view hex);

class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dimension() const = 0;
  // One vector per input text, in order. Implementations must be safe to call
  // from several threads.
  virtual std::vector<EmbeddingVector> EmbedBatch(std::span<const std::string> texts) = 0;
};

// Validates the text, then asks the backend.
EmbeddingVector Embed(EmbeddingBackend& backend, std::string_view text);

// Seeded hash-to-vector backend for tests and offline runs: each text maps to
// a Gaussian vector drawn from a generator seeded by (seed, text hash).
class StubBackend : public EmbeddingBackend {
 public:
  StubBackend(std::size_t dimension, std::uint64_t seed);

  std::string name() const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<EmbeddingVector> EmbedBatch(std::span<const std::string> texts) override;

  EmbeddingVector EmbedOne(std::string_view text) const;

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
};

// Precomputed vectors keyed by text hash, read from a line-delimited file of
// {hash, dim, values} records.
class FileBackend : public EmbeddingBackend {
 public:
  explicit FileBackend(const std::filesystem::path& path, std::string name = "file");
  FileBackend(std::string name, std::unordered_map<std::uint64_t, EmbeddingVector> vectors);

  std::string name() const override { return name_; }
  std::size_t dimension() const override { return dimension_; }
  std::vector<EmbeddingVector> EmbedBatch(std::span<const std::string> texts) override;

  std::size_t size() const { return vectors_.size(); }

 private:
  std::string name_;
  std::size_t dimension_ = 0;
  std::unordered_map<std::uint64_t, EmbeddingVector> vectors_;
};

void WriteVectorFile(const std::filesystem::path& path,
                     const std::map<std::uint64_t, EmbeddingVector>& vectors);

struct HttpBackendConfig {
  std::string base_url = "http://127.0.0.1:8081";
  std::string path = "/embed";
  std::string name = "http";
  std::chrono::milliseconds timeout{30000};
  std::size_t max_batch = 32;
  int max_retries = 2;
};

// Posts {texts:[...]} to the embedding service and expects {vectors:[[...]]}.
// The dimension is learned from the first response unless preset.
class HttpBackend : public EmbeddingBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config, std::size_t dimension = 0);

  std::string name() const override { return config_.name; }
  std::size_t dimension() const override;
  std::vector<EmbeddingVector> EmbedBatch(std::span<const std::string> texts) override;

 private:
  std::vector<EmbeddingVector> PostChunk(std::span<const std::string> texts);

  HttpBackendConfig config_;
  mutable std::mutex mu_;
  std::size_t dimension_;
};

// (backend name, text hash) -> vector, persisted as line-delimited records.
class EmbeddingCache {
 public:
  EmbeddingCache() = default;
  explicit EmbeddingCache(std::filesystem::path path);  // loads if present

  std::optional<EmbeddingVector> Get(const std::string& backend, std::uint64_t hash) const;
  void Put(const std::string& backend, std::uint64_t hash, const EmbeddingVector& v);
  std::size_t size() const;
  void Save() const;
  void SaveTo(const std::filesystem::path& path) const;

 private:
  using Key = std::pair<std::string, std::uint64_t>;
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<Key, EmbeddingVector> entries_;
};

// Decorator that consults the cache before the wrapped backend.
class CachingBackend : public EmbeddingBackend {
 public:
  CachingBackend(std::shared_ptr<EmbeddingBackend> inner,
                 std::shared_ptr<EmbeddingCache> cache);

  std::string name() const override { return inner_->name(); }
  std::size_t dimension() const override { return inner_->dimension(); }
  std::vector<EmbeddingVector> EmbedBatch(std::span<const std::string> texts) override;

  std::size_t misses() const { return misses_; }

 private:
  std::shared_ptr<EmbeddingBackend> inner_;
  std::shared_ptr<EmbeddingCache> cache_;
  std::atomic<std::size_t> misses_{0};
};

// Mean of the four cosines between story texts, events, emotions and morals.
double CompositeSimilarity(EmbeddingBackend& backend, const corpus::Story& x,
                           const corpus::Story& y);

}  // namespace empathic::embedding
