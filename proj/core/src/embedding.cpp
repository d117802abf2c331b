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

#include "empathic/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <unordered_map>

#include <httplib.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include "empathic/error.hpp"
#include "empathic/jsonl.hpp"
#include "empathic/rng.hpp"

namespace empathic::embedding {
namespace {

using jsonl::Json;

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

std::uint64_t Fnv1a(std::string_view bytes, std::uint64_t h = kFnvOffset) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

std::string NormalizeNfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) {
    Fail(ErrorKind::kComputation, "embedding.normalization", "ICU NFC unavailable");
  }
  const icu::UnicodeString source = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  const icu::UnicodeString normalized = nfc->normalize(source, status);
  if (U_FAILURE(status)) {
    Fail(ErrorKind::kComputation, "embedding.normalization", "NFC normalization failed");
  }
  std::string out;
  normalized.toUTF8String(out);
  return out;
}

EmbeddingVector VectorFromJson(const Json& values, std::size_t line) {
  if (!values.is_array()) {
    Fail(ErrorKind::kParse, "parse.bad_field",
         "line " + std::to_string(line) + ": 'values' must be an array");
  }
  std::vector<double> v;
  v.reserve(values.size());
  for (const Json& x : values) {
    if (!x.is_number()) {
      Fail(ErrorKind::kParse, "parse.bad_field",
           "line " + std::to_string(line) + ": non-numeric vector entry");
    }
    v.push_back(x.get<double>());
  }
  try {
    return EmbeddingVector(std::move(v));
  } catch (const Error& e) {
    Fail(ErrorKind::kParse, e.error_class(), "line " + std::to_string(line) + ": " + e.what());
  }
}

}  // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
  for (double x : values_) {
    if (!std::isfinite(x)) {
      Fail(ErrorKind::kArgument, "embedding.non_finite", "embedding has a non-finite entry");
    }
  }
}

double Dot(std::span<const double> u, std::span<const double> v) {
  double sum = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) sum += u[i] * v[i];
  return sum;
}

double Norm(std::span<const double> u) { return std::sqrt(Dot(u, u)); }

double Cosine(const EmbeddingVector& u, const EmbeddingVector& v) {
  if (u.dim() != v.dim()) {
    Fail(ErrorKind::kArgument, "embedding.dim_mismatch",
         "cosine of vectors with dimensions " + std::to_string(u.dim()) + " and " +
             std::to_string(v.dim()));
  }
  const double nu = Norm(u.values());
  const double nv = Norm(v.values());
  if (nu == 0.0 || nv == 0.0) {
    Fail(ErrorKind::kComputation, "embedding.zero_norm", "cosine of a zero-norm vector");
  }
  return std::clamp(Dot(u.values(), v.values()) / (nu * nv), -1.0, 1.0);
}

std::uint64_t TextHash(std::string_view text) { return Fnv1a(NormalizeNfc(text)); }

std::string HashHex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::uint64_t ParseHashHex(std::string_view hex) {
  if (hex.empty() || hex.size() > 16) {
    Fail(ErrorKind::kParse, "parse.bad_hash", "bad text hash '" + std::string(hex) + "'");
  }
  std::uint64_t h = 0;
  for (char c : hex) {
    int digit;
    if (c >= '0' && c <= '9') digit = c - '0';
    else if (c >= 'a' && c <= 'f') digit = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') digit = c - 'A' + 10;
    else Fail(ErrorKind::kParse, "parse.bad_hash", "bad text hash '" + std::string(hex) + "'");
    h = (h << 4) | static_cast<std::uint64_t>(digit);
  }
  return h;
}

EmbeddingVector Embed(EmbeddingBackend& backend, std::string_view text) {
  if (text.empty()) {
    Fail(ErrorKind::kArgument, "embedding.empty_text", "cannot embed empty text");
  }
  const std::string owned(text);
  std::vector<EmbeddingVector> out = backend.EmbedBatch(std::span(&owned, 1));
  return std::move(out.front());
}

// Stub

StubBackend::StubBackend(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
  if (dimension == 0) {
    Fail(ErrorKind::kArgument, "embedding.bad_dimension", "stub dimension must be positive");
  }
}

std::string StubBackend::name() const {
  return "stub-d" + std::to_string(dimension_) + "-s" + std::to_string(seed_);
}

EmbeddingVector StubBackend::EmbedOne(std::string_view text) const {
  Rng rng(TextHash(text) ^ (seed_ * 0x9e3779b97f4a7c15ULL));
  std::vector<double> v(dimension_);
  for (double& x : v) x = rng.Normal();
  return EmbeddingVector(std::move(v));
}

std::vector<EmbeddingVector> StubBackend::EmbedBatch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const std::string& t : texts) out.push_back(EmbedOne(t));
  return out;
}

// File

FileBackend::FileBackend(const std::filesystem::path& path, std::string name)
    : name_(std::move(name)) {
  jsonl::ForEachRecord(path, [&](const Json& r, std::size_t line) {
    const std::uint64_t hash = ParseHashHex(jsonl::RequireString(r, "hash", line));
    const Json& dim = jsonl::RequireField(r, "dim", line);
    EmbeddingVector v = VectorFromJson(jsonl::RequireField(r, "values", line), line);
    if (!dim.is_number_unsigned() || dim.get<std::size_t>() != v.dim() || v.dim() == 0) {
      Fail(ErrorKind::kParse, "parse.bad_dimension",
           "line " + std::to_string(line) + ": 'dim' does not match the vector length");
    }
    if (dimension_ == 0) dimension_ = v.dim();
    if (v.dim() != dimension_) {
      Fail(ErrorKind::kValidation, "embedding.dim_mismatch",
           "line " + std::to_string(line) + ": vector dimension differs from earlier records");
    }
    vectors_.insert_or_assign(hash, std::move(v));
  });
}

FileBackend::FileBackend(std::string name,
                         std::unordered_map<std::uint64_t, EmbeddingVector> vectors)
    : name_(std::move(name)), vectors_(std::move(vectors)) {
  for (const auto& [hash, v] : vectors_) {
    if (dimension_ == 0) dimension_ = v.dim();
    if (v.dim() != dimension_) {
      Fail(ErrorKind::kValidation, "embedding.dim_mismatch", "mixed vector dimensions");
    }
  }
}

std::vector<EmbeddingVector> FileBackend::EmbedBatch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const std::string& t : texts) {
    const std::uint64_t hash = TextHash(t);
    auto it = vectors_.find(hash);
    if (it == vectors_.end()) {
      Fail(ErrorKind::kLookup, "embedding.missing_vector",
           "no stored vector for text hash " + HashHex(hash));
    }
    out.push_back(it->second);
  }
  return out;
}

void WriteVectorFile(const std::filesystem::path& path,
                     const std::map<std::uint64_t, EmbeddingVector>& vectors) {
  std::vector<Json> records;
  records.reserve(vectors.size());
  for (const auto& [hash, v] : vectors) {
    records.push_back({{"hash", HashHex(hash)}, {"dim", v.dim()}, {"values", v.raw()}});
  }
  jsonl::WriteAll(path, records);
}

// HTTP

HttpBackend::HttpBackend(HttpBackendConfig config, std::size_t dimension)
    : config_(std::move(config)), dimension_(dimension) {
  if (config_.max_batch == 0) {
    Fail(ErrorKind::kArgument, "embedding.bad_config", "max_batch must be positive");
  }
}

std::size_t HttpBackend::dimension() const {
  std::lock_guard lock(mu_);
  return dimension_;
}

std::vector<EmbeddingVector> HttpBackend::EmbedBatch(std::span<const std::string> texts) {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (std::size_t begin = 0; begin < texts.size(); begin += config_.max_batch) {
    const std::size_t count = std::min(config_.max_batch, texts.size() - begin);
    for (EmbeddingVector& v : PostChunk(texts.subspan(begin, count))) {
      out.push_back(std::move(v));
    }
  }
  return out;
}

std::vector<EmbeddingVector> HttpBackend::PostChunk(std::span<const std::string> texts) {
  const std::string body = Json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}}.dump();
  std::string last_error;
  const int attempts = config_.max_retries + 1;
  for (int attempt = 0; attempt < attempts; ++attempt) {
    httplib::Client client(config_.base_url);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(
        config_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    auto res = client.Post(config_.path, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status != 200) {
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status < 500) break;
      continue;
    }
    Json reply;
    try {
      reply = Json::parse(res->body);
    } catch (const Json::parse_error& e) {
      Fail(ErrorKind::kTransport, "transport.bad_response",
           std::string("embedding service returned malformed JSON: ") + e.what());
    }
    auto vectors = reply.find("vectors");
    if (vectors == reply.end() || !vectors->is_array() || vectors->size() != texts.size()) {
      Fail(ErrorKind::kTransport, "transport.bad_response",
           "embedding service returned the wrong number of vectors");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const Json& values : *vectors) out.push_back(VectorFromJson(values, 0));
    std::lock_guard lock(mu_);
    for (const EmbeddingVector& v : out) {
      if (dimension_ == 0) dimension_ = v.dim();
      if (v.dim() != dimension_) {
        Fail(ErrorKind::kTransport, "transport.bad_response",
             "embedding service changed vector dimension");
      }
    }
    return out;
  }
  Fail(ErrorKind::kTransport, "transport.unreachable",
       "embedding service " + config_.base_url + config_.path + " failed after " +
           std::to_string(attempts) + " attempt(s) (" + std::to_string(config_.max_retries) +
           " retries): " + last_error);
}

// Cache

EmbeddingCache::EmbeddingCache(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  jsonl::ForEachRecord(path_, [&](const Json& r, std::size_t line) {
    const std::string backend = jsonl::RequireString(r, "backend", line);
    const std::uint64_t hash = ParseHashHex(jsonl::RequireString(r, "hash", line));
    entries_.insert_or_assign(Key{backend, hash},
                              VectorFromJson(jsonl::RequireField(r, "values", line), line));
  });
}

std::optional<EmbeddingVector> EmbeddingCache::Get(const std::string& backend,
                                                   std::uint64_t hash) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(Key{backend, hash});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void EmbeddingCache::Put(const std::string& backend, std::uint64_t hash,
                         const EmbeddingVector& v) {
  std::lock_guard lock(mu_);
  entries_.insert_or_assign(Key{backend, hash}, v);
}

std::size_t EmbeddingCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

void EmbeddingCache::Save() const {
  if (path_.empty()) return;
  SaveTo(path_);
}

void EmbeddingCache::SaveTo(const std::filesystem::path& path) const {
  std::vector<Json> records;
  {
    std::lock_guard lock(mu_);
    records.reserve(entries_.size());
    for (const auto& [key, v] : entries_) {
      records.push_back({{"backend", key.first},
                         {"hash", HashHex(key.second)},
                         {"dim", v.dim()},
                         {"values", v.raw()}});
    }
  }
  jsonl::WriteAll(path, records);
}

CachingBackend::CachingBackend(std::shared_ptr<EmbeddingBackend> inner,
                               std::shared_ptr<EmbeddingCache> cache)
    : inner_(std::move(inner)), cache_(std::move(cache)) {}

std::vector<EmbeddingVector> CachingBackend::EmbedBatch(std::span<const std::string> texts) {
  const std::string backend = inner_->name();
  std::vector<std::optional<EmbeddingVector>> found(texts.size());
  std::vector<std::uint64_t> hashes(texts.size());
  std::vector<std::string> missing;
  std::unordered_map<std::uint64_t, std::size_t> missing_slot;  // hash -> index in missing
  for (std::size_t i = 0; i < texts.size(); ++i) {
    hashes[i] = TextHash(texts[i]);
    found[i] = cache_->Get(backend, hashes[i]);
    if (!found[i] && missing_slot.emplace(hashes[i], missing.size()).second) {
      missing.push_back(texts[i]);
    }
  }
  if (!missing.empty()) {
    misses_ += missing.size();
    std::vector<EmbeddingVector> fresh = inner_->EmbedBatch(missing);
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (found[i]) continue;
      const EmbeddingVector& v = fresh[missing_slot.at(hashes[i])];
      cache_->Put(backend, hashes[i], v);
      found[i] = v;
    }
  }
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (auto& v : found) out.push_back(std::move(*v));
  return out;
}

double CompositeSimilarity(EmbeddingBackend& backend, const corpus::Story& x,
                           const corpus::Story& y) {
  for (const corpus::Story* s : {&x, &y}) {
    if (s->text.empty() || !s->HasFeatures()) {
      Fail(ErrorKind::kArgument, "embedding.missing_features",
           "story '" + s->id + "' lacks text, event, emotion or moral");
    }
  }
  const std::vector<std::string> texts = {x.text, x.event, x.emotion, x.moral,
                                          y.text, y.event, y.emotion, y.moral};
  const std::vector<EmbeddingVector> v = backend.EmbedBatch(texts);
  double sum = 0.0;
  for (int i = 0; i < 4; ++i) sum += Cosine(v[i], v[i + 4]);
  return sum / 4.0;
}

}  // namespace empathic::embedding
