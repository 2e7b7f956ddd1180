// Copyright 2026 The CARS Toolkit Authors
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

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cars/error.hpp"
#include "cars/io.hpp"
#include "cars/text.hpp"

namespace cars {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ParameterError("vector dimensions differ: " + std::to_string(a.size()) +
                         " vs " + std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

inline double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

inline Vec normalized(Vec v) {
  double norm = l2_norm(v);
  if (norm == 0.0) throw DataError("cannot normalize a zero vector");
  for (double& x : v) x /= norm;
  return v;
}

/// Identifies the embedding model a vector came from. Caches and prototype
/// indexes record the ProviderId that produced them and refuse mismatches.
struct ProviderId {
  std::string name;
  std::uint32_t dim = 0;
  std::string revision;

  bool operator==(const ProviderId&) const = default;

  std::string describe() const {
    return name + "/" + revision + "@" + std::to_string(dim) + "d";
  }
};

/// Text -> unit vector. Output order matches input order; every vector is
/// L2-normalized at this boundary, so cosine similarity downstream is a
/// plain dot product.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual const ProviderId& id() const = 0;
  virtual std::vector<Vec> embed_batch(std::span<const std::string> texts) = 0;

  Vec embed(const std::string& text) {
    std::vector<std::string> one{text};
    return std::move(embed_batch(one).front());
  }

 protected:
  void check_inputs(std::span<const std::string> texts) const {
    for (const auto& text : texts) {
      if (text.empty()) throw ParameterError("cannot embed an empty text");
    }
  }
};

/// Feature-hashed bag of lowercase tokens: each token lands in an FNV-chosen
/// bucket with an FNV-chosen sign, then the vector is L2-normalized. Stable
/// across runs and platforms; the test substitute for SaaS embeddings.
inline Vec deterministic_embed(std::string_view text, std::uint32_t dim) {
  if (dim < 8) {
    throw ParameterError("embedding dim must be >= 8, got " + std::to_string(dim));
  }
  auto terms = tokenize(text);
  if (terms.empty()) {
    throw DataError("text has zero tokens: \"" + std::string(text) + "\"");
  }
  Vec v(dim, 0.0);
  for (const auto& term : terms) {
    std::uint64_t h = fnv1a64(term);
    std::size_t bucket = static_cast<std::size_t>((h >> 1) % dim);
    v[bucket] += (h & 1u) ? 1.0 : -1.0;
  }
  if (l2_norm(v) == 0.0) {
    throw DataError("degenerate embedding: all hashed tokens cancelled for \"" +
                    std::string(text) + "\"");
  }
  return normalized(std::move(v));
}

class HashingEmbedder : public EmbeddingProvider {
 public:
  explicit HashingEmbedder(std::uint32_t dim = 256)
      : id_{"hashing", dim, "fnv1a-v1"} {}

  const ProviderId& id() const override { return id_; }

  std::vector<Vec> embed_batch(std::span<const std::string> texts) override {
    check_inputs(texts);
    std::vector<Vec> out;
    out.reserve(texts.size());
    for (const auto& text : texts) out.push_back(deterministic_embed(text, id_.dim));
    return out;
  }

 private:
  ProviderId id_;
};

// ---------------------------------------------------------------------------
// Persistent cache
// ---------------------------------------------------------------------------

/// Single-file key-value store: header {magic, version, ProviderId}, then
/// append-only records {sha256(text), dim doubles}. Writes are serialized;
/// reads hit an in-memory map. Vectors round-trip bit-exactly.
class EmbeddingCache {
 public:
  static constexpr char kMagic[9] = "CARSEC01";

  EmbeddingCache(std::string path, const ProviderId& provider)
      : path_(std::move(path)), provider_(provider) {
    if (std::filesystem::exists(path_) &&
        std::filesystem::file_size(path_) > 0) {
      load_existing();
    } else {
      write_header();
    }
  }

  const ProviderId& provider() const { return provider_; }

  std::optional<Vec> get(const std::string& text) const {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = entries_.find(sha256_bytes(text));
    if (it == entries_.end()) return std::nullopt;
    return it->second;
  }

  void put(const std::string& text, const Vec& vector) {
    if (vector.size() != provider_.dim) {
      throw ParameterError("cache expects dim " + std::to_string(provider_.dim) +
                           ", got " + std::to_string(vector.size()));
    }
    std::lock_guard<std::mutex> lock(mutex_);
    auto key = sha256_bytes(text);
    if (entries_.contains(key)) return;
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to cache file: " + path_);
    out.write(reinterpret_cast<const char*>(key.data()),
              static_cast<std::streamsize>(key.size()));
    for (double x : vector) io::write_f64(out, x);
    out.flush();
    if (!out) throw Error("short write to cache file: " + path_);
    entries_.emplace(key, vector);
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return entries_.size();
  }

 private:
  void write_header() {
    std::ofstream out(path_, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot create cache file: " + path_);
    out.write(kMagic, 8);
    io::write_u32(out, 1);  // format version
    io::write_string(out, provider_.name);
    io::write_u32(out, provider_.dim);
    io::write_string(out, provider_.revision);
    out.flush();
    if (!out) throw Error("short write to cache file: " + path_);
  }

  void load_existing() {
    std::ifstream in(path_, std::ios::binary);
    if (!in) throw Error("cannot open cache file: " + path_);
    char magic[8];
    io::read_exact(in, magic, 8, "cache magic");
    if (std::string_view(magic, 8) != std::string_view(kMagic, 8)) {
      throw FormatError("not an embedding cache file: " + path_);
    }
    auto version = io::read_u32(in, "cache version");
    if (version != 1) {
      throw FormatError("unsupported cache version " + std::to_string(version));
    }
    ProviderId stored;
    stored.name = io::read_string(in, "cache provider name");
    stored.dim = io::read_u32(in, "cache provider dim");
    stored.revision = io::read_string(in, "cache provider revision");
    if (!(stored == provider_)) {
      throw ConfigError("cache mismatch: file " + path_ + " was built by " +
                        stored.describe() + " but the session provider is " +
                        provider_.describe());
    }
    while (true) {
      Sha256Digest key{};
      in.read(reinterpret_cast<char*>(key.data()),
              static_cast<std::streamsize>(key.size()));
      if (in.gcount() == 0 && in.eof()) break;
      if (static_cast<std::size_t>(in.gcount()) != key.size()) {
        throw FormatError("truncated record in cache file: " + path_);
      }
      Vec vector(provider_.dim);
      for (auto& x : vector) x = io::read_f64(in, "cache vector");
      entries_.emplace(key, std::move(vector));
    }
  }

  std::string path_;
  ProviderId provider_;
  mutable std::mutex mutex_;
  std::map<Sha256Digest, Vec> entries_;
};

/// At most one provider call per distinct text per cache lifetime; the
/// returned vector is bit-identical to a fresh embed.
inline Vec cache_get_or_embed(const std::string& text,
                              EmbeddingProvider& provider,
                              EmbeddingCache& cache) {
  if (!(cache.provider() == provider.id())) {
    throw ConfigError("cache mismatch: cache holds " +
                      cache.provider().describe() + ", provider is " +
                      provider.id().describe());
  }
  if (auto hit = cache.get(text)) return std::move(*hit);
  Vec vector = provider.embed(text);
  cache.put(text, vector);
  return vector;
}

/// Provider wrapper that routes every embed through a cache and counts hits.
class CachingProvider : public EmbeddingProvider {
 public:
  CachingProvider(EmbeddingProvider& inner, EmbeddingCache& cache)
      : inner_(inner), cache_(cache) {
    if (!(cache_.provider() == inner_.id())) {
      throw ConfigError("cache mismatch: cache holds " +
                        cache_.provider().describe() + ", provider is " +
                        inner_.id().describe());
    }
  }

  const ProviderId& id() const override { return inner_.id(); }

  std::vector<Vec> embed_batch(std::span<const std::string> texts) override {
    check_inputs(texts);
    std::vector<Vec> out(texts.size());
    std::vector<std::size_t> missing;
    std::vector<std::string> to_embed;  // unique missing texts, first-seen order
    std::map<std::string, std::size_t> to_embed_pos;
    for (std::size_t i = 0; i < texts.size(); ++i) {
      if (auto hit = cache_.get(texts[i])) {
        out[i] = std::move(*hit);
        ++hits_;
        continue;
      }
      missing.push_back(i);
      if (to_embed_pos.emplace(texts[i], to_embed.size()).second) {
        to_embed.push_back(texts[i]);
      }
    }
    if (!to_embed.empty()) {
      auto fresh = inner_.embed_batch(to_embed);
      misses_ += to_embed.size();
      for (std::size_t j = 0; j < to_embed.size(); ++j) {
        cache_.put(to_embed[j], fresh[j]);
      }
      for (auto i : missing) out[i] = fresh[to_embed_pos.at(texts[i])];
    }
    return out;
  }

  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  EmbeddingProvider& inner_;
  EmbeddingCache& cache_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace cars
