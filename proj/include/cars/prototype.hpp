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

#include <chrono>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cars/corpus.hpp"
#include "cars/embedding.hpp"
#include "cars/error.hpp"
#include "cars/io.hpp"

namespace cars {

/// A category's unit vector plus how much training signal produced it.
/// support == 0 means the cold-start path: the vector is the normalized
/// category-name embedding alone.
struct CategoryPrototype {
  std::string category;
  Vec vector;
  std::size_t support = 0;     // distinct training queries contributing
  double weight_mass = 0.0;    // sum of p(C|q) over contributors
};

struct PrototypeIndex {
  std::map<std::string, CategoryPrototype> prototypes;
  double alpha = 0.0;
  ProviderId provider;
  std::int64_t built_at = 0;  // unix seconds

  std::size_t size() const { return prototypes.size(); }

  std::size_t cold_start_count() const {
    std::size_t n = 0;
    for (const auto& [_, proto] : prototypes) {
      if (proto.support == 0) ++n;
    }
    return n;
  }
};

/// Weighted average of query embeddings: sum(p * e) / sum(p), unnormalized.
inline Vec compute_query_prototype(
    std::span<const std::pair<double, Vec>> contributions) {
  if (contributions.empty()) {
    throw DataError("no training contributions; use the name-only fallback");
  }
  const std::size_t dim = contributions.front().second.size();
  Vec sum(dim, 0.0);
  double mass = 0.0;
  for (const auto& [weight, embedding] : contributions) {
    if (!(weight > 0.0)) {
      throw ParameterError("contribution weights must be positive, got " +
                           std::to_string(weight));
    }
    if (embedding.size() != dim) {
      throw ParameterError("contribution vectors have mixed dimensions");
    }
    for (std::size_t i = 0; i < dim; ++i) sum[i] += weight * embedding[i];
    mass += weight;
  }
  for (double& x : sum) x /= mass;
  return sum;
}

/// normalize(alpha * query_proto + (1 - alpha) * name_emb). The endpoints are
/// handled exactly: alpha 0 is the name embedding, alpha 1 the query
/// prototype, each just normalized. A zero-norm blend (antipodal vectors with
/// cancelling weights) signals data pathology and is an error.
inline Vec compute_hybrid_prototype(std::span<const double> query_proto,
                                    std::span<const double> name_emb,
                                    double alpha) {
  if (query_proto.size() != name_emb.size()) {
    throw ParameterError("query prototype and name embedding dims differ");
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("alpha must be in [0,1], got " + std::to_string(alpha));
  }
  if (alpha == 0.0) return normalized(Vec(name_emb.begin(), name_emb.end()));
  if (alpha == 1.0) return normalized(Vec(query_proto.begin(), query_proto.end()));
  Vec blend(query_proto.size());
  for (std::size_t i = 0; i < blend.size(); ++i) {
    blend[i] = alpha * query_proto[i] + (1.0 - alpha) * name_emb[i];
  }
  if (l2_norm(blend) == 0.0) {
    throw DataError("degenerate prototype: interpolation produced a zero vector");
  }
  return normalized(std::move(blend));
}

/// Builds one prototype per category over the union of the supplied universe
/// and the categories seen in training. Categories with no training queries
/// fall back to the normalized name embedding.
inline PrototypeIndex train_prototypes(
    std::span<const CategoryDistribution> train,
    std::span<const std::string> category_universe,
    EmbeddingProvider& embedder, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ParameterError("alpha must be in [0,1], got " + std::to_string(alpha));
  }
  if (category_universe.empty()) {
    throw ParameterError("category universe is empty");
  }

  std::set<std::string> categories(category_universe.begin(),
                                   category_universe.end());
  for (const auto& dist : train) {
    for (const auto& [category, _] : dist.weights) categories.insert(category);
  }

  std::vector<std::string> query_texts;
  query_texts.reserve(train.size());
  for (const auto& dist : train) query_texts.push_back(dist.query_text);
  std::vector<Vec> query_vectors = embedder.embed_batch(query_texts);

  std::vector<std::string> names(categories.begin(), categories.end());
  std::vector<Vec> name_vectors = embedder.embed_batch(names);

  std::map<std::string, std::vector<std::pair<double, Vec>>> contributions;
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (const auto& [category, weight] : train[i].weights) {
      contributions[category].emplace_back(weight, query_vectors[i]);
    }
  }

  PrototypeIndex index;
  index.alpha = alpha;
  index.provider = embedder.id();
  index.built_at = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  for (std::size_t c = 0; c < names.size(); ++c) {
    CategoryPrototype proto;
    proto.category = names[c];
    auto it = contributions.find(names[c]);
    if (it == contributions.end() || alpha == 0.0) {
      proto.vector = normalized(Vec(name_vectors[c]));
    } else {
      Vec query_proto = compute_query_prototype(it->second);
      proto.vector = compute_hybrid_prototype(query_proto, name_vectors[c], alpha);
    }
    if (it != contributions.end()) {
      proto.support = it->second.size();
      for (const auto& [weight, _] : it->second) proto.weight_mass += weight;
    }
    index.prototypes.emplace(proto.category, std::move(proto));
  }
  return index;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------
//
// Layout (all integers little-endian, strings are u32 length + UTF-8 bytes):
//   magic   "CARSIDX1"
//   u32     format version (1)
//   string  provider name
//   u32     provider dim
//   string  provider revision
//   f64     alpha
//   i64     built_at (unix seconds)
//   u32     category count
//   per category, in name order:
//     string name, u64 support, f64 weight_mass, dim * f64 vector

inline constexpr char kIndexMagic[9] = "CARSIDX1";

inline void save_index(const PrototypeIndex& index, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write index file: " + path);
  out.write(kIndexMagic, 8);
  io::write_u32(out, 1);
  io::write_string(out, index.provider.name);
  io::write_u32(out, index.provider.dim);
  io::write_string(out, index.provider.revision);
  io::write_f64(out, index.alpha);
  io::write_i64(out, index.built_at);
  io::write_u32(out, static_cast<std::uint32_t>(index.prototypes.size()));
  for (const auto& [name, proto] : index.prototypes) {
    io::write_string(out, name);
    io::write_u64(out, proto.support);
    io::write_f64(out, proto.weight_mass);
    if (proto.vector.size() != index.provider.dim) {
      throw IntegrityError("prototype '" + name + "' has dim " +
                           std::to_string(proto.vector.size()) +
                           ", index provider dim is " +
                           std::to_string(index.provider.dim));
    }
    for (double x : proto.vector) io::write_f64(out, x);
  }
  out.flush();
  if (!out) throw Error("short write to index file: " + path);
}

inline PrototypeIndex load_index(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open index file: " + path);
  char magic[8];
  io::read_exact(in, magic, 8, "index magic");
  if (std::string_view(magic, 8) != std::string_view(kIndexMagic, 8)) {
    throw FormatError("not a prototype index file: " + path);
  }
  auto version = io::read_u32(in, "index version");
  if (version != 1) {
    throw FormatError("unsupported index version " + std::to_string(version));
  }
  PrototypeIndex index;
  index.provider.name = io::read_string(in, "provider name");
  index.provider.dim = io::read_u32(in, "provider dim");
  index.provider.revision = io::read_string(in, "provider revision");
  index.alpha = io::read_f64(in, "alpha");
  index.built_at = io::read_i64(in, "built_at");
  auto count = io::read_u32(in, "category count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CategoryPrototype proto;
    proto.category = io::read_string(in, "category name");
    proto.support = io::read_u64(in, "support");
    proto.weight_mass = io::read_f64(in, "weight_mass");
    proto.vector.resize(index.provider.dim);
    for (auto& x : proto.vector) x = io::read_f64(in, "prototype vector");
    index.prototypes.emplace(proto.category, std::move(proto));
  }
  return index;
}

}  // namespace cars
