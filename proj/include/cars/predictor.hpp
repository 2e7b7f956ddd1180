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

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "cars/corpus.hpp"
#include "cars/embedding.hpp"
#include "cars/error.hpp"
#include "cars/prototype.hpp"

namespace cars {

struct CategoryScore {
  std::string category;
  double score = 0.0;  // cosine similarity, in [-1, 1]
};

/// Top-K categories, strictly ordered by (score desc, name asc). confidence
/// is the rank-1 similarity and drives adaptive boosting.
struct CategoryPrediction {
  std::vector<CategoryScore> ranked;
  double confidence = 0.0;
};

inline double cosine_similarity(std::span<const double> a,
                                std::span<const double> b) {
  double norm_a = l2_norm(a);
  double norm_b = l2_norm(b);
  if (norm_a == 0.0 || norm_b == 0.0) {
    throw DataError("cosine similarity undefined for a zero-norm vector");
  }
  return dot(a, b) / (norm_a * norm_b);
}

/// Exhaustive scan over all prototypes; at prototype-index scale (order 100
/// categories) approximate search would be pointless. k larger than the
/// category count clamps.
inline CategoryPrediction rank_categories(std::span<const double> query_vector,
                                          const PrototypeIndex& index, int k) {
  if (k < 1) throw ParameterError("k must be >= 1, got " + std::to_string(k));
  if (index.prototypes.empty()) throw DataError("prototype index is empty");
  if (query_vector.size() != index.provider.dim) {
    throw ConfigError("query vector dim " + std::to_string(query_vector.size()) +
                      " does not match index dim " +
                      std::to_string(index.provider.dim));
  }
  std::vector<CategoryScore> scores;
  scores.reserve(index.prototypes.size());
  // Map iteration is name-ascending; the stable sort keeps that order within
  // score ties, which pins the deterministic tie-break.
  for (const auto& [name, proto] : index.prototypes) {
    scores.push_back({name, cosine_similarity(query_vector, proto.vector)});
  }
  std::stable_sort(scores.begin(), scores.end(),
                   [](const CategoryScore& x, const CategoryScore& y) {
                     return x.score > y.score;
                   });
  auto keep = std::min<std::size_t>(static_cast<std::size_t>(k), scores.size());
  scores.resize(keep);
  CategoryPrediction prediction;
  prediction.confidence = scores.front().score;
  prediction.ranked = std::move(scores);
  return prediction;
}

inline CategoryPrediction predict_top_k(const std::string& query_text,
                                        const PrototypeIndex& index,
                                        EmbeddingProvider& embedder, int k) {
  if (!(embedder.id() == index.provider)) {
    throw ConfigError("provider " + embedder.id().describe() +
                      " does not match index provider " +
                      index.provider.describe());
  }
  return rank_categories(embedder.embed(query_text), index, k);
}

/// Per-query record for error analysis dumps.
struct PredictionRecord {
  std::string query_id;
  std::string query_text;
  std::string gold;
  CategoryPrediction prediction;
  bool hit = false;                // gold in top-k
  bool any_relevant_hit = false;   // any category with p(C|q) > 0 in top-k
};

struct AccuracyResult {
  int k = 0;
  std::size_t n = 0;
  double accuracy = 0.0;               // gold = argmax p(C|q)
  double accuracy_any_relevant = 0.0;  // secondary, more permissive reading
  std::vector<PredictionRecord> records;
};

/// Fraction of test queries whose gold category (argmax of the distribution,
/// ties alphabetical) appears in the Top-K prediction.
inline AccuracyResult top_k_accuracy(std::span<const CategoryDistribution> test,
                                     const PrototypeIndex& index,
                                     EmbeddingProvider& embedder, int k) {
  if (test.empty()) throw DataError("cannot evaluate accuracy on an empty test set");
  AccuracyResult result;
  result.k = k;
  result.n = test.size();
  std::size_t hits = 0;
  std::size_t any_hits = 0;
  for (const auto& dist : test) {
    PredictionRecord record;
    record.query_id = dist.query_id;
    record.query_text = dist.query_text;
    record.gold = gold_category(dist);
    record.prediction = predict_top_k(dist.query_text, index, embedder, k);
    for (const auto& entry : record.prediction.ranked) {
      if (entry.category == record.gold) record.hit = true;
      if (dist.weights.contains(entry.category)) record.any_relevant_hit = true;
    }
    hits += record.hit ? 1 : 0;
    any_hits += record.any_relevant_hit ? 1 : 0;
    result.records.push_back(std::move(record));
  }
  result.accuracy = static_cast<double>(hits) / static_cast<double>(test.size());
  result.accuracy_any_relevant =
      static_cast<double>(any_hits) / static_cast<double>(test.size());
  return result;
}

}  // namespace cars
