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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "cars/corpus.hpp"
#include "cars/predictor.hpp"
#include "cars/prototype.hpp"
#include "cars/rng.hpp"
#include "cars/synthetic.hpp"

using namespace cars;

namespace {

PrototypeIndex make_index(std::vector<std::pair<std::string, Vec>> prototypes,
                          std::uint32_t dim) {
  PrototypeIndex index;
  index.alpha = 0.85;
  index.provider = ProviderId{"hashing", dim, "fnv1a-v1"};
  for (auto& [name, vector] : prototypes) {
    CategoryPrototype proto;
    proto.category = name;
    proto.vector = std::move(vector);
    index.prototypes.emplace(name, std::move(proto));
  }
  return index;
}

CategoryDistribution make_distribution(std::string qid, std::string text,
                                       std::map<std::string, double> weights) {
  CategoryDistribution d;
  d.query_id = std::move(qid);
  d.query_text = std::move(text);
  d.weights = std::move(weights);
  return d;
}

}  // namespace

TEST_CASE("cosine similarity on hand vectors", "[predictor]") {
  CHECK(cosine_similarity(Vec{1.0, 0.0}, Vec{1.0, 0.0}) == 1.0);
  CHECK(cosine_similarity(Vec{1.0, 0.0}, Vec{0.0, 1.0}) == 0.0);
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  CHECK_THAT(cosine_similarity(Vec{inv_sqrt2, inv_sqrt2}, Vec{1.0, 0.0}),
             Catch::Matchers::WithinAbs(0.70710678, 1e-8));
  REQUIRE_THROWS_AS(cosine_similarity(Vec{0.0, 0.0}, Vec{1.0, 0.0}), DataError);
  REQUIRE_THROWS_AS(cosine_similarity(Vec{1.0}, Vec{1.0, 0.0}), ParameterError);
}

TEST_CASE("singleton index puts its category at rank 1 for any query",
          "[predictor]") {
  HashingEmbedder embedder(64);
  std::vector<CategoryDistribution> train{
      make_distribution("q1", "ceramic mug", {{"Kitchen", 1.0}})};
  std::vector<std::string> universe{"Kitchen"};
  auto index = train_prototypes(train, universe, embedder, 0.85);

  auto prediction = predict_top_k("totally unrelated words", index, embedder, 3);
  REQUIRE(prediction.ranked.size() == 1);  // k clamps to the category count
  CHECK(prediction.ranked[0].category == "Kitchen");
}

TEST_CASE("alpha 1 prototype from a single query scores 1 on that query",
          "[predictor]") {
  HashingEmbedder embedder(64);
  std::vector<CategoryDistribution> train{
      make_distribution("q1", "noise cancelling headphones", {{"Electronics", 1.0}})};
  std::vector<std::string> universe{"Electronics", "Garden"};
  auto index = train_prototypes(train, universe, embedder, 1.0);
  auto prediction =
      predict_top_k("noise cancelling headphones", index, embedder, 1);
  REQUIRE(prediction.ranked.size() == 1);
  CHECK(prediction.ranked[0].category == "Electronics");
  CHECK_THAT(prediction.ranked[0].score, Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("exactly tied scores break alphabetically", "[predictor]") {
  auto index = make_index({{"Zebra", {1.0, 0.0}}, {"Apple", {1.0, 0.0}},
                           {"Mango", {0.0, 1.0}}}, 2);
  auto prediction = rank_categories(Vec{1.0, 0.0}, index, 3);
  REQUIRE(prediction.ranked.size() == 3);
  CHECK(prediction.ranked[0].category == "Apple");
  CHECK(prediction.ranked[1].category == "Zebra");
  CHECK(prediction.ranked[2].category == "Mango");
  CHECK(prediction.confidence == prediction.ranked[0].score);
}

TEST_CASE("prediction is deterministic, ranking scale-invariant", "[predictor]") {
  Rng rng(88);
  std::vector<std::pair<std::string, Vec>> prototypes;
  for (int c = 0; c < 12; ++c) {
    Vec v(32);
    for (auto& x : v) x = rng.unit() * 2.0 - 1.0;
    prototypes.emplace_back("cat" + std::to_string(c), normalized(std::move(v)));
  }
  auto index = make_index(prototypes, 32);

  for (int trial = 0; trial < 30; ++trial) {
    Vec q(32);
    for (auto& x : q) x = rng.unit() * 2.0 - 1.0;
    auto base = rank_categories(q, index, 5);
    auto repeat = rank_categories(q, index, 5);
    REQUIRE(base.ranked.size() == repeat.ranked.size());
    for (std::size_t i = 0; i < base.ranked.size(); ++i) {
      CHECK(base.ranked[i].category == repeat.ranked[i].category);
      CHECK(base.ranked[i].score == repeat.ranked[i].score);
    }

    for (double scale : {2.0, 0.25, 3.7}) {
      Vec scaled = q;
      for (auto& x : scaled) x *= scale;
      auto rescaled = rank_categories(scaled, index, 5);
      for (std::size_t i = 0; i < base.ranked.size(); ++i) {
        CHECK(rescaled.ranked[i].category == base.ranked[i].category);
      }
    }
  }
}

TEST_CASE("provider/index mismatch is a configuration error", "[predictor]") {
  HashingEmbedder embedder_256(256);
  HashingEmbedder embedder_128(128);
  std::vector<CategoryDistribution> train{
      make_distribution("q1", "usb hub", {{"Electronics", 1.0}})};
  std::vector<std::string> universe{"Electronics"};
  auto index = train_prototypes(train, universe, embedder_256, 0.85);
  REQUIRE_THROWS_AS(predict_top_k("usb hub", index, embedder_128, 1), ConfigError);
}

TEST_CASE("top_k_accuracy against a perfect oracle index", "[predictor]") {
  // One category per query and alpha 1 makes every gold prototype identical
  // to its sole query embedding: rank 1 is guaranteed.
  HashingEmbedder embedder(128);
  std::vector<CategoryDistribution> queries;
  std::vector<std::string> universe;
  for (int c = 0; c < 6; ++c) {
    std::string category = "cat" + std::to_string(c);
    universe.push_back(category);
    queries.push_back(make_distribution(
        "q" + std::to_string(c),
        "query about topic " + std::to_string(c) + " item" + std::to_string(c * 17),
        {{category, 1.0}}));
  }
  auto index = train_prototypes(queries, universe, embedder, 1.0);

  auto result = top_k_accuracy(queries, index, embedder, 1);
  CHECK(result.accuracy == 1.0);
  CHECK(result.accuracy_any_relevant == 1.0);
  REQUIRE(result.records.size() == queries.size());
  CHECK(result.records[0].hit);

  SECTION("K = category count always contains the gold category") {
    auto exhaustive = top_k_accuracy(queries, index, embedder,
                                     static_cast<int>(universe.size()));
    CHECK(exhaustive.accuracy == 1.0);
  }
}

TEST_CASE("top-K accuracy is monotone in K", "[predictor]") {
  SyntheticSpec spec;
  spec.categories = 8;
  spec.vocab_per_category = 30;
  spec.queries_per_category = 12;
  spec.products_per_category = 6;
  spec.noise_rate = 0.5;  // make the task hard enough to see differences
  auto corpus = generate_synthetic(spec, 2121);
  auto dists = aggregate_ground_truth(corpus.judgments.judgments, corpus.products,
                                      default_relevant_labels(), nullptr);
  auto split = split_queries(dists, 0.8, 17);

  HashingEmbedder embedder(256);
  std::vector<std::string> universe;
  for (std::size_t c = 0; c < spec.categories; ++c) {
    universe.push_back(corpus.products.docs()[c * spec.products_per_category]
                           .category_path.front());
  }
  auto index = train_prototypes(split.train, universe, embedder, 0.85);

  double previous = 0.0;
  for (int k = 1; k <= static_cast<int>(universe.size()); ++k) {
    auto result = top_k_accuracy(split.test, index, embedder, k);
    CHECK(result.accuracy >= previous);
    previous = result.accuracy;
  }
  CHECK(previous == 1.0);  // K = category count
}

TEST_CASE("noise-free synthetic corpus: trained top-1 accuracy is 1.0",
          "[predictor]") {
  SyntheticSpec spec;
  spec.categories = 10;
  spec.vocab_per_category = 40;
  spec.queries_per_category = 10;
  spec.products_per_category = 5;
  spec.noise_rate = 0.0;
  auto corpus = generate_synthetic(spec, 909);
  auto dists = aggregate_ground_truth(corpus.judgments.judgments, corpus.products,
                                      default_relevant_labels(), nullptr);
  auto split = split_queries(dists, 0.8, 31);

  HashingEmbedder embedder(256);
  std::vector<std::string> universe;
  for (const auto& doc : corpus.products) {
    universe.push_back(doc.category_path.front());
  }
  auto index = train_prototypes(split.train, universe, embedder, 0.85);

  // Brute-force cross-check on 20 queries: the argmax over explicit cosine
  // similarities must agree with predict_top_k's rank 1.
  std::size_t checked = 0;
  for (const auto& dist : split.test) {
    if (checked == 20) break;
    ++checked;
    auto query_vec = embedder.embed(dist.query_text);
    std::string best;
    double best_score = -2.0;
    for (const auto& [name, proto] : index.prototypes) {
      double score = cosine_similarity(query_vec, proto.vector);
      if (score > best_score) {
        best_score = score;
        best = name;
      }
    }
    auto prediction = predict_top_k(dist.query_text, index, embedder, 1);
    CHECK(prediction.ranked[0].category == best);
  }

  auto result = top_k_accuracy(split.test, index, embedder, 1);
  CHECK(result.accuracy == 1.0);
}

TEST_CASE("top_k_accuracy rejects an empty test set", "[predictor]") {
  HashingEmbedder embedder(64);
  auto index = make_index({{"A", {1.0, 0.0}}}, 2);
  index.provider = embedder.id();
  REQUIRE_THROWS_AS(top_k_accuracy({}, index, embedder, 3), DataError);
}

TEST_CASE("gold category is the argmax with alphabetical ties", "[predictor]") {
  CHECK(gold_category(make_distribution("q", "t", {{"B", 0.6}, {"A", 0.4}})) == "B");
  CHECK(gold_category(make_distribution("q", "t", {{"B", 0.5}, {"A", 0.5}})) == "A");
}
