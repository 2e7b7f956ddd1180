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

#include <set>
#include <string>
#include <vector>

#include "cars/corpus.hpp"
#include "cars/rng.hpp"
#include "cars/synthetic.hpp"
#include "cars/text.hpp"
#include "test_util.hpp"

using namespace cars;
using cars::test::TempDir;
using cars::test::write_file;

namespace {

Judgment make_judgment(std::string qid, std::string text, std::string pid,
                       Label label) {
  return Judgment{std::move(qid), std::move(text), std::move(pid), label};
}

ProductDoc make_product(std::string pid, std::string category) {
  ProductDoc doc;
  doc.product_id = std::move(pid);
  doc.title = "title";
  doc.description = "description";
  if (!category.empty()) doc.category_path = {std::move(category), "Leaf"};
  return doc;
}

}  // namespace

TEST_CASE("load_products reads well-formed lines", "[corpus]") {
  TempDir dir;
  auto path = dir.file("products.jsonl");
  write_file(path,
             R"({"product_id":"p1","title":"red shoes","description":"comfy","category_path":["Clothing","Shoes"]})"
             "\n"
             R"({"product_id":"p2","title":"blue hat","description":"warm","category_path":["Clothing"]})"
             "\n"
             R"({"product_id":"p3","title":"usb cable","description":"1m","category_path":[]})"
             "\n");
  auto products = load_products(path);
  REQUIRE(products.size() == 3);
  REQUIRE(products.find("p2") != nullptr);
  CHECK(products.find("p2")->title == "blue hat");
  CHECK(products.find("p3")->category_path.empty());
}

TEST_CASE("load_products rejects duplicate ids, naming the id", "[corpus]") {
  TempDir dir;
  auto path = dir.file("products.jsonl");
  write_file(path,
             R"({"product_id":"p1","title":"a","description":"b","category_path":[]})"
             "\n"
             R"({"product_id":"p1","title":"c","description":"d","category_path":[]})"
             "\n");
  try {
    load_products(path);
    FAIL("expected IntegrityError");
  } catch (const IntegrityError& e) {
    CHECK(std::string(e.what()).find("p1") != std::string::npos);
  }
}

TEST_CASE("load_products on an empty file yields an empty collection", "[corpus]") {
  TempDir dir;
  auto path = dir.file("products.jsonl");
  write_file(path, "");
  CHECK(load_products(path).size() == 0);
}

TEST_CASE("load_products reports the line number of a malformed line", "[corpus]") {
  TempDir dir;
  auto path = dir.file("products.jsonl");
  write_file(path,
             R"({"product_id":"p1","title":"a","description":"b","category_path":[]})"
             "\n"
             "this is not json\n");
  try {
    load_products(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("load_judgments validates labels and pair uniqueness", "[corpus]") {
  TempDir dir;
  auto path = dir.file("judgments.jsonl");

  SECTION("bad label") {
    write_file(path,
               R"({"query_id":"q1","query_text":"shoes","product_id":"p1","label":"X"})"
               "\n");
    REQUIRE_THROWS_AS(load_judgments(path), ParseError);
  }
  SECTION("duplicate pair") {
    write_file(path,
               R"({"query_id":"q1","query_text":"shoes","product_id":"p1","label":"E"})"
               "\n"
               R"({"query_id":"q1","query_text":"shoes","product_id":"p1","label":"S"})"
               "\n");
    REQUIRE_THROWS_AS(load_judgments(path), IntegrityError);
  }
  SECTION("well-formed") {
    write_file(path,
               R"({"query_id":"q1","query_text":"shoes","product_id":"p1","label":"E"})"
               "\n"
               R"({"query_id":"q1","query_text":"shoes","product_id":"p2","label":"I"})"
               "\n");
    auto set = load_judgments(path);
    REQUIRE(set.size() == 2);
    CHECK(set.judgments[1].label == Label::Irrelevant);
  }
}

TEST_CASE("truncate_category returns the first path element verbatim", "[corpus]") {
  std::vector<std::string> path{"Electronics", "Headphones"};
  CHECK(truncate_category(path) == "Electronics");

  std::vector<std::string> depth_one{"Electronics"};
  CHECK(truncate_category(depth_one) == "Electronics");

  std::vector<std::string> empty;
  REQUIRE_THROWS_AS(truncate_category(empty), DataError);
}

TEST_CASE("truncate_category is idempotent under re-wrapping", "[corpus]") {
  std::vector<std::string> path{"Home & Kitchen", "Storage", "Bins"};
  std::vector<std::string> rewrapped{truncate_category(path)};
  CHECK(truncate_category(rewrapped) == truncate_category(path));
}

TEST_CASE("aggregate_ground_truth computes relevant-product fractions", "[corpus]") {
  ProductCollection products;
  products.add(make_product("p1", "Electronics"));
  products.add(make_product("p2", "Electronics"));
  products.add(make_product("p3", "Electronics"));
  products.add(make_product("p4", "Home & Kitchen"));

  std::vector<Judgment> judgments{
      make_judgment("q1", "hdmi cable", "p1", Label::Exact),
      make_judgment("q1", "hdmi cable", "p2", Label::Exact),
      make_judgment("q1", "hdmi cable", "p3", Label::Substitute),
      make_judgment("q1", "hdmi cable", "p4", Label::Exact),
  };
  auto dists = aggregate_ground_truth(judgments, products,
                                      default_relevant_labels(), nullptr);
  REQUIRE(dists.size() == 1);
  CHECK(dists[0].weights.at("Electronics") == Catch::Approx(0.75));
  CHECK(dists[0].weights.at("Home & Kitchen") == Catch::Approx(0.25));
}

TEST_CASE("aggregate_ground_truth degenerate and omitted cases", "[corpus]") {
  ProductCollection products;
  products.add(make_product("p1", "Electronics"));
  products.add(make_product("p2", "Electronics"));

  SECTION("all products in one category") {
    std::vector<Judgment> judgments{
        make_judgment("q1", "tv", "p1", Label::Exact),
        make_judgment("q1", "tv", "p2", Label::Substitute),
    };
    auto dists = aggregate_ground_truth(judgments, products,
                                        default_relevant_labels(), nullptr);
    REQUIRE(dists.size() == 1);
    REQUIRE(dists[0].weights.size() == 1);
    CHECK(dists[0].weights.at("Electronics") == 1.0);
  }

  SECTION("queries with only irrelevant judgments are omitted and counted") {
    std::vector<Judgment> judgments{
        make_judgment("q1", "tv", "p1", Label::Irrelevant),
        make_judgment("q2", "radio", "p2", Label::Exact),
    };
    AggregationStats stats;
    auto dists = aggregate_ground_truth(judgments, products,
                                        default_relevant_labels(), &stats);
    REQUIRE(dists.size() == 1);
    CHECK(dists[0].query_id == "q2");
    CHECK(stats.zero_relevant_queries == 1);
  }

  SECTION("unresolvable product ids are skipped and counted") {
    std::vector<Judgment> judgments{
        make_judgment("q1", "tv", "p1", Label::Exact),
        make_judgment("q1", "tv", "ghost", Label::Exact),
    };
    AggregationStats stats;
    auto dists = aggregate_ground_truth(judgments, products,
                                        default_relevant_labels(), &stats);
    REQUIRE(dists.size() == 1);
    CHECK(stats.unresolved_product_ids == 1);
    CHECK(dists[0].weights.at("Electronics") == 1.0);
  }

  SECTION("relevant products without a category do not break the sum") {
    products.add(make_product("p9", ""));
    std::vector<Judgment> judgments{
        make_judgment("q1", "tv", "p1", Label::Exact),
        make_judgment("q1", "tv", "p9", Label::Exact),
    };
    AggregationStats stats;
    auto dists = aggregate_ground_truth(judgments, products,
                                        default_relevant_labels(), &stats);
    REQUIRE(dists.size() == 1);
    CHECK(stats.uncategorized_relevant == 1);
    CHECK(dists[0].weights.at("Electronics") == 1.0);
  }
}

TEST_CASE("aggregate_ground_truth distributions sum to 1", "[corpus]") {
  // Randomized property: any mix of labels/categories sums to 1 per query.
  Rng rng(7001);
  ProductCollection products;
  const char* categories[] = {"A", "B", "C", "D", "E-cat"};
  for (int i = 0; i < 60; ++i) {
    products.add(make_product("p" + std::to_string(i),
                              categories[rng.below(5)]));
  }
  std::vector<Judgment> judgments;
  for (int q = 0; q < 25; ++q) {
    std::string qid = "q" + std::to_string(q);
    std::set<std::string> used;
    auto n = 1 + rng.below(10);
    for (std::size_t j = 0; j < n; ++j) {
      std::string pid = "p" + std::to_string(rng.below(60));
      if (!used.insert(pid).second) continue;
      Label label = rng.unit() < 0.7 ? Label::Exact : Label::Irrelevant;
      judgments.push_back(make_judgment(qid, "text " + qid, pid, label));
    }
  }
  auto dists = aggregate_ground_truth(judgments, products,
                                      default_relevant_labels(), nullptr);
  for (const auto& dist : dists) {
    REQUIRE(!dist.weights.empty());
    double sum = 0.0;
    for (const auto& [_, p] : dist.weights) {
      CHECK(p > 0.0);
      CHECK(p <= 1.0);
      sum += p;
    }
    CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-9));
  }
}

TEST_CASE("duplicating all judgments of a query leaves its distribution unchanged",
          "[corpus]") {
  ProductCollection products;
  products.add(make_product("p1", "A"));
  products.add(make_product("p2", "B"));
  products.add(make_product("p3", "B"));
  std::vector<Judgment> base{
      make_judgment("q1", "x", "p1", Label::Exact),
      make_judgment("q1", "x", "p2", Label::Substitute),
      make_judgment("q1", "x", "p3", Label::Exact),
  };
  std::vector<Judgment> tripled;
  for (int rep = 0; rep < 3; ++rep) {
    for (const auto& j : base) tripled.push_back(j);
  }
  auto d1 = aggregate_ground_truth(base, products, default_relevant_labels(), nullptr);
  auto d3 = aggregate_ground_truth(tripled, products, default_relevant_labels(), nullptr);
  REQUIRE(d1.size() == 1);
  REQUIRE(d3.size() == 1);
  REQUIRE(d1[0].weights.size() == d3[0].weights.size());
  for (const auto& [category, p] : d1[0].weights) {
    CHECK_THAT(d3[0].weights.at(category), Catch::Matchers::WithinAbs(p, 1e-12));
  }
}

namespace {

std::vector<CategoryDistribution> make_distributions(std::size_t n) {
  std::vector<CategoryDistribution> dists;
  for (std::size_t i = 0; i < n; ++i) {
    CategoryDistribution d;
    d.query_id = "q" + std::to_string(i);
    d.query_text = "query " + std::to_string(i);
    d.weights = {{"A", 1.0}};
    dists.push_back(std::move(d));
  }
  return dists;
}

}  // namespace

TEST_CASE("split_queries honors ratio and determinism", "[corpus]") {
  auto dists = make_distributions(10);
  auto split = split_queries(dists, 0.8, 42);
  CHECK(split.train.size() == 8);
  CHECK(split.test.size() == 2);

  auto again = split_queries(dists, 0.8, 42);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    CHECK(split.train[i].query_id == again.train[i].query_id);
  }
  for (std::size_t i = 0; i < split.test.size(); ++i) {
    CHECK(split.test[i].query_id == again.test[i].query_id);
  }
}

TEST_CASE("split_queries at scale: 10000 queries at 0.8 -> 8000/2000", "[corpus]") {
  auto split = split_queries(make_distributions(10000), 0.8, 7);
  CHECK(split.train.size() == 8000);
  CHECK(split.test.size() == 2000);
}

TEST_CASE("split_queries is a partition for any ratio and seed", "[corpus]") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto n = 2 + rng.below(40);
    double ratio = 0.05 + 0.9 * rng.unit();
    auto split = split_queries(make_distributions(n), ratio, rng.next_u64());
    std::set<std::string> seen;
    for (const auto& d : split.train) REQUIRE(seen.insert(d.query_id).second);
    for (const auto& d : split.test) REQUIRE(seen.insert(d.query_id).second);
    REQUIRE(seen.size() == n);
    REQUIRE(!split.train.empty());
    REQUIRE(!split.test.empty());
  }
}

TEST_CASE("split_queries rejects bad inputs", "[corpus]") {
  REQUIRE_THROWS_AS(split_queries(make_distributions(1), 0.8, 1), DataError);
  REQUIRE_THROWS_AS(split_queries(make_distributions(10), 0.0, 1), ParameterError);
  REQUIRE_THROWS_AS(split_queries(make_distributions(10), 1.0, 1), ParameterError);
}

TEST_CASE("generate_synthetic with zero noise keeps queries inside their vocabulary",
          "[corpus]") {
  SyntheticSpec spec;
  spec.categories = 5;
  spec.vocab_per_category = 20;
  spec.queries_per_category = 10;
  spec.products_per_category = 8;
  spec.noise_rate = 0.0;
  auto corpus = generate_synthetic(spec, 11);

  // Rebuild each category's vocabulary the same way the generator does.
  std::vector<std::set<std::string>> vocab(spec.categories);
  for (std::size_t c = 0; c < spec.categories; ++c) {
    for (std::size_t t = 0; t < spec.vocab_per_category; ++t) {
      vocab[c].insert(detail::synth_word(c * spec.vocab_per_category + t));
    }
  }
  for (const auto& judgment : corpus.judgments.judgments) {
    auto category = std::stoul(judgment.query_id.substr(1, 3));
    for (const auto& term : tokenize(judgment.query_text)) {
      CHECK(vocab[category].contains(term));
    }
  }
}

TEST_CASE("generate_synthetic with noise 1.0 draws from the global vocabulary",
          "[corpus]") {
  SyntheticSpec spec;
  spec.categories = 5;
  spec.vocab_per_category = 20;
  spec.queries_per_category = 10;
  spec.products_per_category = 8;
  spec.noise_rate = 1.0;
  auto corpus = generate_synthetic(spec, 11);

  std::vector<std::set<std::string>> vocab(spec.categories);
  for (std::size_t c = 0; c < spec.categories; ++c) {
    for (std::size_t t = 0; t < spec.vocab_per_category; ++t) {
      vocab[c].insert(detail::synth_word(c * spec.vocab_per_category + t));
    }
  }
  std::size_t out_of_category = 0;
  for (const auto& judgment : corpus.judgments.judgments) {
    auto category = std::stoul(judgment.query_id.substr(1, 3));
    for (const auto& term : tokenize(judgment.query_text)) {
      if (!vocab[category].contains(term)) ++out_of_category;
    }
  }
  CHECK(out_of_category > 0);
}

TEST_CASE("generate_synthetic is byte-deterministic under a seed", "[corpus]") {
  SyntheticSpec spec;
  spec.categories = 3;
  spec.vocab_per_category = 10;
  spec.queries_per_category = 5;
  spec.products_per_category = 4;
  spec.noise_rate = 0.5;

  TempDir dir;
  for (int round = 0; round < 2; ++round) {
    auto corpus = generate_synthetic(spec, 1234);
    write_products(dir.file("products" + std::to_string(round) + ".jsonl"),
                   corpus.products);
    write_judgments(dir.file("judgments" + std::to_string(round) + ".jsonl"),
                    corpus.judgments);
  }
  CHECK(cars::test::slurp(dir.file("products0.jsonl")) ==
        cars::test::slurp(dir.file("products1.jsonl")));
  CHECK(cars::test::slurp(dir.file("judgments0.jsonl")) ==
        cars::test::slurp(dir.file("judgments1.jsonl")));
}

TEST_CASE("generate_synthetic validates its spec", "[corpus]") {
  SyntheticSpec spec;
  spec.categories = 0;
  REQUIRE_THROWS_AS(generate_synthetic(spec, 1), ParameterError);
}

TEST_CASE("synthetic corpora load back through the regular loaders", "[corpus]") {
  SyntheticSpec spec;
  spec.categories = 3;
  spec.vocab_per_category = 12;
  spec.queries_per_category = 4;
  spec.products_per_category = 5;
  TempDir dir;
  auto corpus = generate_synthetic(spec, 5);
  write_products(dir.file("p.jsonl"), corpus.products);
  write_judgments(dir.file("j.jsonl"), corpus.judgments);
  auto products = load_products(dir.file("p.jsonl"));
  auto judgments = load_judgments(dir.file("j.jsonl"));
  CHECK(products.size() == 15);
  CHECK(judgments.size() == corpus.judgments.size());
  for (const auto& judgment : judgments.judgments) {
    CHECK(products.find(judgment.product_id) != nullptr);
  }
}
