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
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "cars/error.hpp"
#include "cars/rng.hpp"

namespace cars {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Graded relevance labels: Exact, Substitute, Complement, Irrelevant.
enum class Label : char {
  Exact = 'E',
  Substitute = 'S',
  Complement = 'C',
  Irrelevant = 'I',
};

inline char label_to_char(Label l) { return static_cast<char>(l); }

inline Label label_from_char(char c) {
  switch (c) {
    case 'E': return Label::Exact;
    case 'S': return Label::Substitute;
    case 'C': return Label::Complement;
    case 'I': return Label::Irrelevant;
    default:
      throw ParseError(std::string("invalid label '") + c +
                       "', expected one of E/S/C/I");
  }
}

using LabelSet = std::set<Label>;

inline LabelSet default_relevant_labels() {
  return {Label::Exact, Label::Substitute};
}

struct ProductDoc {
  std::string product_id;
  std::string title;
  std::string description;
  std::vector<std::string> category_path;  // root first; may be empty
};

/// Products keyed by product_id, insertion order preserved.
class ProductCollection {
 public:
  void add(ProductDoc doc) {
    if (doc.product_id.empty()) {
      throw IntegrityError("product with empty product_id");
    }
    for (const auto& part : doc.category_path) {
      if (part.empty()) {
        throw IntegrityError("product " + doc.product_id +
                             " has an empty category path entry");
      }
    }
    auto [it, inserted] = by_id_.emplace(doc.product_id, docs_.size());
    if (!inserted) {
      throw IntegrityError("duplicate product_id: " + doc.product_id);
    }
    docs_.push_back(std::move(doc));
  }

  const ProductDoc* find(const std::string& product_id) const {
    auto it = by_id_.find(product_id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
  }

  std::size_t size() const { return docs_.size(); }
  bool empty() const { return docs_.empty(); }
  const std::vector<ProductDoc>& docs() const { return docs_; }
  auto begin() const { return docs_.begin(); }
  auto end() const { return docs_.end(); }

 private:
  std::vector<ProductDoc> docs_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

struct Judgment {
  std::string query_id;
  std::string query_text;
  std::string product_id;
  Label label;
};

struct JudgmentSet {
  std::vector<Judgment> judgments;

  std::size_t size() const { return judgments.size(); }
};

/// Per-query map {L1 category -> p(C|q)}. Probabilities are in (0,1] and sum
/// to 1; the map is never empty.
struct CategoryDistribution {
  std::string query_id;
  std::string query_text;
  std::map<std::string, double> weights;
};

struct QuerySplit {
  std::vector<CategoryDistribution> train;
  std::vector<CategoryDistribution> test;
  std::uint64_t seed = 0;
  double ratio = 0.0;
};

// ---------------------------------------------------------------------------
// Loading / writing (line-delimited JSON, UTF-8)
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json parse_record_line(const std::string& line,
                                        const std::string& path,
                                        std::size_t line_no) {
  try {
    auto j = nlohmann::json::parse(line);
    if (!j.is_object()) throw ParseError("record is not an object");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
  }
}

template <typename T>
T get_field(const nlohmann::json& j, const char* key, const std::string& path,
            std::size_t line_no) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": field '" + key +
                     "': " + e.what());
  }
}

}  // namespace detail

inline ProductCollection load_products(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open products file: " + path);
  ProductCollection products;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto j = detail::parse_record_line(line, path, line_no);
    ProductDoc doc;
    doc.product_id = detail::get_field<std::string>(j, "product_id", path, line_no);
    doc.title = detail::get_field<std::string>(j, "title", path, line_no);
    doc.description =
        detail::get_field<std::string>(j, "description", path, line_no);
    doc.category_path = detail::get_field<std::vector<std::string>>(
        j, "category_path", path, line_no);
    products.add(std::move(doc));
  }
  return products;
}

inline JudgmentSet load_judgments(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open judgments file: " + path);
  JudgmentSet set;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto j = detail::parse_record_line(line, path, line_no);
    Judgment judgment;
    judgment.query_id = detail::get_field<std::string>(j, "query_id", path, line_no);
    judgment.query_text =
        detail::get_field<std::string>(j, "query_text", path, line_no);
    judgment.product_id =
        detail::get_field<std::string>(j, "product_id", path, line_no);
    auto label = detail::get_field<std::string>(j, "label", path, line_no);
    if (label.size() != 1) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": label must be a single character, got '" + label + "'");
    }
    try {
      judgment.label = label_from_char(label[0]);
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    std::string key = judgment.query_id + '\x1f' + judgment.product_id;
    if (!seen.insert(std::move(key)).second) {
      throw IntegrityError("duplicate judgment pair (" + judgment.query_id +
                           ", " + judgment.product_id + ") at " + path + ":" +
                           std::to_string(line_no));
    }
    set.judgments.push_back(std::move(judgment));
  }
  return set;
}

inline void write_products(const std::string& path,
                           const ProductCollection& products) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write products file: " + path);
  for (const auto& doc : products) {
    nlohmann::ordered_json j{{"product_id", doc.product_id},
                             {"title", doc.title},
                             {"description", doc.description},
                             {"category_path", doc.category_path}};
    out << j.dump() << '\n';
  }
}

inline void write_judgments(const std::string& path, const JudgmentSet& set) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write judgments file: " + path);
  for (const auto& judgment : set.judgments) {
    nlohmann::ordered_json j{
        {"query_id", judgment.query_id},
        {"query_text", judgment.query_text},
        {"product_id", judgment.product_id},
        {"label", std::string(1, label_to_char(judgment.label))}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Category truncation and ground-truth aggregation
// ---------------------------------------------------------------------------

/// First element of the category path, verbatim (no case folding).
inline std::string truncate_category(std::span<const std::string> path) {
  if (path.empty()) {
    throw DataError("cannot truncate an empty category path");
  }
  return path.front();
}

struct AggregationStats {
  std::size_t unresolved_product_ids = 0;   // judged products missing from the collection
  std::size_t uncategorized_relevant = 0;   // relevant products with no category path
  std::size_t zero_relevant_queries = 0;    // queries omitted from the output
};

/// Per query: p(C|q) = (relevant judged products with L1 category C) /
/// (relevant judged products with any category). Queries with no relevant
/// categorized products are omitted and counted. Output keeps the order of
/// first appearance in the judgment list.
inline std::vector<CategoryDistribution> aggregate_ground_truth(
    std::span<const Judgment> judgments, const ProductCollection& products,
    const LabelSet& relevant_labels, AggregationStats* stats = nullptr) {
  struct QueryAccumulator {
    std::string query_text;
    std::map<std::string, std::size_t> counts;
    std::size_t total = 0;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, QueryAccumulator> acc;
  AggregationStats local;

  for (const auto& judgment : judgments) {
    auto [it, inserted] = acc.try_emplace(judgment.query_id);
    if (inserted) {
      it->second.query_text = judgment.query_text;
      order.push_back(judgment.query_id);
    }
    if (!relevant_labels.contains(judgment.label)) continue;
    const ProductDoc* doc = products.find(judgment.product_id);
    if (doc == nullptr) {
      ++local.unresolved_product_ids;
      continue;
    }
    if (doc->category_path.empty()) {
      ++local.uncategorized_relevant;
      continue;
    }
    ++it->second.counts[truncate_category(doc->category_path)];
    ++it->second.total;
  }

  std::vector<CategoryDistribution> out;
  out.reserve(order.size());
  for (const auto& query_id : order) {
    const auto& a = acc.at(query_id);
    if (a.total == 0) {
      ++local.zero_relevant_queries;
      continue;
    }
    CategoryDistribution dist;
    dist.query_id = query_id;
    dist.query_text = a.query_text;
    for (const auto& [category, count] : a.counts) {
      dist.weights[category] =
          static_cast<double>(count) / static_cast<double>(a.total);
    }
    out.push_back(std::move(dist));
  }
  if (stats != nullptr) *stats = local;
  return out;
}

/// Gold category of a distribution: argmax p(C|q), ties broken alphabetically.
inline const std::string& gold_category(const CategoryDistribution& dist) {
  if (dist.weights.empty()) {
    throw DataError("empty category distribution for query " + dist.query_id);
  }
  auto best = dist.weights.begin();
  for (auto it = std::next(best); it != dist.weights.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

// ---------------------------------------------------------------------------
// Train/test split
// ---------------------------------------------------------------------------

/// Deterministic Fisher-Yates shuffle under the seed, then a ratio cut.
/// The train size is round(ratio * n), clamped so both sides are non-empty.
inline QuerySplit split_queries(std::vector<CategoryDistribution> distributions,
                                double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw ParameterError("split ratio must be in (0,1), got " +
                         std::to_string(ratio));
  }
  if (distributions.size() < 2) {
    throw DataError("cannot split fewer than 2 queries");
  }
  Rng rng(seed);
  rng.shuffle(distributions);
  auto n = distributions.size();
  auto train_count = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(n)));
  train_count = std::clamp<std::size_t>(train_count, 1, n - 1);

  QuerySplit split;
  split.seed = seed;
  split.ratio = ratio;
  split.train.assign(distributions.begin(),
                     distributions.begin() + static_cast<std::ptrdiff_t>(train_count));
  split.test.assign(distributions.begin() + static_cast<std::ptrdiff_t>(train_count),
                    distributions.end());
  return split;
}

}  // namespace cars
