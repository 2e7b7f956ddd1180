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
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "cars/corpus.hpp"
#include "cars/error.hpp"
#include "cars/predictor.hpp"
#include "cars/text.hpp"

namespace cars {

struct SearchConfig {
  enum class Mode { baseline, cars_boost, cars_adaptive };

  Mode mode = Mode::baseline;
  double title_weight = 2.0;     // field weight on title BM25
  double category_boost = 5.0;   // multiplier for docs in predicted categories
  int k_categories = 5;          // how many predicted categories get the boost
  double high_threshold = 0.9;   // confidence at or above: full boost
  double low_threshold = 0.5;    // confidence below: fall back to baseline
  double moderate_boost = 2.0;   // multiplier between the thresholds
  int result_depth = 10;

  void validate() const {
    if (title_weight <= 0.0) throw ParameterError("title_weight must be positive");
    if (category_boost < 1.0) throw ParameterError("category_boost must be >= 1");
    if (moderate_boost < 1.0) throw ParameterError("moderate_boost must be >= 1");
    if (k_categories < 1) throw ParameterError("k_categories must be >= 1");
    if (low_threshold > high_threshold) {
      throw ParameterError("low_threshold must be <= high_threshold");
    }
    if (result_depth < 1) throw ParameterError("result_depth must be >= 1");
  }
};

inline const char* mode_to_string(SearchConfig::Mode mode) {
  switch (mode) {
    case SearchConfig::Mode::baseline: return "baseline";
    case SearchConfig::Mode::cars_boost: return "cars_boost";
    case SearchConfig::Mode::cars_adaptive: return "cars_adaptive";
  }
  throw ParameterError("unknown search mode");
}

inline SearchConfig::Mode mode_from_string(const std::string& s) {
  if (s == "baseline") return SearchConfig::Mode::baseline;
  if (s == "cars_boost") return SearchConfig::Mode::cars_boost;
  if (s == "cars_adaptive") return SearchConfig::Mode::cars_adaptive;
  throw ParameterError("unknown search mode: " + s);
}

struct ScoredDoc {
  std::string product_id;
  double score = 0.0;
};

struct RankedResult {
  std::string query_id;
  std::vector<ScoredDoc> hits;  // descending score, ties by product_id asc
};

/// In-process keyword engine: per-field inverted index over title and
/// description with BM25 scoring (k1 = 1.2, b = 0.75, per-field length
/// normalization, IDF floored at 0). A document matches if any query term
/// matches either field. Immutable after build; queries may run concurrently.
class InvertedIndex {
 public:
  static constexpr double kBm25K1 = 1.2;
  static constexpr double kBm25B = 0.75;

  enum class Field { title, description };

  static InvertedIndex build(const ProductCollection& products) {
    InvertedIndex index;
    index.doc_ids_.reserve(products.size());
    index.doc_categories_.reserve(products.size());
    for (const auto& doc : products) {
      auto internal = static_cast<std::uint32_t>(index.doc_ids_.size());
      index.doc_ids_.push_back(doc.product_id);
      index.doc_categories_.push_back(
          doc.category_path.empty() ? "" : doc.category_path.front());
      index.title_.add_document(internal, tokenize(doc.title));
      index.description_.add_document(internal, tokenize(doc.description));
    }
    index.title_.finalize();
    index.description_.finalize();
    return index;
  }

  std::size_t doc_count() const { return doc_ids_.size(); }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }

  const std::string& doc_category(std::size_t internal) const {
    return doc_categories_[internal];
  }

  double avg_field_length(Field field) const {
    return field_index(field).avg_length;
  }

  std::size_t document_frequency(Field field, const std::string& term) const {
    const auto& postings = field_index(field).postings;
    auto it = postings.find(term);
    return it == postings.end() ? 0 : it->second.size();
  }

  std::uint32_t term_frequency(Field field, const std::string& term,
                               const std::string& product_id) const {
    const auto& postings = field_index(field).postings;
    auto it = postings.find(term);
    if (it == postings.end()) return 0;
    for (const auto& posting : it->second) {
      if (doc_ids_[posting.doc] == product_id) return posting.tf;
    }
    return 0;
  }

  /// title_weight * BM25_title + 1.0 * BM25_description for one document.
  double score_keyword(std::span<const std::string> terms,
                       const std::string& product_id,
                       double title_weight) const {
    auto it = std::find(doc_ids_.begin(), doc_ids_.end(), product_id);
    if (it == doc_ids_.end()) {
      throw ParameterError("unknown product_id: " + product_id);
    }
    auto internal = static_cast<std::uint32_t>(it - doc_ids_.begin());
    double score = 0.0;
    for (const auto& term : terms) {
      score += title_weight * title_.bm25_term(term, internal, doc_count());
      score += description_.bm25_term(term, internal, doc_count());
    }
    return score;
  }

  /// Keyword retrieval plus the configured category-boost strategy. CARS
  /// modes require a prediction. The boost is multiplicative and never
  /// generative: documents with zero keyword score are never introduced.
  RankedResult search(const std::string& query_text, const SearchConfig& config,
                      const CategoryPrediction* prediction = nullptr,
                      std::string query_id = "") const {
    config.validate();
    if (config.mode != SearchConfig::Mode::baseline && prediction == nullptr) {
      throw ConfigError(std::string(mode_to_string(config.mode)) +
                        " mode requires a category prediction");
    }

    RankedResult result;
    result.query_id = std::move(query_id);
    if (doc_count() == 0) return result;

    std::vector<double> scores(doc_count(), 0.0);
    auto terms = tokenize(query_text);
    for (const auto& term : terms) {
      title_.accumulate(term, doc_count(), config.title_weight, scores);
      description_.accumulate(term, doc_count(), 1.0, scores);
    }

    double boost = 1.0;
    if (config.mode == SearchConfig::Mode::cars_boost) {
      boost = config.category_boost;
    } else if (config.mode == SearchConfig::Mode::cars_adaptive) {
      // Modulate by model confidence; below low_threshold this is exactly
      // the baseline ranking.
      if (prediction->confidence >= config.high_threshold) {
        boost = config.category_boost;
      } else if (prediction->confidence >= config.low_threshold) {
        boost = config.moderate_boost;
      }
    }
    std::set<std::string> boosted;
    if (boost != 1.0) {
      auto k = std::min<std::size_t>(static_cast<std::size_t>(config.k_categories),
                                     prediction->ranked.size());
      for (std::size_t i = 0; i < k; ++i) {
        boosted.insert(prediction->ranked[i].category);
      }
    }

    std::vector<std::uint32_t> matched;
    for (std::uint32_t d = 0; d < scores.size(); ++d) {
      if (scores[d] <= 0.0) continue;
      if (boost != 1.0 && !doc_categories_[d].empty() &&
          boosted.contains(doc_categories_[d])) {
        scores[d] *= boost;
      }
      matched.push_back(d);
    }
    std::sort(matched.begin(), matched.end(),
              [&](std::uint32_t x, std::uint32_t y) {
                if (scores[x] != scores[y]) return scores[x] > scores[y];
                return doc_ids_[x] < doc_ids_[y];
              });
    auto depth = std::min<std::size_t>(
        static_cast<std::size_t>(config.result_depth), matched.size());
    result.hits.reserve(depth);
    for (std::size_t i = 0; i < depth; ++i) {
      result.hits.push_back({doc_ids_[matched[i]], scores[matched[i]]});
    }
    return result;
  }

 private:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };

  struct FieldIndex {
    std::unordered_map<std::string, std::vector<Posting>> postings;
    std::vector<std::uint32_t> lengths;
    double avg_length = 0.0;

    void add_document(std::uint32_t internal, const std::vector<std::string>& terms) {
      lengths.push_back(static_cast<std::uint32_t>(terms.size()));
      std::unordered_map<std::string, std::uint32_t> counts;
      for (const auto& term : terms) ++counts[term];
      for (const auto& [term, tf] : counts) {
        postings[term].push_back({internal, tf});  // doc order => sorted by id
      }
    }

    void finalize() {
      double total = 0.0;
      for (auto len : lengths) total += len;
      avg_length = lengths.empty() ? 0.0 : total / static_cast<double>(lengths.size());
    }

    double idf(std::size_t df, std::size_t doc_count) const {
      double raw = std::log((static_cast<double>(doc_count) -
                             static_cast<double>(df) + 0.5) /
                            (static_cast<double>(df) + 0.5));
      return std::max(0.0, raw);
    }

    double tf_component(std::uint32_t tf, std::uint32_t doc_len) const {
      double rel = avg_length > 0.0
                       ? static_cast<double>(doc_len) / avg_length
                       : 0.0;
      double f = static_cast<double>(tf);
      return f * (kBm25K1 + 1.0) /
             (f + kBm25K1 * (1.0 - kBm25B + kBm25B * rel));
    }

    double bm25_term(const std::string& term, std::uint32_t internal,
                     std::size_t doc_count) const {
      auto it = postings.find(term);
      if (it == postings.end()) return 0.0;
      const auto& list = it->second;
      auto pos = std::lower_bound(
          list.begin(), list.end(), internal,
          [](const Posting& p, std::uint32_t d) { return p.doc < d; });
      if (pos == list.end() || pos->doc != internal) return 0.0;
      return idf(list.size(), doc_count) *
             tf_component(pos->tf, lengths[internal]);
    }

    void accumulate(const std::string& term, std::size_t doc_count,
                    double weight, std::vector<double>& scores) const {
      auto it = postings.find(term);
      if (it == postings.end()) return;
      double term_idf = idf(it->second.size(), doc_count);
      if (term_idf <= 0.0) return;
      for (const auto& posting : it->second) {
        scores[posting.doc] +=
            weight * term_idf * tf_component(posting.tf, lengths[posting.doc]);
      }
    }
  };

  const FieldIndex& field_index(Field field) const {
    return field == Field::title ? title_ : description_;
  }

  FieldIndex title_;
  FieldIndex description_;
  std::vector<std::string> doc_ids_;
  std::vector<std::string> doc_categories_;
};

}  // namespace cars
