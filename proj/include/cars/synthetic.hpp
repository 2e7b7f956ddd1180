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

#include <cstdio>
#include <string>
#include <vector>

#include "cars/corpus.hpp"
#include "cars/error.hpp"
#include "cars/rng.hpp"

namespace cars {

/// Parameters for the synthetic shopping corpus. Each category owns a
/// disjoint core vocabulary, so with noise_rate 0 the category is exactly
/// recoverable from any query or document text. noise_rate replaces tokens
/// with draws from the global vocabulary, which creates the cross-category
/// keyword collisions real query logs have.
struct SyntheticSpec {
  std::size_t categories = 20;
  std::size_t vocab_per_category = 50;
  std::size_t queries_per_category = 50;
  std::size_t products_per_category = 30;
  double noise_rate = 0.0;

  std::size_t min_query_terms = 5;
  std::size_t max_query_terms = 9;
  std::size_t min_title_terms = 4;
  std::size_t max_title_terms = 8;
  std::size_t min_description_terms = 12;
  std::size_t max_description_terms = 24;

  std::size_t relevant_per_query = 8;    // E/S products from the query's category
  std::size_t irrelevant_per_query = 4;  // C/I products from other categories

  void validate() const {
    if (categories == 0) throw ParameterError("synthetic spec needs at least one category");
    if (vocab_per_category < 4) throw ParameterError("synthetic spec needs vocab_per_category >= 4");
    if (queries_per_category == 0) throw ParameterError("synthetic spec needs queries_per_category >= 1");
    if (products_per_category == 0) throw ParameterError("synthetic spec needs products_per_category >= 1");
    if (noise_rate < 0.0 || noise_rate > 1.0) throw ParameterError("noise_rate must be in [0,1]");
    if (min_query_terms == 0 || min_query_terms > max_query_terms ||
        min_title_terms == 0 || min_title_terms > max_title_terms ||
        min_description_terms == 0 || min_description_terms > max_description_terms) {
      throw ParameterError("synthetic term-count ranges are invalid");
    }
    if (categories > 1 && irrelevant_per_query > 0 && products_per_category == 0) {
      throw ParameterError("irrelevant judgments need products in other categories");
    }
  }
};

struct SyntheticCorpus {
  ProductCollection products;
  JudgmentSet judgments;
};

namespace detail {

// Pronounceable pseudo-word for a global token index; 24^3 distinct words.
inline std::string synth_word(std::size_t index) {
  static const char* kSyllables[24] = {
      "ba", "ce", "di", "fo", "gu", "ha", "ki", "lo", "mu", "ne", "po", "qa",
      "ri", "so", "tu", "ve", "wa", "xe", "yo", "zu", "bra", "cle", "dri", "fle"};
  std::string word;
  word += kSyllables[(index / (24 * 24)) % 24];
  word += kSyllables[(index / 24) % 24];
  word += kSyllables[index % 24];
  return word;
}

inline std::string capitalized(std::string word) {
  if (!word.empty() && word[0] >= 'a' && word[0] <= 'z') {
    word[0] = static_cast<char>(word[0] - 'a' + 'A');
  }
  return word;
}

inline std::string zero_padded(std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%0*zu", width, value);
  return buf;
}

}  // namespace detail

/// Deterministic under the seed: the same spec+seed yields byte-identical
/// product and judgment files.
inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec,
                                          std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);

  const std::size_t vocab_total = spec.categories * spec.vocab_per_category;
  if (vocab_total > 24ull * 24 * 24) {
    throw ParameterError("synthetic vocabulary exceeds the word generator range");
  }
  auto token = [&spec](std::size_t category, std::size_t term) {
    return detail::synth_word(category * spec.vocab_per_category + term);
  };
  // Category names reuse the first two core tokens, which gives name-only
  // (zero-shot) prototypes a partial vocabulary overlap with queries.
  auto category_name = [&](std::size_t category) {
    return detail::capitalized(token(category, 0)) + " " +
           detail::capitalized(token(category, 1));
  };
  // One token of category c's text; with probability noise_rate the token is
  // replaced by a uniform draw over the global vocabulary.
  auto draw_token = [&](std::size_t category) {
    if (spec.noise_rate > 0.0 && rng.unit() < spec.noise_rate) {
      std::size_t global = rng.below(vocab_total);
      return detail::synth_word(global);
    }
    return token(category, rng.below(spec.vocab_per_category));
  };
  auto draw_text = [&](std::size_t category, std::size_t min_terms,
                       std::size_t max_terms) {
    std::size_t n = rng.between(min_terms, max_terms);
    std::string text;
    for (std::size_t i = 0; i < n; ++i) {
      if (!text.empty()) text += ' ';
      text += draw_token(category);
    }
    return text;
  };

  SyntheticCorpus corpus;
  for (std::size_t c = 0; c < spec.categories; ++c) {
    for (std::size_t p = 0; p < spec.products_per_category; ++p) {
      ProductDoc doc;
      doc.product_id = "p" + detail::zero_padded(c, 3) + "-" + detail::zero_padded(p, 4);
      doc.title = draw_text(c, spec.min_title_terms, spec.max_title_terms);
      doc.description =
          draw_text(c, spec.min_description_terms, spec.max_description_terms);
      doc.category_path = {category_name(c), "Subcategory " + detail::zero_padded(c, 3)};
      corpus.products.add(std::move(doc));
    }
  }

  auto product_id = [&](std::size_t category, std::size_t idx) {
    return "p" + detail::zero_padded(category, 3) + "-" + detail::zero_padded(idx, 4);
  };

  for (std::size_t c = 0; c < spec.categories; ++c) {
    for (std::size_t q = 0; q < spec.queries_per_category; ++q) {
      Judgment base;
      base.query_id = "q" + detail::zero_padded(c, 3) + "-" + detail::zero_padded(q, 4);
      base.query_text = draw_text(c, spec.min_query_terms, spec.max_query_terms);

      std::size_t relevant =
          std::min(spec.relevant_per_query, spec.products_per_category);
      std::vector<std::size_t> own(spec.products_per_category);
      for (std::size_t i = 0; i < own.size(); ++i) own[i] = i;
      rng.shuffle(own);
      for (std::size_t i = 0; i < relevant; ++i) {
        Judgment j = base;
        j.product_id = product_id(c, own[i]);
        j.label = rng.unit() < 0.5 ? Label::Exact : Label::Substitute;
        corpus.judgments.judgments.push_back(std::move(j));
      }

      if (spec.categories > 1) {
        std::set<std::string> used;
        std::size_t added = 0;
        while (added < spec.irrelevant_per_query) {
          std::size_t other = rng.below(spec.categories);
          if (other == c) continue;
          std::string pid = product_id(other, rng.below(spec.products_per_category));
          if (!used.insert(pid).second) continue;
          Judgment j = base;
          j.product_id = std::move(pid);
          j.label = rng.unit() < 0.25 ? Label::Complement : Label::Irrelevant;
          corpus.judgments.judgments.push_back(std::move(j));
          ++added;
        }
      }
    }
  }
  return corpus;
}

}  // namespace cars
