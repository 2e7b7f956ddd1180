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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cars/corpus.hpp"
#include "cars/embedding.hpp"
#include "cars/engine.hpp"
#include "cars/error.hpp"
#include "cars/eval.hpp"
#include "cars/predictor.hpp"
#include "cars/prototype.hpp"
#include "cars/remote.hpp"
#include "cars/synthetic.hpp"
#include "cars/text.hpp"

namespace cars {

/// One experiment's knobs, fully serializable and echoed verbatim into every
/// report. All randomness (split, corruption) flows from the one seed.
struct RunConfig {
  std::string products_path;
  std::string judgments_path;
  std::string index_path;
  std::string zero_shot_index_path;  // optional second index for predict-eval
  std::string cache_path;            // optional embedding cache
  std::string output_dir = ".";

  std::string provider = "hashing";  // "hashing" or "remote"
  std::uint32_t dim = 256;
  std::string remote_model;  // endpoint/credential come from the environment

  double alpha = 0.85;
  double split_ratio = 0.8;
  std::uint64_t seed = 42;

  std::vector<int> k_sweep = {3, 5};
  std::vector<std::string> modes = {"cars_boost"};
  SearchConfig search;
  int ndcg_k = 10;
  GainScheme gain_scheme = GainScheme::binary;
  LabelSet relevant_labels = default_relevant_labels();

  bool oracle_predictions = false;  // substitute gold categories for the model
  double corrupt_rate = 0.0;        // fraction of predictions replaced by a wrong category

  nlohmann::ordered_json to_json() const {
    std::string labels;
    for (auto l : relevant_labels) labels.push_back(label_to_char(l));
    nlohmann::ordered_json j;
    j["products_path"] = products_path;
    j["judgments_path"] = judgments_path;
    j["index_path"] = index_path;
    j["zero_shot_index_path"] = zero_shot_index_path;
    j["cache_path"] = cache_path;
    j["output_dir"] = output_dir;
    j["provider"] = provider;
    j["dim"] = dim;
    j["remote_model"] = remote_model;
    j["alpha"] = alpha;
    j["split_ratio"] = split_ratio;
    j["seed"] = seed;
    j["k_sweep"] = k_sweep;
    j["modes"] = modes;
    j["search"] = {{"title_weight", search.title_weight},
                   {"category_boost", search.category_boost},
                   {"k_categories", search.k_categories},
                   {"high_threshold", search.high_threshold},
                   {"low_threshold", search.low_threshold},
                   {"moderate_boost", search.moderate_boost},
                   {"result_depth", search.result_depth}};
    j["ndcg_k"] = ndcg_k;
    j["gain_scheme"] = gain_scheme_to_string(gain_scheme);
    j["relevant_labels"] = labels;
    j["oracle_predictions"] = oracle_predictions;
    j["corrupt_rate"] = corrupt_rate;
    return j;
  }

  void apply_json(const nlohmann::json& j) {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("products_path", products_path);
    get("judgments_path", judgments_path);
    get("index_path", index_path);
    get("zero_shot_index_path", zero_shot_index_path);
    get("cache_path", cache_path);
    get("output_dir", output_dir);
    get("provider", provider);
    get("dim", dim);
    get("remote_model", remote_model);
    get("alpha", alpha);
    get("split_ratio", split_ratio);
    get("seed", seed);
    get("k_sweep", k_sweep);
    get("modes", modes);
    if (j.contains("search")) {
      const auto& s = j.at("search");
      auto gets = [&](const char* key, auto& field) {
        if (s.contains(key)) field = s.at(key).get<std::decay_t<decltype(field)>>();
      };
      gets("title_weight", search.title_weight);
      gets("category_boost", search.category_boost);
      gets("k_categories", search.k_categories);
      gets("high_threshold", search.high_threshold);
      gets("low_threshold", search.low_threshold);
      gets("moderate_boost", search.moderate_boost);
      gets("result_depth", search.result_depth);
    }
    get("ndcg_k", ndcg_k);
    if (j.contains("gain_scheme")) {
      gain_scheme = gain_scheme_from_string(j.at("gain_scheme").get<std::string>());
    }
    if (j.contains("relevant_labels")) {
      relevant_labels.clear();
      for (char c : j.at("relevant_labels").get<std::string>()) {
        relevant_labels.insert(label_from_char(c));
      }
    }
    get("oracle_predictions", oracle_predictions);
    get("corrupt_rate", corrupt_rate);
  }
};

/// Provider plus optional cache, with lifetimes tied together.
class ProviderBundle {
 public:
  explicit ProviderBundle(const RunConfig& config) {
    if (config.provider == "hashing") {
      base_ = std::make_unique<HashingEmbedder>(config.dim);
    } else if (config.provider == "remote") {
      RemoteConfig remote;
      const char* endpoint = std::getenv("CARS_EMBED_ENDPOINT");
      const char* api_key = std::getenv("CARS_EMBED_API_KEY");
      if (endpoint == nullptr || *endpoint == '\0') {
        throw ConfigError("remote provider needs CARS_EMBED_ENDPOINT in the environment");
      }
      remote.endpoint = endpoint;
      remote.api_key = api_key == nullptr ? "" : api_key;
      remote.model = config.remote_model;
      remote.dim = config.dim;
      base_ = std::make_unique<RemoteEmbedder>(std::move(remote));
    } else {
      throw ParameterError("unknown provider: " + config.provider);
    }
    if (!config.cache_path.empty()) {
      cache_ = std::make_unique<EmbeddingCache>(config.cache_path, base_->id());
      caching_ = std::make_unique<CachingProvider>(*base_, *cache_);
    }
  }

  EmbeddingProvider& active() { return caching_ ? *caching_ : *base_; }
  const CachingProvider* caching() const { return caching_.get(); }

 private:
  std::unique_ptr<EmbeddingProvider> base_;
  std::unique_ptr<EmbeddingCache> cache_;
  std::unique_ptr<CachingProvider> caching_;
};

namespace detail {

inline void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

inline std::string join_path(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path);
  out << content;
}

inline void write_json_file(const std::string& path,
                            const nlohmann::ordered_json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline nlohmann::ordered_json config_echo(const RunConfig& config) {
  nlohmann::ordered_json echo;
  echo["config"] = config.to_json();
  nlohmann::ordered_json hashes;
  if (!config.products_path.empty() &&
      std::filesystem::exists(config.products_path)) {
    hashes["products_sha256"] = sha256_file_hex(config.products_path);
  }
  if (!config.judgments_path.empty() &&
      std::filesystem::exists(config.judgments_path)) {
    hashes["judgments_sha256"] = sha256_file_hex(config.judgments_path);
  }
  echo["input_hashes"] = std::move(hashes);
  return echo;
}

inline std::vector<std::string> category_universe(const ProductCollection& products) {
  std::set<std::string> categories;
  for (const auto& doc : products) {
    if (!doc.category_path.empty()) categories.insert(doc.category_path.front());
  }
  return {categories.begin(), categories.end()};
}

}  // namespace detail

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOutput {
  std::string products_path;
  std::string judgments_path;
};

inline SynthOutput run_synth(const SyntheticSpec& spec, std::uint64_t seed,
                             const std::string& output_dir) {
  detail::ensure_dir(output_dir);
  auto corpus = generate_synthetic(spec, seed);
  SynthOutput out;
  out.products_path = detail::join_path(output_dir, "products.jsonl");
  out.judgments_path = detail::join_path(output_dir, "judgments.jsonl");
  write_products(out.products_path, corpus.products);
  write_judgments(out.judgments_path, corpus.judgments);
  return out;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json run_train(const RunConfig& config) {
  auto products = load_products(config.products_path);
  auto judgments = load_judgments(config.judgments_path);

  AggregationStats stats;
  auto distributions = aggregate_ground_truth(judgments.judgments, products,
                                              config.relevant_labels, &stats);
  auto split = split_queries(distributions, config.split_ratio, config.seed);

  ProviderBundle bundle(config);
  auto universe = detail::category_universe(products);
  auto index = train_prototypes(split.train, universe, bundle.active(), config.alpha);
  save_index(index, config.index_path);

  auto summary = detail::config_echo(config);
  summary["categories"] = index.size();
  summary["cold_start_categories"] = index.cold_start_count();
  summary["train_queries"] = split.train.size();
  summary["test_queries"] = split.test.size();
  summary["zero_shot"] = (config.alpha == 0.0);
  summary["aggregation"] = {
      {"unresolved_product_ids", stats.unresolved_product_ids},
      {"uncategorized_relevant", stats.uncategorized_relevant},
      {"zero_relevant_queries", stats.zero_relevant_queries}};
  if (bundle.caching() != nullptr) {
    auto hits = bundle.caching()->hits();
    auto misses = bundle.caching()->misses();
    summary["cache"] = {
        {"enabled", true},
        {"hits", hits},
        {"misses", misses},
        {"hit_rate", hits + misses == 0
                         ? 0.0
                         : static_cast<double>(hits) /
                               static_cast<double>(hits + misses)}};
  } else {
    summary["cache"] = {{"enabled", false}};
  }
  detail::ensure_dir(config.output_dir);
  detail::write_json_file(
      detail::join_path(config.output_dir, "training_summary.json"), summary);
  return summary;
}

// ---------------------------------------------------------------------------
// predict-eval
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json run_predict_eval(const RunConfig& config) {
  auto products = load_products(config.products_path);
  auto judgments = load_judgments(config.judgments_path);
  auto distributions = aggregate_ground_truth(judgments.judgments, products,
                                              config.relevant_labels, nullptr);
  auto split = split_queries(distributions, config.split_ratio, config.seed);
  if (split.test.empty()) throw DataError("test split is empty");
  if (config.k_sweep.empty()) throw ParameterError("k sweep is empty");

  ProviderBundle bundle(config);

  auto report = detail::config_echo(config);
  report["rows"] = nlohmann::ordered_json::array();

  auto evaluate_index = [&](const std::string& label, const std::string& path,
                            bool dump_records) {
    auto index = load_index(path);
    if (!(bundle.active().id() == index.provider)) {
      throw ConfigError("provider " + bundle.active().id().describe() +
                        " does not match index provider " +
                        index.provider.describe() + " (" + path + ")");
    }
    const int k_max = *std::max_element(config.k_sweep.begin(), config.k_sweep.end());
    std::vector<std::string> texts;
    texts.reserve(split.test.size());
    for (const auto& dist : split.test) texts.push_back(dist.query_text);
    auto vectors = bundle.active().embed_batch(texts);

    std::vector<CategoryPrediction> predictions;
    predictions.reserve(split.test.size());
    for (const auto& vec : vectors) {
      predictions.push_back(rank_categories(vec, index, k_max));
    }

    for (int k : config.k_sweep) {
      std::size_t hits = 0, any_hits = 0;
      for (std::size_t i = 0; i < split.test.size(); ++i) {
        const auto& gold = gold_category(split.test[i]);
        auto upto = std::min<std::size_t>(static_cast<std::size_t>(k),
                                          predictions[i].ranked.size());
        bool hit = false, any = false;
        for (std::size_t r = 0; r < upto; ++r) {
          const auto& category = predictions[i].ranked[r].category;
          if (category == gold) hit = true;
          if (split.test[i].weights.contains(category)) any = true;
        }
        hits += hit ? 1 : 0;
        any_hits += any ? 1 : 0;
      }
      report["rows"].push_back(
          {{"index", label},
           {"k", k},
           {"n", split.test.size()},
           {"accuracy",
            static_cast<double>(hits) / static_cast<double>(split.test.size())},
           {"accuracy_any_relevant", static_cast<double>(any_hits) /
                                         static_cast<double>(split.test.size())}});
    }

    if (dump_records) {
      detail::ensure_dir(config.output_dir);
      std::ofstream dump(detail::join_path(config.output_dir, "predictions.jsonl"),
                         std::ios::binary | std::ios::trunc);
      if (!dump) throw Error("cannot write predictions dump");
      for (std::size_t i = 0; i < split.test.size(); ++i) {
        nlohmann::ordered_json record;
        record["query_id"] = split.test[i].query_id;
        record["query_text"] = split.test[i].query_text;
        record["gold"] = gold_category(split.test[i]);
        record["ranked"] = nlohmann::ordered_json::array();
        for (const auto& entry : predictions[i].ranked) {
          record["ranked"].push_back({entry.category, entry.score});
        }
        nlohmann::ordered_json flags;
        for (int k : config.k_sweep) {
          auto upto = std::min<std::size_t>(static_cast<std::size_t>(k),
                                            predictions[i].ranked.size());
          bool hit = false;
          for (std::size_t r = 0; r < upto; ++r) {
            if (predictions[i].ranked[r].category == record["gold"]) hit = true;
          }
          flags["hit@" + std::to_string(k)] = hit;
        }
        record["hits"] = std::move(flags);
        dump << record.dump() << '\n';
      }
    }
  };

  evaluate_index("trained", config.index_path, true);
  if (!config.zero_shot_index_path.empty()) {
    evaluate_index("zero_shot", config.zero_shot_index_path, false);
  }

  detail::ensure_dir(config.output_dir);
  detail::write_json_file(
      detail::join_path(config.output_dir, "accuracy_report.json"), report);
  return report;
}

// ---------------------------------------------------------------------------
// search-eval
// ---------------------------------------------------------------------------

namespace detail {

/// Model, oracle, or corrupted predictions for the test split, in split order.
inline std::vector<CategoryPrediction> make_predictions(
    const RunConfig& config, const std::vector<CategoryDistribution>& test,
    const PrototypeIndex& index, EmbeddingProvider* embedder) {
  std::vector<CategoryPrediction> predictions;
  predictions.reserve(test.size());
  if (config.oracle_predictions) {
    for (const auto& dist : test) {
      CategoryPrediction p;
      // Relevant categories by weight descending (map order breaks ties
      // alphabetically); fully confident by construction.
      std::vector<CategoryScore> ranked;
      for (const auto& [category, weight] : dist.weights) {
        ranked.push_back({category, weight});
      }
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const CategoryScore& x, const CategoryScore& y) {
                         return x.score > y.score;
                       });
      p.ranked = std::move(ranked);
      p.confidence = 1.0;
      predictions.push_back(std::move(p));
    }
  } else {
    if (embedder == nullptr) throw ConfigError("model predictions need a provider");
    if (!(embedder->id() == index.provider)) {
      throw ConfigError("provider " + embedder->id().describe() +
                        " does not match index provider " +
                        index.provider.describe());
    }
    std::vector<std::string> texts;
    texts.reserve(test.size());
    for (const auto& dist : test) texts.push_back(dist.query_text);
    auto vectors = embedder->embed_batch(texts);
    for (const auto& vec : vectors) {
      predictions.push_back(rank_categories(vec, index, config.search.k_categories));
    }
  }

  if (config.corrupt_rate > 0.0) {
    if (index.prototypes.size() < 2) {
      throw ParameterError("corrupting predictions needs at least 2 categories");
    }
    std::vector<std::string> categories;
    for (const auto& [name, _] : index.prototypes) categories.push_back(name);
    // Separate stream so corruption does not perturb the split.
    Rng rng(config.seed ^ 0x636f727275707401ull);
    for (std::size_t i = 0; i < test.size(); ++i) {
      if (rng.unit() >= config.corrupt_rate) continue;
      const auto& gold = gold_category(test[i]);
      std::string wrong = gold;
      while (wrong == gold) wrong = categories[rng.below(categories.size())];
      CategoryPrediction corrupted;
      corrupted.ranked = {{wrong, 1.0}};
      corrupted.confidence = 1.0;
      predictions[i] = std::move(corrupted);
    }
  }
  return predictions;
}

inline void write_run_file(const std::string& path, const std::string& mode,
                           const std::vector<RankedResult>& results) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write run file: " + path);
  for (const auto& result : results) {
    nlohmann::ordered_json record;
    record["query_id"] = result.query_id;
    record["mode"] = mode;
    record["ranked"] = nlohmann::ordered_json::array();
    for (const auto& hit : result.hits) {
      record["ranked"].push_back({hit.product_id, hit.score});
    }
    out << record.dump() << '\n';
  }
}

inline std::vector<RankedResult> read_run_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open run file: " + path);
  std::vector<RankedResult> results;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto j = parse_record_line(line, path, line_no);
    RankedResult result;
    result.query_id = get_field<std::string>(j, "query_id", path, line_no);
    for (const auto& entry : j.at("ranked")) {
      result.hits.push_back(
          {entry.at(0).get<std::string>(), entry.at(1).get<double>()});
    }
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace detail

inline nlohmann::ordered_json run_search_eval(const RunConfig& config) {
  config.search.validate();
  auto products = load_products(config.products_path);
  auto judgments = load_judgments(config.judgments_path);
  auto distributions = aggregate_ground_truth(judgments.judgments, products,
                                              config.relevant_labels, nullptr);
  auto split = split_queries(distributions, config.split_ratio, config.seed);
  if (split.test.empty()) throw DataError("test split is empty");

  auto engine = InvertedIndex::build(products);
  auto index = load_index(config.index_path);

  std::unique_ptr<ProviderBundle> bundle;
  EmbeddingProvider* embedder = nullptr;
  if (!config.oracle_predictions) {
    bundle = std::make_unique<ProviderBundle>(config);
    embedder = &bundle->active();
  }
  auto predictions = detail::make_predictions(config, split.test, index, embedder);

  detail::ensure_dir(config.output_dir);
  auto gains = RelevanceGains::from_judgments(judgments, config.gain_scheme,
                                              config.relevant_labels);

  auto run_mode = [&](SearchConfig::Mode mode) {
    SearchConfig search = config.search;
    search.mode = mode;
    std::vector<RankedResult> results;
    results.reserve(split.test.size());
    for (std::size_t i = 0; i < split.test.size(); ++i) {
      const CategoryPrediction* prediction =
          mode == SearchConfig::Mode::baseline ? nullptr : &predictions[i];
      results.push_back(engine.search(split.test[i].query_text, search,
                                      prediction, split.test[i].query_id));
    }
    detail::write_run_file(
        detail::join_path(config.output_dir,
                          "run_" + std::string(mode_to_string(mode)) + ".jsonl"),
        mode_to_string(mode), results);
    return results;
  };

  auto baseline = run_mode(SearchConfig::Mode::baseline);

  auto summary = detail::config_echo(config);
  summary["comparisons"] = nlohmann::ordered_json::array();
  for (const auto& mode_name : config.modes) {
    auto mode = mode_from_string(mode_name);
    if (mode == SearchConfig::Mode::baseline) continue;
    auto results = run_mode(mode);
    auto report = compare_runs(baseline, results, gains, config.ndcg_k,
                               "baseline", mode_name);
    auto report_json = detail::config_echo(config);
    report_json["comparison"] = report_to_json(report);
    detail::write_json_file(
        detail::join_path(config.output_dir, "comparison_" + mode_name + ".json"),
        report_json);
    detail::write_text_file(
        detail::join_path(config.output_dir, "comparison_" + mode_name + ".txt"),
        report_to_text(report));
    nlohmann::ordered_json entry;
    entry["mode"] = mode_name;
    for (const auto& metric : report.metrics) {
      entry[metric.metric] = {{"mean_baseline", metric.a.mean},
                              {"mean_cars", metric.b.mean},
                              {"p_value", metric.test.p_value},
                              {"direction", direction_to_string(metric.test.direction)}};
    }
    summary["comparisons"].push_back(std::move(entry));
  }
  detail::write_json_file(
      detail::join_path(config.output_dir, "search_eval_summary.json"), summary);
  return summary;
}

// ---------------------------------------------------------------------------
// compare (re-run evaluation on stored run files)
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json run_compare(const RunConfig& config,
                                          const std::string& run_a_path,
                                          const std::string& run_b_path) {
  auto judgments = load_judgments(config.judgments_path);
  auto gains = RelevanceGains::from_judgments(judgments, config.gain_scheme,
                                              config.relevant_labels);
  auto run_a = detail::read_run_file(run_a_path);
  auto run_b = detail::read_run_file(run_b_path);
  auto report = compare_runs(run_a, run_b, gains, config.ndcg_k,
                             std::filesystem::path(run_a_path).stem().string(),
                             std::filesystem::path(run_b_path).stem().string());
  auto report_json = detail::config_echo(config);
  report_json["comparison"] = report_to_json(report);
  detail::ensure_dir(config.output_dir);
  detail::write_json_file(detail::join_path(config.output_dir, "comparison.json"),
                          report_json);
  detail::write_text_file(detail::join_path(config.output_dir, "comparison.txt"),
                          report_to_text(report));
  return report_json;
}

}  // namespace cars
