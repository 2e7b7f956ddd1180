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
//
// cars: experiment driver for category-aligned retrieval.
//
// Subcommands: synth, train, predict-eval, search-eval, compare.
// Exit codes: 0 success, 2 validation/configuration error, 3 runtime error.

#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cars/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

void add_common_options(CLI::App* cmd, cars::RunConfig& config) {
  cmd->add_option("--config", [&config](const std::vector<std::string>& values) {
        for (const auto& path : values) {
          config.apply_json(nlohmann::json::parse(cars::read_file(path)));
        }
        return true;
      },
      "JSON file with RunConfig fields; flags given after it override");
  cmd->add_option("--provider", config.provider, "Embedding provider: hashing | remote");
  cmd->add_option("--dim", config.dim, "Embedding dimension");
  cmd->add_option("--model", config.remote_model,
                  "Remote model name (endpoint/key via CARS_EMBED_ENDPOINT / CARS_EMBED_API_KEY)");
  cmd->add_option("--cache", config.cache_path, "Embedding cache file");
  cmd->add_option("--seed", config.seed, "Seed for every random choice in the run");
  cmd->add_option("--ratio", config.split_ratio, "Train fraction of the query split");
  cmd->add_option("--relevant-labels",
                  [&config](const std::vector<std::string>& values) {
                    config.relevant_labels.clear();
                    for (char c : values.back()) {
                      config.relevant_labels.insert(cars::label_from_char(c));
                    }
                    return true;
                  },
                  "Labels counted as relevant, e.g. ES or ESC");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Category-aligned retrieval experimentation toolkit"};
  app.require_subcommand(1);

  // --- synth -----------------------------------------------------------
  cars::SyntheticSpec spec;
  std::uint64_t synth_seed = 42;
  std::string synth_out = ".";
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_option("--categories", spec.categories, "Number of categories");
  synth->add_option("--vocab", spec.vocab_per_category, "Core vocabulary size per category");
  synth->add_option("--queries", spec.queries_per_category, "Queries per category");
  synth->add_option("--products", spec.products_per_category, "Products per category");
  synth->add_option("--noise", spec.noise_rate, "Cross-category noise rate in [0,1]");
  synth->add_option("--relevant-per-query", spec.relevant_per_query,
                    "Relevant judgments per query");
  synth->add_option("--irrelevant-per-query", spec.irrelevant_per_query,
                    "Non-relevant judgments per query");

  // --- train -----------------------------------------------------------
  cars::RunConfig train_config;
  auto* train = app.add_subcommand("train", "Train category prototypes");
  train->add_option("--products", train_config.products_path, "Products file");
  train->add_option("--judgments", train_config.judgments_path, "Judgments file");
  train->add_option("--index", train_config.index_path, "Output prototype index file");
  train->add_option("--out", train_config.output_dir, "Directory for the training summary");
  train->add_option("--alpha", train_config.alpha,
                    "Interpolation weight: 1 = query centroid only, 0 = name only (zero-shot)");
  add_common_options(train, train_config);

  // --- predict-eval ------------------------------------------------------
  cars::RunConfig predict_config;
  auto* predict = app.add_subcommand("predict-eval", "Top-K category prediction accuracy");
  predict->add_option("--products", predict_config.products_path, "Products file");
  predict->add_option("--judgments", predict_config.judgments_path, "Judgments file");
  predict->add_option("--index", predict_config.index_path, "Prototype index file");
  predict->add_option("--zero-shot-index", predict_config.zero_shot_index_path,
                      "Optional second index evaluated side by side");
  predict->add_option("--out", predict_config.output_dir, "Output directory");
  predict->add_option("--k", predict_config.k_sweep, "K values to sweep, e.g. --k 3 5");
  add_common_options(predict, predict_config);

  // --- search-eval -------------------------------------------------------
  cars::RunConfig search_config;
  auto* search = app.add_subcommand(
      "search-eval", "Run baseline vs category-boosted search and compare");
  search->add_option("--products", search_config.products_path, "Products file");
  search->add_option("--judgments", search_config.judgments_path, "Judgments file");
  search->add_option("--index", search_config.index_path, "Prototype index file");
  search->add_option("--out", search_config.output_dir, "Output directory");
  search->add_option("--modes", search_config.modes,
                     "CARS modes to run against the baseline: cars_boost cars_adaptive");
  search->add_option("--boost", search_config.search.category_boost,
                     "Category boost multiplier");
  search->add_option("--moderate-boost", search_config.search.moderate_boost,
                     "Boost between the confidence thresholds (adaptive mode)");
  search->add_option("--k-categories", search_config.search.k_categories,
                     "How many predicted categories receive the boost");
  search->add_option("--high-threshold", search_config.search.high_threshold,
                     "Confidence at or above this gets the full boost");
  search->add_option("--low-threshold", search_config.search.low_threshold,
                     "Confidence below this falls back to the baseline");
  search->add_option("--title-weight", search_config.search.title_weight,
                     "BM25 field weight on title");
  search->add_option("--depth", search_config.search.result_depth, "Result depth");
  search->add_option("--ndcg-k", search_config.ndcg_k, "nDCG cutoff");
  search->add_option("--gain-scheme",
                     [&search_config](const std::vector<std::string>& values) {
                       search_config.gain_scheme =
                           cars::gain_scheme_from_string(values.back());
                       return true;
                     },
                     "Relevance gains: binary | graded");
  search->add_flag("--oracle", search_config.oracle_predictions,
                   "Substitute gold categories for model predictions");
  search->add_option("--corrupt", search_config.corrupt_rate,
                     "Replace this fraction of predictions with a wrong category");
  add_common_options(search, search_config);

  // --- compare -----------------------------------------------------------
  cars::RunConfig compare_config;
  std::string run_a_path, run_b_path;
  auto* compare = app.add_subcommand("compare", "Re-evaluate two stored run files");
  compare->add_option("--run-a", run_a_path, "Run file A")->required();
  compare->add_option("--run-b", run_b_path, "Run file B")->required();
  compare->add_option("--judgments", compare_config.judgments_path, "Judgments file")
      ->required();
  compare->add_option("--out", compare_config.output_dir, "Output directory");
  compare->add_option("--ndcg-k", compare_config.ndcg_k, "nDCG cutoff");
  compare->add_option("--gain-scheme",
                      [&compare_config](const std::vector<std::string>& values) {
                        compare_config.gain_scheme =
                            cars::gain_scheme_from_string(values.back());
                        return true;
                      },
                      "Relevance gains: binary | graded");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }

  try {
    if (synth->parsed()) {
      auto out = cars::run_synth(spec, synth_seed, synth_out);
      std::cout << "wrote " << out.products_path << " and " << out.judgments_path
                << "\n";
    } else if (train->parsed()) {
      auto summary = cars::run_train(train_config);
      std::cout << "trained " << summary["categories"] << " prototypes ("
                << summary["cold_start_categories"] << " cold-start) -> "
                << train_config.index_path << "\n";
    } else if (predict->parsed()) {
      auto report = cars::run_predict_eval(predict_config);
      for (const auto& row : report["rows"]) {
        std::cout << row["index"].get<std::string>() << " top-" << row["k"]
                  << " accuracy: " << row["accuracy"] << "\n";
      }
    } else if (search->parsed()) {
      auto summary = cars::run_search_eval(search_config);
      for (const auto& entry : summary["comparisons"]) {
        std::cout << "baseline vs " << entry["mode"].get<std::string>() << ":";
        for (const auto& [key, value] : entry.items()) {
          if (key == "mode") continue;
          std::cout << "  " << key << " p=" << value["p_value"];
        }
        std::cout << "\n";
      }
    } else if (compare->parsed()) {
      auto report = cars::run_compare(compare_config, run_a_path, run_b_path);
      std::cout << "wrote comparison to " << compare_config.output_dir << "\n";
    }
  } catch (const cars::ParameterError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const cars::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const cars::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const cars::IntegrityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const cars::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
