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
#include <iomanip>
#include <map>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cars/corpus.hpp"
#include "cars/engine.hpp"
#include "cars/error.hpp"

namespace cars {

// ---------------------------------------------------------------------------
// Relevance gains
// ---------------------------------------------------------------------------

enum class GainScheme {
  binary,  // relevant labels -> 1, everything else -> 0
  graded,  // E -> 3, S -> 2, C -> 1, I -> 0
};

inline const char* gain_scheme_to_string(GainScheme scheme) {
  return scheme == GainScheme::binary ? "binary" : "graded";
}

inline GainScheme gain_scheme_from_string(const std::string& s) {
  if (s == "binary") return GainScheme::binary;
  if (s == "graded") return GainScheme::graded;
  throw ParameterError("unknown gain scheme: " + s);
}

/// Per (query, product) gain values. Only positive gains are stored; lookups
/// for anything else return 0.
class RelevanceGains {
 public:
  static RelevanceGains from_judgments(const JudgmentSet& judgments,
                                       GainScheme scheme,
                                       const LabelSet& relevant_labels) {
    RelevanceGains gains;
    gains.scheme_ = scheme;
    for (const auto& judgment : judgments.judgments) {
      double g = 0.0;
      if (scheme == GainScheme::binary) {
        g = relevant_labels.contains(judgment.label) ? 1.0 : 0.0;
      } else {
        switch (judgment.label) {
          case Label::Exact: g = 3.0; break;
          case Label::Substitute: g = 2.0; break;
          case Label::Complement: g = 1.0; break;
          case Label::Irrelevant: g = 0.0; break;
        }
      }
      if (g > 0.0) gains.by_query_[judgment.query_id][judgment.product_id] = g;
    }
    return gains;
  }

  GainScheme scheme() const { return scheme_; }

  double gain(const std::string& query_id, const std::string& product_id) const {
    auto q = by_query_.find(query_id);
    if (q == by_query_.end()) return 0.0;
    auto p = q->second.find(product_id);
    return p == q->second.end() ? 0.0 : p->second;
  }

  /// All positive gains judged for a query (the IDCG pool), or nullptr.
  const std::map<std::string, double>* query_gains(const std::string& query_id) const {
    auto q = by_query_.find(query_id);
    return q == by_query_.end() ? nullptr : &q->second;
  }

  void set(const std::string& query_id, const std::string& product_id, double g) {
    if (g > 0.0) by_query_[query_id][product_id] = g;
  }

 private:
  GainScheme scheme_ = GainScheme::binary;
  std::map<std::string, std::map<std::string, double>> by_query_;
};

// ---------------------------------------------------------------------------
// Per-query metrics
// ---------------------------------------------------------------------------

/// DCG@k = sum_{i=1..k} gain(doc_i) / log2(i + 1); IDCG@k from the query's
/// judged gains sorted descending (over all judged products, retrieved or
/// not); 0 when the query has no positive gains.
inline double ndcg_at_k(const RankedResult& ranking, const RelevanceGains& gains,
                        int k) {
  if (k < 1) throw ParameterError("ndcg cutoff k must be >= 1");
  const auto* judged = gains.query_gains(ranking.query_id);
  if (judged == nullptr || judged->empty()) return 0.0;

  std::vector<double> ideal;
  ideal.reserve(judged->size());
  for (const auto& [_, g] : *judged) ideal.push_back(g);
  std::sort(ideal.begin(), ideal.end(), std::greater<>());

  double idcg = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(ideal.size(), static_cast<std::size_t>(k)); ++i) {
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  if (idcg == 0.0) return 0.0;

  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min<std::size_t>(ranking.hits.size(), static_cast<std::size_t>(k)); ++i) {
    dcg += gains.gain(ranking.query_id, ranking.hits[i].product_id) /
           std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

/// 1 / rank of the first retrieved document with positive gain; 0 if none.
inline double reciprocal_rank(const RankedResult& ranking,
                              const RelevanceGains& gains) {
  for (std::size_t i = 0; i < ranking.hits.size(); ++i) {
    if (gains.gain(ranking.query_id, ranking.hits[i].product_id) > 0.0) {
      return 1.0 / (static_cast<double>(i) + 1.0);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct Aggregate {
  double mean = 0.0;
  double median = 0.0;
};

inline Aggregate aggregate(std::vector<double> scores) {
  if (scores.empty()) throw DataError("cannot aggregate an empty score list");
  Aggregate out;
  out.mean = std::accumulate(scores.begin(), scores.end(), 0.0) /
             static_cast<double>(scores.size());
  std::sort(scores.begin(), scores.end());
  auto n = scores.size();
  out.median = (n % 2 == 1) ? scores[n / 2]
                            : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
  return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test
// ---------------------------------------------------------------------------

enum class Direction { a, b, none };

inline const char* direction_to_string(Direction d) {
  switch (d) {
    case Direction::a: return "a";
    case Direction::b: return "b";
    case Direction::none: return "none";
  }
  return "none";
}

struct WilcoxonResult {
  double statistic = 0.0;       // min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n_effective = 0;  // pairs with nonzero difference
  double p_value = 1.0;         // two-sided
  Direction direction = Direction::none;
  bool degenerate = false;      // all pairs tied; no signal
  bool exact = false;           // exact enumeration branch used
};

namespace detail {

/// Average ranks of |d| ascending, plus tie-group sizes.
inline std::pair<std::vector<double>, std::vector<std::size_t>> average_ranks(
    const std::vector<double>& abs_values) {
  const auto n = abs_values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return abs_values[x] < abs_values[y];
  });
  std::vector<double> ranks(n, 0.0);
  std::vector<std::size_t> tie_groups;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j < n && abs_values[order[j]] == abs_values[order[i]]) ++j;
    double avg = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
    tie_groups.push_back(j - i);
    i = j;
  }
  return {std::move(ranks), std::move(tie_groups)};
}

/// Exact two-sided p-value by dynamic programming over the distribution of
/// W+ across all 2^n sign assignments, conditioned on the observed ranks.
/// Ranks are doubled so average ranks become integers; counts stay integral
/// in doubles (n <= 25 keeps them far below 2^53), so the result equals full
/// enumeration bit for bit.
inline double exact_two_sided_p(const std::vector<double>& ranks, double w_plus) {
  const auto n = ranks.size();
  std::vector<std::size_t> scaled(n);
  std::size_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = static_cast<std::size_t>(std::llround(2.0 * ranks[i]));
    total += scaled[i];
  }
  std::vector<double> count(total + 1, 0.0);
  count[0] = 1.0;
  for (auto r : scaled) {
    for (std::size_t s = total; s >= r; --s) count[s] += count[s - r];
  }
  const auto observed = static_cast<std::size_t>(std::llround(2.0 * w_plus));
  double below = 0.0, above = 0.0;
  for (std::size_t s = 0; s <= total; ++s) {
    if (s <= observed) below += count[s];
    if (s >= observed) above += count[s];
  }
  const double assignments = std::ldexp(1.0, static_cast<int>(n));
  double p = 2.0 * std::min(below, above) / assignments;
  return std::min(1.0, p);
}

/// Normal approximation with tie correction and a 0.5 continuity correction,
/// applied to the min statistic: z = (W - mu + 0.5) / sigma,
/// sigma^2 = n(n+1)(2n+1)/24 - sum(t^3 - t)/48 over tie groups.
inline double approx_two_sided_p(std::size_t n, double statistic,
                                 const std::vector<std::size_t>& tie_groups) {
  const double dn = static_cast<double>(n);
  const double mean = dn * (dn + 1.0) / 4.0;
  double variance = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
  for (auto t : tie_groups) {
    const double dt = static_cast<double>(t);
    variance -= (dt * dt * dt - dt) / 48.0;
  }
  if (variance <= 0.0) return 1.0;
  double correction = statistic == mean ? 0.0 : (statistic < mean ? -0.5 : 0.5);
  const double z = (statistic - mean - correction) / std::sqrt(variance);
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

}  // namespace detail

inline constexpr std::size_t kWilcoxonExactThreshold = 25;

/// Paired two-sided Wilcoxon signed-rank test on differences d = a - b.
/// Zero differences are discarded; |d| is ranked with average ranks for
/// ties. Exact enumeration for effective n <= 25, normal approximation with
/// tie and continuity corrections beyond. All pairs tied yields a flagged
/// degenerate result with p = 1.
inline WilcoxonResult wilcoxon_signed_rank(
    std::span<const std::pair<double, double>> paired) {
  if (paired.empty()) throw DataError("wilcoxon test needs at least one pair");

  std::vector<double> diffs;
  diffs.reserve(paired.size());
  for (const auto& [a, b] : paired) {
    const double d = a - b;
    if (d != 0.0) diffs.push_back(d);
  }

  WilcoxonResult result;
  result.n_effective = diffs.size();
  if (diffs.empty()) {
    result.degenerate = true;
    result.p_value = 1.0;
    return result;
  }

  std::vector<double> abs_diffs(diffs.size());
  for (std::size_t i = 0; i < diffs.size(); ++i) abs_diffs[i] = std::abs(diffs[i]);
  auto [ranks, tie_groups] = detail::average_ranks(abs_diffs);

  for (std::size_t i = 0; i < diffs.size(); ++i) {
    (diffs[i] > 0.0 ? result.w_plus : result.w_minus) += ranks[i];
  }
  result.statistic = std::min(result.w_plus, result.w_minus);
  result.direction = result.w_plus > result.w_minus
                         ? Direction::a
                         : (result.w_minus > result.w_plus ? Direction::b
                                                           : Direction::none);

  if (diffs.size() <= kWilcoxonExactThreshold) {
    result.exact = true;
    result.p_value = detail::exact_two_sided_p(ranks, result.w_plus);
  } else {
    result.p_value =
        detail::approx_two_sided_p(diffs.size(), result.statistic, tie_groups);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Run comparison
// ---------------------------------------------------------------------------

struct MetricComparison {
  std::string metric;
  Aggregate a;
  Aggregate b;
  WilcoxonResult test;
  std::size_t wins_a = 0;  // queries where run A scored strictly higher
  std::size_t wins_b = 0;
  std::size_t ties = 0;
};

struct PerQueryMetrics {
  std::string query_id;
  double ndcg_a = 0.0, ndcg_b = 0.0;
  double rr_a = 0.0, rr_b = 0.0;
};

struct ComparisonReport {
  std::string run_a_name;
  std::string run_b_name;
  int ndcg_k = 10;
  GainScheme scheme = GainScheme::binary;
  std::size_t paired_queries = 0;
  std::size_t excluded_queries = 0;  // present in only one run
  std::vector<MetricComparison> metrics;
  std::vector<PerQueryMetrics> per_query;
};

/// Pairs the two runs by query_id (mismatches excluded and counted), computes
/// nDCG@k and Reciprocal Rank per side, aggregates, and runs the Wilcoxon
/// test per metric.
inline ComparisonReport compare_runs(const std::vector<RankedResult>& run_a,
                                     const std::vector<RankedResult>& run_b,
                                     const RelevanceGains& gains, int ndcg_k,
                                     std::string run_a_name = "a",
                                     std::string run_b_name = "b") {
  std::map<std::string, const RankedResult*> b_by_id;
  for (const auto& result : run_b) b_by_id.emplace(result.query_id, &result);

  ComparisonReport report;
  report.run_a_name = std::move(run_a_name);
  report.run_b_name = std::move(run_b_name);
  report.ndcg_k = ndcg_k;
  report.scheme = gains.scheme();

  std::size_t matched_in_b = 0;
  for (const auto& result_a : run_a) {
    auto it = b_by_id.find(result_a.query_id);
    if (it == b_by_id.end()) {
      ++report.excluded_queries;
      continue;
    }
    ++matched_in_b;
    PerQueryMetrics row;
    row.query_id = result_a.query_id;
    row.ndcg_a = ndcg_at_k(result_a, gains, ndcg_k);
    row.ndcg_b = ndcg_at_k(*it->second, gains, ndcg_k);
    row.rr_a = reciprocal_rank(result_a, gains);
    row.rr_b = reciprocal_rank(*it->second, gains);
    report.per_query.push_back(std::move(row));
  }
  report.excluded_queries += run_b.size() - matched_in_b;
  report.paired_queries = report.per_query.size();
  if (report.per_query.empty()) {
    throw DataError("runs share no query ids; nothing to compare");
  }

  auto build = [&](const std::string& name, auto select_a, auto select_b) {
    MetricComparison cmp;
    cmp.metric = name;
    std::vector<double> a_scores, b_scores;
    std::vector<std::pair<double, double>> pairs;
    for (const auto& row : report.per_query) {
      const double a = select_a(row);
      const double b = select_b(row);
      a_scores.push_back(a);
      b_scores.push_back(b);
      pairs.emplace_back(a, b);
      if (a > b) ++cmp.wins_a;
      else if (b > a) ++cmp.wins_b;
      else ++cmp.ties;
    }
    cmp.a = aggregate(a_scores);
    cmp.b = aggregate(b_scores);
    cmp.test = wilcoxon_signed_rank(pairs);
    return cmp;
  };

  report.metrics.push_back(build(
      "nDCG@" + std::to_string(ndcg_k),
      [](const PerQueryMetrics& r) { return r.ndcg_a; },
      [](const PerQueryMetrics& r) { return r.ndcg_b; }));
  report.metrics.push_back(build(
      "Reciprocal Rank",
      [](const PerQueryMetrics& r) { return r.rr_a; },
      [](const PerQueryMetrics& r) { return r.rr_b; }));
  return report;
}

// ---------------------------------------------------------------------------
// Report rendering
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json report_to_json(const ComparisonReport& report) {
  nlohmann::ordered_json j;
  j["run_a"] = report.run_a_name;
  j["run_b"] = report.run_b_name;
  j["ndcg_k"] = report.ndcg_k;
  j["gain_scheme"] = gain_scheme_to_string(report.scheme);
  j["paired_queries"] = report.paired_queries;
  j["excluded_queries"] = report.excluded_queries;
  j["metrics"] = nlohmann::ordered_json::array();
  for (const auto& m : report.metrics) {
    nlohmann::ordered_json mj;
    mj["metric"] = m.metric;
    mj["mean_a"] = m.a.mean;
    mj["mean_b"] = m.b.mean;
    mj["median_a"] = m.a.median;
    mj["median_b"] = m.b.median;
    mj["wilcoxon"] = {{"statistic", m.test.statistic},
                      {"w_plus", m.test.w_plus},
                      {"w_minus", m.test.w_minus},
                      {"n_effective", m.test.n_effective},
                      {"p_value", m.test.p_value},
                      {"direction", direction_to_string(m.test.direction)},
                      {"exact", m.test.exact},
                      {"degenerate", m.test.degenerate}};
    mj["wins_a"] = m.wins_a;
    mj["wins_b"] = m.wins_b;
    mj["ties"] = m.ties;
    j["metrics"].push_back(std::move(mj));
  }
  j["per_query"] = nlohmann::ordered_json::array();
  for (const auto& row : report.per_query) {
    j["per_query"].push_back({{"query_id", row.query_id},
                              {"ndcg_a", row.ndcg_a},
                              {"ndcg_b", row.ndcg_b},
                              {"rr_a", row.rr_a},
                              {"rr_b", row.rr_b}});
  }
  return j;
}

inline std::string report_to_text(const ComparisonReport& report) {
  std::ostringstream out;
  out << "Search relevance comparison: " << report.run_a_name << " (A) vs "
      << report.run_b_name << " (B)\n";
  out << "gain scheme: " << gain_scheme_to_string(report.scheme)
      << "; paired queries: " << report.paired_queries
      << "; excluded: " << report.excluded_queries << "\n\n";

  out << std::left << std::setw(18) << "Metric" << std::setw(10) << "Statistic"
      << std::right << std::setw(12) << report.run_a_name << std::setw(12)
      << report.run_b_name << "\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& m : report.metrics) {
    out << std::left << std::setw(18) << m.metric << std::setw(10) << "Mean"
        << std::right << std::setw(12) << m.a.mean << std::setw(12) << m.b.mean
        << "\n";
    out << std::left << std::setw(18) << "" << std::setw(10) << "Median"
        << std::right << std::setw(12) << m.a.median << std::setw(12)
        << m.b.median << "\n";
  }
  out << "\nWilcoxon signed-rank (two-sided):\n";
  for (const auto& m : report.metrics) {
    out << "  " << std::left << std::setw(18) << m.metric;
    out << "W=" << std::setprecision(1) << m.test.statistic
        << "  n_eff=" << m.test.n_effective << "  p=" << std::setprecision(6)
        << m.test.p_value << "  direction=" << direction_to_string(m.test.direction)
        << (m.test.degenerate ? "  [degenerate: all pairs tied]" : "")
        << "\n";
    out << std::setprecision(4);
  }
  out << "\nWin/loss/tie (A/B/=):";
  for (const auto& m : report.metrics) {
    out << "  " << m.metric << " " << m.wins_a << "/" << m.wins_b << "/"
        << m.ties << ";";
  }
  out << "\n";
  return out.str();
}

}  // namespace cars
