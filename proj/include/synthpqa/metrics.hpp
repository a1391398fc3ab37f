#pragma once

// Rank-quality metrics over TREC-style runs and qrels, and the paired
// significance test used to mark improvements over a baseline.
//
//   P@1      1 if the top document is relevant
//   NDCG@k   DCG@k / IDCG@k, DCG@k = sum_{i<=k} rel_i / log2(i + 1)
//   AP@k     sum_{i<=k} P@i * [rel_i >= 1] / R, R = all relevant for the query

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "synthpqa/corpus.hpp"
#include "synthpqa/run.hpp"

namespace synthpqa {

using Judgments = std::map<std::string, int>;  // doc id -> grade

double precision_at_1(const RankedList& run, const Judgments& judgments);
double ndcg_at_k(const RankedList& run, const Judgments& judgments, std::size_t k);
double map_at_k(const RankedList& run, const Judgments& judgments, std::size_t k = 100);

struct MetricSpec {
  enum class Kind { kPrecision, kNdcg, kMap };
  Kind kind = Kind::kNdcg;
  std::size_t k = 10;

  /// "p@1", "ndcg@10", "map@100" (case-insensitive). Precision supports k = 1 only.
  static MetricSpec parse(std::string_view s);
  /// Canonical lowercase id, e.g. "ndcg@10".
  std::string id() const;
  /// Column label, e.g. "NDCG@10".
  std::string label() const;
  double evaluate(const RankedList& run, const Judgments& judgments) const;
  bool operator==(const MetricSpec&) const = default;
};

/// P@1, NDCG@3, NDCG@10, MAP@100.
const std::vector<MetricSpec>& standard_metrics();

using PerQueryScores = std::map<std::string, double>;

/// Per-query values over every qrels query with at least one relevant
/// document; such queries absent from the run score 0. Queries without a
/// relevant judgment are skipped and listed in `excluded` when given.
PerQueryScores evaluate(const RunList& run, const Qrels& qrels, const MetricSpec& metric,
                        std::vector<std::string>* excluded = nullptr);

double mean(const PerQueryScores& scores);

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double p_adjusted = 1.0;
  bool significant = false;
  // Zero variance with a nonzero mean difference: t is infinite and the
  // result is significant by convention.
  bool degenerate = false;
  std::size_t n = 0;
  double mean_difference = 0.0;
};

/// Two-sided paired Student's t-test on a - b with Bonferroni correction over
/// `num_comparisons` tests. Throws ValidationError when the query sets differ
/// or fewer than two queries are paired.
TTestResult paired_ttest_bonferroni(const PerQueryScores& a, const PerQueryScores& b,
                                    std::size_t num_comparisons, double alpha = 0.01);

/// One row of a results table.
struct ReportRow {
  std::string name;
  std::vector<double> means;               // parallel to MetricReport::metrics
  std::vector<bool> significant;           // vs baseline; all false for the baseline row
  std::vector<TTestResult> tests;          // empty for the baseline row
  std::optional<double> lambda;
};

struct MetricReport {
  std::vector<MetricSpec> metrics;
  std::vector<ReportRow> rows;  // rows[0] is the baseline
  std::map<std::string, std::map<std::string, PerQueryScores>> per_query;  // run -> metric id -> scores
  std::size_t num_comparisons = 0;
  double alpha = 0.01;
  std::vector<std::string> excluded_queries;

  std::string to_markdown() const;
  std::string to_tsv() const;
};

struct NamedRun {
  std::string name;
  RunList run;
  std::optional<double> lambda;
};

/// Evaluates `baseline` and every entry of `systems`, testing each system
/// against the baseline per metric; m = systems.size(). A cell is starred
/// when the corrected test is significant and the system mean is higher.
MetricReport build_report(const NamedRun& baseline, const std::vector<NamedRun>& systems,
                          const Qrels& qrels, const std::vector<MetricSpec>& metrics,
                          double alpha = 0.01);

}  // namespace synthpqa
