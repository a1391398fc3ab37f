#pragma once

// Second stage of the two-stage ranker: re-score the first stage's top
// candidates, then blend the two score lists with a convex combination whose
// weight is tuned on validation queries.

#include <map>
#include <string>
#include <vector>

#include "synthpqa/corpus.hpp"
#include "synthpqa/encoder.hpp"
#include "synthpqa/metrics.hpp"
#include "synthpqa/run.hpp"

namespace synthpqa {

using TextMap = std::map<std::string, std::string>;  // id -> text

/// Re-scores the first `depth` documents of every query with `scorer`.
/// Throws ValidationError naming any query or document without text.
RunList rerank(const RunList& first_stage, const Scorer& scorer, const TextMap& queries,
               const TextMap& docs, std::size_t depth = 100, std::size_t threads = 1);

struct FusionConfig {
  double lambda = 0.5;     // weight of the first-stage (BM25) score
  std::size_t depth = 100;
  bool normalize = true;   // per-query min-max; false = raw scores
};

/// Per query: fused = lambda * norm(bm25) + (1 - lambda) * norm(neural).
/// Min-max maps a constant list to all 1.0. Both runs must hold the same
/// queries with identical candidate sets.
RunList fuse(const RunList& bm25_run, const RunList& neural_run, double lambda,
             bool normalize = true);

/// {0.0, 0.1, ..., 1.0}
std::vector<double> default_lambda_grid();

struct LambdaSearch {
  double best_lambda = 0.0;
  double best_value = 0.0;
  std::vector<std::pair<double, double>> table;  // (lambda, objective), grid order
};

/// Grid search of lambda maximizing mean `objective` on the given runs;
/// ties go to the larger lambda.
LambdaSearch tune_lambda(const RunList& bm25_val, const RunList& neural_val, const Qrels& qrels,
                         const std::vector<double>& grid = default_lambda_grid(),
                         const MetricSpec& objective = MetricSpec{MetricSpec::Kind::kNdcg, 10},
                         bool normalize = true);

/// TSV "lambda<TAB>objective" with one row per grid point.
std::string format_lambda_table(const LambdaSearch& search, const MetricSpec& objective);

}  // namespace synthpqa
