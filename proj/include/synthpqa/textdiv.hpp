#pragma once

// Similarity between answer sets produced under different prompts: corpus
// BLEU (word 1-4-grams), chrF (character 1-6-grams, beta = 2) and the share of
// question words repeated in an answer.

#include <optional>
#include <string>
#include <vector>

#include "synthpqa/corpus.hpp"

namespace synthpqa {

struct BleuOptions {
  std::size_t max_order = 4;
  // Add-one smoothing of orders >= 2; off gives the unsmoothed metric.
  bool smooth = false;
};

/// Corpus BLEU in [0, 1]. Hypothesis i is scored against reference i; text is
/// split on whitespace, case-sensitive. Orders whose corpus-wide hypothesis
/// n-gram count is zero are left out of the geometric mean.
double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::string>& references, const BleuOptions& opts = {});

struct ChrfOptions {
  std::size_t char_order = 6;
  double beta = 2.0;
};

/// Corpus chrF in [0, 100] over code points with whitespace removed.
/// Precision and recall are averaged over the orders with non-zero hypothesis
/// and reference counts, then combined into the F-beta score.
double chrf(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
            const ChrfOptions& opts = {});

/// 100 * |unique(query) ∩ unique(answer)| / |unique(query)| over analyzer
/// terms. An empty query yields 0 and sets *empty_query.
double lexical_overlap(const std::string& query_body, const std::string& answer,
                       bool* empty_query = nullptr);

struct DiversityCell {
  PromptType row;  // hypothesis side
  PromptType col;  // reference side
  double bleu = 0.0;
  double chrf = 0.0;
  std::size_t pairs = 0;
};

struct DiversityBlock {
  std::string model;
  std::vector<DiversityCell> cells;  // basic/contextual, basic/personalized, contextual/personalized
};

struct OverlapRow {
  std::string model;                     // "human" for human-written answers
  std::optional<PromptType> prompt_type;
  double mean_overlap = 0.0;
  std::size_t answers = 0;
  std::size_t empty_queries = 0;
};

struct DiversityReport {
  std::vector<DiversityBlock> blocks;
  std::vector<OverlapRow> overlap;

  std::string to_markdown() const;
  std::string to_tsv() const;
};

/// Builds the per-model pairwise table from generated answers and the
/// overlap means (including a "human" row when human answers are present).
/// Every prompt type of a model must cover the same questions.
DiversityReport diversity_report(const std::vector<Answer>& answers,
                                 const std::vector<Question>& questions,
                                 const BleuOptions& bleu = {}, const ChrfOptions& chrf_opts = {});

/// Overlap rows only.
std::vector<OverlapRow> overlap_report(const std::vector<Answer>& answers,
                                       const std::vector<Question>& questions);

}  // namespace synthpqa
