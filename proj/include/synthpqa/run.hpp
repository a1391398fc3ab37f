#pragma once

// Ranked result lists shared by retrieval, re-ranking, fusion and evaluation,
// with TREC run-file I/O (`qid Q0 docid rank score tag`).

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace synthpqa {

struct ScoredDoc {
  std::string doc_id;
  double score = 0.0;
  bool operator==(const ScoredDoc&) const = default;
};

using RankedList = std::vector<ScoredDoc>;

/// query id -> ranked list (descending score, ties ascending doc id).
using RunList = std::map<std::string, RankedList>;

/// Orders a list by descending score, ties by ascending doc id.
void sort_ranked(RankedList& list);

/// True when the list is in canonical order and has no duplicate doc ids.
bool is_canonical(const RankedList& list);

/// Shortest decimal text that parses back to the identical double.
std::string format_score(double score);

void write_trec_run(const std::filesystem::path& path, const RunList& run, const std::string& tag);
std::string format_trec_run(const RunList& run, const std::string& tag);

/// Reads a TREC run. Lists are re-sorted canonically; a doc id repeated
/// within one query is a ParseError.
RunList read_trec_run(const std::filesystem::path& path);

}  // namespace synthpqa
