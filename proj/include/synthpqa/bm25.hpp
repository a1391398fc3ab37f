#pragma once

// First-stage lexical retrieval: inverted index and Okapi BM25 with the
// search-engine variant of the formula
//
//   score(q, d) = sum over unique t in q of
//                 idf(t) * tf / (tf + k1 * (1 - b + b * |d| / avgdl))
//   idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "synthpqa/run.hpp"
#include "synthpqa/text.hpp"

namespace synthpqa {

struct Bm25Params {
  double k1 = 1.75;
  double b = 1.0;

  /// Throws ValidationError unless k1 > 0 and 0 <= b <= 1.
  void validate() const;
};

struct PostingList {
  std::vector<std::uint32_t> docs;  // ascending ordinals
  std::vector<std::uint32_t> tfs;   // parallel to docs
};

class InvertedIndex {
 public:
  using Document = std::pair<std::string, std::string>;  // (external id, text)

  InvertedIndex() = default;

  /// Throws ValidationError on a duplicate id.
  static InvertedIndex build(const std::vector<Document>& docs, const AnalyzerConfig& cfg = {});

  std::size_t num_docs() const { return doc_ids_.size(); }
  double avgdl() const { return avgdl_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const std::map<std::string, PostingList>& postings() const { return postings_; }
  const AnalyzerConfig& analyzer() const { return analyzer_; }

  /// nullptr when the term is not indexed.
  const PostingList* find(const std::string& term) const;
  std::uint32_t df(const std::string& term) const;
  std::uint32_t tf(const std::string& term, std::uint32_t ordinal) const;
  double idf(const std::string& term) const;

  /// Formula evaluation for one document. Duplicate query terms count once;
  /// unindexed terms contribute 0. Throws std::out_of_range on a bad ordinal.
  double score(const Bm25Params& params, const std::vector<std::string>& query_terms,
               std::uint32_t ordinal) const;

  /// Top-k documents with positive score, descending, ties by ascending id.
  RankedList search(const Bm25Params& params, const std::string& query, std::size_t k) const;
  RankedList search_terms(const Bm25Params& params, const std::vector<std::string>& query_terms,
                          std::size_t k) const;

  /// Versioned little-endian binary encoding; identical input gives
  /// identical bytes.
  std::string serialize() const;
  static InvertedIndex deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

 private:
  void finalize();

  AnalyzerConfig analyzer_;
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  std::map<std::string, PostingList> postings_;
  double avgdl_ = 0.0;
};

}  // namespace synthpqa
