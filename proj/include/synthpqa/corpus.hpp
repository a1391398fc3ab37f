#pragma once

// Question/answer/user corpus in SE-PQA-style newline-delimited JSON, plus
// TREC qrels. Containers are plain values; nothing here holds shared state.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace synthpqa {

using Timestamp = std::int64_t;  // Unix seconds, UTC

enum class PromptType { kBasic, kPersonalized, kContextual };

std::string_view to_string(PromptType t);
/// Accepts "basic", "personalized", "contextual"; throws ValidationError otherwise.
PromptType parse_prompt_type(std::string_view s);
inline constexpr PromptType kAllPromptTypes[] = {PromptType::kBasic, PromptType::kPersonalized,
                                                 PromptType::kContextual};

enum class AnswerSource { kHuman, kGenerated };

struct Question {
  std::string id;
  std::string title;
  std::string body;
  std::vector<std::string> tags;
  std::string user_id;
  std::string community;
  Timestamp created_at = 0;

  /// Retrieval / encoder query text: title and body joined by one space.
  std::string query_text() const { return title + " " + body; }
  bool operator==(const Question&) const = default;
};

struct Answer {
  std::string id;
  std::string question_id;
  std::string text;
  AnswerSource source = AnswerSource::kHuman;
  std::string model_name;                  // empty for human answers
  std::optional<PromptType> prompt_type;   // nullopt ("none") for human answers
  Timestamp created_at = 0;

  bool operator==(const Answer&) const = default;
};

/// Relevance judgments: question id -> (answer id -> grade). Grade >= 1 is relevant.
class Qrels {
 public:
  void add(const std::string& question_id, const std::string& answer_id, int relevance);
  /// Grade for the pair, 0 when unjudged.
  int relevance(const std::string& question_id, const std::string& answer_id) const;
  /// Judgments for one question (empty map when unknown).
  const std::map<std::string, int>& judgments(const std::string& question_id) const;
  /// Number of answers with grade >= 1.
  std::size_t relevant_count(const std::string& question_id) const;

  const std::map<std::string, std::map<std::string, int>>& all() const { return map_; }
  bool empty() const { return map_.empty(); }
  std::size_t size() const;  // total judgments

  bool operator==(const Qrels&) const = default;

 private:
  std::map<std::string, std::map<std::string, int>> map_;
};

struct UserProfile {
  std::string user_id;
  std::vector<std::string> top_tags;
  Timestamp as_of = 0;
  bool operator==(const UserProfile&) const = default;
};

struct Corpus {
  std::vector<Question> questions;
  std::vector<Answer> answers;
  Qrels qrels;
};

// Line-oriented readers. Malformed JSON or a record that breaks a type
// invariant raises ParseError/ValidationError naming the 1-based line.
std::vector<Question> read_questions(const std::filesystem::path& path);
std::vector<Answer> read_answers(const std::filesystem::path& path);
Qrels read_qrels(const std::filesystem::path& path);

void write_questions(const std::filesystem::path& path, const std::vector<Question>& qs);
void write_answers(const std::filesystem::path& path, const std::vector<Answer>& as);
void write_qrels(const std::filesystem::path& path, const Qrels& qrels);

/// Reads all three files and checks answer -> question references. Qrels
/// references are only checked when `validate_qrels` is set.
Corpus parse_corpus(const std::filesystem::path& questions_path,
                    const std::filesystem::path& answers_path,
                    const std::filesystem::path& qrels_path, bool validate_qrels = false);

/// Keeps min(cap, |c|) questions of every community c, chosen uniformly
/// without replacement from `seed`. Output preserves input order.
std::vector<Question> sample_per_community(const std::vector<Question>& questions,
                                           std::size_t cap, std::uint64_t seed);

/// Top-k tags by frequency over `user_id`'s questions created strictly before
/// `as_of`; ties ascending lexicographic.
UserProfile build_user_profile(const std::string& user_id, const std::vector<Question>& questions,
                               Timestamp as_of, std::size_t k = 5);

}  // namespace synthpqa
