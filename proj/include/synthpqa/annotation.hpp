#pragma once

// Hallucination audit: draw a community-balanced question sample, collect
// per-answer judgments over HTTP, and report incorrect-answer rates.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "synthpqa/corpus.hpp"

namespace synthpqa {

enum class Label { kCorrect, kHallucinated, kUnsure };

std::string_view to_string(Label l);
/// Throws ValidationError naming the closed set on anything else.
Label parse_label(std::string_view s);

struct SampleAnswer {
  std::string answer_id;
  std::string text;
  AnswerSource source = AnswerSource::kHuman;
  std::string model_name;
  std::optional<PromptType> prompt_type;
  std::string blinded_tag;  // "A", "B", ... in presentation order
};

struct SampleItem {
  std::string question_id;
  std::string community;
  std::string title;
  std::string body;
  std::vector<SampleAnswer> answers;  // seeded-shuffled presentation order
};

struct AnnotationSample {
  std::string sample_id;
  std::uint64_t seed = 0;
  std::vector<SampleItem> items;

  std::string to_json() const;
  static AnnotationSample from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static AnnotationSample load(const std::filesystem::path& path);

  const SampleAnswer* find_answer(const std::string& answer_id, const SampleItem** item = nullptr) const;
};

/// Selects `n` questions split equally across communities; the remainder goes
/// one each to communities in name order. A community with too few questions
/// gives up its shortfall to the next communities (name order, round-robin).
/// Every selected question carries its human and synthetic answers.
AnnotationSample draw_sample(const std::vector<Question>& questions,
                             const std::vector<Answer>& answers, std::size_t n,
                             std::uint64_t seed);

/// Per-community quota for `n` items over `community_sizes` (name-ordered).
std::map<std::string, std::size_t> community_quota(
    const std::map<std::string, std::size_t>& community_sizes, std::size_t n);

struct AnnotationRecord {
  std::string annotator;
  std::string question_id;
  std::string answer_id;
  std::string model_name;   // "human" for human-written answers
  std::string prompt_type;  // "none" for human-written answers
  Label label = Label::kUnsure;
  std::string note;
  Timestamp timestamp = 0;

  std::string to_json() const;
  static AnnotationRecord from_json(const std::string& line);
  bool operator==(const AnnotationRecord&) const = default;
};

/// Append-only JSONL label store; the latest record per (annotator,
/// answer_id) wins. Thread-safe.
class AnnotationStore {
 public:
  /// Creates the file if needed and replays it. Throws IoError if the path
  /// cannot be opened for appending.
  explicit AnnotationStore(std::filesystem::path path);

  void put(const AnnotationRecord& rec);
  std::vector<AnnotationRecord> records() const;
  bool labeled(const std::string& annotator, const std::string& answer_id) const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::pair<std::string, std::string>, AnnotationRecord> latest_;
};

struct RateCell {
  std::size_t correct = 0;
  std::size_t hallucinated = 0;
  std::size_t unsure = 0;

  std::size_t denominator() const { return correct + hallucinated; }
  std::size_t total() const { return correct + hallucinated + unsure; }
  /// 100 * hallucinated / (hallucinated + correct); nullopt when undefined.
  std::optional<double> rate() const;
  void add(Label l);
};

struct HallucinationReport {
  std::map<std::string, RateCell> by_model;
  std::map<std::pair<std::string, std::string>, RateCell> by_model_prompt;
  std::map<std::string, RateCell> by_community;
  std::map<std::pair<std::string, std::string>, RateCell> by_model_community;
  std::size_t records = 0;

  std::string to_json() const;
  /// Per-model and per-(model, prompt) tables; rates as "41.0%".
  std::string to_markdown() const;
};

HallucinationReport hallucination_report(const std::vector<AnnotationRecord>& records,
                                         const AnnotationSample& sample);

struct ServeOptions {
  bool reveal_models = false;      // include model_name/prompt_type in item payloads
  std::filesystem::path ui_dir;    // static assets for GET /; built-in page when empty
};

/// HTTP + JSON labeling service:
///   GET  /api/sample/next?annotator=NAME
///   POST /api/labels
///   GET  /api/report
///   GET  /
class AnnotationServer {
 public:
  AnnotationServer(AnnotationSample sample, std::filesystem::path store_path,
                   ServeOptions opts = {});
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds; port 0 picks a free port. Returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves on a background thread after bind().
  void start();
  /// Serves on the calling thread until stop().
  void listen();
  void stop();

  const AnnotationSample& sample() const { return sample_; }
  AnnotationStore& store() { return store_; }

 private:
  struct Impl;
  AnnotationSample sample_;
  AnnotationStore store_;
  ServeOptions opts_;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
};

/// "host:port" -> (host, port). Throws ValidationError on malformed input.
std::pair<std::string, int> parse_bind_address(const std::string& bind);

}  // namespace synthpqa
