#pragma once

// Synthetic answer generation against an OpenAI-compatible chat-completions
// endpoint, with a content-addressed append-only cache, retry with
// exponential backoff, and a bound on outstanding requests.

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "synthpqa/corpus.hpp"
#include "synthpqa/error.hpp"
#include "synthpqa/prompt.hpp"

namespace synthpqa {

struct GenParams {
  std::string model_name;
  double temperature = 1.0;
  int max_tokens = 500;
  std::string endpoint_url = "https://api.openai.com/v1";
  std::string api_key_env = "OPENAI_API_KEY";

  void validate() const;
};

struct TokenUsage {
  long long prompt_tokens = 0;
  long long completion_tokens = 0;
  long long total_tokens = 0;
  bool operator==(const TokenUsage&) const = default;
};

struct GenRecord {
  std::string cache_key;
  std::string question_id;
  PromptType prompt_type = PromptType::kBasic;
  std::string model_name;
  std::string prompt_text;
  std::string answer_text;
  Timestamp created_at = 0;
  std::optional<TokenUsage> usage;
  bool operator==(const GenRecord&) const = default;
};

/// SHA-256 (hex) over model, prompt type, question id and prompt text, joined
/// by the ASCII unit separator (0x1F) so field boundaries are unambiguous.
std::string generation_cache_key(const std::string& model_name, PromptType type,
                                 const std::string& question_id, const std::string& prompt_text);

/// Answer record for a generated completion; id is
/// "<question_id>::<model>::<prompt_type>".
Answer to_answer(const GenRecord& rec);

std::string gen_record_to_json(const GenRecord& rec);
GenRecord gen_record_from_json(const std::string& line);

/// Failure of one generation item. `code()` is a stable machine tag:
/// "empty_generation", "http_error", "retries_exhausted".
class GenerationError : public Error {
 public:
  GenerationError(std::string code, const std::string& what)
      : Error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

struct ChatRequest {
  std::string model;
  std::string user_message;
  double temperature = 1.0;
  int max_tokens = 500;
};

/// Request body sent to `<endpoint>/chat/completions`.
std::string chat_request_json(const ChatRequest& req);

struct ChatResponse {
  int status = 0;  // HTTP status; 0 = no response (connection failure)
  std::string text;
  std::optional<TokenUsage> usage;
  std::string error;
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

/// OpenAI-compatible HTTP(S) transport. The bearer token is read from the
/// environment variable named in GenParams::api_key_env at call time.
class HttpChatTransport : public ChatTransport {
 public:
  HttpChatTransport(std::string endpoint_url, std::string api_key_env);
  ChatResponse complete(const ChatRequest& req) override;

 private:
  std::string endpoint_url_;
  std::string api_key_env_;
};

/// Offline deterministic stand-in: echoes the question terms found after
/// "Title:" in the prompt. Never touches the network.
class MockChatTransport : public ChatTransport {
 public:
  ChatResponse complete(const ChatRequest& req) override;
};

/// Append-only JSONL store at `<root>/<model>/<prompt_type>.jsonl` with an
/// in-memory key index. Path separators in model names become '_'.
class GenCache {
 public:
  explicit GenCache(std::filesystem::path root, bool fsync_each_record = false);

  std::optional<GenRecord> find(const std::string& model_name, PromptType type,
                                const std::string& key);
  /// Appends one line and updates the index; the line is written with a
  /// single write(2) on an O_APPEND descriptor.
  void append(const GenRecord& rec);

  std::filesystem::path file_for(const std::string& model_name, PromptType type) const;
  const std::filesystem::path& root() const { return root_; }

 private:
  void load_locked(const std::filesystem::path& file);

  std::filesystem::path root_;
  bool fsync_;
  std::mutex mu_;
  std::map<std::filesystem::path, bool> loaded_;
  std::map<std::string, GenRecord> index_;
};

struct RetryPolicy {
  int max_attempts = 5;
  std::chrono::milliseconds base_delay{1000};
  double factor = 2.0;
};

/// Outcome of one batch item: a record, or the error that stopped it.
struct GenOutcome {
  std::optional<GenRecord> record;
  bool from_cache = false;
  std::string error_code;
  std::string error;
  int attempts = 0;
};

class Generator {
 public:
  using Clock = std::function<Timestamp()>;
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Generator(GenCache& cache, ChatTransport& transport, GenParams params, RetryPolicy retry = {},
            Clock clock = {}, Sleeper sleeper = {});

  /// Cache hit: the stored record, no transport call. Miss: one logical
  /// request (retried on 429/5xx/connection failure), persisted, returned.
  GenRecord generate_one(const RenderedPrompt& prompt, int* attempts = nullptr);

  /// Resolves every prompt with at most `max_in_flight` concurrent requests.
  /// out[i] corresponds to prompts[i]; failures never abort the batch.
  std::vector<GenOutcome> generate_batch(const std::vector<RenderedPrompt>& prompts,
                                         std::size_t max_in_flight = 4);

  const GenParams& params() const { return params_; }

 private:
  GenCache& cache_;
  ChatTransport& transport_;
  GenParams params_;
  RetryPolicy retry_;
  Clock clock_;
  Sleeper sleeper_;
};

}  // namespace synthpqa
