#include "synthpqa/genclient.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "http_client.hpp"
#include "json_io.hpp"
#include "synthpqa/hashing.hpp"
#include "synthpqa/text.hpp"

namespace synthpqa {

using detail::Json;

void GenParams::validate() const {
  if (model_name.empty()) throw ValidationError("model name is required");
  if (!(temperature >= 0.0)) throw ValidationError("temperature must be >= 0");
  if (max_tokens < 1) throw ValidationError("max_tokens must be >= 1");
}

std::string generation_cache_key(const std::string& model_name, PromptType type,
                                 const std::string& question_id, const std::string& prompt_text) {
  std::string buf;
  buf.reserve(model_name.size() + question_id.size() + prompt_text.size() + 16);
  buf += model_name;
  buf += '\x1f';
  buf += to_string(type);
  buf += '\x1f';
  buf += question_id;
  buf += '\x1f';
  buf += prompt_text;
  return sha256_hex(buf);
}

Answer to_answer(const GenRecord& rec) {
  Answer a;
  std::string model = rec.model_name;
  for (char& c : model) {
    if (c == ' ' || c == '\t') c = '_';
  }
  a.id = rec.question_id + "::" + model + "::" + std::string(to_string(rec.prompt_type));
  a.question_id = rec.question_id;
  a.text = rec.answer_text;
  a.source = AnswerSource::kGenerated;
  a.model_name = rec.model_name;
  a.prompt_type = rec.prompt_type;
  a.created_at = rec.created_at;
  return a;
}

std::string gen_record_to_json(const GenRecord& rec) {
  Json j;
  j["cache_key"] = rec.cache_key;
  j["question_id"] = rec.question_id;
  j["prompt_type"] = to_string(rec.prompt_type);
  j["model_name"] = rec.model_name;
  j["prompt_text"] = rec.prompt_text;
  j["answer_text"] = rec.answer_text;
  j["created_at"] = rec.created_at;
  if (rec.usage) {
    j["usage"] = {{"prompt_tokens", rec.usage->prompt_tokens},
                  {"completion_tokens", rec.usage->completion_tokens},
                  {"total_tokens", rec.usage->total_tokens}};
  } else {
    j["usage"] = nullptr;
  }
  return j.dump();
}

GenRecord gen_record_from_json(const std::string& line) {
  const Json j = Json::parse(line);
  GenRecord r;
  r.cache_key = detail::get_string(j, "cache_key");
  r.question_id = detail::get_string(j, "question_id");
  r.prompt_type = parse_prompt_type(detail::get_string(j, "prompt_type"));
  r.model_name = detail::get_string(j, "model_name");
  r.prompt_text = detail::get_string(j, "prompt_text");
  r.answer_text = detail::get_string(j, "answer_text");
  r.created_at = j.value("created_at", Timestamp{0});
  if (auto it = j.find("usage"); it != j.end() && it->is_object()) {
    TokenUsage u;
    u.prompt_tokens = it->value("prompt_tokens", 0LL);
    u.completion_tokens = it->value("completion_tokens", 0LL);
    u.total_tokens = it->value("total_tokens", 0LL);
    r.usage = u;
  }
  return r;
}

// ---- transports ------------------------------------------------------------------

std::string chat_request_json(const ChatRequest& req) {
  Json j;
  j["model"] = req.model;
  j["messages"] = Json::array({Json{{"role", "user"}, {"content", req.user_message}}});
  j["temperature"] = req.temperature;
  j["max_tokens"] = req.max_tokens;
  return j.dump();
}

HttpChatTransport::HttpChatTransport(std::string endpoint_url, std::string api_key_env)
    : endpoint_url_(std::move(endpoint_url)), api_key_env_(std::move(api_key_env)) {}

ChatResponse HttpChatTransport::complete(const ChatRequest& req) {
  std::map<std::string, std::string> headers;
  if (!api_key_env_.empty()) {
    if (const char* key = std::getenv(api_key_env_.c_str()); key != nullptr && *key != '\0') {
      headers["Authorization"] = std::string("Bearer ") + key;
    }
  }
  const auto res =
      detail::http_post_json(endpoint_url_, "/chat/completions", chat_request_json(req), headers);
  ChatResponse out;
  out.status = res.status;
  out.error = res.error;
  if (res.status != 200) {
    if (res.status != 0) out.error = res.body.substr(0, 500);
    return out;
  }
  try {
    const Json j = Json::parse(res.body);
    const auto& msg = j.at("choices").at(0).at("message");
    if (auto c = msg.find("content"); c != msg.end() && c->is_string()) out.text = c->get<std::string>();
    if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
      TokenUsage usage;
      usage.prompt_tokens = u->value("prompt_tokens", 0LL);
      usage.completion_tokens = u->value("completion_tokens", 0LL);
      usage.total_tokens = u->value("total_tokens", 0LL);
      out.usage = usage;
    }
  } catch (const nlohmann::json::exception& e) {
    out.status = 0;
    out.error = std::string("malformed completion response: ") + e.what();
  }
  return out;
}

ChatResponse MockChatTransport::complete(const ChatRequest& req) {
  const auto at = req.user_message.find("Title:");
  const std::string_view rest =
      at == std::string::npos ? std::string_view(req.user_message)
                              : std::string_view(req.user_message).substr(at + 6);
  std::string text = "This answer discusses";
  for (const auto& t : tokenize(rest)) {
    if (t == "body" || t == "answering") continue;
    text += ' ';
    text += t;
  }
  text += '.';
  ChatResponse r;
  r.status = 200;
  r.text = std::move(text);
  return r;
}

// ---- cache ------------------------------------------------------------------------

GenCache::GenCache(std::filesystem::path root, bool fsync_each_record)
    : root_(std::move(root)), fsync_(fsync_each_record) {}

std::filesystem::path GenCache::file_for(const std::string& model_name, PromptType type) const {
  std::string dir = model_name;
  for (char& c : dir) {
    if (c == '/' || c == '\\') c = '_';
  }
  return root_ / dir / (std::string(to_string(type)) + ".jsonl");
}

void GenCache::load_locked(const std::filesystem::path& file) {
  if (loaded_[file]) return;
  loaded_[file] = true;
  std::ifstream in(file);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      GenRecord r = gen_record_from_json(line);
      index_.insert_or_assign(r.cache_key, std::move(r));
    } catch (const std::exception& e) {
      // A torn final line from a crash is expected; anything earlier is not.
      if (in.peek() == std::ifstream::traits_type::eof()) break;
      throw ParseError(file.string(), line_no, e.what());
    }
  }
}

std::optional<GenRecord> GenCache::find(const std::string& model_name, PromptType type,
                                        const std::string& key) {
  std::lock_guard lk(mu_);
  load_locked(file_for(model_name, type));
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

void GenCache::append(const GenRecord& rec) {
  const auto file = file_for(rec.model_name, rec.prompt_type);
  const std::string line = gen_record_to_json(rec) + "\n";
  std::lock_guard lk(mu_);
  load_locked(file);
  std::filesystem::create_directories(file.parent_path());
  const int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open cache file " + file.string());
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(fd, line.data() + off, line.size() - off);
    if (n < 0) {
      ::close(fd);
      throw IoError("write failed on cache file " + file.string());
    }
    off += static_cast<std::size_t>(n);
  }
  if (fsync_) ::fsync(fd);
  ::close(fd);
  index_.insert_or_assign(rec.cache_key, rec);
}

// ---- generator --------------------------------------------------------------------

Generator::Generator(GenCache& cache, ChatTransport& transport, GenParams params,
                     RetryPolicy retry, Clock clock, Sleeper sleeper)
    : cache_(cache),
      transport_(transport),
      params_(std::move(params)),
      retry_(retry),
      clock_(std::move(clock)),
      sleeper_(std::move(sleeper)) {
  params_.validate();
  if (retry_.max_attempts < 1) throw ValidationError("max_attempts must be >= 1");
  if (!clock_) {
    clock_ = [] {
      return static_cast<Timestamp>(std::chrono::duration_cast<std::chrono::seconds>(
                                        std::chrono::system_clock::now().time_since_epoch())
                                        .count());
    };
  }
  if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

GenRecord Generator::generate_one(const RenderedPrompt& prompt, int* attempts_out) {
  const std::string key =
      generation_cache_key(params_.model_name, prompt.prompt_type, prompt.question_id, prompt.text);
  if (attempts_out) *attempts_out = 0;
  if (auto hit = cache_.find(params_.model_name, prompt.prompt_type, key)) return *hit;

  ChatRequest req{params_.model_name, prompt.text, params_.temperature, params_.max_tokens};
  ChatResponse res;
  int attempt = 0;
  double delay_ms = static_cast<double>(retry_.base_delay.count());
  while (true) {
    ++attempt;
    res = transport_.complete(req);
    const bool retryable = res.status == 0 || res.status == 429 || res.status >= 500;
    if (res.status == 200 || !retryable) break;
    if (attempt >= retry_.max_attempts) {
      if (attempts_out) *attempts_out = attempt;
      throw GenerationError("retries_exhausted",
                            "question " + prompt.question_id + ": gave up after " +
                                std::to_string(attempt) + " attempts (last: " +
                                (res.status ? "HTTP " + std::to_string(res.status) : res.error) +
                                ")");
    }
    sleeper_(std::chrono::milliseconds(static_cast<long long>(std::llround(delay_ms))));
    delay_ms *= retry_.factor;
  }
  if (attempts_out) *attempts_out = attempt;
  if (res.status != 200) {
    throw GenerationError("http_error", "question " + prompt.question_id + ": HTTP " +
                                            std::to_string(res.status) + " " + res.error);
  }
  if (trim(res.text).empty()) {
    throw GenerationError("empty_generation",
                          "question " + prompt.question_id + ": empty completion");
  }

  GenRecord rec;
  rec.cache_key = key;
  rec.question_id = prompt.question_id;
  rec.prompt_type = prompt.prompt_type;
  rec.model_name = params_.model_name;
  rec.prompt_text = prompt.text;
  rec.answer_text = std::move(res.text);
  rec.created_at = clock_();
  rec.usage = res.usage;
  cache_.append(rec);
  return rec;
}

std::vector<GenOutcome> Generator::generate_batch(const std::vector<RenderedPrompt>& prompts,
                                                  std::size_t max_in_flight) {
  if (max_in_flight == 0) throw ValidationError("max_in_flight must be >= 1");
  std::vector<GenOutcome> out(prompts.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < prompts.size(); i = next++) {
      GenOutcome& o = out[i];
      const std::string key = generation_cache_key(params_.model_name, prompts[i].prompt_type,
                                                   prompts[i].question_id, prompts[i].text);
      try {
        o.from_cache = cache_.find(params_.model_name, prompts[i].prompt_type, key).has_value();
        o.record = generate_one(prompts[i], &o.attempts);
      } catch (const GenerationError& e) {
        o.error_code = e.code();
        o.error = e.what();
      } catch (const std::exception& e) {
        o.error_code = "internal_error";
        o.error = e.what();
      }
    }
  };
  // Each worker has at most one request outstanding, so the worker count is
  // the in-flight bound.
  const std::size_t workers = std::min(max_in_flight, prompts.size());
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace synthpqa
