#include <doctest.h>

#include <atomic>
#include <chrono>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "synthpqa/genclient.hpp"
#include "test_support.hpp"

using namespace synthpqa;
namespace ts = testing_support;
using nlohmann::json;

namespace {

/// In-process chat-completions endpoint. The handler is supplied per test;
/// every request body is kept for inspection.
class MockEndpoint {
 public:
  using Handler = std::function<void(const json& body, httplib::Response& res)>;

  explicit MockEndpoint(Handler h) : handler_(std::move(h)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int now = ++in_flight_;
      int peak = peak_.load();
      while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
      }
      ++calls_;
      const json body = json::parse(req.body);
      {
        std::lock_guard lk(mu_);
        bodies_.push_back(body);
      }
      handler_(body, res);
      --in_flight_;
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockEndpoint() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int calls() const { return calls_; }
  int peak() const { return peak_; }
  std::vector<json> bodies() {
    std::lock_guard lk(mu_);
    return bodies_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> in_flight_{0}, peak_{0}, calls_{0};
  std::mutex mu_;
  std::vector<json> bodies_;
};

void reply(httplib::Response& res, const std::string& text) {
  json j = {{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
            {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 1}, {"total_tokens", 4}}}};
  res.set_content(j.dump(), "application/json");
}

RenderedPrompt prompt(const std::string& qid, const std::string& text,
                      PromptType t = PromptType::kBasic) {
  RenderedPrompt p;
  p.question_id = qid;
  p.prompt_type = t;
  p.text = text;
  return p;
}

GenParams params(const std::string& url) {
  GenParams p;
  p.model_name = "test/model";
  p.endpoint_url = url;
  p.api_key_env = "SYNTHPQA_TEST_NO_SUCH_KEY";
  return p;
}

Generator::Clock fixed_clock() {
  return [] { return Timestamp{1700000000}; };
}

}  // namespace

TEST_SUITE("genclient") {
  TEST_CASE("completion text from the endpoint becomes the answer") {
    MockEndpoint ep([](const json&, httplib::Response& res) { reply(res, "OK"); });
    ts::TempDir dir("gen");
    GenCache cache(dir.path());
    HttpChatTransport transport(ep.url(), "SYNTHPQA_TEST_NO_SUCH_KEY");
    Generator gen(cache, transport, params(ep.url()), {}, fixed_clock());
    const auto rec = gen.generate_one(prompt("q1", "Write an answer"));
    CHECK(rec.answer_text == "OK");
    CHECK(rec.question_id == "q1");
    CHECK(rec.model_name == "test/model");
    REQUIRE(rec.usage.has_value());
    CHECK(rec.usage->total_tokens == 4);
    CHECK(rec.cache_key == generation_cache_key("test/model", PromptType::kBasic, "q1", "Write an answer"));
  }

  TEST_CASE("request body carries the sampling parameters and one user message") {
    MockEndpoint ep([](const json&, httplib::Response& res) { reply(res, "OK"); });
    ts::TempDir dir("gen");
    GenCache cache(dir.path());
    HttpChatTransport transport(ep.url(), "SYNTHPQA_TEST_NO_SUCH_KEY");
    Generator gen(cache, transport, params(ep.url()), {}, fixed_clock());
    gen.generate_one(prompt("q1", "Hello there"));
    const auto bodies = ep.bodies();
    REQUIRE(bodies.size() == 1);
    const auto& b = bodies[0];
    CHECK(b.at("temperature").get<double>() == 1.0);
    CHECK(b.at("max_tokens").get<int>() == 500);
    CHECK(b.at("model") == "test/model");
    REQUIRE(b.at("messages").size() == 1);
    CHECK(b.at("messages")[0].at("role") == "user");
    CHECK(b.at("messages")[0].at("content") == "Hello there");
  }

  TEST_CASE("second identical request is served from the cache") {
    MockEndpoint ep([](const json&, httplib::Response& res) { reply(res, "OK"); });
    ts::TempDir dir("gen");
    HttpChatTransport transport(ep.url(), "SYNTHPQA_TEST_NO_SUCH_KEY");
    GenRecord first;
    {
      GenCache cache(dir.path());
      Generator gen(cache, transport, params(ep.url()), {}, fixed_clock());
      first = gen.generate_one(prompt("q1", "p"));
      CHECK(gen.generate_one(prompt("q1", "p")) == first);
      CHECK(ep.calls() == 1);
    }
    // A fresh process sees the persisted record.
    GenCache reopened(dir.path());
    Generator gen(reopened, transport, params(ep.url()), {}, fixed_clock());
    int attempts = -1;
    CHECK(gen.generate_one(prompt("q1", "p"), &attempts) == first);
    CHECK(attempts == 0);
    CHECK(ep.calls() == 1);
    CHECK(std::filesystem::exists(dir / "test_model" / "basic.jsonl"));
  }

  TEST_CASE("batch keeps order and bounds outstanding requests") {
    MockEndpoint ep([](const json& body, httplib::Response& res) {
      std::this_thread::sleep_for(std::chrono::milliseconds(40));
      reply(res, "re: " + body.at("messages")[0].at("content").get<std::string>());
    });
    ts::TempDir dir("gen");
    GenCache cache(dir.path());
    HttpChatTransport transport(ep.url(), "SYNTHPQA_TEST_NO_SUCH_KEY");
    Generator gen(cache, transport, params(ep.url()), {}, fixed_clock());
    std::vector<RenderedPrompt> ps;
    for (int i = 0; i < 10; ++i) ps.push_back(prompt("q" + std::to_string(i), "text " + std::to_string(i)));
    const auto out = gen.generate_batch(ps, 4);
    REQUIRE(out.size() == 10);
    for (int i = 0; i < 10; ++i) {
      REQUIRE(out[i].record.has_value());
      CHECK(out[i].record->question_id == ps[i].question_id);
      CHECK(out[i].record->answer_text == "re: text " + std::to_string(i));
      CHECK_FALSE(out[i].from_cache);
    }
    CHECK(ep.calls() == 10);
    CHECK(ep.peak() <= 4);
    MESSAGE("observed peak concurrency " << ep.peak());

    const auto again = gen.generate_batch(ps, 4);
    CHECK(ep.calls() == 10);
    for (const auto& o : again) CHECK(o.from_cache);
  }

  TEST_CASE("server errors are retried with backoff then reported per item") {
    MockEndpoint ep([](const json&, httplib::Response& res) { res.status = 500; });
    ts::TempDir dir("gen");
    GenCache cache(dir.path());
    HttpChatTransport transport(ep.url(), "SYNTHPQA_TEST_NO_SUCH_KEY");
    std::vector<long long> delays;
    Generator gen(cache, transport, params(ep.url()), {}, fixed_clock(),
                  [&](std::chrono::milliseconds d) { delays.push_back(d.count()); });
    const auto out = gen.generate_batch({prompt("q1", "p")}, 4);
    REQUIRE(out.size() == 1);
    CHECK_FALSE(out[0].record.has_value());
    CHECK(out[0].error_code == "retries_exhausted");
    CHECK(out[0].attempts == 5);
    CHECK(ep.calls() == 5);
    CHECK(delays == std::vector<long long>{1000, 2000, 4000, 8000});
  }

  TEST_CASE("429 is retried and a later success is kept") {
    std::atomic<int> n{0};
    MockEndpoint ep([&](const json&, httplib::Response& res) {
      if (++n < 3) {
        res.status = 429;
      } else {
        reply(res, "fine");
      }
    });
    ts::TempDir dir("gen");
    GenCache cache(dir.path());
    HttpChatTransport transport(ep.url(), "SYNTHPQA_TEST_NO_SUCH_KEY");
    Generator gen(cache, transport, params(ep.url()), {}, fixed_clock(), [](auto) {});
    int attempts = 0;
    CHECK(gen.generate_one(prompt("q1", "p"), &attempts).answer_text == "fine");
    CHECK(attempts == 3);
  }

  TEST_CASE("client errors are not retried and empty completions are flagged") {
    MockEndpoint bad([](const json&, httplib::Response& res) { res.status = 400; });
    MockEndpoint empty([](const json&, httplib::Response& res) { reply(res, "  "); });
    ts::TempDir dir("gen");
    GenCache cache(dir.path());
    HttpChatTransport tb(bad.url(), ""), te(empty.url(), "");
    Generator gb(cache, tb, params(bad.url()), {}, fixed_clock(), [](auto) {});
    Generator ge(cache, te, params(empty.url()), {}, fixed_clock(), [](auto) {});
    const auto ob = gb.generate_batch({prompt("q1", "p")});
    CHECK(ob[0].error_code == "http_error");
    CHECK(bad.calls() == 1);
    const auto oe = ge.generate_batch({prompt("q2", "p")});
    CHECK(oe[0].error_code == "empty_generation");
  }

  TEST_CASE("unreachable endpoint exhausts retries") {
    // Port 1 (tcpmux) is not served on loopback here; connects are refused.
    const std::string url = "http://127.0.0.1:1/v1";
    ts::TempDir dir("gen");
    GenCache cache(dir.path());
    HttpChatTransport transport(url, "");
    RetryPolicy rp;
    rp.max_attempts = 2;
    Generator gen(cache, transport, params(url), rp, fixed_clock(), [](auto) {});
    const auto out = gen.generate_batch({prompt("q1", "p")});
    CHECK(out[0].error_code == "retries_exhausted");
    CHECK(out[0].attempts == 2);
  }

  TEST_CASE("cache key changes with every field") {
    const auto base = generation_cache_key("m", PromptType::kBasic, "q1", "text");
    CHECK(base.size() == 64);
    CHECK(base == generation_cache_key("m", PromptType::kBasic, "q1", "text"));
    CHECK(base != generation_cache_key("m2", PromptType::kBasic, "q1", "text"));
    CHECK(base != generation_cache_key("m", PromptType::kContextual, "q1", "text"));
    CHECK(base != generation_cache_key("m", PromptType::kBasic, "q2", "text"));
    CHECK(base != generation_cache_key("m", PromptType::kBasic, "q1", "text."));
    // Field boundaries cannot be shifted.
    CHECK(generation_cache_key("ab", PromptType::kBasic, "c", "t") !=
          generation_cache_key("a", PromptType::kBasic, "bc", "t"));
  }

  TEST_CASE("torn final cache line is tolerated") {
    ts::TempDir dir("gen");
    MockChatTransport mock;
    GenParams p;
    p.model_name = "mock-echo";
    GenRecord kept;
    {
      GenCache cache(dir.path());
      Generator gen(cache, mock, p, {}, fixed_clock());
      kept = gen.generate_one(prompt("q1", "Write: Title: Rome trains Body: x"));
    }
    const auto file = dir / "mock-echo" / "basic.jsonl";
    {
      std::ofstream out(file, std::ios::app);
      out << R"({"cache_key":"abc","question_id":)";
    }
    GenCache cache(dir.path());
    const auto hit = cache.find("mock-echo", PromptType::kBasic, kept.cache_key);
    REQUIRE(hit.has_value());
    CHECK(*hit == kept);
  }

  TEST_CASE("record JSON round trip and answer conversion") {
    GenRecord r;
    r.cache_key = "k";
    r.question_id = "q7";
    r.prompt_type = PromptType::kPersonalized;
    r.model_name = "phi";
    r.prompt_text = "p\n\"quoted\"";
    r.answer_text = "ans";
    r.created_at = 5;
    r.usage = TokenUsage{1, 2, 3};
    CHECK(gen_record_from_json(gen_record_to_json(r)) == r);
    const Answer a = to_answer(r);
    CHECK(a.id == "q7::phi::personalized");
    CHECK(a.source == AnswerSource::kGenerated);
    CHECK(a.prompt_type == PromptType::kPersonalized);
  }

  TEST_CASE("mock transport echoes question terms") {
    MockChatTransport mock;
    ChatRequest req{"mock-echo", "Write an answer to the given question: Title: Rome Trains Body: How?", 1.0, 500};
    const auto r = mock.complete(req);
    CHECK(r.status == 200);
    CHECK(r.text.find("rome trains") != std::string::npos);
  }

  TEST_CASE("parameter validation") {
    GenParams p;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p.model_name = "m";
    p.temperature = -0.1;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p.temperature = 0.0;
    p.max_tokens = 0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
}
