#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "synthpqa/corpus.hpp"
#include "synthpqa/error.hpp"
#include "test_support.hpp"

using namespace synthpqa;
namespace ts = testing_support;

namespace {

std::string qline(const std::string& id, const std::string& community = "travel") {
  return R"({"id":")" + id + R"(","title":"T )" + id + R"(","body":"B","tags":["x"],"user_id":"u","community":")" +
         community + R"(","created_at":1})";
}

Question make_q(std::string id, std::string community, std::string user = "u",
                std::vector<std::string> tags = {}, Timestamp t = 0) {
  Question q;
  q.id = std::move(id);
  q.title = "title";
  q.body = "body";
  q.community = std::move(community);
  q.user_id = std::move(user);
  q.tags = std::move(tags);
  q.created_at = t;
  return q;
}

std::map<std::string, std::size_t> sizes(const std::vector<Question>& qs) {
  std::map<std::string, std::size_t> out;
  for (const auto& q : qs) ++out[q.community];
  return out;
}

}  // namespace

TEST_SUITE("corpus") {
  TEST_CASE("two well-formed lines give two questions") {
    ts::TempDir dir("corpus");
    ts::spit(dir / "q.jsonl", qline("q1") + "\n" + qline("q2") + "\n");
    const auto qs = read_questions(dir / "q.jsonl");
    REQUIRE(qs.size() == 2);
    CHECK(qs[0].id == "q1");
    CHECK(qs[1].title == "T q2");
    CHECK(qs[0].tags == std::vector<std::string>{"x"});
  }

  TEST_CASE("duplicate id is reported on the second occurrence") {
    ts::TempDir dir("corpus");
    std::string text;
    const char* ids[] = {"q0", "q2", "q1", "q3", "q4", "q5", "q1"};
    for (const char* id : ids) text += qline(id) + "\n";
    ts::spit(dir / "q.jsonl", text);
    try {
      read_questions(dir / "q.jsonl");
      FAIL("expected a duplicate-id error");
    } catch (const ValidationError& e) {
      const std::string msg = e.what();
      CHECK(msg.find(":7:") != std::string::npos);
      CHECK(msg.find("q1") != std::string::npos);
    }
  }

  TEST_CASE("malformed JSON names its line") {
    ts::TempDir dir("corpus");
    ts::spit(dir / "q.jsonl", qline("q1") + "\n{not json\n");
    try {
      read_questions(dir / "q.jsonl");
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }

  TEST_CASE("record invariants are enforced") {
    ts::TempDir dir("corpus");
    ts::spit(dir / "q.jsonl",
             R"({"id":"q1","title":"  ","body":"B","tags":[],"user_id":"u","community":"c","created_at":1})"
             "\n");
    CHECK_THROWS_AS(read_questions(dir / "q.jsonl"), ValidationError);
    ts::spit(dir / "a.jsonl",
             R"({"id":"a1","question_id":"q1","text":"x","source":"human","model_name":"gpt","prompt_type":"none","created_at":1})"
             "\n");
    CHECK_THROWS_AS(read_answers(dir / "a.jsonl"), ValidationError);
  }

  TEST_CASE("dangling answer reference is rejected") {
    ts::TempDir dir("corpus");
    ts::spit(dir / "q.jsonl", qline("q1") + "\n");
    ts::spit(dir / "a.jsonl",
             R"({"id":"a1","question_id":"q9","text":"x","source":"human","model_name":"","prompt_type":"none","created_at":1})"
             "\n");
    ts::spit(dir / "qrels.txt", "");
    CHECK_THROWS_AS(parse_corpus(dir / "q.jsonl", dir / "a.jsonl", dir / "qrels.txt"), ValidationError);
  }

  TEST_CASE("hand-authored 10-record fixture parses with integrity intact") {
    const auto dir = ts::fixtures() / "small10";
    const auto expected = ts::load_json(dir / "expected.json");
    const Corpus c = parse_corpus(dir / "questions.jsonl", dir / "answers.jsonl", dir / "qrels.txt", true);
    CHECK(c.questions.size() == expected.at("questions").get<std::size_t>());
    CHECK(c.answers.size() == expected.at("answers").get<std::size_t>());
    CHECK(c.qrels.size() == expected.at("qrels").get<std::size_t>());
    std::size_t relevant = 0;
    for (const auto& [qid, js] : c.qrels.all()) relevant += c.qrels.relevant_count(qid);
    CHECK(relevant == expected.at("relevant").get<std::size_t>());
    for (const auto& a : c.answers) {
      CHECK(a.question_id == expected.at("answer_question").at(a.id).get<std::string>());
    }
    std::map<std::string, std::size_t> comm;
    for (const auto& [k, v] : expected.at("communities").items()) comm[k] = v.get<std::size_t>();
    CHECK(sizes(c.questions) == comm);
    std::vector<std::string> generated;
    for (const auto& a : c.answers) {
      if (a.source == AnswerSource::kGenerated) generated.push_back(a.id);
    }
    CHECK(generated == expected.at("generated").get<std::vector<std::string>>());
  }

  TEST_CASE("fixture corpora round-trip through the writers") {
    for (const char* name : {"small10", "mock50"}) {
      CAPTURE(name);
      const auto dir = ts::fixtures() / name;
      const Corpus c = parse_corpus(dir / "questions.jsonl", dir / "answers.jsonl", dir / "qrels.txt");
      ts::TempDir out("rt");
      write_questions(out / "q.jsonl", c.questions);
      write_answers(out / "a.jsonl", c.answers);
      write_qrels(out / "qrels.txt", c.qrels);
      const Corpus back = parse_corpus(out / "q.jsonl", out / "a.jsonl", out / "qrels.txt");
      CHECK(back.questions == c.questions);
      CHECK(back.answers == c.answers);
      CHECK(back.qrels == c.qrels);
    }
  }

  TEST_CASE("qrels validation is opt-in") {
    ts::TempDir dir("corpus");
    ts::spit(dir / "q.jsonl", qline("q1") + "\n");
    ts::spit(dir / "a.jsonl", "");
    ts::spit(dir / "qrels.txt", "q1 0 zz 1\n");
    CHECK_NOTHROW(parse_corpus(dir / "q.jsonl", dir / "a.jsonl", dir / "qrels.txt", false));
    CHECK_THROWS_AS(parse_corpus(dir / "q.jsonl", dir / "a.jsonl", dir / "qrels.txt", true), ValidationError);
  }

  TEST_CASE("per-community cap keeps min(cap, size)") {
    std::vector<Question> qs;
    const std::pair<const char*, std::size_t> comms[] = {{"a", 5000}, {"b", 10}, {"c", 3000}};
    for (const auto& [c, n] : comms) {
      for (std::size_t i = 0; i < n; ++i) qs.push_back(make_q(std::string(c) + std::to_string(i), c));
    }
    const auto out = sample_per_community(qs, 3000, 42);
    CHECK(sizes(out) == std::map<std::string, std::size_t>{{"a", 3000}, {"b", 10}, {"c", 3000}});
  }

  TEST_CASE("community below the cap is kept whole") {
    std::vector<Question> qs;
    for (int i = 0; i < 2800; ++i) qs.push_back(make_q("q" + std::to_string(i), "x"));
    CHECK(sample_per_community(qs, 3000, 1) == qs);
  }

  TEST_CASE("sampling is seeded, order preserving and idempotent") {
    std::mt19937_64 g(3);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<Question> qs;
      const std::size_t n = g() % 200;
      for (std::size_t i = 0; i < n; ++i) {
        qs.push_back(make_q("q" + std::to_string(i), std::string(1, static_cast<char>('a' + g() % 4))));
      }
      const std::size_t cap = 1 + g() % 40;
      const auto once = sample_per_community(qs, cap, 42);
      CHECK(once == sample_per_community(qs, cap, 42));
      CHECK(sample_per_community(once, cap, 42) == once);
      const auto in_sizes = sizes(qs), out_sizes = sizes(once);
      for (const auto& [c, sz] : in_sizes) {
        const auto it = out_sizes.find(c);
        CHECK((it == out_sizes.end() ? 0 : it->second) == std::min(cap, sz));
      }
      // Output order is input order.
      std::size_t pos = 0;
      for (const auto& q : once) {
        while (pos < qs.size() && qs[pos].id != q.id) ++pos;
        CHECK(pos < qs.size());
      }
    }
    CHECK(sample_per_community({}, 5, 1).empty());
  }

  TEST_CASE("cap 1 picks the same question twice") {
    std::vector<Question> qs;
    for (int i = 0; i < 50; ++i) qs.push_back(make_q("q" + std::to_string(i), "x"));
    const auto a = sample_per_community(qs, 1, 9), b = sample_per_community(qs, 1, 9);
    REQUIRE(a.size() == 1);
    CHECK(a == b);
  }

  TEST_CASE("profile tags ordered by count then name") {
    std::vector<Question> qs;
    int t = 0;
    auto add = [&](std::vector<std::string> tags) {
      qs.push_back(make_q("q" + std::to_string(t), "c", "ann", std::move(tags), 100 + t));
      ++t;
    };
    add({"travel", "visas", "usa"});
    add({"travel", "visas", "usa"});
    add({"travel", "visas", "usa", "trains"});
    add({"travel"});
    const auto p = build_user_profile("ann", qs, 1000);
    CHECK(p.top_tags == std::vector<std::string>{"travel", "usa", "visas", "trains"});
    CHECK(build_user_profile("ann", qs, 100).top_tags.empty());
    CHECK(build_user_profile("ann", qs, 101).top_tags == std::vector<std::string>{"travel", "usa", "visas"});
    CHECK(build_user_profile("nobody", qs, 1000).top_tags.empty());
  }

  TEST_CASE("profile is a prefix of the brute-force tag ranking") {
    std::mt19937_64 g(11);
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<Question> qs;
      const std::size_t n = g() % 200;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::string> tags;
        for (const auto& v : vocab) {
          if (g() % 3 == 0) tags.push_back(v);
        }
        qs.push_back(make_q("q" + std::to_string(i), "c", g() % 2 ? "u1" : "u2", tags,
                            static_cast<Timestamp>(g() % 100)));
      }
      const Timestamp as_of = static_cast<Timestamp>(g() % 100);
      const std::size_t k = 1 + g() % 6;
      // Brute force: count, then list every tag by (-count, name).
      std::map<std::string, int> counts;
      for (const auto& q : qs) {
        if (q.user_id == "u1" && q.created_at < as_of) {
          for (const auto& tg : q.tags) counts[tg]++;
        }
      }
      std::vector<std::string> full;
      for (const auto& [tg, c] : counts) full.push_back(tg);
      std::sort(full.begin(), full.end(), [&](const auto& x, const auto& y) {
        return counts[x] != counts[y] ? counts[x] > counts[y] : x < y;
      });
      const auto p = build_user_profile("u1", qs, as_of, k);
      CHECK(p.top_tags.size() == std::min(k, full.size()));
      CHECK(std::equal(p.top_tags.begin(), p.top_tags.end(), full.begin()));
    }
  }

  TEST_CASE("prompt type names") {
    for (auto t : kAllPromptTypes) CHECK(parse_prompt_type(to_string(t)) == t);
    CHECK_THROWS_AS(parse_prompt_type("fancy"), ValidationError);
  }
}
