#include <doctest.h>

#include "synthpqa/error.hpp"
#include "synthpqa/prompt.hpp"
#include "test_support.hpp"

using namespace synthpqa;
namespace ts = testing_support;

namespace {

Question q_tb(std::string title, std::string body, std::string community = "travel") {
  Question q;
  q.id = "q1";
  q.title = std::move(title);
  q.body = std::move(body);
  q.community = std::move(community);
  q.user_id = "u";
  q.tags = {"secret-tag"};
  return q;
}

bool has_bracket_token(const std::string& s) {
  for (const char* tok : {"[TITLE]", "[BODY]", "[TAGS]", "[COMMUNITY]"}) {
    if (s.find(tok) != std::string::npos) return true;
  }
  return false;
}

}  // namespace

TEST_SUITE("prompt") {
  TEST_CASE("golden prompts are reproduced byte for byte") {
    const auto dir = ts::fixtures() / "small10";
    const auto qs = read_questions(dir / "questions.jsonl");
    REQUIRE(qs.front().id == "s01");
    UserProfile profile{"alice", {"visas", "schengen", "germany"}, 0};
    const auto gold = ts::fixtures() / "prompts";
    CHECK(render(qs[0], PromptType::kBasic).text == ts::slurp(gold / "basic.txt"));
    CHECK(render(qs[0], PromptType::kPersonalized, &profile).text == ts::slurp(gold / "personalized.txt"));
    CHECK(render(qs[0], PromptType::kContextual).text == ts::slurp(gold / "contextual.txt"));
  }

  TEST_CASE("basic prompt on a tiny question") {
    CHECK(render(q_tb("T", "B"), PromptType::kBasic).text ==
          "Write an answer to the given question: Title: T Body: B.");
  }

  TEST_CASE("contextual prompt names the community") {
    const auto r = render(q_tb("T", "B"), PromptType::kContextual, nullptr, std::string("history"));
    CHECK(r.text.rfind("Write an answer to the given question in the context of history:", 0) == 0);
    const auto d = render(q_tb("T", "B", "movies"), PromptType::kContextual);
    CHECK(d.text.find("in the context of movies:") != std::string::npos);
  }

  TEST_CASE("personalized prompt lists interests and keeps the ignore clause") {
    UserProfile p{"u", {"a", "b"}, 0};
    const auto r = render(q_tb("T", "B"), PromptType::kPersonalized, &p);
    CHECK(r.text.find("interested in: a, b.") != std::string::npos);
    CHECK(r.text.find("Ignore the user interests if they are not relevant to the question without "
                      "mentioning that you have ignored them.") != std::string::npos);
    CHECK(r.warnings.empty());
  }

  TEST_CASE("empty profile renders with a warning") {
    UserProfile p{"u", {}, 0};
    const auto r = render(q_tb("T", "B"), PromptType::kPersonalized, &p);
    CHECK(r.text.find("interested in: . Ignore") != std::string::npos);
    CHECK(r.warnings.size() == 1);
  }

  TEST_CASE("personalized without a profile is an error") {
    CHECK_THROWS_AS(render(q_tb("T", "B"), PromptType::kPersonalized), ValidationError);
  }

  TEST_CASE("substitution is single pass") {
    const auto r = render(q_tb("{body} [TITLE]", "{title}"), PromptType::kBasic);
    CHECK(r.text == "Write an answer to the given question: Title: {body} [TITLE] Body: {title}.");
  }

  TEST_CASE("basic prompts leak neither tags nor community") {
    const auto r = render(q_tb("How long", "to wait"), PromptType::kBasic);
    CHECK(r.text.find("secret-tag") == std::string::npos);
    CHECK(r.text.find("travel") == std::string::npos);
  }

  TEST_CASE("rendered defaults contain no bracket placeholders and are pure") {
    UserProfile p{"u", {"x"}, 0};
    for (auto t : kAllPromptTypes) {
      const auto a = render(q_tb("Title", "Body"), t, &p);
      const auto b = render(q_tb("Title", "Body"), t, &p);
      CHECK(a.text == b.text);
      CHECK_FALSE(has_bracket_token(a.text));
      CHECK(a.question_id == "q1");
      CHECK(a.prompt_type == t);
    }
  }

  TEST_CASE("template overrides are validated") {
    PromptTemplates t = PromptTemplates::defaults();
    CHECK_THROWS_AS(t.set(PromptType::kBasic, "Q: [TITLE]"), ValidationError);
    CHECK_THROWS_AS(t.set(PromptType::kBasic, "Q: {titel}"), ValidationError);
    CHECK_THROWS_AS(t.set(PromptType::kBasic, "Q: {title"), ValidationError);
    t.set(PromptType::kBasic, "Q: {title} / {community}");
    CHECK(render(q_tb("T", "B"), PromptType::kBasic, nullptr, std::nullopt, t).text == "Q: T / travel");

    ts::TempDir dir("prompt");
    ts::spit(dir / "tmpl.txt", "Answer: {body}\n");
    t.load_override(PromptType::kContextual, dir / "tmpl.txt");
    CHECK(t.get(PromptType::kContextual) == "Answer: {body}");
  }
}
