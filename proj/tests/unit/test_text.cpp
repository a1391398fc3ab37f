#include <doctest.h>

#include "synthpqa/text.hpp"
#include "test_support.hpp"

using namespace synthpqa;
namespace ts = testing_support;

TEST_SUITE("text") {
  TEST_CASE("tokenize splits on word boundaries and lowercases") {
    CHECK(tokenize("The movie, Volere Volare!") ==
          std::vector<std::string>{"the", "movie", "volere", "volare"});
    CHECK(tokenize("").empty());
    CHECK(tokenize(" \t\n").empty());
  }

  TEST_CASE("lowercasing can be turned off") {
    AnalyzerConfig cfg;
    cfg.lowercase = false;
    CHECK(tokenize("Rome ROME rome", cfg) == std::vector<std::string>{"Rome", "ROME", "rome"});
  }

  TEST_CASE("segmentation matches the reference segmenter on the fixture strings") {
    const auto cases = ts::load_json(ts::oracles() / "tokenizer_cases.json").at("cases");
    REQUIRE(cases.size() == 50);
    for (const auto& c : cases) {
      const auto text = c.at("text").get<std::string>();
      CAPTURE(text);
      CHECK(tokenize(text) == c.at("tokens").get<std::vector<std::string>>());
    }
  }

  TEST_CASE("tokenization is deterministic") {
    const std::string s = "Ça va? Größe ΣΊΣΥΦΟΣ 42nd déjà-vu";
    CHECK(tokenize(s) == tokenize(s));
  }

  TEST_CASE("utf8 round trip and replacement of invalid bytes") {
    const std::string s = "naïve 日本 🙂";
    CHECK(utf8_encode(utf8_decode(s)) == s);
    const auto bad = utf8_decode(std::string("a\xff" "b", 3));
    REQUIRE(bad.size() == 3);
    CHECK(bad[1] == U'�');
  }

  TEST_CASE("trim removes ASCII and Unicode spaces") {
    CHECK(trim("  hi \n") == "hi");
    CHECK(trim(" 　x ") == "x");
    CHECK(trim("   ").empty());
  }
}
