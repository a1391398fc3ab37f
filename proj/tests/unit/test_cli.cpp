#include <doctest.h>

#include <iostream>
#include <sstream>

#include "synthpqa/cli.hpp"
#include "synthpqa/error.hpp"
#include "synthpqa/manifest.hpp"
#include "test_support.hpp"

using namespace synthpqa;
namespace ts = testing_support;

namespace {

/// Runs the CLI in-process with stdout and stderr captured.
struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  auto* old_out = std::cout.rdbuf(out.rdbuf());
  auto* old_err = std::cerr.rdbuf(err.rdbuf());
  CliRun r;
  try {
    r.code = run_cli(args);
  } catch (...) {
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    throw;
  }
  std::cout.rdbuf(old_out);
  std::cerr.rdbuf(old_err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string p(const std::filesystem::path& path) { return path.string(); }

std::size_t count_lines(const std::string& s) {
  std::size_t n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("unknown subcommand prints usage and exits 2") {
    const auto r = cli({"bogus"});
    CHECK(r.code == 2);
    CHECK(r.err.find("unknown subcommand 'bogus'") != std::string::npos);
    CHECK(r.err.find("Usage") != std::string::npos);
    CHECK(cli({}).code == 2);
  }

  TEST_CASE("evaluate with a missing run names the path") {
    ts::TempDir dir("cli");
    ts::spit(dir / "qrels.txt", "q1 0 a 1\n");
    const auto missing = p(dir / "nope.trec");
    const auto r = cli({"evaluate", "--run", missing, "--qrels", p(dir / "qrels.txt")});
    CHECK(r.code != 0);
    CHECK(r.err.find(missing) != std::string::npos);
  }

  TEST_CASE("failing stage exits 1 and names the offending record") {
    ts::TempDir dir("cli");
    ts::spit(dir / "q.jsonl", "{broken\n");
    ts::spit(dir / "a.jsonl", "");
    ts::spit(dir / "qrels.txt", "");
    const auto r = cli({"ingest", "--questions", p(dir / "q.jsonl"), "--answers", p(dir / "a.jsonl"),
                        "--qrels", p(dir / "qrels.txt"), "--out-dir", p(dir / "out")});
    CHECK(r.code == 1);
    CHECK(r.err.find("q.jsonl:1") != std::string::npos);
  }

  TEST_CASE("small pipeline: index, search, tune-lambda with 11 rows, evaluate") {
    const auto fx = ts::fixtures() / "small10";
    ts::TempDir dir("cli");
    REQUIRE(cli({"index", "--answers", p(fx / "answers.jsonl"), "--out", p(dir / "idx.bin")}).code == 0);
    REQUIRE(cli({"search", "--index", p(dir / "idx.bin"), "--questions", p(fx / "questions.jsonl"), "--out",
                 p(dir / "bm25.trec")})
                .code == 0);
    REQUIRE(cli({"rerank", "--run", p(dir / "bm25.trec"), "--questions", p(fx / "questions.jsonl"), "--answers",
                 p(fx / "answers.jsonl"), "--scorer", "tfidf", "--out", p(dir / "tfidf.trec")})
                .code == 0);
    const auto t = cli({"tune-lambda", "--bm25-run", p(dir / "bm25.trec"), "--neural-run", p(dir / "tfidf.trec"),
                        "--qrels", p(fx / "qrels.txt"), "--out", p(dir / "lambda.tsv")});
    REQUIRE(t.code == 0);
    CHECK(t.out.find("best_lambda\t") != std::string::npos);
    const auto table = ts::slurp(dir / "lambda.tsv");
    // Header plus one row per grid point.
    CHECK(count_lines(table) == 12);
    CHECK(table.find("0.0\t") != std::string::npos);
    CHECK(table.find("1.0\t") != std::string::npos);

    REQUIRE(cli({"evaluate", "--run", p(dir / "bm25.trec"), "--qrels", p(fx / "qrels.txt"), "--out",
                 p(dir / "eval.md")})
                .code == 0);
    const auto md = ts::slurp(dir / "eval.md");
    for (const char* col : {"P@1", "NDCG@3", "NDCG@10", "MAP@100"}) CHECK(md.find(col) != std::string::npos);

    // Every artifact has a manifest whose recorded output hash is current.
    const auto m = Manifest::load(manifest_path_for(dir / "bm25.trec"));
    CHECK(m.command == "search");
    CHECK(m.seed == 42);
    CHECK(m.params.at("k") == "100");
    CHECK(m.inputs.size() == 2);
    CHECK(changed_outputs(m).empty());
  }

  TEST_CASE("answers may come from several files with distinct ids") {
    const auto fx = ts::fixtures() / "small10";
    ts::TempDir dir("cli");
    const auto first = ts::slurp(fx / "answers.jsonl");
    ts::spit(dir / "extra.jsonl", first.substr(0, first.find('\n') + 1).replace(7, 3, "x01"));
    REQUIRE(cli({"index", "--answers", p(fx / "answers.jsonl"), "--answers", p(dir / "extra.jsonl"), "--out",
                 p(dir / "idx.bin")})
                .code == 0);
    CHECK(Manifest::load(manifest_path_for(dir / "idx.bin")).inputs.size() == 2);
    const auto dup = cli({"index", "--answers", p(fx / "answers.jsonl"), p(fx / "answers.jsonl"), "--out",
                          p(dir / "dup.bin")});
    CHECK(dup.code == 1);
    CHECK(dup.err.find("duplicate answer id 'h01'") != std::string::npos);
  }

  TEST_CASE("config file values apply and flags override them") {
    const auto fx = ts::fixtures() / "small10";
    ts::TempDir dir("cli");
    REQUIRE(cli({"index", "--answers", p(fx / "answers.jsonl"), "--out", p(dir / "idx.bin")}).code == 0);
    ts::spit(dir / "cfg.toml", "seed = 7\n[search]\nk = 2\n");
    REQUIRE(cli({"--config", p(dir / "cfg.toml"), "search", "--index", p(dir / "idx.bin"), "--questions",
                 p(fx / "questions.jsonl"), "--out", p(dir / "a.trec")})
                .code == 0);
    const auto m = Manifest::load(manifest_path_for(dir / "a.trec"));
    CHECK(m.params.at("k") == "2");
    CHECK(m.seed == 7);
    REQUIRE(cli({"--config", p(dir / "cfg.toml"), "search", "--index", p(dir / "idx.bin"), "--questions",
                 p(fx / "questions.jsonl"), "--k", "3", "--out", p(dir / "b.trec")})
                .code == 0);
    CHECK(Manifest::load(manifest_path_for(dir / "b.trec")).params.at("k") == "3");
  }

  TEST_CASE("manifest JSON round trip and change detection") {
    ts::TempDir dir("cli");
    ts::spit(dir / "in.txt", "input");
    ts::spit(dir / "out.txt", "output");
    setenv("SOURCE_DATE_EPOCH", "1234", 1);
    const auto m = make_manifest("demo", {"demo", "--x", "1"}, {{"--x", "1"}}, {dir / "in.txt"},
                                 {dir / "out.txt", dir / "absent"}, 42);
    unsetenv("SOURCE_DATE_EPOCH");
    CHECK(m.created_at == 1234);
    CHECK(m.outputs.size() == 1);
    CHECK(m.inputs[0].sha256 == "c96c6d5be8d08a12e7b5cdc1b207fa6b2430974c86803d8891675e76fd992c20");
    const auto path = write_manifest(dir / "out.txt", m);
    CHECK(path == dir / "out.txt.manifest.json");
    const auto back = Manifest::load(path);
    CHECK(back.to_json() == m.to_json());
    CHECK(changed_outputs(back).empty());
    ts::spit(dir / "out.txt", "different");
    CHECK(changed_outputs(back) == std::vector<std::string>{p(dir / "out.txt")});
    CHECK_THROWS_AS(Manifest::from_json("{}"), ValidationError);
  }
}
