#include "synthpqa/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <functional>
#include <iostream>
#include <memory>
#include <set>
#include <thread>

#include "json_io.hpp"
#include "synthpqa/annotation.hpp"
#include "synthpqa/bm25.hpp"
#include "synthpqa/corpus.hpp"
#include "synthpqa/encoder.hpp"
#include "synthpqa/error.hpp"
#include "synthpqa/genclient.hpp"
#include "synthpqa/manifest.hpp"
#include "synthpqa/metrics.hpp"
#include "synthpqa/pipeline.hpp"
#include "synthpqa/prompt.hpp"
#include "synthpqa/run.hpp"
#include "synthpqa/textdiv.hpp"

namespace synthpqa {

namespace fs = std::filesystem;
using detail::Json;

namespace {

struct Globals {
  std::uint64_t seed = 42;
  std::size_t threads = 1;
  std::vector<std::string> argv;
};

void log(const std::string& msg) { std::cerr << msg << "\n"; }

std::map<std::string, std::string> collect_params(const CLI::App* app) {
  std::map<std::string, std::string> params;
  for (const CLI::App* a = app; a != nullptr; a = a->get_parent()) {
    for (const CLI::Option* opt : a->get_options()) {
      if (opt->get_lnames().empty()) continue;
      const std::string name = opt->get_lnames().front();
      if (name == "help" || name == "config" || params.count(name)) continue;
      std::string value;
      if (opt->count() > 0) {
        const auto& res = opt->results();
        for (std::size_t i = 0; i < res.size(); ++i) value += (i ? "," : "") + res[i];
      } else {
        value = opt->get_default_str();
      }
      params[name] = value;
    }
  }
  return params;
}

std::string command_path(const CLI::App* app) {
  std::string path;
  for (const CLI::App* a = app; a != nullptr && a->get_parent() != nullptr; a = a->get_parent()) {
    path = a->get_name() + (path.empty() ? "" : " " + path);
  }
  return path;
}

void finish(const Globals& g, const CLI::App* app, const std::vector<fs::path>& inputs,
            const std::vector<fs::path>& outputs) {
  const Manifest m = make_manifest(command_path(app), g.argv, collect_params(app), inputs, outputs, g.seed);
  const fs::path written = write_manifest(outputs.front(), m);
  log("wrote " + outputs.front().string() + " (manifest " + written.string() + ")");
}

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& text) {
  ensure_parent(p);
  detail::write_file_atomic(p, text);
}

// ---- answer pools ------------------------------------------------------------------------

bool in_pool(const Answer& a, const std::string& pool, const std::string& model) {
  if (pool == "all") return true;
  if (pool == "human") return a.source == AnswerSource::kHuman;
  if (a.source != AnswerSource::kGenerated) return false;
  if (!model.empty() && a.model_name != model) return false;
  if (pool == "generated") return true;
  return a.prompt_type && to_string(*a.prompt_type) == pool;
}

const std::vector<std::string> kPools = {"human", "basic", "personalized", "contextual", "generated", "all"};

TextMap question_texts(const std::vector<Question>& qs) {
  TextMap m;
  for (const auto& q : qs) m[q.id] = q.query_text();
  return m;
}

TextMap answer_texts(const std::vector<Answer>& as) {
  TextMap m;
  for (const auto& a : as) m[a.id] = a.text;
  return m;
}

/// Answers whose question is in `qs`; the rest are dropped with a note.
std::vector<Answer> answers_for(const std::vector<Question>& qs, std::vector<Answer> answers) {
  std::set<std::string> ids;
  for (const auto& q : qs) ids.insert(q.id);
  const auto before = answers.size();
  std::erase_if(answers, [&](const Answer& a) { return !ids.count(a.question_id); });
  if (answers.size() != before) {
    log("ignoring " + std::to_string(before - answers.size()) + " answer(s) to questions outside the question file");
  }
  return answers;
}

/// Answers from every file in order; ids must be unique across files.
std::vector<Answer> read_answer_files(const std::vector<std::string>& paths) {
  std::vector<Answer> out;
  std::set<std::string> seen;
  for (const auto& p : paths) {
    for (auto& a : read_answers(p)) {
      if (!seen.insert(a.id).second) throw ValidationError(p + ": duplicate answer id '" + a.id + "'");
      out.push_back(std::move(a));
    }
  }
  return out;
}

std::vector<fs::path> paths_of(std::vector<fs::path> head, const std::vector<std::string>& more) {
  head.insert(head.end(), more.begin(), more.end());
  return head;
}

RunList truncate_run(RunList run, std::size_t depth) {
  for (auto& [qid, list] : run) {
    if (list.size() > depth) list.resize(depth);
  }
  return run;
}

// ---- prompts file ------------------------------------------------------------------------

std::string prompt_json(const RenderedPrompt& p) {
  Json j;
  j["question_id"] = p.question_id;
  j["prompt_type"] = to_string(p.prompt_type);
  j["text"] = p.text;
  j["model_hint"] = p.model_hint;
  j["warnings"] = p.warnings;
  return j.dump();
}

std::vector<RenderedPrompt> read_prompts(const fs::path& path) {
  std::vector<RenderedPrompt> out;
  detail::for_each_jsonl(path, [&](const Json& j, std::size_t) {
    RenderedPrompt p;
    p.question_id = detail::get_string(j, "question_id");
    p.prompt_type = parse_prompt_type(detail::get_string(j, "prompt_type"));
    p.text = detail::get_string(j, "text");
    p.model_hint = detail::get_string_or(j, "model_hint", "");
    out.push_back(std::move(p));
  });
  return out;
}

std::map<std::string, UserProfile> read_profiles(const fs::path& path) {
  std::map<std::string, UserProfile> out;
  detail::for_each_jsonl(path, [&](const Json& j, std::size_t) {
    UserProfile p;
    p.user_id = detail::get_string_or(j, "user_id", "");
    p.top_tags = j.at("top_tags").get<std::vector<std::string>>();
    p.as_of = j.value("as_of", Timestamp{0});
    out[detail::get_string(j, "question_id")] = std::move(p);
  });
  return out;
}

// ---- stages --------------------------------------------------------------------------------

struct IngestOpts {
  std::string questions, answers, qrels, out_dir;
  bool validate_qrels = false;
};

int do_ingest(const Globals& g, const CLI::App* app, const IngestOpts& o) {
  const Corpus c = parse_corpus(o.questions, o.answers, o.qrels, o.validate_qrels);
  const fs::path dir = o.out_dir;
  fs::create_directories(dir);
  write_questions(dir / "questions.jsonl", c.questions);
  write_answers(dir / "answers.jsonl", c.answers);
  write_qrels(dir / "qrels.txt", c.qrels);
  std::map<std::string, std::size_t> communities;
  for (const auto& q : c.questions) ++communities[q.community];
  std::size_t human = 0;
  for (const auto& a : c.answers) human += a.source == AnswerSource::kHuman;
  Json s;
  s["questions"] = c.questions.size();
  s["answers"] = c.answers.size();
  s["human_answers"] = human;
  s["qrels"] = c.qrels.size();
  Json cj = Json::object();
  for (const auto& [k, v] : communities) cj[k] = v;
  s["communities"] = std::move(cj);
  write_text(dir / "ingest.json", s.dump(2) + "\n");
  finish(g, app, {o.questions, o.answers, o.qrels},
         {dir / "ingest.json", dir / "questions.jsonl", dir / "answers.jsonl", dir / "qrels.txt"});
  return 0;
}

struct SampleOpts {
  std::string questions, out;
  std::size_t cap = 3000;
};

int do_sample(const Globals& g, const CLI::App* app, const SampleOpts& o) {
  if (o.cap < 1) throw ValidationError("--cap must be >= 1");
  const auto qs = read_questions(o.questions);
  const auto kept = sample_per_community(qs, o.cap, g.seed);
  ensure_parent(o.out);
  write_questions(o.out, kept);
  log("kept " + std::to_string(kept.size()) + " of " + std::to_string(qs.size()) + " questions");
  finish(g, app, {o.questions}, {o.out});
  return 0;
}

struct ProfilesOpts {
  std::string questions, targets, out;
  std::size_t k = 5;
};

int do_profiles(const Globals& g, const CLI::App* app, const ProfilesOpts& o) {
  const auto history = read_questions(o.questions);
  const auto targets = o.targets.empty() ? history : read_questions(o.targets);
  std::string text;
  for (const auto& q : targets) {
    const UserProfile p = build_user_profile(q.user_id, history, q.created_at, o.k);
    Json j;
    j["question_id"] = q.id;
    j["user_id"] = p.user_id;
    j["top_tags"] = p.top_tags;
    j["as_of"] = p.as_of;
    text += j.dump() + "\n";
  }
  write_text(o.out, text);
  std::vector<fs::path> inputs{o.questions};
  if (!o.targets.empty()) inputs.emplace_back(o.targets);
  finish(g, app, inputs, {o.out});
  return 0;
}

struct PromptsOpts {
  std::string questions, profiles, out, model_hint;
  std::vector<std::string> types{"basic", "personalized", "contextual"};
  std::string template_basic, template_personalized, template_contextual;
};

int do_prompts(const Globals& g, const CLI::App* app, const PromptsOpts& o) {
  const auto qs = read_questions(o.questions);
  PromptTemplates templates = PromptTemplates::defaults();
  std::vector<fs::path> inputs{o.questions};
  const std::pair<PromptType, const std::string*> overrides[] = {
      {PromptType::kBasic, &o.template_basic},
      {PromptType::kPersonalized, &o.template_personalized},
      {PromptType::kContextual, &o.template_contextual}};
  for (const auto& [t, file] : overrides) {
    if (file->empty()) continue;
    templates.load_override(t, *file);
    inputs.emplace_back(*file);
  }
  std::vector<PromptType> types;
  for (const auto& t : o.types) types.push_back(parse_prompt_type(t));
  std::map<std::string, UserProfile> profiles;
  const bool personalized = std::count(types.begin(), types.end(), PromptType::kPersonalized) > 0;
  if (personalized) {
    if (o.profiles.empty()) throw ValidationError("personalized prompts need --profiles");
    profiles = read_profiles(o.profiles);
    inputs.emplace_back(o.profiles);
  }
  std::string text;
  std::size_t warnings = 0;
  for (PromptType t : types) {
    for (const auto& q : qs) {
      const UserProfile* profile = nullptr;
      if (t == PromptType::kPersonalized) {
        auto it = profiles.find(q.id);
        if (it == profiles.end()) throw ValidationError("no profile for question '" + q.id + "'");
        profile = &it->second;
      }
      RenderedPrompt p = render(q, t, profile, std::nullopt, templates);
      p.model_hint = o.model_hint;
      warnings += p.warnings.size();
      text += prompt_json(p) + "\n";
    }
  }
  if (warnings) log(std::to_string(warnings) + " prompt(s) rendered with an empty tag profile");
  write_text(o.out, text);
  finish(g, app, inputs, {o.out});
  return 0;
}

struct GenerateOpts {
  std::string prompts, out, model, endpoint = "https://api.openai.com/v1", cache_dir = "gen_cache",
                                   api_key_env = "OPENAI_API_KEY";
  double temperature = 1.0;
  int max_tokens = 500;
  std::size_t max_in_flight = 4;
  bool mock = false;
  bool fsync = false;
};

int do_generate(const Globals& g, const CLI::App* app, const GenerateOpts& o) {
  GenParams params;
  params.model_name = o.model.empty() && o.mock ? "mock-echo" : o.model;
  params.temperature = o.temperature;
  params.max_tokens = o.max_tokens;
  params.endpoint_url = o.endpoint;
  params.api_key_env = o.api_key_env;
  params.validate();
  if (o.max_in_flight < 1) throw ValidationError("--max-in-flight must be >= 1");

  const auto prompts = read_prompts(o.prompts);
  GenCache cache(o.cache_dir, o.fsync);
  std::unique_ptr<ChatTransport> transport;
  Generator::Clock clock;
  if (o.mock) {
    transport = std::make_unique<MockChatTransport>();
    clock = [] { return Timestamp{0}; };
  } else {
    transport = std::make_unique<HttpChatTransport>(params.endpoint_url, params.api_key_env);
  }
  Generator gen(cache, *transport, params, RetryPolicy{}, clock);
  const auto outcomes = gen.generate_batch(prompts, o.max_in_flight);

  std::vector<Answer> answers;
  std::size_t failed = 0, cached = 0;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& out = outcomes[i];
    if (out.record) {
      answers.push_back(to_answer(*out.record));
      cached += out.from_cache;
    } else {
      ++failed;
      log("generation failed for " + prompts[i].question_id + " (" +
          std::string(to_string(prompts[i].prompt_type)) + "): " + out.error_code + ": " + out.error);
    }
  }
  ensure_parent(o.out);
  write_answers(o.out, answers);
  log(std::to_string(answers.size()) + " answers (" + std::to_string(cached) + " from cache), " +
      std::to_string(failed) + " failed");
  finish(g, app, {o.prompts}, {o.out});
  return failed ? 1 : 0;
}

struct IndexOpts {
  std::vector<std::string> answers;
  std::string out, pool = "human", model;
};

int do_index(const Globals& g, const CLI::App* app, const IndexOpts& o) {
  const auto answers = read_answer_files(o.answers);
  std::vector<InvertedIndex::Document> docs;
  for (const auto& a : answers) {
    if (in_pool(a, o.pool, o.model)) docs.emplace_back(a.id, a.text);
  }
  const auto index = InvertedIndex::build(docs);
  ensure_parent(o.out);
  index.save(o.out);
  log("indexed " + std::to_string(index.num_docs()) + " documents, " +
      std::to_string(index.postings().size()) + " terms");
  finish(g, app, paths_of({}, o.answers), {o.out});
  return 0;
}

struct SearchOpts {
  std::string index, questions, out, tag = "bm25";
  std::size_t k = 100;
  double k1 = 1.75, b = 1.0;
};

template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

int do_search(const Globals& g, const CLI::App* app, const SearchOpts& o) {
  const Bm25Params params{o.k1, o.b};
  params.validate();
  if (o.k < 1) throw ValidationError("--k must be >= 1");
  const auto index = InvertedIndex::load(o.index);
  const auto qs = read_questions(o.questions);
  std::vector<RankedList> lists(qs.size());
  parallel_for(qs.size(), g.threads,
               [&](std::size_t i) { lists[i] = index.search(params, qs[i].query_text(), o.k); });
  RunList run;
  for (std::size_t i = 0; i < qs.size(); ++i) run[qs[i].id] = std::move(lists[i]);
  ensure_parent(o.out);
  write_trec_run(o.out, run, o.tag);
  finish(g, app, {o.index, o.questions}, {o.out});
  return 0;
}

struct TrainOpts {
  std::vector<std::string> answers;
  std::string questions, qrels, out, pool = "human", model;
  std::string negatives = "sampled", distance = "cosine";
  bool transformer_lr = false;
  TrainConfig cfg;
};

int do_train(const Globals& g, const CLI::App* app, const TrainOpts& o) {
  if (o.pool == "generated" || o.pool == "all") {
    throw ValidationError("--pool must name a single pool: human, basic, personalized or contextual");
  }
  TrainConfig cfg = o.cfg;
  cfg.seed = g.seed;
  if (o.transformer_lr) cfg.learning_rate = 5e-6;
  cfg.negatives = o.negatives == "all" ? NegativeMode::kAllInBatch : NegativeMode::kSampledOne;
  cfg.distance = o.distance == "euclidean" ? TripletDistance::kEuclidean : TripletDistance::kCosine;
  cfg.validate();

  const auto qs = read_questions(o.questions);
  const auto answers = read_answer_files(o.answers);
  std::optional<Qrels> qrels;
  std::vector<fs::path> inputs = paths_of({o.questions}, o.answers);
  if (!o.qrels.empty()) {
    qrels = read_qrels(o.qrels);
    inputs.emplace_back(o.qrels);
  }
  std::map<std::string, std::vector<const Answer*>> by_question;
  for (const auto& a : answers) {
    if (!in_pool(a, o.pool, o.model)) continue;
    if (qrels && a.source == AnswerSource::kHuman && qrels->relevance(a.question_id, a.id) < 1) continue;
    by_question[a.question_id].push_back(&a);
  }
  std::vector<TrainingPair> pairs;
  for (const auto& q : qs) {
    auto it = by_question.find(q.id);
    if (it == by_question.end()) continue;
    for (const Answer* a : it->second) pairs.push_back({q.query_text(), a->text, q.id, o.pool});
  }
  if (pairs.size() < 2) {
    throw ValidationError("training needs at least 2 (question, answer) pairs in pool '" + o.pool + "'");
  }
  TrainReport report;
  const EncoderModel model = train(pairs, cfg, o.pool, &report);
  ensure_parent(o.out);
  model.save(o.out);
  Json log_j;
  log_j["pairs"] = pairs.size();
  log_j["steps"] = report.steps;
  log_j["skipped_batches"] = report.skipped_batches;
  log_j["skipped_anchors"] = report.skipped_anchors;
  log_j["epoch_mean_loss"] = report.epoch_mean_loss;
  const fs::path log_path = fs::path(o.out).string() + ".log.json";
  write_text(log_path, log_j.dump(2) + "\n");
  if (!report.epoch_mean_loss.empty()) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch loss %.6f -> %.6f", report.epoch_mean_loss.front(),
                  report.epoch_mean_loss.back());
    log(buf);
  }
  if (report.skipped_batches) log("skipped " + std::to_string(report.skipped_batches) + " single-pair batch(es)");
  finish(g, app, inputs, {o.out, log_path});
  return 0;
}

struct RerankOpts {
  std::vector<std::string> answers;
  std::string run, questions, out, scorer = "encoder", model, endpoint, embedding_model, api_key_env,
      tag = "rerank", fused_out, fused_tag = "fused";
  std::size_t depth = 100;
  std::optional<double> lambda;
  bool raw = false;
};

int do_rerank(const Globals& g, const CLI::App* app, const RerankOpts& o) {
  if (o.depth < 1) throw ValidationError("--depth must be >= 1");
  if (o.lambda && (*o.lambda < 0.0 || *o.lambda > 1.0)) throw ValidationError("--lambda must lie in [0, 1]");
  if (o.lambda.has_value() != !o.fused_out.empty()) {
    throw ValidationError("--lambda and --fused-out must be given together");
  }
  const RunList first = truncate_run(read_trec_run(o.run), o.depth);
  const auto qs = read_questions(o.questions);
  const auto answers = read_answer_files(o.answers);
  const TextMap docs = answer_texts(answers);
  std::vector<fs::path> inputs = paths_of({o.run, o.questions}, o.answers);

  std::unique_ptr<Scorer> scorer;
  if (o.scorer == "encoder") {
    if (o.model.empty()) throw ValidationError("--scorer encoder needs --model");
    scorer = std::make_unique<EncoderScorer>(std::make_shared<EncoderModel>(EncoderModel::load(o.model)));
    inputs.emplace_back(o.model);
  } else if (o.scorer == "tfidf") {
    std::vector<std::string> collection;
    for (const auto& a : answers) collection.push_back(a.text);
    scorer = std::make_unique<TfidfScorer>(collection);
  } else {
    if (o.endpoint.empty() || o.embedding_model.empty()) {
      throw ValidationError("--scorer endpoint needs --embedding-endpoint and --embedding-model");
    }
    scorer = std::make_unique<EmbeddingEndpointScorer>(o.endpoint, o.embedding_model, o.api_key_env);
  }
  const RunList neural = rerank(first, *scorer, question_texts(qs), docs, o.depth, g.threads);
  ensure_parent(o.out);
  write_trec_run(o.out, neural, o.tag);
  std::vector<fs::path> outputs{o.out};
  if (o.lambda) {
    const RunList fused = fuse(first, neural, *o.lambda, !o.raw);
    ensure_parent(o.fused_out);
    write_trec_run(o.fused_out, fused, o.fused_tag);
    outputs.emplace_back(o.fused_out);
  }
  finish(g, app, inputs, outputs);
  return 0;
}

struct TuneOpts {
  std::string bm25_run, neural_run, qrels, out, best_out, objective = "ndcg@10";
  std::vector<double> grid;
  std::size_t depth = 100;
  bool raw = false;
};

int do_tune(const Globals& g, const CLI::App* app, const TuneOpts& o) {
  const MetricSpec objective = MetricSpec::parse(o.objective);
  const RunList bm25 = truncate_run(read_trec_run(o.bm25_run), o.depth);
  const RunList neural = truncate_run(read_trec_run(o.neural_run), o.depth);
  const Qrels qrels = read_qrels(o.qrels);
  const auto grid = o.grid.empty() ? default_lambda_grid() : o.grid;
  const LambdaSearch s = tune_lambda(bm25, neural, qrels, grid, objective, !o.raw);
  write_text(o.out, format_lambda_table(s, objective));
  std::vector<fs::path> outputs{o.out};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", s.best_lambda);
  std::cout << "best_lambda\t" << buf << "\n";
  if (!o.best_out.empty()) {
    Json j;
    j["lambda"] = s.best_lambda;
    j["objective"] = objective.id();
    j["value"] = s.best_value;
    write_text(o.best_out, j.dump(2) + "\n");
    outputs.emplace_back(o.best_out);
  }
  finish(g, app, {o.bm25_run, o.neural_run, o.qrels}, outputs);
  return 0;
}

std::vector<MetricSpec> parse_metrics(const std::vector<std::string>& names) {
  std::vector<MetricSpec> out;
  for (const auto& n : names) out.push_back(MetricSpec::parse(n));
  if (out.empty()) throw ValidationError("--metrics must name at least one metric");
  return out;
}

struct EvaluateOpts {
  std::string run, qrels, out, name = "run", format = "md";
  std::vector<std::string> metrics{"p@1", "ndcg@3", "ndcg@10", "map@100"};
  std::optional<double> lambda;
};

int do_evaluate(const Globals& g, const CLI::App* app, const EvaluateOpts& o) {
  const auto metrics = parse_metrics(o.metrics);
  const RunList run = read_trec_run(o.run);
  const Qrels qrels = read_qrels(o.qrels);
  const MetricReport rep = build_report({o.name, run, o.lambda}, {}, qrels, metrics);
  if (!rep.excluded_queries.empty()) {
    log(std::to_string(rep.excluded_queries.size()) + " query(ies) without relevant judgments excluded");
  }
  write_text(o.out, o.format == "tsv" ? rep.to_tsv() : rep.to_markdown());
  finish(g, app, {o.run, o.qrels}, {o.out});
  return 0;
}

struct CompareOpts {
  std::string baseline, baseline_name = "BM25", qrels, out, tsv_out;
  std::vector<std::string> systems, system_lambdas;
  std::vector<std::string> metrics{"p@1", "ndcg@3", "ndcg@10", "map@100"};
  double alpha = 0.01;
};

std::pair<std::string, std::string> split_eq(const std::string& s, const char* flag) {
  const auto eq = s.find('=');
  if (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) {
    throw ValidationError(std::string(flag) + " expects NAME=VALUE, got '" + s + "'");
  }
  return {s.substr(0, eq), s.substr(eq + 1)};
}

int do_compare(const Globals& g, const CLI::App* app, const CompareOpts& o) {
  const auto metrics = parse_metrics(o.metrics);
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ValidationError("--alpha must lie in (0, 1)");
  std::map<std::string, double> lambdas;
  for (const auto& s : o.system_lambdas) {
    auto [name, v] = split_eq(s, "--system-lambda");
    lambdas[name] = std::stod(v);
  }
  const Qrels qrels = read_qrels(o.qrels);
  std::vector<fs::path> inputs{o.baseline, o.qrels};
  NamedRun base{o.baseline_name, read_trec_run(o.baseline), std::nullopt};
  std::vector<NamedRun> systems;
  for (const auto& s : o.systems) {
    auto [name, path] = split_eq(s, "--system");
    if (!fs::is_regular_file(path)) throw IoError("run file not found: " + path);
    std::optional<double> lambda;
    if (auto it = lambdas.find(name); it != lambdas.end()) lambda = it->second;
    systems.push_back({name, read_trec_run(path), lambda});
    inputs.emplace_back(path);
  }
  const MetricReport rep = build_report(base, systems, qrels, metrics, o.alpha);
  write_text(o.out, rep.to_markdown());
  std::vector<fs::path> outputs{o.out};
  if (!o.tsv_out.empty()) {
    write_text(o.tsv_out, rep.to_tsv());
    outputs.emplace_back(o.tsv_out);
  }
  finish(g, app, inputs, outputs);
  return 0;
}

struct DiversityOpts {
  std::vector<std::string> answers;
  std::string questions, out, tsv_out;
  bool smooth = false;
};

int do_diversity(const Globals& g, const CLI::App* app, const DiversityOpts& o) {
  const auto qs = read_questions(o.questions);
  const auto answers = answers_for(qs, read_answer_files(o.answers));
  BleuOptions bleu;
  bleu.smooth = o.smooth;
  const DiversityReport rep = diversity_report(answers, qs, bleu);
  write_text(o.out, rep.to_markdown());
  std::vector<fs::path> outputs{o.out};
  if (!o.tsv_out.empty()) {
    write_text(o.tsv_out, rep.to_tsv());
    outputs.emplace_back(o.tsv_out);
  }
  finish(g, app, paths_of({o.questions}, o.answers), outputs);
  return 0;
}

struct OverlapOpts {
  std::vector<std::string> answers;
  std::string questions, out;
};

int do_overlap(const Globals& g, const CLI::App* app, const OverlapOpts& o) {
  const auto qs = read_questions(o.questions);
  const auto answers = answers_for(qs, read_answer_files(o.answers));
  DiversityReport rep;
  rep.overlap = overlap_report(answers, qs);
  std::size_t empty = 0;
  for (const auto& r : rep.overlap) empty += r.empty_queries;
  if (empty) log(std::to_string(empty) + " answer(s) paired with a question body without terms");
  write_text(o.out, rep.to_tsv());
  finish(g, app, paths_of({o.questions}, o.answers), {o.out});
  return 0;
}

struct AnnotateSampleOpts {
  std::vector<std::string> answers;
  std::string questions, out;
  std::size_t n = 100;
};

int do_annotate_sample(const Globals& g, const CLI::App* app, const AnnotateSampleOpts& o) {
  const auto qs = read_questions(o.questions);
  const auto answers = answers_for(qs, read_answer_files(o.answers));
  const AnnotationSample s = draw_sample(qs, answers, o.n, g.seed);
  ensure_parent(o.out);
  s.save(o.out);
  log("sample " + s.sample_id + ": " + std::to_string(s.items.size()) + " questions");
  finish(g, app, paths_of({o.questions}, o.answers), {o.out});
  return 0;
}

struct ServeOpts2 {
  std::string sample, store, bind = "127.0.0.1:8080", ui_dir;
  bool reveal = false;
};

int do_annotate_serve(const ServeOpts2& o) {
  const auto [host, port] = parse_bind_address(o.bind);
  ServeOptions so;
  so.reveal_models = o.reveal;
  so.ui_dir = o.ui_dir;
  AnnotationServer server(AnnotationSample::load(o.sample), o.store, so);
  const int bound = server.bind(host, port);
  std::cout << "serving sample " << server.sample().sample_id << " on http://" << host << ":" << bound
            << "/" << std::endl;
  server.listen();
  return 0;
}

struct AnnotateReportOpts {
  std::string sample, store, out, format = "json";
};

int do_annotate_report(const Globals& g, const CLI::App* app, const AnnotateReportOpts& o) {
  const AnnotationSample s = AnnotationSample::load(o.sample);
  const AnnotationStore store(o.store);
  const HallucinationReport rep = hallucination_report(store.records(), s);
  write_text(o.out, o.format == "md" ? rep.to_markdown() : rep.to_json());
  finish(g, app, {o.sample, o.store}, {o.out});
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  Globals g;
  for (int i = 1; i < argc; ++i) g.argv.emplace_back(argv[i]);

  CLI::App app{"Synthetic community-QA answers: generation, two-stage retrieval, evaluation and audit",
               "synthpqa"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML file with option values; [subcommand] sections apply per stage");
  app.add_option("--seed", g.seed, "Random seed for every seeded stage");
  app.add_option("--threads", g.threads, "Worker threads for parallel stages")->check(CLI::PositiveNumber);
  app.require_subcommand(1);
  app.fallthrough();

  std::vector<std::pair<CLI::App*, std::function<int()>>> stages;
  const auto in_file = [](CLI::App* sub, const char* name, std::string& var, const char* help) {
    return sub->add_option(name, var, help)->required()->check(CLI::ExistingFile);
  };
  // Repeatable; the files are read in order and concatenated.
  const auto in_files = [](CLI::App* sub, const char* name, std::vector<std::string>& var, const char* help) {
    return sub->add_option(name, var, help)->required()->check(CLI::ExistingFile)->take_all();
  };

  IngestOpts ingest;
  {
    auto* s = app.add_subcommand("ingest", "Validate a corpus and write canonical copies");
    in_file(s, "--questions", ingest.questions, "questions.jsonl");
    in_file(s, "--answers", ingest.answers, "answers.jsonl");
    in_file(s, "--qrels", ingest.qrels, "TREC qrels");
    s->add_flag("--validate-qrels", ingest.validate_qrels, "Require qrels to reference known questions");
    s->add_option("--out-dir", ingest.out_dir, "Output directory")->required();
    stages.emplace_back(s, [&, s] { return do_ingest(g, s, ingest); });
  }
  SampleOpts sample;
  {
    auto* s = app.add_subcommand("sample", "Cap the number of questions per community");
    in_file(s, "--questions", sample.questions, "questions.jsonl");
    s->add_option("--cap", sample.cap, "Maximum questions per community");
    s->add_option("--out", sample.out, "Output questions.jsonl")->required();
    stages.emplace_back(s, [&, s] { return do_sample(g, s, sample); });
  }
  ProfilesOpts profiles;
  {
    auto* s = app.add_subcommand("profiles", "Top tag profiles of each question's author");
    in_file(s, "--questions", profiles.questions, "Full question history");
    s->add_option("--targets", profiles.targets, "Questions to profile (default: --questions)")
        ->check(CLI::ExistingFile);
    s->add_option("--k", profiles.k, "Tags per profile");
    s->add_option("--out", profiles.out, "Output profiles.jsonl")->required();
    stages.emplace_back(s, [&, s] { return do_profiles(g, s, profiles); });
  }
  PromptsOpts prompts;
  {
    auto* s = app.add_subcommand("prompts", "Render generation prompts");
    in_file(s, "--questions", prompts.questions, "questions.jsonl");
    s->add_option("--profiles", prompts.profiles, "profiles.jsonl (personalized prompts)")
        ->check(CLI::ExistingFile);
    s->add_option("--types", prompts.types, "Prompt types")
        ->delimiter(',')
        ->check(CLI::IsMember({"basic", "personalized", "contextual"}));
    s->add_option("--template-basic", prompts.template_basic, "Override template file")
        ->check(CLI::ExistingFile);
    s->add_option("--template-personalized", prompts.template_personalized, "Override template file")
        ->check(CLI::ExistingFile);
    s->add_option("--template-contextual", prompts.template_contextual, "Override template file")
        ->check(CLI::ExistingFile);
    s->add_option("--model-hint", prompts.model_hint, "Model name recorded with each prompt");
    s->add_option("--out", prompts.out, "Output prompts.jsonl")->required();
    stages.emplace_back(s, [&, s] { return do_prompts(g, s, prompts); });
  }
  GenerateOpts gen;
  {
    auto* s = app.add_subcommand("generate", "Generate answers for rendered prompts");
    in_file(s, "--prompts", gen.prompts, "prompts.jsonl");
    s->add_option("--model", gen.model, "Chat model name");
    s->add_option("--endpoint", gen.endpoint, "OpenAI-compatible base URL");
    s->add_option("--temperature", gen.temperature, "Sampling temperature");
    s->add_option("--max-tokens", gen.max_tokens, "Completion token limit");
    s->add_option("--max-in-flight", gen.max_in_flight, "Concurrent requests");
    s->add_option("--cache-dir", gen.cache_dir, "Generation cache root");
    s->add_option("--api-key-env", gen.api_key_env, "Environment variable holding the API key");
    s->add_flag("--mock-llm", gen.mock, "Offline deterministic generator");
    s->add_flag("--fsync", gen.fsync, "fsync the cache after every record");
    s->add_option("--out", gen.out, "Output answers.jsonl")->required();
    stages.emplace_back(s, [&, s] { return do_generate(g, s, gen); });
  }
  IndexOpts index;
  {
    auto* s = app.add_subcommand("index", "Build the BM25 index over an answer pool");
    in_files(s, "--answers", index.answers, "answers.jsonl");
    s->add_option("--pool", index.pool, "Documents to index")->check(CLI::IsMember(kPools));
    s->add_option("--model", index.model, "Restrict generated answers to one model");
    s->add_option("--out", index.out, "Output index file")->required();
    stages.emplace_back(s, [&, s] { return do_index(g, s, index); });
  }
  SearchOpts search;
  {
    auto* s = app.add_subcommand("search", "BM25 retrieval for every question");
    in_file(s, "--index", search.index, "Index file");
    in_file(s, "--questions", search.questions, "questions.jsonl");
    s->add_option("--k", search.k, "Results per query");
    s->add_option("--k1", search.k1, "BM25 k1");
    s->add_option("--b", search.b, "BM25 b");
    s->add_option("--tag", search.tag, "Run tag");
    s->add_option("--out", search.out, "Output TREC run")->required();
    stages.emplace_back(s, [&, s] { return do_search(g, s, search); });
  }
  TrainOpts tr;
  {
    auto* s = app.add_subcommand("train", "Train the re-ranking encoder with a triplet margin loss");
    in_file(s, "--questions", tr.questions, "Training questions");
    in_files(s, "--answers", tr.answers, "answers.jsonl");
    s->add_option("--qrels", tr.qrels, "Keep only relevant human answers")->check(CLI::ExistingFile);
    s->add_option("--pool", tr.pool, "Positive answer pool")->check(CLI::IsMember(kPools));
    s->add_option("--model", tr.model, "Restrict generated answers to one model");
    s->add_option("--epochs", tr.cfg.epochs, "Epochs");
    s->add_option("--batch-size", tr.cfg.batch_size, "Pairs per batch");
    s->add_option("--lr", tr.cfg.learning_rate, "AdamW learning rate");
    s->add_flag("--transformer-lr", tr.transformer_lr, "Use the transformer learning rate 5e-6");
    s->add_option("--margin", tr.cfg.margin, "Triplet margin");
    s->add_option("--weight-decay", tr.cfg.weight_decay, "AdamW weight decay");
    s->add_option("--beta1", tr.cfg.beta1, "AdamW beta1");
    s->add_option("--beta2", tr.cfg.beta2, "AdamW beta2");
    s->add_option("--adam-eps", tr.cfg.eps, "AdamW epsilon");
    s->add_option("--hash-dim", tr.cfg.hash_dim, "Hashed feature dimension");
    s->add_option("--emb-dim", tr.cfg.emb_dim, "Embedding dimension");
    s->add_option("--negatives", tr.negatives, "sampled: one in-batch negative; all: every other pair")
        ->check(CLI::IsMember({"sampled", "all"}));
    s->add_option("--distance", tr.distance, "Triplet distance")->check(CLI::IsMember({"cosine", "euclidean"}));
    s->add_option("--out", tr.out, "Output model file")->required();
    stages.emplace_back(s, [&, s] { return do_train(g, s, tr); });
  }
  RerankOpts rr;
  {
    auto* s = app.add_subcommand("rerank", "Re-score the first-stage top candidates");
    in_file(s, "--run", rr.run, "First-stage TREC run");
    in_file(s, "--questions", rr.questions, "questions.jsonl");
    in_files(s, "--answers", rr.answers, "answers.jsonl");
    s->add_option("--scorer", rr.scorer, "Second-stage scorer")
        ->check(CLI::IsMember({"encoder", "tfidf", "endpoint"}));
    s->add_option("--model", rr.model, "Encoder model file")->check(CLI::ExistingFile);
    s->add_option("--embedding-endpoint", rr.endpoint, "Embedding service base URL");
    s->add_option("--embedding-model", rr.embedding_model, "Embedding model name");
    s->add_option("--api-key-env", rr.api_key_env, "Environment variable holding the API key");
    s->add_option("--depth", rr.depth, "Candidates re-scored per query");
    s->add_option("--tag", rr.tag, "Run tag");
    s->add_option("--out", rr.out, "Output TREC run of scorer scores")->required();
    s->add_option("--lambda", rr.lambda, "Fusion weight of the first stage");
    s->add_option("--fused-out", rr.fused_out, "Output TREC run of fused scores");
    s->add_option("--fused-tag", rr.fused_tag, "Fused run tag");
    s->add_flag("--raw-scores", rr.raw, "Fuse raw scores without min-max normalization");
    stages.emplace_back(s, [&, s] { return do_rerank(g, s, rr); });
  }
  TuneOpts tune;
  {
    auto* s = app.add_subcommand("tune-lambda", "Grid-search the fusion weight on validation queries");
    in_file(s, "--bm25-run", tune.bm25_run, "First-stage run");
    in_file(s, "--neural-run", tune.neural_run, "Re-ranked run");
    in_file(s, "--qrels", tune.qrels, "Validation qrels");
    s->add_option("--objective", tune.objective, "Metric to maximize");
    s->add_option("--grid", tune.grid, "Lambda values (default 0.0..1.0 step 0.1)")->delimiter(',');
    s->add_option("--depth", tune.depth, "Candidates per query");
    s->add_flag("--raw-scores", tune.raw, "Fuse raw scores without min-max normalization");
    s->add_option("--out", tune.out, "Output TSV")->required();
    s->add_option("--best-out", tune.best_out, "Output JSON with the chosen lambda");
    stages.emplace_back(s, [&, s] { return do_tune(g, s, tune); });
  }
  EvaluateOpts ev;
  {
    auto* s = app.add_subcommand("evaluate", "Score one run against qrels");
    in_file(s, "--run", ev.run, "TREC run");
    in_file(s, "--qrels", ev.qrels, "TREC qrels");
    s->add_option("--metrics", ev.metrics, "Metrics")->delimiter(',');
    s->add_option("--name", ev.name, "Row label");
    s->add_option("--lambda", ev.lambda, "Fusion weight shown in the table");
    s->add_option("--format", ev.format, "Output format")->check(CLI::IsMember({"md", "tsv"}));
    s->add_option("--out", ev.out, "Output table")->required();
    stages.emplace_back(s, [&, s] { return do_evaluate(g, s, ev); });
  }
  CompareOpts cmp;
  {
    auto* s = app.add_subcommand("compare", "Results table with significance marks against a baseline");
    in_file(s, "--baseline", cmp.baseline, "Baseline TREC run");
    s->add_option("--baseline-name", cmp.baseline_name, "Baseline row label");
    s->add_option("--system", cmp.systems, "NAME=RUN_FILE (repeatable)")->required();
    s->add_option("--system-lambda", cmp.system_lambdas, "NAME=LAMBDA (repeatable)");
    in_file(s, "--qrels", cmp.qrels, "TREC qrels");
    s->add_option("--metrics", cmp.metrics, "Metrics")->delimiter(',');
    s->add_option("--alpha", cmp.alpha, "Significance level after correction");
    s->add_option("--out", cmp.out, "Output Markdown table")->required();
    s->add_option("--tsv-out", cmp.tsv_out, "Output TSV table");
    stages.emplace_back(s, [&, s] { return do_compare(g, s, cmp); });
  }
  DiversityOpts div;
  {
    auto* s = app.add_subcommand("diversity", "BLEU and chrF between prompt types");
    in_file(s, "--questions", div.questions, "questions.jsonl");
    in_files(s, "--answers", div.answers, "Generated answers");
    s->add_flag("--smooth", div.smooth, "Add-one smoothing for BLEU");
    s->add_option("--out", div.out, "Output Markdown report")->required();
    s->add_option("--tsv-out", div.tsv_out, "Output TSV report");
    stages.emplace_back(s, [&, s] { return do_diversity(g, s, div); });
  }
  OverlapOpts ov;
  {
    auto* s = app.add_subcommand("overlap", "Share of question words repeated in answers");
    in_file(s, "--questions", ov.questions, "questions.jsonl");
    in_files(s, "--answers", ov.answers, "answers.jsonl");
    s->add_option("--out", ov.out, "Output TSV")->required();
    stages.emplace_back(s, [&, s] { return do_overlap(g, s, ov); });
  }
  AnnotateSampleOpts as;
  ServeOpts2 sv;
  AnnotateReportOpts ar;
  {
    auto* ann = app.add_subcommand("annotate", "Hallucination audit");
    ann->require_subcommand(1);
    auto* s = ann->add_subcommand("sample", "Draw the audit sample");
    in_file(s, "--questions", as.questions, "questions.jsonl");
    in_files(s, "--answers", as.answers, "answers.jsonl (human and generated)");
    s->add_option("--n", as.n, "Questions in the sample");
    s->add_option("--out", as.out, "Output sample.json")->required();
    stages.emplace_back(s, [&, s] { return do_annotate_sample(g, s, as); });

    auto* v = ann->add_subcommand("serve", "Serve the labeling API");
    in_file(v, "--sample", sv.sample, "sample.json");
    v->add_option("--store", sv.store, "Label store (JSONL)")->required();
    v->add_option("--bind", sv.bind, "host:port");
    v->add_option("--ui-dir", sv.ui_dir, "Static UI assets")->check(CLI::ExistingDirectory);
    v->add_flag("--reveal-models", sv.reveal, "Include model names in item payloads");
    stages.emplace_back(v, [&] { return do_annotate_serve(sv); });

    auto* r = ann->add_subcommand("report", "Incorrect-answer rates from a label store");
    in_file(r, "--sample", ar.sample, "sample.json");
    in_file(r, "--store", ar.store, "Label store (JSONL)");
    r->add_option("--format", ar.format, "Output format")->check(CLI::IsMember({"json", "md"}));
    r->add_option("--out", ar.out, "Output report")->required();
    stages.emplace_back(r, [&, r] { return do_annotate_report(g, r, ar); });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::string what = e.what();
    if (app.get_subcommands().empty()) {
      // First bare word that is not the value of a global option.
      for (std::size_t i = 0; i < g.argv.size(); ++i) {
        const std::string& a = g.argv[i];
        if (!a.empty() && a[0] == '-') continue;
        if (i > 0 && (g.argv[i - 1] == "--seed" || g.argv[i - 1] == "--threads" ||
                      g.argv[i - 1] == "--config")) {
          continue;
        }
        what = "unknown subcommand '" + a + "'";
        break;
      }
    }
    std::cerr << "synthpqa: " << what << "\n\n" << app.help();
    return 2;
  }

  for (auto& [sub, fn] : stages) {
    if (!sub->parsed()) continue;
    try {
      return fn();
    } catch (const std::exception& e) {
      std::cerr << "synthpqa " << command_path(sub) << ": error: " << e.what() << "\n";
      return 1;
    }
  }
  std::cerr << app.help();
  return 2;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv{"synthpqa"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace synthpqa
