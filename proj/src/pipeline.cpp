#include "synthpqa/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "synthpqa/error.hpp"

namespace synthpqa {

RunList rerank(const RunList& first_stage, const Scorer& scorer, const TextMap& queries,
               const TextMap& docs, std::size_t depth, std::size_t threads) {
  if (depth == 0) throw ValidationError("rerank depth must be >= 1");
  std::vector<const std::pair<const std::string, RankedList>*> work;
  for (const auto& entry : first_stage) {
    if (!queries.count(entry.first)) {
      throw ValidationError("no text for query '" + entry.first + "'");
    }
    const auto& list = entry.second;
    for (std::size_t i = 0; i < list.size() && i < depth; ++i) {
      if (!docs.count(list[i].doc_id)) {
        throw ValidationError("no text for document '" + list[i].doc_id + "'");
      }
    }
    work.push_back(&entry);
  }

  std::vector<RankedList> results(work.size());
  const auto run_one = [&](std::size_t w) {
    const auto& [qid, list] = *work[w];
    const std::string& qtext = queries.at(qid);
    RankedList out;
    for (std::size_t i = 0; i < list.size() && i < depth; ++i) {
      out.push_back({list[i].doc_id, scorer.score(qtext, docs.at(list[i].doc_id))});
    }
    sort_ranked(out);
    results[w] = std::move(out);
  };

  threads = std::max<std::size_t>(1, std::min(threads, work.size()));
  if (threads == 1) {
    for (std::size_t w = 0; w < work.size(); ++w) run_one(w);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t w = next++; w < work.size(); w = next++) {
          try {
            run_one(w);
          } catch (...) {
            std::lock_guard lk(failure_mu);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  RunList out;
  for (std::size_t w = 0; w < work.size(); ++w) out.emplace(work[w]->first, std::move(results[w]));
  return out;
}

namespace {

std::map<std::string, double> normalized(const RankedList& list, bool normalize) {
  std::map<std::string, double> out;
  if (list.empty()) return out;
  double lo = list.front().score;
  double hi = list.front().score;
  for (const auto& d : list) {
    lo = std::min(lo, d.score);
    hi = std::max(hi, d.score);
  }
  const double range = hi - lo;
  for (const auto& d : list) {
    if (!normalize) {
      out[d.doc_id] = d.score;
    } else {
      out[d.doc_id] = range > 0.0 ? (d.score - lo) / range : 1.0;
    }
  }
  return out;
}

}  // namespace

RunList fuse(const RunList& bm25_run, const RunList& neural_run, double lambda, bool normalize) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
  if (bm25_run.size() != neural_run.size()) {
    throw ValidationError("fusion: runs cover different query sets");
  }
  RunList out;
  for (const auto& [qid, first] : bm25_run) {
    auto it = neural_run.find(qid);
    if (it == neural_run.end()) throw ValidationError("fusion: query '" + qid + "' missing from neural run");
    const auto a = normalized(first, normalize);
    const auto b = normalized(it->second, normalize);
    if (a.size() != b.size()) {
      throw ValidationError("fusion: candidate sets differ for query '" + qid + "'");
    }
    RankedList fused;
    fused.reserve(a.size());
    for (const auto& [doc, sa] : a) {
      auto jt = b.find(doc);
      if (jt == b.end()) {
        throw ValidationError("fusion: document '" + doc + "' missing from neural run for query '" +
                              qid + "'");
      }
      fused.push_back({doc, lambda * sa + (1.0 - lambda) * jt->second});
    }
    sort_ranked(fused);
    out.emplace(qid, std::move(fused));
  }
  return out;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
  return g;
}

LambdaSearch tune_lambda(const RunList& bm25_val, const RunList& neural_val, const Qrels& qrels,
                         const std::vector<double>& grid, const MetricSpec& objective,
                         bool normalize) {
  if (qrels.empty()) throw ValidationError("tune_lambda: empty qrels");
  if (grid.empty()) throw ValidationError("tune_lambda: empty grid");
  for (double l : grid) {
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("tune_lambda: grid value outside [0, 1]");
  }
  LambdaSearch res;
  bool first = true;
  for (double l : grid) {
    const double v = mean(evaluate(fuse(bm25_val, neural_val, l, normalize), qrels, objective));
    res.table.emplace_back(l, v);
    if (first || v > res.best_value || (v == res.best_value && l > res.best_lambda)) {
      res.best_lambda = l;
      res.best_value = v;
      first = false;
    }
  }
  return res;
}

std::string format_lambda_table(const LambdaSearch& search, const MetricSpec& objective) {
  std::string out = "lambda\t" + objective.id() + "\n";
  char buf[64];
  for (const auto& [l, v] : search.table) {
    std::snprintf(buf, sizeof buf, "%.1f\t%.6f\n", l, v);
    out += buf;
  }
  return out;
}

}  // namespace synthpqa
