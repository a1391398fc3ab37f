#include "synthpqa/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>

#include "synthpqa/error.hpp"
#include "synthpqa/stats.hpp"

namespace synthpqa {
namespace {

int grade_of(const Judgments& judgments, const std::string& doc) {
  auto it = judgments.find(doc);
  return it == judgments.end() ? 0 : it->second;
}

}  // namespace

double precision_at_1(const RankedList& run, const Judgments& judgments) {
  if (run.empty()) return 0.0;
  return grade_of(judgments, run.front().doc_id) >= 1 ? 1.0 : 0.0;
}

double ndcg_at_k(const RankedList& run, const Judgments& judgments, std::size_t k) {
  if (k == 0) throw ValidationError("ndcg cutoff must be >= 1");
  std::vector<int> ideal;
  for (const auto& [doc, g] : judgments) {
    if (g > 0) ideal.push_back(g);
  }
  if (ideal.empty()) return 0.0;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  double idcg = 0.0;
  for (std::size_t i = 0; i < ideal.size() && i < k; ++i) {
    idcg += ideal[i] / std::log2(static_cast<double>(i) + 2.0);
  }
  double dcg = 0.0;
  for (std::size_t i = 0; i < run.size() && i < k; ++i) {
    const int g = grade_of(judgments, run[i].doc_id);
    if (g > 0) dcg += g / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / idcg;
}

double map_at_k(const RankedList& run, const Judgments& judgments, std::size_t k) {
  if (k == 0) throw ValidationError("map cutoff must be >= 1");
  std::size_t total_relevant = 0;
  for (const auto& [doc, g] : judgments) total_relevant += g >= 1 ? 1 : 0;
  if (total_relevant == 0) return 0.0;
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < run.size() && i < k; ++i) {
    if (grade_of(judgments, run[i].doc_id) >= 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  return sum / static_cast<double>(total_relevant);
}

MetricSpec MetricSpec::parse(std::string_view s) {
  std::string lower;
  for (char c : s) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  const auto at = lower.find('@');
  if (at == std::string::npos) throw ValidationError("metric id needs a cutoff, e.g. ndcg@10: " + lower);
  const std::string name = lower.substr(0, at);
  std::size_t k = 0;
  try {
    std::size_t used = 0;
    k = std::stoul(lower.substr(at + 1), &used);
    if (used != lower.size() - at - 1) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ValidationError("bad metric cutoff in '" + lower + "'");
  }
  if (k == 0) throw ValidationError("metric cutoff must be >= 1");
  MetricSpec m;
  m.k = k;
  if (name == "p" || name == "precision") {
    if (k != 1) throw ValidationError("only p@1 is supported");
    m.kind = Kind::kPrecision;
  } else if (name == "ndcg") {
    m.kind = Kind::kNdcg;
  } else if (name == "map") {
    m.kind = Kind::kMap;
  } else {
    throw ValidationError("unknown metric '" + lower + "'");
  }
  return m;
}

std::string MetricSpec::id() const {
  switch (kind) {
    case Kind::kPrecision:
      return "p@" + std::to_string(k);
    case Kind::kNdcg:
      return "ndcg@" + std::to_string(k);
    case Kind::kMap:
      return "map@" + std::to_string(k);
  }
  return {};
}

std::string MetricSpec::label() const {
  switch (kind) {
    case Kind::kPrecision:
      return "P@" + std::to_string(k);
    case Kind::kNdcg:
      return "NDCG@" + std::to_string(k);
    case Kind::kMap:
      return "MAP@" + std::to_string(k);
  }
  return {};
}

double MetricSpec::evaluate(const RankedList& run, const Judgments& judgments) const {
  switch (kind) {
    case Kind::kPrecision:
      return precision_at_1(run, judgments);
    case Kind::kNdcg:
      return ndcg_at_k(run, judgments, k);
    case Kind::kMap:
      return map_at_k(run, judgments, k);
  }
  return 0.0;
}

const std::vector<MetricSpec>& standard_metrics() {
  static const std::vector<MetricSpec> kStandard = {
      {MetricSpec::Kind::kPrecision, 1},
      {MetricSpec::Kind::kNdcg, 3},
      {MetricSpec::Kind::kNdcg, 10},
      {MetricSpec::Kind::kMap, 100},
  };
  return kStandard;
}

PerQueryScores evaluate(const RunList& run, const Qrels& qrels, const MetricSpec& metric,
                        std::vector<std::string>* excluded) {
  static const RankedList kEmpty;
  PerQueryScores out;
  for (const auto& [qid, judgments] : qrels.all()) {
    if (qrels.relevant_count(qid) == 0) {
      if (excluded) excluded->push_back(qid);
      continue;
    }
    auto it = run.find(qid);
    out[qid] = metric.evaluate(it == run.end() ? kEmpty : it->second, judgments);
  }
  return out;
}

double mean(const PerQueryScores& scores) {
  if (scores.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [q, v] : scores) s += v;
  return s / static_cast<double>(scores.size());
}

TTestResult paired_ttest_bonferroni(const PerQueryScores& a, const PerQueryScores& b,
                                    std::size_t num_comparisons, double alpha) {
  if (num_comparisons == 0) throw ValidationError("number of comparisons must be >= 1");
  if (a.size() != b.size()) throw ValidationError("paired t-test: query sets differ in size");
  std::vector<double> d;
  d.reserve(a.size());
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first) {
      throw ValidationError("paired t-test: query '" + ia->first + "' not present in both runs");
    }
    d.push_back(ia->second - ib->second);
  }
  const std::size_t n = d.size();
  if (n < 2) throw ValidationError("paired t-test needs at least 2 queries");

  TTestResult r;
  r.n = n;
  double sum = 0.0;
  for (double x : d) sum += x;
  const double mu = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mu) * (x - mu);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  r.mean_difference = mu;

  if (sd == 0.0) {
    if (mu == 0.0) {
      r.t = 0.0;
      r.p = 1.0;
    } else {
      r.t = mu > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      r.p = 0.0;
      r.degenerate = true;
    }
  } else {
    r.t = mu / (sd / std::sqrt(static_cast<double>(n)));
    r.p = stats::student_t_two_sided_p(r.t, static_cast<double>(n - 1));
  }
  r.p_adjusted = std::min(1.0, static_cast<double>(num_comparisons) * r.p);
  r.significant = r.p_adjusted < alpha;
  return r;
}

MetricReport build_report(const NamedRun& baseline, const std::vector<NamedRun>& systems,
                          const Qrels& qrels, const std::vector<MetricSpec>& metrics,
                          double alpha) {
  MetricReport rep;
  rep.metrics = metrics;
  rep.alpha = alpha;
  rep.num_comparisons = std::max<std::size_t>(1, systems.size());

  const auto score_run = [&](const NamedRun& r, bool record_excluded) {
    ReportRow row;
    row.name = r.name;
    row.lambda = r.lambda;
    for (const auto& m : metrics) {
      PerQueryScores s = evaluate(r.run, qrels, m, record_excluded ? &rep.excluded_queries : nullptr);
      record_excluded = false;
      row.means.push_back(mean(s));
      row.significant.push_back(false);
      rep.per_query[r.name][m.id()] = std::move(s);
    }
    return row;
  };

  rep.rows.push_back(score_run(baseline, true));
  for (const auto& sys : systems) {
    ReportRow row = score_run(sys, false);
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      const auto& id = metrics[i].id();
      TTestResult t = paired_ttest_bonferroni(rep.per_query[sys.name][id],
                                              rep.per_query[baseline.name][id],
                                              rep.num_comparisons, alpha);
      row.significant[i] = t.significant && t.mean_difference > 0.0;
      row.tests.push_back(t);
    }
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string lambda_cell(const std::optional<double>& l) {
  return l ? fixed(*l, 1) : std::string("-");
}

}  // namespace

std::string MetricReport::to_markdown() const {
  std::string out = "| Model |";
  for (const auto& m : metrics) out += " " + m.label() + " |";
  out += " λ |\n|---|";
  for (std::size_t i = 0; i < metrics.size(); ++i) out += "---|";
  out += "---|\n";
  for (const auto& row : rows) {
    out += "| " + row.name + " |";
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      out += " " + fixed(row.means[i], 3) + (row.significant[i] ? "*" : "") + " |";
    }
    out += " " + lambda_cell(row.lambda) + " |\n";
  }
  out += "\n`*` two-sided paired t-test vs " + (rows.empty() ? std::string("baseline") : rows[0].name) +
         ", Bonferroni m=" + std::to_string(num_comparisons) + ", alpha=" + fixed(alpha, 2) + "\n";
  return out;
}

std::string MetricReport::to_tsv() const {
  std::string out = "model";
  for (const auto& m : metrics) out += "\t" + m.label();
  out += "\tlambda\n";
  for (const auto& row : rows) {
    out += row.name;
    for (std::size_t i = 0; i < metrics.size(); ++i) {
      out += "\t" + fixed(row.means[i], 6) + (row.significant[i] ? "*" : "");
    }
    out += "\t" + lambda_cell(row.lambda) + "\n";
  }
  return out;
}

}  // namespace synthpqa
