#include "synthpqa/textdiv.hpp"

#include <unicode/uchar.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include "synthpqa/error.hpp"
#include "synthpqa/text.hpp"

namespace synthpqa {
namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream ss(s);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(std::move(w));
  return out;
}

template <typename Seq>
std::map<Seq, std::size_t> ngram_counts(const std::vector<typename Seq::value_type>& toks,
                                        std::size_t n) {
  std::map<Seq, std::size_t> out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    ++out[Seq(toks.begin() + static_cast<std::ptrdiff_t>(i),
              toks.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

template <typename Map>
std::size_t clipped_matches(const Map& hyp, const Map& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : hyp) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

void check_aligned(std::size_t h, std::size_t r) {
  if (h == 0 || r == 0) throw ValidationError("BLEU/chrF need non-empty corpora");
  if (h != r) throw ValidationError("hypothesis and reference lists differ in length");
}

}  // namespace

double corpus_bleu(const std::vector<std::string>& hypotheses,
                   const std::vector<std::string>& references, const BleuOptions& opts) {
  check_aligned(hypotheses.size(), references.size());
  const std::size_t N = opts.max_order;
  std::vector<std::size_t> matches(N + 1, 0), totals(N + 1, 0);
  std::size_t hyp_len = 0, ref_len = 0;
  using Gram = std::vector<std::string>;
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = split_ws(hypotheses[i]);
    const auto r = split_ws(references[i]);
    hyp_len += h.size();
    ref_len += r.size();
    for (std::size_t n = 1; n <= N; ++n) {
      if (h.size() >= n) totals[n] += h.size() - n + 1;
      matches[n] += clipped_matches(ngram_counts<Gram>(h, n), ngram_counts<Gram>(r, n));
    }
  }
  if (hyp_len == 0) return 0.0;

  double log_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 1; n <= N; ++n) {
    if (totals[n] == 0) continue;
    double num = static_cast<double>(matches[n]);
    double den = static_cast<double>(totals[n]);
    if (opts.smooth && n > 1) {
      num += 1.0;
      den += 1.0;
    }
    if (num == 0.0) return 0.0;
    log_sum += std::log(num / den);
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double bp = hyp_len > ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return bp * std::exp(log_sum / static_cast<double>(orders));
}

double chrf(const std::vector<std::string>& hypotheses, const std::vector<std::string>& references,
            const ChrfOptions& opts) {
  check_aligned(hypotheses.size(), references.size());
  const std::size_t N = opts.char_order;
  std::vector<std::size_t> matches(N + 1, 0), hyp_tot(N + 1, 0), ref_tot(N + 1, 0);
  const auto chars = [](const std::string& s) {
    std::vector<char32_t> out;
    for (char32_t c : utf8_decode(s)) {
      if (!u_isUWhiteSpace(static_cast<UChar32>(c))) out.push_back(c);
    }
    return out;
  };
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    const auto h = chars(hypotheses[i]);
    const auto r = chars(references[i]);
    for (std::size_t n = 1; n <= N; ++n) {
      const auto hc = ngram_counts<std::u32string>(h, n);
      const auto rc = ngram_counts<std::u32string>(r, n);
      if (h.size() >= n) hyp_tot[n] += h.size() - n + 1;
      if (r.size() >= n) ref_tot[n] += r.size() - n + 1;
      matches[n] += clipped_matches(hc, rc);
    }
  }
  double p_sum = 0.0, r_sum = 0.0;
  std::size_t orders = 0;
  for (std::size_t n = 1; n <= N; ++n) {
    if (hyp_tot[n] == 0 || ref_tot[n] == 0) continue;
    p_sum += static_cast<double>(matches[n]) / static_cast<double>(hyp_tot[n]);
    r_sum += static_cast<double>(matches[n]) / static_cast<double>(ref_tot[n]);
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double p = p_sum / static_cast<double>(orders);
  const double r = r_sum / static_cast<double>(orders);
  const double b2 = opts.beta * opts.beta;
  const double denom = b2 * p + r;
  if (denom == 0.0) return 0.0;
  return 100.0 * (1.0 + b2) * p * r / denom;
}

double lexical_overlap(const std::string& query_body, const std::string& answer, bool* empty_query) {
  const auto qv = tokenize(query_body);
  const std::set<std::string> q(qv.begin(), qv.end());
  if (empty_query) *empty_query = q.empty();
  if (q.empty()) return 0.0;
  const auto av = tokenize(answer);
  const std::set<std::string> a(av.begin(), av.end());
  std::size_t shared = 0;
  for (const auto& t : q) shared += a.count(t);
  return 100.0 * static_cast<double>(shared) / static_cast<double>(q.size());
}

std::vector<OverlapRow> overlap_report(const std::vector<Answer>& answers,
                                       const std::vector<Question>& questions) {
  std::map<std::string, const Question*> by_id;
  for (const auto& q : questions) by_id[q.id] = &q;
  // key: (model, prompt index; 3 = none)
  std::map<std::pair<std::string, int>, OverlapRow> rows;
  for (const auto& a : answers) {
    auto it = by_id.find(a.question_id);
    if (it == by_id.end()) {
      throw ValidationError("answer '" + a.id + "' references unknown question '" + a.question_id + "'");
    }
    const bool human = a.source == AnswerSource::kHuman;
    const std::string model = human ? "human" : a.model_name;
    const int slot = a.prompt_type ? static_cast<int>(*a.prompt_type) : 3;
    OverlapRow& row = rows[{model, slot}];
    row.model = model;
    row.prompt_type = a.prompt_type;
    bool empty = false;
    row.mean_overlap += lexical_overlap(it->second->body, a.text, &empty);
    row.empty_queries += empty ? 1 : 0;
    ++row.answers;
  }
  std::vector<OverlapRow> out;
  for (auto& [key, row] : rows) {
    row.mean_overlap /= static_cast<double>(row.answers);
    out.push_back(row);
  }
  // Human first, then models alphabetically.
  std::stable_partition(out.begin(), out.end(), [](const OverlapRow& r) { return r.model == "human"; });
  return out;
}

DiversityReport diversity_report(const std::vector<Answer>& answers,
                                 const std::vector<Question>& questions, const BleuOptions& bleu,
                                 const ChrfOptions& chrf_opts) {
  // model -> prompt -> question -> text
  std::map<std::string, std::map<int, std::map<std::string, std::string>>> groups;
  for (const auto& a : answers) {
    if (a.source != AnswerSource::kGenerated) continue;
    groups[a.model_name][static_cast<int>(*a.prompt_type)].emplace(a.question_id, a.text);
  }
  DiversityReport rep;
  static constexpr std::pair<PromptType, PromptType> kCells[] = {
      {PromptType::kBasic, PromptType::kContextual},
      {PromptType::kBasic, PromptType::kPersonalized},
      {PromptType::kContextual, PromptType::kPersonalized},
  };
  for (const auto& [model, by_type] : groups) {
    std::set<std::string> all_ids;
    for (PromptType t : kAllPromptTypes) {
      auto it = by_type.find(static_cast<int>(t));
      if (it == by_type.end()) {
        throw ValidationError("model '" + model + "' has no " + std::string(to_string(t)) + " answers");
      }
      for (const auto& [qid, text] : it->second) all_ids.insert(qid);
    }
    for (PromptType t : kAllPromptTypes) {
      const auto& g = by_type.at(static_cast<int>(t));
      std::string missing;
      for (const auto& qid : all_ids) {
        if (!g.count(qid)) missing += (missing.empty() ? "" : ", ") + qid;
      }
      if (!missing.empty()) {
        throw ValidationError("model '" + model + "', prompt " + std::string(to_string(t)) +
                              " is missing answers for: " + missing);
      }
    }
    DiversityBlock block;
    block.model = model;
    for (const auto& [row, col] : kCells) {
      std::vector<std::string> hyp, ref;
      for (const auto& qid : all_ids) {
        hyp.push_back(by_type.at(static_cast<int>(row)).at(qid));
        ref.push_back(by_type.at(static_cast<int>(col)).at(qid));
      }
      block.cells.push_back({row, col, corpus_bleu(hyp, ref, bleu), chrf(hyp, ref, chrf_opts), hyp.size()});
    }
    rep.blocks.push_back(std::move(block));
  }
  rep.overlap = overlap_report(answers, questions);
  return rep;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string title_case(PromptType t) {
  std::string s(to_string(t));
  s[0] = static_cast<char>(s[0] - 'a' + 'A');
  return s;
}

}  // namespace

std::string DiversityReport::to_markdown() const {
  std::string out =
      "Orientation: hypothesis = row prompt type, reference = column prompt type.\n\n";
  for (const char* metric : {"BLEU", "chrF"}) {
    const bool is_bleu = metric[0] == 'B';
    out += "## " + std::string(metric) + "\n\n";
    for (const auto& b : blocks) {
      out += "**" + b.model + "**\n\n| Prompt type | Contextual | Personalized |\n|---|---|---|\n";
      const auto val = [&](const DiversityCell& c) {
        return is_bleu ? fmt("%.2f", c.bleu) : fmt("%.2f", c.chrf);
      };
      out += "| Basic | " + val(b.cells[0]) + " | " + val(b.cells[1]) + " |\n";
      out += "| Contextual | - | " + val(b.cells[2]) + " |\n\n";
    }
  }
  out += "## Lexical overlap with question body (%)\n\n| Model | Prompt type | Mean overlap | Answers |\n|---|---|---|---|\n";
  for (const auto& r : overlap) {
    out += "| " + r.model + " | " + (r.prompt_type ? title_case(*r.prompt_type) : "-") + " | " +
           fmt("%.1f", r.mean_overlap) + " | " + std::to_string(r.answers) + " |\n";
  }
  return out;
}

std::string DiversityReport::to_tsv() const {
  std::string out = "kind\tmodel\trow\tcol\tvalue\tcount\n";
  for (const auto& b : blocks) {
    for (const auto& c : b.cells) {
      const std::string head = b.model + "\t" + std::string(to_string(c.row)) + "\t" +
                               std::string(to_string(c.col)) + "\t";
      out += "bleu\t" + head + fmt("%.6f", c.bleu) + "\t" + std::to_string(c.pairs) + "\n";
      out += "chrf\t" + head + fmt("%.6f", c.chrf) + "\t" + std::to_string(c.pairs) + "\n";
    }
  }
  for (const auto& r : overlap) {
    out += "overlap\t" + r.model + "\t" +
           (r.prompt_type ? std::string(to_string(*r.prompt_type)) : std::string("none")) + "\t-\t" +
           fmt("%.6f", r.mean_overlap) + "\t" + std::to_string(r.answers) + "\n";
  }
  return out;
}

}  // namespace synthpqa
