#include "synthpqa/run.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json_io.hpp"
#include "synthpqa/error.hpp"

namespace synthpqa {

namespace {
bool ranks_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}
}  // namespace

void sort_ranked(RankedList& list) { std::sort(list.begin(), list.end(), ranks_before); }

bool is_canonical(const RankedList& list) {
  std::set<std::string_view> seen;
  for (std::size_t i = 0; i < list.size(); ++i) {
    if (!seen.insert(list[i].doc_id).second) return false;
    if (i > 0 && ranks_before(list[i], list[i - 1])) return false;
  }
  return true;
}

std::string format_score(double score) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, score);
  return std::string(buf, res.ptr);
}

std::string format_trec_run(const RunList& run, const std::string& tag) {
  std::string out;
  for (const auto& [qid, list] : run) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      out += qid;
      out += " Q0 ";
      out += list[i].doc_id;
      out += ' ';
      out += std::to_string(i + 1);
      out += ' ';
      out += format_score(list[i].score);
      out += ' ';
      out += tag;
      out += '\n';
    }
  }
  return out;
}

void write_trec_run(const std::filesystem::path& path, const RunList& run, const std::string& tag) {
  detail::write_file_atomic(path, format_trec_run(run, tag));
}

RunList read_trec_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open run file " + path.string());
  RunList run;
  std::map<std::string, std::set<std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string qid, q0, docid, rank, score_text, tag;
    if (!(ss >> qid)) continue;
    if (!(ss >> q0 >> docid >> rank >> score_text)) {
      throw ParseError(path.string(), line_no, "expected 'qid Q0 docid rank score tag'");
    }
    double score = 0.0;
    auto res = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
    if (res.ec != std::errc() || res.ptr != score_text.data() + score_text.size() ||
        !std::isfinite(score)) {
      throw ParseError(path.string(), line_no, "bad score '" + score_text + "'");
    }
    if (!seen[qid].insert(docid).second) {
      throw ParseError(path.string(), line_no, "duplicate doc '" + docid + "' for query " + qid);
    }
    run[qid].push_back({docid, score});
  }
  for (auto& [qid, list] : run) sort_ranked(list);
  return run;
}

}  // namespace synthpqa
