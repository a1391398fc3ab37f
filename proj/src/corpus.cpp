#include "synthpqa/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json_io.hpp"
#include "synthpqa/hashing.hpp"
#include "synthpqa/rng.hpp"
#include "synthpqa/text.hpp"

namespace synthpqa {

using detail::Json;

std::string_view to_string(PromptType t) {
  switch (t) {
    case PromptType::kBasic:
      return "basic";
    case PromptType::kPersonalized:
      return "personalized";
    case PromptType::kContextual:
      return "contextual";
  }
  return "basic";
}

PromptType parse_prompt_type(std::string_view s) {
  if (s == "basic") return PromptType::kBasic;
  if (s == "personalized") return PromptType::kPersonalized;
  if (s == "contextual") return PromptType::kContextual;
  throw ValidationError("unknown prompt type '" + std::string(s) +
                        "' (expected basic, personalized or contextual)");
}

// ---- Qrels -----------------------------------------------------------------

void Qrels::add(const std::string& question_id, const std::string& answer_id, int relevance) {
  if (relevance < 0) throw ValidationError("negative relevance for " + question_id);
  map_[question_id][answer_id] = relevance;
}

int Qrels::relevance(const std::string& question_id, const std::string& answer_id) const {
  auto it = map_.find(question_id);
  if (it == map_.end()) return 0;
  auto jt = it->second.find(answer_id);
  return jt == it->second.end() ? 0 : jt->second;
}

const std::map<std::string, int>& Qrels::judgments(const std::string& question_id) const {
  static const std::map<std::string, int> kEmpty;
  auto it = map_.find(question_id);
  return it == map_.end() ? kEmpty : it->second;
}

std::size_t Qrels::relevant_count(const std::string& question_id) const {
  std::size_t n = 0;
  for (const auto& [doc, rel] : judgments(question_id)) n += rel >= 1 ? 1 : 0;
  return n;
}

std::size_t Qrels::size() const {
  std::size_t n = 0;
  for (const auto& [q, m] : map_) n += m.size();
  return n;
}

// ---- JSON mapping ----------------------------------------------------------

namespace detail {

Json to_json(const Question& q) {
  Json j;
  j["id"] = q.id;
  j["title"] = q.title;
  j["body"] = q.body;
  j["tags"] = q.tags;
  j["user_id"] = q.user_id;
  j["community"] = q.community;
  j["created_at"] = q.created_at;
  return j;
}

Json to_json(const Answer& a) {
  Json j;
  j["id"] = a.id;
  j["question_id"] = a.question_id;
  j["text"] = a.text;
  j["source"] = a.source == AnswerSource::kHuman ? "human" : "generated";
  j["model_name"] = a.model_name;
  j["prompt_type"] = a.prompt_type ? std::string(to_string(*a.prompt_type)) : "none";
  j["created_at"] = a.created_at;
  return j;
}

std::string get_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string("missing field '") + key + "'");
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

std::string get_string_or(const Json& j, const char* key, std::string fallback) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return fallback;
  if (!it->is_string()) throw ValidationError(std::string("field '") + key + "' must be a string");
  return it->get<std::string>();
}

namespace {

Timestamp get_timestamp(const Json& j) {
  auto it = j.find("created_at");
  if (it == j.end() || it->is_null()) return 0;
  if (!it->is_number_integer()) throw ValidationError("field 'created_at' must be integer seconds");
  return it->get<Timestamp>();
}

}  // namespace

Question question_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  Question q;
  q.id = get_string(j, "id");
  q.title = get_string(j, "title");
  q.body = get_string(j, "body");
  if (auto it = j.find("tags"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) throw ValidationError("field 'tags' must be an array");
    for (const auto& t : *it) {
      if (!t.is_string()) throw ValidationError("tags must be strings");
      q.tags.push_back(t.get<std::string>());
    }
  }
  q.user_id = get_string_or(j, "user_id", "");
  q.community = get_string(j, "community");
  q.created_at = get_timestamp(j);
  if (q.id.empty()) throw ValidationError("empty question id");
  if (q.community.empty()) throw ValidationError("empty community for question " + q.id);
  if (trim(q.title).empty()) throw ValidationError("blank title for question " + q.id);
  if (trim(q.body).empty()) throw ValidationError("blank body for question " + q.id);
  return q;
}

Answer answer_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("record is not a JSON object");
  Answer a;
  a.id = get_string(j, "id");
  a.question_id = get_string(j, "question_id");
  a.text = get_string(j, "text");
  const std::string source = get_string_or(j, "source", "human");
  if (source == "human") {
    a.source = AnswerSource::kHuman;
  } else if (source == "generated") {
    a.source = AnswerSource::kGenerated;
  } else {
    throw ValidationError("source must be 'human' or 'generated', got '" + source + "'");
  }
  a.model_name = get_string_or(j, "model_name", "");
  const std::string pt = get_string_or(j, "prompt_type", "none");
  if (pt != "none") a.prompt_type = parse_prompt_type(pt);
  a.created_at = get_timestamp(j);
  if (a.id.empty()) throw ValidationError("empty answer id");
  if (a.source == AnswerSource::kHuman && (!a.model_name.empty() || a.prompt_type)) {
    throw ValidationError("human answer " + a.id + " must have empty model_name and prompt_type none");
  }
  if (a.source == AnswerSource::kGenerated && (a.model_name.empty() || !a.prompt_type)) {
    throw ValidationError("generated answer " + a.id + " needs model_name and a prompt_type");
  }
  return a;
}

void for_each_jsonl(const std::filesystem::path& path,
                    const std::function<void(const Json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    try {
      fn(j, line_no);
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
  }
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace detail

// ---- readers / writers -------------------------------------------------------

std::vector<Question> read_questions(const std::filesystem::path& path) {
  std::vector<Question> out;
  std::unordered_map<std::string, std::size_t> seen;
  detail::for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    Question q = detail::question_from_json(j);
    auto [it, inserted] = seen.emplace(q.id, line);
    if (!inserted) {
      throw ValidationError("duplicate question id '" + q.id + "' (first seen on line " +
                            std::to_string(it->second) + ")");
    }
    out.push_back(std::move(q));
  });
  return out;
}

std::vector<Answer> read_answers(const std::filesystem::path& path) {
  std::vector<Answer> out;
  std::unordered_map<std::string, std::size_t> seen;
  detail::for_each_jsonl(path, [&](const Json& j, std::size_t line) {
    Answer a = detail::answer_from_json(j);
    auto [it, inserted] = seen.emplace(a.id, line);
    if (!inserted) {
      throw ValidationError("duplicate answer id '" + a.id + "' (first seen on line " +
                            std::to_string(it->second) + ")");
    }
    out.push_back(std::move(a));
  });
  return out;
}

Qrels read_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string qid, iter, docid, extra;
    long long rel = 0;
    if (!(ss >> qid)) continue;  // blank line
    if (!(ss >> iter >> docid >> rel) || (ss >> extra)) {
      throw ParseError(path.string(), line_no,
                       "expected 'question_id 0 answer_id relevance'");
    }
    if (rel < 0) throw ParseError(path.string(), line_no, "negative relevance");
    qrels.add(qid, docid, static_cast<int>(rel));
  }
  return qrels;
}

void write_questions(const std::filesystem::path& path, const std::vector<Question>& qs) {
  std::string out;
  for (const auto& q : qs) out += detail::to_json(q).dump() + "\n";
  detail::write_file_atomic(path, out);
}

void write_answers(const std::filesystem::path& path, const std::vector<Answer>& as) {
  std::string out;
  for (const auto& a : as) out += detail::to_json(a).dump() + "\n";
  detail::write_file_atomic(path, out);
}

void write_qrels(const std::filesystem::path& path, const Qrels& qrels) {
  std::string out;
  for (const auto& [qid, docs] : qrels.all()) {
    for (const auto& [docid, rel] : docs) {
      out += qid + " 0 " + docid + " " + std::to_string(rel) + "\n";
    }
  }
  detail::write_file_atomic(path, out);
}

Corpus parse_corpus(const std::filesystem::path& questions_path,
                    const std::filesystem::path& answers_path,
                    const std::filesystem::path& qrels_path, bool validate_qrels) {
  Corpus c;
  c.questions = read_questions(questions_path);
  c.answers = read_answers(answers_path);
  c.qrels = read_qrels(qrels_path);

  std::set<std::string> qids;
  for (const auto& q : c.questions) qids.insert(q.id);
  for (const auto& a : c.answers) {
    if (!qids.count(a.question_id)) {
      throw ValidationError("answer '" + a.id + "' references unknown question '" +
                            a.question_id + "'");
    }
  }
  if (validate_qrels) {
    std::set<std::string> aids;
    for (const auto& a : c.answers) aids.insert(a.id);
    for (const auto& [qid, docs] : c.qrels.all()) {
      if (!qids.count(qid)) throw ValidationError("qrels reference unknown question '" + qid + "'");
      for (const auto& [docid, rel] : docs) {
        if (!aids.count(docid)) {
          throw ValidationError("qrels reference unknown answer '" + docid + "' for question '" +
                                qid + "'");
        }
      }
    }
  }
  return c;
}

// ---- sampling & profiles -----------------------------------------------------

std::vector<Question> sample_per_community(const std::vector<Question>& questions,
                                           std::size_t cap, std::uint64_t seed) {
  if (cap == 0) throw ValidationError("sample cap must be >= 1");
  std::map<std::string, std::vector<std::size_t>> by_community;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    by_community[questions[i].community].push_back(i);
  }
  std::vector<bool> keep(questions.size(), false);
  for (auto& [community, idx] : by_community) {
    if (idx.size() <= cap) {
      for (std::size_t i : idx) keep[i] = true;
      continue;
    }
    // Per-community stream so one community's draw does not depend on others.
    Rng rng(seed ^ fnv1a64(community));
    for (std::size_t i = 0; i < cap; ++i) {
      std::size_t j = i + uniform_index(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
      keep[idx[i]] = true;
    }
  }
  std::vector<Question> out;
  for (std::size_t i = 0; i < questions.size(); ++i) {
    if (keep[i]) out.push_back(questions[i]);
  }
  return out;
}

UserProfile build_user_profile(const std::string& user_id, const std::vector<Question>& questions,
                               Timestamp as_of, std::size_t k) {
  std::map<std::string, std::size_t> counts;
  for (const auto& q : questions) {
    if (q.user_id != user_id || q.created_at >= as_of) continue;
    for (const auto& t : q.tags) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  UserProfile p;
  p.user_id = user_id;
  p.as_of = as_of;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) p.top_tags.push_back(ranked[i].first);
  return p;
}

}  // namespace synthpqa
