#include "synthpqa/annotation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <httplib.h>

#include <chrono>
#include <fstream>

#include "json_io.hpp"
#include "synthpqa/error.hpp"
#include "synthpqa/hashing.hpp"
#include "synthpqa/rng.hpp"

namespace synthpqa {

using detail::Json;

std::string_view to_string(Label l) {
  switch (l) {
    case Label::kCorrect:
      return "correct";
    case Label::kHallucinated:
      return "hallucinated";
    case Label::kUnsure:
      return "unsure";
  }
  return "unsure";
}

Label parse_label(std::string_view s) {
  if (s == "correct") return Label::kCorrect;
  if (s == "hallucinated") return Label::kHallucinated;
  if (s == "unsure") return Label::kUnsure;
  throw ValidationError("label must be one of: correct, hallucinated, unsure (got '" +
                        std::string(s) + "')");
}

// ---- sample ------------------------------------------------------------------------

namespace {

Json answer_json(const SampleAnswer& a) {
  Json j;
  j["answer_id"] = a.answer_id;
  j["text"] = a.text;
  j["source"] = a.source == AnswerSource::kHuman ? "human" : "generated";
  j["model_name"] = a.model_name;
  j["prompt_type"] = a.prompt_type ? std::string(to_string(*a.prompt_type)) : "none";
  j["blinded_tag"] = a.blinded_tag;
  return j;
}

std::string blinded_tag(std::size_t i) {
  if (i < 26) return std::string(1, static_cast<char>('A' + i));
  return "A" + std::to_string(i);
}

std::string model_label(const SampleAnswer& a) {
  return a.source == AnswerSource::kHuman ? "human" : a.model_name;
}

std::string prompt_label(const SampleAnswer& a) {
  return a.prompt_type ? std::string(to_string(*a.prompt_type)) : "none";
}

}  // namespace

std::string AnnotationSample::to_json() const {
  Json j;
  j["sample_id"] = sample_id;
  j["seed"] = seed;
  Json items_j = Json::array();
  for (const auto& it : items) {
    Json ij;
    ij["question_id"] = it.question_id;
    ij["community"] = it.community;
    ij["title"] = it.title;
    ij["body"] = it.body;
    Json as = Json::array();
    for (const auto& a : it.answers) as.push_back(answer_json(a));
    ij["answers"] = std::move(as);
    items_j.push_back(std::move(ij));
  }
  j["items"] = std::move(items_j);
  return j.dump(2) + "\n";
}

AnnotationSample AnnotationSample::from_json(const std::string& text) {
  AnnotationSample s;
  try {
    const Json j = Json::parse(text);
    s.sample_id = detail::get_string(j, "sample_id");
    s.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& ij : j.at("items")) {
      SampleItem it;
      it.question_id = detail::get_string(ij, "question_id");
      it.community = detail::get_string(ij, "community");
      it.title = detail::get_string(ij, "title");
      it.body = detail::get_string(ij, "body");
      for (const auto& aj : ij.at("answers")) {
        SampleAnswer a;
        a.answer_id = detail::get_string(aj, "answer_id");
        a.text = detail::get_string(aj, "text");
        a.source = detail::get_string(aj, "source") == "human" ? AnswerSource::kHuman
                                                              : AnswerSource::kGenerated;
        a.model_name = detail::get_string_or(aj, "model_name", "");
        const std::string pt = detail::get_string_or(aj, "prompt_type", "none");
        if (pt != "none") a.prompt_type = parse_prompt_type(pt);
        a.blinded_tag = detail::get_string_or(aj, "blinded_tag", "");
        it.answers.push_back(std::move(a));
      }
      s.items.push_back(std::move(it));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed annotation sample: ") + e.what());
  }
  return s;
}

void AnnotationSample::save(const std::filesystem::path& path) const {
  detail::write_file_atomic(path, to_json());
}

AnnotationSample AnnotationSample::load(const std::filesystem::path& path) {
  return from_json(detail::read_file(path));
}

const SampleAnswer* AnnotationSample::find_answer(const std::string& answer_id,
                                                  const SampleItem** item) const {
  for (const auto& it : items) {
    for (const auto& a : it.answers) {
      if (a.answer_id == answer_id) {
        if (item) *item = &it;
        return &a;
      }
    }
  }
  return nullptr;
}

std::map<std::string, std::size_t> community_quota(
    const std::map<std::string, std::size_t>& community_sizes, std::size_t n) {
  std::map<std::string, std::size_t> quota;
  if (community_sizes.empty()) return quota;
  const std::size_t c = community_sizes.size();
  std::size_t i = 0;
  std::size_t shortfall = 0;
  for (const auto& [name, size] : community_sizes) {
    std::size_t q = n / c + (i < n % c ? 1 : 0);
    if (q > size) {
      shortfall += q - size;
      q = size;
    }
    quota[name] = q;
    ++i;
  }
  while (shortfall > 0) {
    bool placed = false;
    for (const auto& [name, size] : community_sizes) {
      if (shortfall == 0) break;
      if (quota[name] < size) {
        ++quota[name];
        --shortfall;
        placed = true;
      }
    }
    if (!placed) break;  // corpus smaller than n
  }
  return quota;
}

AnnotationSample draw_sample(const std::vector<Question>& questions,
                             const std::vector<Answer>& answers, std::size_t n,
                             std::uint64_t seed) {
  AnnotationSample sample;
  sample.seed = seed;
  std::map<std::string, std::vector<std::size_t>> by_community;
  for (std::size_t i = 0; i < questions.size(); ++i) by_community[questions[i].community].push_back(i);
  if (n > 0 && by_community.empty()) {
    throw ValidationError("cannot draw an annotation sample from a corpus with no communities");
  }
  std::map<std::string, std::size_t> sizes;
  for (const auto& [c, idx] : by_community) sizes[c] = idx.size();
  const auto quota = n == 0 ? std::map<std::string, std::size_t>{} : community_quota(sizes, n);

  std::map<std::string, std::vector<const Answer*>> answers_by_q;
  for (const auto& a : answers) answers_by_q[a.question_id].push_back(&a);

  std::string id_material = std::to_string(seed);
  for (auto& [community, idx] : by_community) {
    const std::size_t take = quota.count(community) ? quota.at(community) : 0;
    if (take == 0) continue;
    Rng rng(seed ^ fnv1a64(community));
    for (std::size_t i = 0; i < take; ++i) {
      std::size_t j = i + uniform_index(rng, idx.size() - i);
      std::swap(idx[i], idx[j]);
    }
    std::vector<std::size_t> chosen(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take));
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t qi : chosen) {
      const Question& q = questions[qi];
      SampleItem item{q.id, q.community, q.title, q.body, {}};
      for (const Answer* a : answers_by_q[q.id]) {
        item.answers.push_back({a->id, a->text, a->source, a->model_name, a->prompt_type, ""});
      }
      std::sort(item.answers.begin(), item.answers.end(),
                [](const SampleAnswer& x, const SampleAnswer& y) { return x.answer_id < y.answer_id; });
      Rng order_rng(seed ^ fnv1a64(q.id) ^ 0x5bd1e995ULL);
      shuffle(item.answers, order_rng);
      for (std::size_t k = 0; k < item.answers.size(); ++k) item.answers[k].blinded_tag = blinded_tag(k);
      id_material += "|" + q.id;
      sample.items.push_back(std::move(item));
    }
  }
  sample.sample_id = sha256_hex(id_material).substr(0, 12);
  return sample;
}

// ---- records & store ---------------------------------------------------------------

std::string AnnotationRecord::to_json() const {
  Json j;
  j["annotator"] = annotator;
  j["question_id"] = question_id;
  j["answer_id"] = answer_id;
  j["model_name"] = model_name;
  j["prompt_type"] = prompt_type;
  j["label"] = synthpqa::to_string(label);
  j["note"] = note;
  j["timestamp"] = timestamp;
  return j.dump();
}

AnnotationRecord AnnotationRecord::from_json(const std::string& line) {
  const Json j = Json::parse(line);
  AnnotationRecord r;
  r.annotator = detail::get_string(j, "annotator");
  r.question_id = detail::get_string_or(j, "question_id", "");
  r.answer_id = detail::get_string(j, "answer_id");
  r.model_name = detail::get_string_or(j, "model_name", "");
  r.prompt_type = detail::get_string_or(j, "prompt_type", "none");
  r.label = parse_label(detail::get_string(j, "label"));
  r.note = detail::get_string_or(j, "note", "");
  r.timestamp = j.value("timestamp", Timestamp{0});
  return r;
}

AnnotationStore::AnnotationStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path_.parent_path(), ec);
  }
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("label store not writable: " + path_.string());
  ::close(fd);
  std::ifstream in(path_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      AnnotationRecord r = AnnotationRecord::from_json(line);
      latest_.insert_or_assign({r.annotator, r.answer_id}, std::move(r));
    } catch (const std::exception& e) {
      if (in.peek() == std::ifstream::traits_type::eof()) break;  // torn tail
      throw ParseError(path_.string(), line_no, e.what());
    }
  }
}

void AnnotationStore::put(const AnnotationRecord& rec) {
  const std::string line = rec.to_json() + "\n";
  std::lock_guard lk(mu_);
  const int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("label store not writable: " + path_.string());
  const ssize_t n = ::write(fd, line.data(), line.size());
  ::fsync(fd);
  ::close(fd);
  if (n != static_cast<ssize_t>(line.size())) throw IoError("short write to " + path_.string());
  latest_.insert_or_assign({rec.annotator, rec.answer_id}, rec);
}

std::vector<AnnotationRecord> AnnotationStore::records() const {
  std::lock_guard lk(mu_);
  std::vector<AnnotationRecord> out;
  out.reserve(latest_.size());
  for (const auto& [key, r] : latest_) out.push_back(r);
  return out;
}

bool AnnotationStore::labeled(const std::string& annotator, const std::string& answer_id) const {
  std::lock_guard lk(mu_);
  return latest_.count({annotator, answer_id}) > 0;
}

// ---- report ---------------------------------------------------------------------------

std::optional<double> RateCell::rate() const {
  if (denominator() == 0) return std::nullopt;
  return 100.0 * static_cast<double>(hallucinated) / static_cast<double>(denominator());
}

void RateCell::add(Label l) {
  switch (l) {
    case Label::kCorrect:
      ++correct;
      break;
    case Label::kHallucinated:
      ++hallucinated;
      break;
    case Label::kUnsure:
      ++unsure;
      break;
  }
}

HallucinationReport hallucination_report(const std::vector<AnnotationRecord>& records,
                                         const AnnotationSample& sample) {
  HallucinationReport rep;
  // Every model, prompt type and community of the sample gets a row, so ones
  // without judgments show up with a zero denominator.
  for (const auto& item : sample.items) {
    rep.by_community[item.community];
    for (const auto& a : item.answers) {
      rep.by_model[model_label(a)];
      rep.by_model_prompt[{model_label(a), prompt_label(a)}];
      rep.by_model_community[{model_label(a), item.community}];
    }
  }
  for (const auto& r : records) {
    const SampleItem* item = nullptr;
    const SampleAnswer* a = sample.find_answer(r.answer_id, &item);
    const std::string model = a ? model_label(*a) : (r.model_name.empty() ? "unknown" : r.model_name);
    const std::string prompt = a ? prompt_label(*a) : r.prompt_type;
    const std::string community = item ? item->community : "unknown";
    rep.by_model[model].add(r.label);
    rep.by_model_prompt[{model, prompt}].add(r.label);
    rep.by_community[community].add(r.label);
    rep.by_model_community[{model, community}].add(r.label);
    ++rep.records;
  }
  return rep;
}

namespace {

Json cell_json(const RateCell& c) {
  Json j;
  j["correct"] = c.correct;
  j["hallucinated"] = c.hallucinated;
  j["unsure"] = c.unsure;
  j["denominator"] = c.denominator();
  if (auto r = c.rate()) {
    j["rate"] = *r;
  } else {
    j["rate"] = nullptr;
    j["flag"] = c.unsure > 0 ? "all_unsure" : "no_judgments";
  }
  return j;
}

}  // namespace

std::string HallucinationReport::to_json() const {
  Json j;
  j["records"] = records;
  Json m = Json::object();
  for (const auto& [k, c] : by_model) m[k] = cell_json(c);
  j["by_model"] = std::move(m);
  Json mp = Json::array();
  for (const auto& [k, c] : by_model_prompt) {
    Json e = cell_json(c);
    e["model"] = k.first;
    e["prompt_type"] = k.second;
    mp.push_back(std::move(e));
  }
  j["by_model_prompt"] = std::move(mp);
  Json cm = Json::object();
  for (const auto& [k, c] : by_community) cm[k] = cell_json(c);
  j["by_community"] = std::move(cm);
  Json mc = Json::array();
  for (const auto& [k, c] : by_model_community) {
    Json e = cell_json(c);
    e["model"] = k.first;
    e["community"] = k.second;
    mc.push_back(std::move(e));
  }
  j["by_model_community"] = std::move(mc);
  return j.dump(2) + "\n";
}

namespace {

std::string rate_text(const RateCell& c) {
  const auto r = c.rate();
  if (!r) return c.unsure > 0 ? "undefined (all unsure)" : "n/a (no judgments)";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", *r);
  return buf;
}

std::string cell_row(const RateCell& c) {
  return rate_text(c) + " | " + std::to_string(c.hallucinated) + " | " +
         std::to_string(c.correct) + " | " + std::to_string(c.unsure) + " | " +
         std::to_string(c.denominator()) + " |\n";
}

}  // namespace

std::string HallucinationReport::to_markdown() const {
  std::string out = "### Incorrect-answer rate by model\n\n";
  out += "| model | rate | hallucinated | correct | unsure | denominator |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const auto& [model, c] : by_model) out += "| " + model + " | " + cell_row(c);
  out += "\n### By model and prompt type\n\n";
  out += "| model | prompt | rate | hallucinated | correct | unsure | denominator |\n";
  out += "|---|---|---|---|---|---|---|\n";
  for (const auto& [k, c] : by_model_prompt) out += "| " + k.first + " | " + k.second + " | " + cell_row(c);
  out += "\n### By community\n\n";
  out += "| community | rate | hallucinated | correct | unsure | denominator |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const auto& [community, c] : by_community) out += "| " + community + " | " + cell_row(c);
  return out;
}

// ---- server ------------------------------------------------------------------------------

std::pair<std::string, int> parse_bind_address(const std::string& bind) {
  const auto colon = bind.rfind(':');
  if (colon == std::string::npos || colon == 0) {
    throw ValidationError("bind address must look like host:port, got '" + bind + "'");
  }
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(bind.substr(colon + 1), &used);
    if (used != bind.size() - colon - 1) port = -1;
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) throw ValidationError("bad port in bind address '" + bind + "'");
  return {bind.substr(0, colon), port};
}

namespace {

constexpr const char* kFallbackPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>Answer audit</title></head>
<body>
<h1>Answer audit service</h1>
<p>The annotator UI assets were not provided (start with <code>--ui-dir</code>).
The JSON API is available at <code>/api/sample/next?annotator=NAME</code>,
<code>/api/labels</code> and <code>/api/report</code>.</p>
</body></html>
)";

void send_error(httplib::Response& res, int status, const std::string& msg) {
  res.status = status;
  res.set_content(Json{{"error", msg}}.dump(), "application/json");
}

}  // namespace

struct AnnotationServer::Impl {
  httplib::Server server;
};

AnnotationServer::AnnotationServer(AnnotationSample sample, std::filesystem::path store_path,
                                   ServeOptions opts)
    : sample_(std::move(sample)),
      store_(std::move(store_path)),
      opts_(std::move(opts)),
      impl_(std::make_unique<Impl>()) {
  auto& srv = impl_->server;

  srv.Get("/api/sample/next", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string annotator = req.get_param_value("annotator");
    if (annotator.empty()) return send_error(res, 400, "missing 'annotator' query parameter");
    std::size_t index = 0;
    for (const auto& item : sample_.items) {
      ++index;
      bool pending = false;
      for (const auto& a : item.answers) pending = pending || !store_.labeled(annotator, a.answer_id);
      if (!pending) continue;
      Json j;
      j["done"] = false;
      j["sample_id"] = sample_.sample_id;
      j["question_id"] = item.question_id;
      j["index"] = index;
      j["total"] = sample_.items.size();
      j["question"] = {{"title", item.title}, {"body", item.body}, {"community", item.community}};
      Json answers = Json::array();
      for (const auto& a : item.answers) {
        Json aj{{"answer_id", a.answer_id},
                {"text", a.text},
                {"blinded_tag", a.blinded_tag},
                {"labeled", store_.labeled(annotator, a.answer_id)}};
        if (opts_.reveal_models) {
          aj["model_name"] = model_label(a);
          aj["prompt_type"] = prompt_label(a);
        }
        answers.push_back(std::move(aj));
      }
      j["answers"] = std::move(answers);
      res.set_content(j.dump(), "application/json");
      return;
    }
    res.set_content(Json{{"done", true}, {"sample_id", sample_.sample_id}, {"total", sample_.items.size()}}.dump(),
                    "application/json");
  });

  srv.Post("/api/labels", [this](const httplib::Request& req, httplib::Response& res) {
    Json body;
    try {
      body = Json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      return send_error(res, 400, "request body is not valid JSON");
    }
    if (!body.is_object()) return send_error(res, 400, "request body must be a JSON object");
    AnnotationRecord rec;
    try {
      rec.annotator = detail::get_string(body, "annotator");
      rec.answer_id = detail::get_string(body, "answer_id");
      rec.label = parse_label(detail::get_string(body, "label"));
      rec.note = detail::get_string_or(body, "note", "");
      rec.question_id = detail::get_string_or(body, "question_id", "");
    } catch (const ValidationError& e) {
      return send_error(res, 400, e.what());
    }
    if (rec.annotator.empty()) return send_error(res, 400, "annotator must be non-empty");
    const SampleItem* item = nullptr;
    const SampleAnswer* a = sample_.find_answer(rec.answer_id, &item);
    if (!a) return send_error(res, 400, "answer '" + rec.answer_id + "' is not in this sample");
    if (!rec.question_id.empty() && rec.question_id != item->question_id) {
      return send_error(res, 400, "answer '" + rec.answer_id + "' does not belong to question '" +
                                      rec.question_id + "'");
    }
    rec.question_id = item->question_id;
    rec.model_name = model_label(*a);
    rec.prompt_type = prompt_label(*a);
    rec.timestamp = std::chrono::duration_cast<std::chrono::seconds>(
                        std::chrono::system_clock::now().time_since_epoch())
                        .count();
    try {
      store_.put(rec);
    } catch (const IoError& e) {
      return send_error(res, 500, e.what());
    }
    res.status = 201;
    res.set_content(rec.to_json(), "application/json");
  });

  srv.Get("/api/report", [this](const httplib::Request&, httplib::Response& res) {
    res.set_content(hallucination_report(store_.records(), sample_).to_json(), "application/json");
  });

  if (!opts_.ui_dir.empty()) {
    if (!srv.set_mount_point("/", opts_.ui_dir.string())) {
      throw IoError("UI asset directory not found: " + opts_.ui_dir.string());
    }
  } else {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kFallbackPage, "text/html; charset=utf-8");
    });
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::bind(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void AnnotationServer::start() {
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void AnnotationServer::listen() { impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace synthpqa
