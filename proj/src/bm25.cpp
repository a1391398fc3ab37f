#include "synthpqa/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "json_io.hpp"
#include "synthpqa/error.hpp"
#include "synthpqa/simd/kernels.hpp"

namespace synthpqa {

void Bm25Params::validate() const {
  if (!(k1 > 0.0)) throw ValidationError("BM25 k1 must be > 0");
  if (!(b >= 0.0 && b <= 1.0)) throw ValidationError("BM25 b must lie in [0, 1]");
}

InvertedIndex InvertedIndex::build(const std::vector<Document>& docs, const AnalyzerConfig& cfg) {
  InvertedIndex idx;
  idx.analyzer_ = cfg;
  std::unordered_set<std::string> seen;
  idx.doc_ids_.reserve(docs.size());
  idx.doc_lengths_.reserve(docs.size());
  std::unordered_map<std::string, std::uint32_t> counts;
  for (std::size_t ord = 0; ord < docs.size(); ++ord) {
    const auto& [id, text] = docs[ord];
    if (!seen.insert(id).second) throw ValidationError("duplicate document id '" + id + "'");
    if (ord > UINT32_MAX - 1) throw ValidationError("too many documents for 32-bit ordinals");
    std::vector<std::string> terms = tokenize(text, cfg);
    idx.doc_ids_.push_back(id);
    idx.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
    counts.clear();
    for (auto& t : terms) ++counts[t];
    for (auto& [term, tf] : counts) {
      PostingList& pl = idx.postings_[term];
      pl.docs.push_back(static_cast<std::uint32_t>(ord));
      pl.tfs.push_back(tf);
    }
  }
  idx.finalize();
  return idx;
}

void InvertedIndex::finalize() {
  double total = 0.0;
  for (auto len : doc_lengths_) total += len;
  avgdl_ = doc_lengths_.empty() ? 0.0 : total / static_cast<double>(doc_lengths_.size());
}

const PostingList* InvertedIndex::find(const std::string& term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? nullptr : &it->second;
}

std::uint32_t InvertedIndex::df(const std::string& term) const {
  const PostingList* pl = find(term);
  return pl ? static_cast<std::uint32_t>(pl->docs.size()) : 0;
}

std::uint32_t InvertedIndex::tf(const std::string& term, std::uint32_t ordinal) const {
  const PostingList* pl = find(term);
  if (!pl) return 0;
  auto it = std::lower_bound(pl->docs.begin(), pl->docs.end(), ordinal);
  if (it == pl->docs.end() || *it != ordinal) return 0;
  return pl->tfs[static_cast<std::size_t>(it - pl->docs.begin())];
}

double InvertedIndex::idf(const std::string& term) const {
  const double n = static_cast<double>(num_docs());
  const double d = static_cast<double>(df(term));
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

namespace {

std::vector<std::string> unique_sorted(std::vector<std::string> terms) {
  std::sort(terms.begin(), terms.end());
  terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
  return terms;
}

double length_ratio(std::uint32_t len, double avgdl) {
  // Only reachable with every document empty, where no term has postings.
  if (avgdl <= 0.0) return 1.0;
  return static_cast<double>(len) / avgdl;
}

}  // namespace

double InvertedIndex::score(const Bm25Params& params, const std::vector<std::string>& query_terms,
                            std::uint32_t ordinal) const {
  if (ordinal >= num_docs()) throw std::out_of_range("document ordinal out of range");
  const double norm =
      params.k1 * (1.0 - params.b + params.b * length_ratio(doc_lengths_[ordinal], avgdl_));
  double total = 0.0;
  for (const auto& t : unique_sorted(query_terms)) {
    const std::uint32_t f = tf(t, ordinal);
    if (f == 0) continue;
    const double tfd = static_cast<double>(f);
    total += idf(t) * (tfd / (tfd + norm));
  }
  return total;
}

RankedList InvertedIndex::search(const Bm25Params& params, const std::string& query,
                                 std::size_t k) const {
  return search_terms(params, tokenize(query, analyzer_), k);
}

RankedList InvertedIndex::search_terms(const Bm25Params& params,
                                       const std::vector<std::string>& query_terms,
                                       std::size_t k) const {
  RankedList out;
  const std::size_t n = num_docs();
  if (n == 0 || k == 0) return out;

  std::vector<double> doc_norm(n);
  for (std::size_t i = 0; i < n; ++i) {
    doc_norm[i] = params.k1 * (1.0 - params.b + params.b * length_ratio(doc_lengths_[i], avgdl_));
  }
  std::vector<double> acc(n, 0.0);
  std::vector<char> touched(n, 0);
  const auto& kern = simd::kernels();
  for (const auto& t : unique_sorted(query_terms)) {
    const PostingList* pl = find(t);
    if (!pl) continue;
    kern.bm25_accumulate(pl->docs.data(), pl->tfs.data(), pl->docs.size(), doc_norm.data(), idf(t),
                         acc.data());
    for (auto d : pl->docs) touched[d] = 1;
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (touched[i] && acc[i] > 0.0) out.push_back({doc_ids_[i], acc[i]});
  }
  const auto before = [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.doc_id < b.doc_id;
  };
  if (out.size() > k) {
    std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(k), out.end(), before);
    out.resize(k);
  } else {
    std::sort(out.begin(), out.end(), before);
  }
  return out;
}

// ---- serialization -------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'S', 'P', 'Q', 'A', 'B', 'M', '2', '5'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_ += s;
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw ValidationError("index file truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(b_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(b_[pos_++])) << (8 * i);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string InvertedIndex::serialize() const {
  Writer w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(kVersion);
  w.u8(analyzer_.lowercase ? 1 : 0);
  w.u64(doc_ids_.size());
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    w.str(doc_ids_[i]);
    w.u32(doc_lengths_[i]);
  }
  w.u64(postings_.size());
  for (const auto& [term, pl] : postings_) {
    w.str(term);
    w.u64(pl.docs.size());
    for (std::size_t i = 0; i < pl.docs.size(); ++i) {
      w.u32(pl.docs[i]);
      w.u32(pl.tfs[i]);
    }
  }
  return w.take();
}

InvertedIndex InvertedIndex::deserialize(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) {
    throw ValidationError("not a BM25 index file (bad magic)");
  }
  if (std::uint32_t v = r.u32(); v != kVersion) {
    throw ValidationError("unsupported index version " + std::to_string(v));
  }
  InvertedIndex idx;
  idx.analyzer_.lowercase = r.u8() != 0;
  const std::uint64_t n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    idx.doc_ids_.push_back(r.str());
    idx.doc_lengths_.push_back(r.u32());
  }
  const std::uint64_t terms = r.u64();
  for (std::uint64_t t = 0; t < terms; ++t) {
    std::string term = r.str();
    PostingList pl;
    const std::uint64_t len = r.u64();
    for (std::uint64_t i = 0; i < len; ++i) {
      std::uint32_t d = r.u32();
      if (d >= n || (!pl.docs.empty() && d <= pl.docs.back())) {
        throw ValidationError("corrupt posting list for term '" + term + "'");
      }
      pl.docs.push_back(d);
      pl.tfs.push_back(r.u32());
    }
    idx.postings_.emplace(std::move(term), std::move(pl));
  }
  if (!r.done()) throw ValidationError("trailing bytes in index file");
  idx.finalize();
  return idx;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  detail::write_file_atomic(path, serialize());
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  return deserialize(detail::read_file(path));
}

}  // namespace synthpqa
