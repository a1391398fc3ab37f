#include "synthpqa/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <map>

#include "http_client.hpp"
#include "json_io.hpp"
#include "synthpqa/error.hpp"
#include "synthpqa/hashing.hpp"
#include "synthpqa/rng.hpp"
#include "synthpqa/simd/kernels.hpp"

namespace synthpqa {

// ---- model -------------------------------------------------------------------

EncoderModel EncoderModel::initialize(std::size_t hash_dim, std::size_t emb_dim,
                                      std::uint64_t seed) {
  if (hash_dim == 0 || emb_dim == 0) throw ValidationError("encoder dimensions must be >= 1");
  if (hash_dim > UINT32_MAX) throw ValidationError("hash_dim must fit in 32 bits");
  EncoderModel m;
  m.hash_dim_ = hash_dim;
  m.emb_dim_ = emb_dim;
  m.seed_ = seed;
  m.w_.resize(hash_dim * emb_dim);
  const double bound = std::sqrt(6.0 / static_cast<double>(hash_dim + emb_dim));
  Rng rng(seed);
  for (double& w : m.w_) w = (2.0 * uniform_unit(rng) - 1.0) * bound;
  return m;
}

SparseFeatures EncoderModel::features(std::string_view text) const {
  std::map<std::string, std::size_t> tf;
  for (auto& t : tokenize(text)) ++tf[t];
  std::map<std::uint32_t, double> acc;
  for (const auto& [term, count] : tf) {
    const auto slot = static_cast<std::uint32_t>(fnv1a64(term) % hash_dim_);
    acc[slot] += 1.0 + std::log(static_cast<double>(count));
  }
  SparseFeatures x;
  x.index.reserve(acc.size());
  x.value.reserve(acc.size());
  for (const auto& [j, v] : acc) {
    x.index.push_back(j);
    x.value.push_back(v);
  }
  return x;
}

Embedding EncoderModel::embed(std::string_view text) const { return embed(features(text)); }

Embedding EncoderModel::embed(const SparseFeatures& x) const {
  const auto& k = simd::kernels();
  Embedding e;
  e.unit.assign(emb_dim_, 0.0);
  for (std::size_t f = 0; f < x.index.size(); ++f) {
    k.axpy(x.value[f], w_.data() + static_cast<std::size_t>(x.index[f]) * emb_dim_, e.unit.data(),
           emb_dim_);
  }
  e.norm = std::sqrt(k.sum_squares(e.unit.data(), emb_dim_));
  if (e.norm == 0.0) {
    e.zero = true;
    return e;
  }
  k.scale(1.0 / e.norm, e.unit.data(), emb_dim_);
  return e;
}

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'P', 'Q', 'A', 'E', 'N', 'C', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw ValidationError("encoder checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[pos++])) << (8 * i);
  return v;
}

}  // namespace

std::string EncoderModel::serialize() const {
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  put_u64(out, kCheckpointVersion);
  put_u64(out, hash_dim_);
  put_u64(out, emb_dim_);
  put_u64(out, seed_);
  out.reserve(out.size() + w_.size() * 8);
  for (double w : w_) {
    std::uint64_t bits;
    std::memcpy(&bits, &w, sizeof bits);
    put_u64(out, bits);
  }
  return out;
}

EncoderModel EncoderModel::deserialize(const std::string& bytes) {
  if (bytes.size() < sizeof kCheckpointMagic ||
      bytes.compare(0, sizeof kCheckpointMagic, kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw ValidationError("not an encoder checkpoint (bad magic)");
  }
  std::size_t pos = sizeof kCheckpointMagic;
  if (get_u64(bytes, pos) != kCheckpointVersion) throw ValidationError("unsupported checkpoint version");
  EncoderModel m;
  m.hash_dim_ = get_u64(bytes, pos);
  m.emb_dim_ = get_u64(bytes, pos);
  m.seed_ = get_u64(bytes, pos);
  if (m.hash_dim_ == 0 || m.emb_dim_ == 0 || m.hash_dim_ > UINT32_MAX ||
      (bytes.size() - pos) / 8 != m.hash_dim_ * m.emb_dim_ || (bytes.size() - pos) % 8 != 0) {
    throw ValidationError("encoder checkpoint has inconsistent dimensions");
  }
  m.w_.resize(m.hash_dim_ * m.emb_dim_);
  for (double& w : m.w_) {
    std::uint64_t bits = get_u64(bytes, pos);
    std::memcpy(&w, &bits, sizeof w);
    if (!std::isfinite(w)) throw ValidationError("encoder checkpoint holds non-finite weights");
  }
  return m;
}

void EncoderModel::save(const std::filesystem::path& path) const {
  detail::write_file_atomic(path, serialize());
}

EncoderModel EncoderModel::load(const std::filesystem::path& path) {
  return deserialize(detail::read_file(path));
}

// ---- triplet loss ----------------------------------------------------------------

namespace {

constexpr double kPairwiseEps = 1e-6;

/// Dense gradient buffer that remembers which columns were written so they can
/// be cleared cheaply between steps.
class GradientBuffer {
 public:
  GradientBuffer(std::size_t hash_dim, std::size_t emb_dim)
      : emb_dim_(emb_dim), g_(hash_dim * emb_dim, 0.0), touched_(hash_dim, 0) {}

  /// g[:, j] += scale * x_j * grad_e for every feature j of x.
  void add_outer(const std::vector<double>& grad_e, const SparseFeatures& x, double scale) {
    const auto& k = simd::kernels();
    for (std::size_t f = 0; f < x.index.size(); ++f) {
      const std::size_t j = x.index[f];
      if (!touched_[j]) {
        touched_[j] = 1;
        cols_.push_back(j);
      }
      k.axpy(scale * x.value[f], grad_e.data(), g_.data() + j * emb_dim_, emb_dim_);
    }
  }

  void clear() {
    for (std::size_t j : cols_) {
      std::fill_n(g_.begin() + static_cast<std::ptrdiff_t>(j * emb_dim_), emb_dim_, 0.0);
      touched_[j] = 0;
    }
    cols_.clear();
  }

  const std::vector<double>& dense() const { return g_; }
  std::vector<double> take() { return std::move(g_); }

 private:
  std::size_t emb_dim_;
  std::vector<double> g_;
  std::vector<char> touched_;
  std::vector<std::size_t> cols_;
};

/// dL/de from dL/du for u = e / ||e||: (g - (g . u) u) / ||e||.
std::vector<double> through_normalization(const std::vector<double>& grad_u, const Embedding& e) {
  std::vector<double> out(grad_u.size(), 0.0);
  if (e.zero) return out;
  const auto& k = simd::kernels();
  const double proj = k.dot(grad_u.data(), e.unit.data(), grad_u.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (grad_u[i] - proj * e.unit[i]) / e.norm;
  }
  return out;
}

double pair_distance(const std::vector<double>& a, const std::vector<double>& b,
                     std::vector<double>* diff_out) {
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i] + kPairwiseEps;
  const double d = std::sqrt(simd::kernels().sum_squares(diff.data(), diff.size()));
  if (diff_out) *diff_out = std::move(diff);
  return d;
}

/// Hinge argument and, when active and requested, dL/du for each role.
struct TripletGrad {
  double arg = 0.0;
  std::vector<double> gq, gp, gn;
};

TripletGrad triplet_terms(const Embedding& q, const Embedding& p, const Embedding& n,
                          double margin, TripletDistance distance, bool want_grad) {
  const auto& k = simd::kernels();
  const std::size_t dim = q.unit.size();
  TripletGrad r;
  if (distance == TripletDistance::kCosine) {
    const double sp = k.dot(q.unit.data(), p.unit.data(), dim);
    const double sn = k.dot(q.unit.data(), n.unit.data(), dim);
    r.arg = margin - sp + sn;
    if (!want_grad || r.arg <= 0.0) return r;
    r.gq.resize(dim);
    r.gp.resize(dim);
    r.gn.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      r.gq[i] = n.unit[i] - p.unit[i];
      r.gp[i] = -q.unit[i];
      r.gn[i] = q.unit[i];
    }
    return r;
  }
  std::vector<double> dqp, dqn;
  const double d_pos = pair_distance(q.unit, p.unit, want_grad ? &dqp : nullptr);
  const double d_neg = pair_distance(q.unit, n.unit, want_grad ? &dqn : nullptr);
  r.arg = margin + d_pos - d_neg;
  if (!want_grad || r.arg <= 0.0) return r;
  r.gq.assign(dim, 0.0);
  r.gp.assign(dim, 0.0);
  r.gn.assign(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    const double a = d_pos > 0.0 ? dqp[i] / d_pos : 0.0;
    const double b = d_neg > 0.0 ? dqn[i] / d_neg : 0.0;
    r.gq[i] = a - b;
    r.gp[i] = -a;
    r.gn[i] = b;
  }
  return r;
}

}  // namespace

TripletResult triplet_loss(const EncoderModel& model, std::string_view query,
                           std::string_view positive, std::string_view negative, double margin,
                           TripletDistance distance) {
  if (!(margin > 0.0)) throw ValidationError("triplet margin must be > 0");
  const SparseFeatures fq = model.features(query);
  const SparseFeatures fp = model.features(positive);
  const SparseFeatures fn = model.features(negative);
  const Embedding q = model.embed(fq);
  const Embedding p = model.embed(fp);
  const Embedding n = model.embed(fn);
  TripletGrad t = triplet_terms(q, p, n, margin, distance, true);

  TripletResult out;
  out.loss = std::max(0.0, t.arg);
  GradientBuffer g(model.hash_dim(), model.emb_dim());
  if (t.arg > 0.0) {
    g.add_outer(through_normalization(t.gq, q), fq, 1.0);
    g.add_outer(through_normalization(t.gp, p), fp, 1.0);
    g.add_outer(through_normalization(t.gn, n), fn, 1.0);
  }
  out.gradient = g.take();
  return out;
}

double triplet_loss_value(const EncoderModel& model, std::string_view query,
                          std::string_view positive, std::string_view negative, double margin,
                          TripletDistance distance) {
  const Embedding q = model.embed(query);
  const Embedding p = model.embed(positive);
  const Embedding n = model.embed(negative);
  return std::max(0.0, triplet_terms(q, p, n, margin, distance, false).arg);
}

// ---- training ---------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(margin > 0.0)) throw ValidationError("margin must be > 0");
  if (batch_size < 2) throw ValidationError("batch_size must be >= 2 for in-batch negatives");
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("AdamW betas must lie in [0, 1)");
  }
  if (!(eps > 0.0) || weight_decay < 0.0) throw ValidationError("invalid AdamW eps/weight_decay");
  if (hash_dim == 0 || emb_dim == 0) throw ValidationError("encoder dimensions must be >= 1");
}

EncoderModel train(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                   std::string_view pool_tag, TrainReport* report) {
  cfg.validate();
  if (pairs.size() < 2) throw ValidationError("training needs at least 2 pairs");
  for (const auto& p : pairs) {
    if (p.pool != pool_tag) {
      throw ValidationError("training pair from pool '" + p.pool + "' in a '" +
                            std::string(pool_tag) + "' run; pools must not be mixed");
    }
  }

  EncoderModel model = EncoderModel::initialize(cfg.hash_dim, cfg.emb_dim, cfg.seed);
  TrainReport local;
  TrainReport& rep = report ? *report : local;
  rep = TrainReport{};
  if (cfg.epochs == 0) return model;

  std::vector<SparseFeatures> fq, fp;
  fq.reserve(pairs.size());
  fp.reserve(pairs.size());
  for (const auto& p : pairs) {
    fq.push_back(model.features(p.query));
    fp.push_back(model.features(p.positive));
  }

  const auto& k = simd::kernels();
  const std::size_t nparams = model.weights().size();
  const std::size_t dim = cfg.emb_dim;
  std::vector<double> m(nparams, 0.0), v(nparams, 0.0);
  GradientBuffer grad(cfg.hash_dim, cfg.emb_dim);
  // Shuffling and negative sampling use a stream separate from initialization.
  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(pairs.size());
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle(order, rng);
    double epoch_loss = 0.0;
    std::size_t epoch_anchors = 0;

    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const std::size_t bsz = end - start;
      if (bsz < 2) {
        ++rep.skipped_batches;
        continue;
      }
      std::vector<Embedding> eq(bsz), ep(bsz);
      for (std::size_t b = 0; b < bsz; ++b) {
        eq[b] = model.embed(fq[order[start + b]]);
        ep[b] = model.embed(fp[order[start + b]]);
      }
      std::vector<std::vector<double>> gq(bsz, std::vector<double>(dim, 0.0));
      std::vector<std::vector<double>> gp(bsz, std::vector<double>(dim, 0.0));

      // (anchor, negative, weight) after sampling; weight spreads an anchor's
      // unit of loss across its negatives.
      struct Term {
        std::size_t anchor, neg;
        double weight;
      };
      std::vector<Term> terms;
      std::size_t anchors = 0;
      for (std::size_t a = 0; a < bsz; ++a) {
        const std::string& group = pairs[order[start + a]].group;
        std::vector<std::size_t> candidates;
        for (std::size_t c = 0; c < bsz; ++c) {
          if (pairs[order[start + c]].group != group) candidates.push_back(c);
        }
        if (candidates.empty()) {
          ++rep.skipped_anchors;
          continue;
        }
        ++anchors;
        if (cfg.negatives == NegativeMode::kSampledOne) {
          terms.push_back({a, candidates[uniform_index(rng, candidates.size())], 1.0});
        } else {
          const double w = 1.0 / static_cast<double>(candidates.size());
          for (std::size_t c : candidates) terms.push_back({a, c, w});
        }
      }
      if (anchors == 0) continue;

      // Batch objective: mean over anchors of each anchor's (weighted) hinge.
      const double inv = 1.0 / static_cast<double>(anchors);
      for (const auto& t : terms) {
        TripletGrad tg = triplet_terms(eq[t.anchor], ep[t.anchor], ep[t.neg], cfg.margin,
                                       cfg.distance, true);
        if (tg.arg <= 0.0) continue;
        epoch_loss += t.weight * tg.arg;
        const double s = t.weight * inv;
        k.axpy(s, tg.gq.data(), gq[t.anchor].data(), dim);
        k.axpy(s, tg.gp.data(), gp[t.anchor].data(), dim);
        k.axpy(s, tg.gn.data(), gp[t.neg].data(), dim);
      }
      epoch_anchors += anchors;

      for (std::size_t b = 0; b < bsz; ++b) {
        grad.add_outer(through_normalization(gq[b], eq[b]), fq[order[start + b]], 1.0);
        grad.add_outer(through_normalization(gp[b], ep[b]), fp[order[start + b]], 1.0);
      }

      ++step;
      const simd::AdamWStep st{cfg.learning_rate,
                               cfg.beta1,
                               cfg.beta2,
                               cfg.eps,
                               cfg.weight_decay,
                               1.0 - std::pow(cfg.beta1, static_cast<double>(step)),
                               1.0 - std::pow(cfg.beta2, static_cast<double>(step))};
      auto w = model.mutable_weights();
      k.adamw_step(w.data(), m.data(), v.data(), grad.dense().data(), nparams, st);
      grad.clear();
      if (!std::isfinite(k.sum_squares(w.data(), nparams))) {
        throw Error("encoder training diverged: non-finite weights at step " + std::to_string(step));
      }
    }
    rep.epoch_mean_loss.push_back(epoch_anchors ? epoch_loss / static_cast<double>(epoch_anchors)
                                                : 0.0);
  }
  rep.steps = step;
  return model;
}

// ---- scorers -------------------------------------------------------------------------

double EncoderScorer::score(std::string_view query, std::string_view doc) const {
  const Embedding q = model_->embed(query);
  const Embedding d = model_->embed(doc);
  if (q.zero || d.zero) return 0.0;
  return simd::kernels().dot(q.unit.data(), d.unit.data(), q.unit.size());
}

TfidfScorer::TfidfScorer(const std::vector<std::string>& collection, const AnalyzerConfig& cfg)
    : cfg_(cfg), num_docs_(collection.size()) {
  for (const auto& doc : collection) {
    auto terms = tokenize(doc, cfg_);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto& t : terms) ++df_[t];
  }
}

double TfidfScorer::idf(const std::string& term) const {
  auto it = df_.find(term);
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(num_docs_)) / (1.0 + df)) + 1.0;
}

std::unordered_map<std::string, double> TfidfScorer::weights(std::string_view text) const {
  std::unordered_map<std::string, double> tf;
  for (auto& t : tokenize(text, cfg_)) tf[t] += 1.0;
  for (auto& [t, w] : tf) w = (1.0 + std::log(w)) * idf(t);
  return tf;
}

double TfidfScorer::score(std::string_view query, std::string_view doc) const {
  const auto q = weights(query);
  const auto d = weights(doc);
  if (q.empty() || d.empty()) return 0.0;
  // Ordered accumulation keeps the result independent of hash-map iteration.
  std::map<std::string_view, double> qs(q.begin(), q.end());
  double dot = 0.0, nq = 0.0, nd = 0.0;
  for (const auto& [t, w] : qs) {
    nq += w * w;
    auto it = d.find(std::string(t));
    if (it != d.end()) dot += w * it->second;
  }
  std::map<std::string_view, double> ds(d.begin(), d.end());
  for (const auto& [t, w] : ds) nd += w * w;
  return dot / (std::sqrt(nq) * std::sqrt(nd));
}

EmbeddingEndpointScorer::EmbeddingEndpointScorer(std::string base_url, std::string model,
                                                 std::string api_key_env)
    : base_url_(std::move(base_url)), model_(std::move(model)), api_key_env_(std::move(api_key_env)) {}

std::vector<double> EmbeddingEndpointScorer::embed(std::string_view text) const {
  const std::string key(text);
  {
    std::lock_guard lk(mu_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  detail::Json req;
  req["model"] = model_;
  req["input"] = key;
  std::map<std::string, std::string> headers;
  if (!api_key_env_.empty()) {
    if (const char* k = std::getenv(api_key_env_.c_str()); k != nullptr && *k != '\0') {
      headers["Authorization"] = std::string("Bearer ") + k;
    }
  }
  const auto res = detail::http_post_json(base_url_, "/embeddings", req.dump(), headers);
  if (res.status != 200) {
    throw Error("embedding endpoint " + base_url_ + " failed: " +
                (res.status ? "HTTP " + std::to_string(res.status) : res.error));
  }
  std::vector<double> vec;
  try {
    const auto j = detail::Json::parse(res.body);
    for (const auto& x : j.at("data").at(0).at("embedding")) vec.push_back(x.get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed embedding response: ") + e.what());
  }
  std::lock_guard lk(mu_);
  return cache_.emplace(key, std::move(vec)).first->second;
}

double EmbeddingEndpointScorer::score(std::string_view query, std::string_view doc) const {
  const auto q = embed(query);
  const auto d = embed(doc);
  if (q.size() != d.size()) throw Error("embedding endpoint returned vectors of different sizes");
  const auto& k = simd::kernels();
  const double nq = std::sqrt(k.sum_squares(q.data(), q.size()));
  const double nd = std::sqrt(k.sum_squares(d.data(), d.size()));
  if (nq == 0.0 || nd == 0.0) return 0.0;
  return k.dot(q.data(), d.data(), q.size()) / (nq * nd);
}

}  // namespace synthpqa
