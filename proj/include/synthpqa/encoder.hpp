#pragma once

// Second-stage scorers. The trainable one is a hashed bag-of-words encoder:
//
//   x     = sparse features, x[h(t)] += 1 + ln tf(t)   (h = FNV-1a mod hash_dim)
//   e     = W x                                      (W is emb_dim x hash_dim)
//   embed = e / ||e||
//
// trained with a triplet margin loss over in-batch negatives and AdamW.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "synthpqa/text.hpp"

namespace synthpqa {

/// Relevance scorer consumed by the re-ranking stage. Higher is more relevant;
/// identical inputs give bit-identical scores.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(std::string_view query, std::string_view doc) const = 0;
};

struct SparseFeatures {
  std::vector<std::uint32_t> index;  // ascending, unique
  std::vector<double> value;
};

struct Embedding {
  std::vector<double> unit;  // length emb_dim; all zeros when degenerate
  double norm = 0.0;         // ||W x|| before normalization
  bool zero = false;         // no features (or W x == 0): returned unnormalized
};

class EncoderModel {
 public:
  EncoderModel() = default;

  /// Uniform init in +-sqrt(6 / (hash_dim + emb_dim)) from `seed`.
  static EncoderModel initialize(std::size_t hash_dim, std::size_t emb_dim, std::uint64_t seed);

  std::size_t hash_dim() const { return hash_dim_; }
  std::size_t emb_dim() const { return emb_dim_; }
  std::uint64_t seed() const { return seed_; }

  /// Column-major weights: entry (i, j) at j * emb_dim + i, so the column of
  /// feature j is contiguous.
  std::span<const double> weights() const { return w_; }
  std::span<double> mutable_weights() { return w_; }

  SparseFeatures features(std::string_view text) const;
  Embedding embed(std::string_view text) const;
  Embedding embed(const SparseFeatures& x) const;

  std::string serialize() const;
  static EncoderModel deserialize(const std::string& bytes);
  void save(const std::filesystem::path& path) const;
  static EncoderModel load(const std::filesystem::path& path);

  bool operator==(const EncoderModel&) const = default;

 private:
  std::size_t hash_dim_ = 0;
  std::size_t emb_dim_ = 0;
  std::uint64_t seed_ = 0;
  std::vector<double> w_;
};

enum class TripletDistance { kCosine, kEuclidean };
enum class NegativeMode { kSampledOne, kAllInBatch };

struct TripletResult {
  double loss = 0.0;
  std::vector<double> gradient;  // dL/dW, same layout as EncoderModel::weights()
};

/// Cosine form: max(0, margin - s(q, pos) + s(q, neg)) with s the cosine of
/// embeddings. Euclidean form: max(0, margin + d(q, pos) - d(q, neg)) over
/// unit embeddings with d(a, b) = ||a - b + 1e-6||.
TripletResult triplet_loss(const EncoderModel& model, std::string_view query,
                           std::string_view positive, std::string_view negative, double margin,
                           TripletDistance distance = TripletDistance::kCosine);

/// Loss only (used by finite-difference checks).
double triplet_loss_value(const EncoderModel& model, std::string_view query,
                          std::string_view positive, std::string_view negative, double margin,
                          TripletDistance distance = TripletDistance::kCosine);

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  double learning_rate = 1e-3;
  double margin = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::uint64_t seed = 42;
  std::size_t hash_dim = 32768;
  std::size_t emb_dim = 64;
  NegativeMode negatives = NegativeMode::kSampledOne;
  TripletDistance distance = TripletDistance::kCosine;

  void validate() const;
};

/// One (question, relevant answer) pair. `group` identifies the question;
/// negatives are drawn only from pairs of other groups. `pool` is the answer
/// provenance ("human", "basic", "personalized", "contextual").
struct TrainingPair {
  std::string query;
  std::string positive;
  std::string group;
  std::string pool;
};

struct TrainReport {
  std::vector<double> epoch_mean_loss;
  std::size_t steps = 0;
  std::size_t skipped_batches = 0;   // tail batches of size 1
  std::size_t skipped_anchors = 0;   // anchors with no other-group pair in the batch
};

/// Seeded-shuffled mini-batch training. Every pair must carry `pool_tag`.
/// Throws Error if parameters become non-finite.
EncoderModel train(const std::vector<TrainingPair>& pairs, const TrainConfig& cfg,
                   std::string_view pool_tag, TrainReport* report = nullptr);

/// Cosine of encoder embeddings; 0 when either side has no features.
class EncoderScorer : public Scorer {
 public:
  explicit EncoderScorer(std::shared_ptr<const EncoderModel> model) : model_(std::move(model)) {}
  double score(std::string_view query, std::string_view doc) const override;

 private:
  std::shared_ptr<const EncoderModel> model_;
};

/// Reference lexical scorer: cosine between TF-IDF vectors with sublinear tf
/// (1 + ln tf) and smoothed idf ln((1 + N) / (1 + df)) + 1 over a fixed
/// collection.
class TfidfScorer : public Scorer {
 public:
  explicit TfidfScorer(const std::vector<std::string>& collection, const AnalyzerConfig& cfg = {});
  double score(std::string_view query, std::string_view doc) const override;
  double idf(const std::string& term) const;

 private:
  std::unordered_map<std::string, double> weights(std::string_view text) const;

  AnalyzerConfig cfg_;
  std::size_t num_docs_ = 0;
  std::unordered_map<std::string, std::size_t> df_;
};

/// Cosine between vectors from an OpenAI-compatible `/embeddings` endpoint.
/// Responses are memoized per text.
class EmbeddingEndpointScorer : public Scorer {
 public:
  EmbeddingEndpointScorer(std::string base_url, std::string model, std::string api_key_env = "");
  double score(std::string_view query, std::string_view doc) const override;
  std::vector<double> embed(std::string_view text) const;

 private:
  std::string base_url_;
  std::string model_;
  std::string api_key_env_;
  mutable std::mutex mu_;
  mutable std::unordered_map<std::string, std::vector<double>> cache_;
};

}  // namespace synthpqa
