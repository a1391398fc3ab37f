#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "synthpqa/encoder.hpp"
#include "synthpqa/error.hpp"
#include "synthpqa/hashing.hpp"
#include "test_support.hpp"
#include "toy_data.hpp"

using namespace synthpqa;
namespace ts = testing_support;

namespace {

double norm2(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
  return d / (norm2(a) * norm2(b));
}

std::string random_text(std::mt19937_64& g, std::size_t vocab, std::size_t len) {
  std::string s;
  for (std::size_t i = 0; i < len; ++i) s += (i ? " t" : "t") + std::to_string(g() % vocab);
  return s;
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("embeddings are unit length and deterministic") {
    const auto m = EncoderModel::initialize(256, 16, 42);
    std::mt19937_64 g(1);
    for (int i = 0; i < 50; ++i) {
      const auto text = random_text(g, 100, 1 + g() % 20);
      const auto e = m.embed(text);
      CHECK_FALSE(e.zero);
      CHECK(std::abs(norm2(e.unit) - 1.0) < 1e-9);
      CHECK(m.embed(text).unit == e.unit);
    }
  }

  TEST_CASE("features use sublinear counts at FNV-1a buckets") {
    const auto m = EncoderModel::initialize(97, 4, 1);
    const auto x = m.features("Rome rome ROME paris");
    std::map<std::uint32_t, double> expect;
    expect[static_cast<std::uint32_t>(fnv1a64("rome") % 97)] += 1 + std::log(3.0);
    expect[static_cast<std::uint32_t>(fnv1a64("paris") % 97)] += 1.0;
    REQUIRE(x.index.size() == expect.size());
    std::size_t i = 0;
    for (const auto& [idx, val] : expect) {
      CHECK(x.index[i] == idx);
      CHECK(x.value[i] == doctest::Approx(val).epsilon(1e-15));
      ++i;
    }
  }

  TEST_CASE("word order does not change the embedding") {
    const auto m = EncoderModel::initialize(512, 8, 3);
    std::mt19937_64 g(2);
    for (int i = 0; i < 20; ++i) {
      std::vector<std::string> words;
      for (int w = 0; w < 12; ++w) words.push_back("w" + std::to_string(g() % 9));
      std::string a, b;
      for (const auto& w : words) a += w + " ";
      std::shuffle(words.begin(), words.end(), g);
      for (const auto& w : words) b += w + " ";
      CHECK(m.embed(a).unit == m.embed(b).unit);
    }
  }

  TEST_CASE("empty text yields a flagged zero embedding and score 0") {
    auto m = std::make_shared<EncoderModel>(EncoderModel::initialize(64, 8, 4));
    const auto e = m->embed("  ,, !");
    CHECK(e.zero);
    CHECK(norm2(e.unit) == 0.0);
    EncoderScorer s(m);
    CHECK(s.score("", "anything") == 0.0);
    CHECK(std::abs(s.score("some words", "some words") - 1.0) < 1e-9);
  }

  TEST_CASE("identical positive and negative give loss equal to the margin") {
    const auto m = EncoderModel::initialize(64, 8, 5);
    const auto r = triplet_loss(m, "alpha beta", "gamma delta", "gamma delta", 0.5);
    CHECK(r.loss == doctest::Approx(0.5).epsilon(1e-12));
  }

  TEST_CASE("loss is exactly the hinge of margin - s(q,p) + s(q,n)") {
    const auto m = EncoderModel::initialize(128, 8, 6);
    std::mt19937_64 g(7);
    for (int i = 0; i < 100; ++i) {
      const auto q = random_text(g, 40, 6), p = random_text(g, 40, 6), n = random_text(g, 40, 6);
      const double gamma = 0.1 + (g() % 10) / 10.0;
      const auto eq = m.embed(q).unit, ep = m.embed(p).unit, en = m.embed(n).unit;
      const double direct = std::max(0.0, gamma - cosine(eq, ep) + cosine(eq, en));
      CHECK(triplet_loss_value(m, q, p, n, gamma) == doctest::Approx(direct).epsilon(1e-12));
      // Swapping positive and negative flips the similarity gap.
      const double swapped = std::max(0.0, gamma - cosine(eq, en) + cosine(eq, ep));
      CHECK(triplet_loss_value(m, q, n, p, gamma) == doctest::Approx(swapped).epsilon(1e-12));
    }
  }

  TEST_CASE("inactive hinge gives zero loss and zero gradient") {
    const auto m = EncoderModel::initialize(64, 8, 8);
    // s(q,q) = 1 and s(q,n) <= 1, so a small margin with pos = query is inactive
    // whenever s(q,n) < 1 - margin.
    const auto r = triplet_loss(m, "x y z", "x y z", "k l", 1e-6);
    if (r.loss == 0.0) {
      for (double gr : r.gradient) CHECK(gr == 0.0);
    }
    const auto eq = m.embed("x y z").unit, en = m.embed("k l").unit;
    CHECK(r.loss == doctest::Approx(std::max(0.0, 1e-6 - 1.0 + cosine(eq, en))).epsilon(1e-12));
  }

  TEST_CASE("analytic gradient matches central differences") {
    std::mt19937_64 g(9);
    const double h = 1e-5;
    for (auto dist : {TripletDistance::kCosine, TripletDistance::kEuclidean}) {
      double worst = 0;
      int checked = 0;
      for (int point = 0; point < 20; ++point) {
        auto m = EncoderModel::initialize(64, 8, g());
        const auto q = random_text(g, 30, 5), p = random_text(g, 30, 5), n = random_text(g, 30, 5);
        const auto r = triplet_loss(m, q, p, n, 0.5, dist);
        if (r.loss == 0.0) continue;
        auto w = m.mutable_weights();
        std::vector<double> numeric(w.size());
        for (std::size_t j = 0; j < w.size(); ++j) {
          const double keep = w[j];
          w[j] = keep + h;
          const double up = triplet_loss_value(m, q, p, n, 0.5, dist);
          w[j] = keep - h;
          const double down = triplet_loss_value(m, q, p, n, 0.5, dist);
          w[j] = keep;
          numeric[j] = (up - down) / (2 * h);
        }
        std::vector<double> diff(w.size());
        for (std::size_t j = 0; j < w.size(); ++j) diff[j] = r.gradient[j] - numeric[j];
        worst = std::max(worst, norm2(diff) / std::max({norm2(r.gradient), norm2(numeric), 1e-12}));
        ++checked;
      }
      CHECK(checked > 10);
      CHECK(worst < 1e-4);
    }
  }

  TEST_CASE("zero epochs returns the initialization") {
    TrainConfig cfg;
    cfg.epochs = 0;
    cfg.hash_dim = 128;
    cfg.emb_dim = 8;
    const std::vector<TrainingPair> pairs = {{"a", "b", "g1", "human"}, {"c", "d", "g2", "human"}};
    CHECK(train(pairs, cfg, "human") == EncoderModel::initialize(128, 8, cfg.seed));
  }

  TEST_CASE("training is reproducible and learns planted tokens") {
    const auto items = toy::planted_pairs(200, 20, 3);
    std::vector<TrainingPair> pairs;
    for (const auto& it : items) pairs.push_back({it.question, it.answer, it.qid, "basic"});
    TrainConfig cfg;
    cfg.hash_dim = 2048;
    cfg.emb_dim = 16;
    cfg.batch_size = 32;
    cfg.epochs = 10;
    TrainReport rep;
    const auto a = train(pairs, cfg, "basic", &rep);
    const auto b = train(pairs, cfg, "basic");
    CHECK(a.serialize() == b.serialize());
    REQUIRE(rep.epoch_mean_loss.size() == 10);
    CHECK(rep.epoch_mean_loss.back() < rep.epoch_mean_loss.front());
    for (double w : a.weights()) REQUIRE(std::isfinite(w));

    auto model = std::make_shared<EncoderModel>(a);
    EncoderScorer s(model);
    double gap = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto& neg = items[(i + 7) % items.size()];
      gap += s.score(items[i].question, items[i].answer) - s.score(items[i].question, neg.answer);
    }
    CHECK(gap / static_cast<double>(items.size()) > 0.0);
  }

  TEST_CASE("training rejects mixed pools and bad configs") {
    TrainConfig cfg;
    cfg.hash_dim = 64;
    cfg.emb_dim = 4;
    const std::vector<TrainingPair> mixed = {{"a", "b", "g1", "human"}, {"c", "d", "g2", "basic"}};
    CHECK_THROWS_AS(train(mixed, cfg, "human"), ValidationError);
    CHECK_THROWS_AS(train({{"a", "b", "g1", "human"}}, cfg, "human"), ValidationError);
    cfg.batch_size = 1;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
  }

  TEST_CASE("tail batch of one pair is skipped and counted") {
    TrainConfig cfg;
    cfg.hash_dim = 64;
    cfg.emb_dim = 4;
    cfg.batch_size = 2;
    cfg.epochs = 1;
    const std::vector<TrainingPair> pairs = {
        {"a", "b", "g1", "h"}, {"c", "d", "g2", "h"}, {"e", "f", "g3", "h"}};
    TrainReport rep;
    train(pairs, cfg, "h", &rep);
    CHECK(rep.skipped_batches == 1);
    CHECK(rep.steps == 1);
  }

  TEST_CASE("disjoint vocabularies score near zero under orthogonal columns") {
    // Identity projection: every hash bucket is its own embedding axis.
    auto m = EncoderModel::initialize(64, 64, 1);
    auto w = m.mutable_weights();
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t j = 0; j < 64; ++j) w[j * 64 + j] = 1.0;
    std::set<std::uint64_t> used;
    std::vector<std::string> left, right;
    for (int i = 0; left.size() < 4 || right.size() < 4; ++i) {
      const std::string t = "tok" + std::to_string(i);
      if (!used.insert(fnv1a64(t) % 64).second) continue;
      (left.size() < 4 ? left : right).push_back(t);
    }
    std::string a, b;
    for (const auto& t : left) a += t + " ";
    for (const auto& t : right) b += t + " ";
    EncoderScorer s(std::make_shared<EncoderModel>(m));
    CHECK(std::abs(s.score(a, b)) < 0.05);
  }

  TEST_CASE("checkpoint round trip") {
    const auto m = EncoderModel::initialize(32, 4, 77);
    CHECK(EncoderModel::deserialize(m.serialize()) == m);
    ts::TempDir dir("enc");
    m.save(dir / "m.bin");
    CHECK(EncoderModel::load(dir / "m.bin") == m);
    CHECK_THROWS_AS(EncoderModel::deserialize("nope"), ValidationError);
  }

  TEST_CASE("tf-idf scorer matches hand computation") {
    // N = 3; df(a) = 3, df(b) = df(c) = df(d) = 1.
    TfidfScorer s({"a b", "a c", "a a d"});
    const double ln2 = std::log(2.0);
    CHECK(s.idf("a") == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(s.idf("b") == doctest::Approx(1.0 + ln2).epsilon(1e-15));
    // q = "a b": (a: 1, b: 1 + ln2).  d = "a a d": (a: 1 + ln2, d: 1 + ln2).
    const double expected = (1.0 + ln2) / (std::sqrt(1.0 + (1 + ln2) * (1 + ln2)) * std::sqrt(2.0) * (1 + ln2));
    CHECK(s.score("a b", "a a d") == doctest::Approx(expected).epsilon(1e-12));
    CHECK(s.score("a b", "a b") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s.score("b", "c") == 0.0);
    CHECK(s.score("a b", "a a d") == s.score("a b", "a a d"));
  }
}
