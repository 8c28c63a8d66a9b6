#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>

#include "spdlab/models.hpp"

using namespace spdlab;

namespace {

TokenSeq random_ctx(Rng& rng, int vocab, int len) {
  TokenSeq ctx(len);
  for (auto& t : ctx) t = static_cast<Token>(rng.next_u64() % static_cast<std::uint64_t>(vocab));
  return ctx;
}

double sup_norm(const Distribution& a, const Distribution& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("final layer carries no noise") {
  SyntheticLmParams noisy;
  noisy.epsilon0 = 0.9;
  SyntheticLmParams clean = noisy;
  clean.epsilon0 = 0.0;
  const SyntheticLayeredLm a(noisy), b(clean);
  const TokenSeq ctx{3, 1, 4, 1, 5};
  for (int l = 1; l <= 8; ++l) CHECK(a.final_dist(ctx) == b.layer_dist(ctx, l));
  CHECK(b.layer_dist(ctx, 1) == b.layer_dist(ctx, 8));
  CHECK(a.epsilon(8) == 0.0);
  CHECK(a.epsilon(4) == doctest::Approx(0.45));
  CHECK_THROWS_AS(a.layer_dist(ctx, 0), std::invalid_argument);
  CHECK_THROWS_AS(a.layer_dist(ctx, 9), std::invalid_argument);
}

TEST_CASE("layer distance within the epsilon schedule") {
  SyntheticLmParams p;
  p.vocab_size = 4;
  p.epsilon0 = 0.8;
  const SyntheticLayeredLm lm(p);
  Rng rng(11);
  std::vector<double> mean(p.depth + 1, 0.0);
  const int contexts = 1000;
  for (int c = 0; c < contexts; ++c) {
    const TokenSeq ctx = random_ctx(rng, p.vocab_size, 1 + c % 12);
    const Distribution fin = lm.final_dist(ctx);
    for (int l = 1; l <= p.depth; ++l) {
      const double d = sup_norm(lm.layer_dist(ctx, l), fin);
      REQUIRE(d <= lm.epsilon(l) + 1e-12);
      mean[l] += d / contexts;
    }
  }
  for (int l = 2; l <= p.depth; ++l) CHECK(mean[l] <= mean[l - 1]);
}

TEST_CASE("top-k set stabilizes once the noise is below half the margin") {
  SyntheticLmParams p;
  p.epsilon0 = 1.0;
  const SyntheticLayeredLm lm(p);
  Rng rng(5);
  int checked = 0;
  for (int c = 0; c < 500; ++c) {
    const TokenSeq ctx = random_ctx(rng, p.vocab_size, 9);
    const Distribution fin = lm.final_dist(ctx);
    std::vector<double> sorted(fin.probs().begin(), fin.probs().end());
    std::sort(sorted.rbegin(), sorted.rend());
    for (int kappa : {1, 2, 4, 8}) {
      const double margin = sorted[kappa - 1] - sorted[kappa];
      for (int l = 1; l <= p.depth; ++l) {
        if (!(lm.epsilon(l) < margin / 2)) continue;
        std::set<Token> a, b;
        for (auto& e : top_k(lm.layer_dist(ctx, l), kappa).entries) a.insert(e.token);
        for (auto& e : top_k(fin, kappa).entries) b.insert(e.token);
        CHECK(a == b);
        ++checked;
      }
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("synthetic model is a pure function of its inputs") {
  const SyntheticLayeredLm lm({});
  const TokenSeq ctx{1, 2, 3};
  CHECK(lm.layer_dist(ctx, 3) == lm.layer_dist(ctx, 3));
  // only the last eight tokens matter
  TokenSeq long_a{9, 9, 1, 2, 3, 4, 5, 6, 7, 8}, long_b{0, 0, 1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(lm.final_dist(long_a) == lm.final_dist(long_b));
}

TEST_CASE("aligned draft fidelity endpoints") {
  auto t1 = std::make_shared<SyntheticLayeredLm>(SyntheticLmParams{});
  SyntheticLmParams other;
  other.vocab_size = 4;
  other.base_seed = 1;
  SyntheticLmParams other2 = other;
  other2.base_seed = 2;
  auto ta = std::make_shared<SyntheticLayeredLm>(other);
  auto tb = std::make_shared<SyntheticLayeredLm>(other2);
  const TokenSeq ctx{0, 1, 2};

  const AlignedDraft exact(t1, 1.0, 3);
  CHECK(exact.next_dist(ctx).max_abs_diff(t1->final_dist(ctx)) < 1e-15);

  const AlignedDraft da(ta, 0.0, 3), db(tb, 0.0, 3);
  REQUIRE(ta->final_dist(ctx).max_abs_diff(tb->final_dist(ctx)) > 1e-3);
  CHECK(da.next_dist(ctx) == db.next_dist(ctx));
  CHECK(da.next_dist(ctx).max_abs_diff(da.noise_dist(ctx)) < 1e-15);

  const AlignedDraft half(ta, 0.5, 3);
  const Distribution mix = half.next_dist(ctx);
  for (std::size_t i = 0; i < mix.size(); ++i) {
    CHECK(mix[i] == doctest::Approx(0.5 * ta->final_dist(ctx)[i] + 0.5 * half.noise_dist(ctx)[i]));
  }
}

TEST_CASE("ngram counts and smoothing") {
  const TokenSeq corpus{0, 1, 0, 1};
  const NgramLm lm = fit_ngram(corpus, 2, 0.1, 2);
  CHECK(lm.count(TokenSeq{0}, 1) == 2.0);
  CHECK(lm.count(TokenSeq{1}, 0) == 1.0);
  CHECK(lm.count(TokenSeq{0}, 0) == 0.0);

  const NgramLm uni = fit_ngram(TokenSeq{0, 0, 0, 1}, 1, 1.0, 3);
  const Distribution u = uni.next_dist(TokenSeq{2});
  CHECK(u[0] == doctest::Approx(4.0 / 7.0));
  CHECK(u[1] == doctest::Approx(2.0 / 7.0));
  CHECK(u[2] == doctest::Approx(1.0 / 7.0));

  const NgramLm raw = fit_ngram(TokenSeq{0, 1, 0, 1}, 2, 0.0, 3);
  const Distribution unseen = raw.next_dist(TokenSeq{2});
  CHECK(unseen == raw.unigram());
  CHECK(unseen[0] == doctest::Approx(0.5));

  CHECK_THROWS_AS(fit_ngram(TokenSeq{}, 2, 0.1, 2), std::invalid_argument);
  CHECK_THROWS_AS(fit_ngram(TokenSeq{0}, 2, 0.1, 2), std::invalid_argument);
  CHECK_THROWS_AS(fit_ngram(TokenSeq{0, 5}, 1, 0.1, 2), std::invalid_argument);
}

TEST_CASE("ngram on text prefers observed transitions") {
  const Vocabulary v = Vocabulary::bytes();
  const TokenSeq corpus = v.encode("abab");
  const NgramLm lm = fit_ngram(corpus, 2, 0.05, v.size());
  const Distribution d = lm.next_dist(v.encode("a"));
  CHECK(d[static_cast<std::size_t>('b')] > d[static_cast<std::size_t>('a')]);
  CHECK(v.decode(corpus) == "abab");
}

TEST_CASE("layered ngram view") {
  const TokenSeq corpus{0, 1, 2, 0, 1, 2, 0, 2};
  auto lm = std::make_shared<NgramLm>(fit_ngram(corpus, 2, 0.1, 3));
  const NgramLayeredLm layered(lm, 4, 0.8);
  const TokenSeq ctx{0};
  CHECK(layered.final_dist(ctx) == lm->next_dist(ctx));
  const Distribution l2 = layered.layer_dist(ctx, 2);
  const double eps = 0.8 * 0.5;
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(l2[i] == doctest::Approx((1 - eps) * lm->next_dist(ctx)[i] + eps * lm->unigram()[i]));
  }
}

TEST_CASE("word vocabulary from file") {
  const auto path = std::filesystem::temp_directory_path() / "spdlab_test_vocab.txt";
  {
    std::ofstream f(path);
    f << "<unk>\nthe\ncat\nsat\n";
  }
  const Vocabulary v = Vocabulary::from_file(path);
  CHECK(v.size() == 4);
  const TokenSeq t = v.encode("the cat sat on");
  REQUIRE(t.size() == 4);
  CHECK(t[0] == 1);
  CHECK(t[3] == 0);
  std::filesystem::remove(path);
}
