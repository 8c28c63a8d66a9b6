#pragma once

// Toy language models with per-layer (early-exit) distributions.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "spdlab/core.hpp"

namespace spdlab {

/// A target model whose intermediate layers expose proxy next-token
/// distributions. layer_dist(ctx, depth()) is the true next-token
/// distribution.
class LayeredLm {
 public:
  virtual ~LayeredLm() = default;
  virtual int depth() const = 0;
  virtual int vocab_size() const = 0;
  /// Throws std::invalid_argument unless 1 <= layer <= depth().
  virtual Distribution layer_dist(TokenSpan ctx, int layer) const = 0;

  Distribution final_dist(TokenSpan ctx) const { return layer_dist(ctx, depth()); }
};

class DraftLm {
 public:
  virtual ~DraftLm() = default;
  virtual int vocab_size() const = 0;
  virtual Distribution next_dist(TokenSpan ctx) const = 0;
};

/// Hash of the last kContextWindow tokens of ctx (fewer if ctx is shorter).
inline constexpr std::size_t kContextWindow = 8;
std::uint64_t context_hash(TokenSpan ctx, std::uint64_t seed);

struct SyntheticLmParams {
  int depth = 8;
  int vocab_size = 32;
  std::uint64_t base_seed = 0x5EED;
  double epsilon0 = 0.5;
  double sharpness = 4.0;
};

/// Final logits are sharpness * h(ctx tail, v) with h in [-1, 1]. Layer l adds
/// eps_l * noise(ctx tail, l, v), noise in [-1, 1], eps_l = epsilon0 (1 - l/N).
/// Since softmax has sup-norm Lipschitz constant 1/2 under sup-norm logit
/// perturbations, |p^(l) - p^(N)|_inf <= eps_l / 2 for every context.
class SyntheticLayeredLm final : public LayeredLm {
 public:
  explicit SyntheticLayeredLm(SyntheticLmParams params);

  int depth() const override { return params_.depth; }
  int vocab_size() const override { return params_.vocab_size; }
  Distribution layer_dist(TokenSpan ctx, int layer) const override;

  double epsilon(int layer) const;
  const SyntheticLmParams& params() const { return params_; }

 private:
  SyntheticLmParams params_;
};

/// Draft whose agreement with the target is set by a fidelity knob:
/// fidelity * p^(N)(ctx) + (1 - fidelity) * noise(ctx), renormalized.
class AlignedDraft final : public DraftLm {
 public:
  AlignedDraft(std::shared_ptr<const LayeredLm> target, double fidelity,
               std::uint64_t draft_seed, double noise_sharpness = 4.0);

  int vocab_size() const override { return target_->vocab_size(); }
  Distribution next_dist(TokenSpan ctx) const override;

  /// The fidelity-0 component; independent of the target.
  Distribution noise_dist(TokenSpan ctx) const;
  double fidelity() const { return fidelity_; }

 private:
  std::shared_ptr<const LayeredLm> target_;
  double fidelity_;
  std::uint64_t draft_seed_;
  double noise_sharpness_;
};

/// Count-based n-gram model with add-k smoothing applied at query time.
/// Contexts that are unseen (or shorter than n - 1) fall back to the unigram
/// distribution.
class NgramLm final : public DraftLm {
 public:
  NgramLm(int order, int vocab_size, double add_k);

  int vocab_size() const override { return vocab_size_; }
  Distribution next_dist(TokenSpan ctx) const override;

  Distribution unigram() const;
  int order() const { return order_; }
  double add_k() const { return add_k_; }
  /// Raw count of `next` following the (order - 1)-token context.
  double count(TokenSpan context, Token next) const;

  /// Adds one (context -> next) event; also counts next in the unigram.
  void observe(TokenSpan context, Token next);
  void observe_unigram(Token t);

 private:
  int order_;
  int vocab_size_;
  double add_k_;
  std::map<TokenSeq, std::vector<double>> table_;
  std::vector<double> unigram_counts_;
  double unigram_total_ = 0.0;
};

/// Fits counts over every sliding window of the corpus. Throws
/// std::invalid_argument on an empty corpus, n < 1, a corpus shorter than n,
/// or a token outside [0, vocab_size).
NgramLm fit_ngram(TokenSpan corpus, int n, double add_k, int vocab_size);

/// Layered view of an n-gram model: layer l mixes the n-gram distribution with
/// the unigram, p^(l) = (1 - eps_l) p^(N) + eps_l unigram, eps_l = epsilon0 (1 - l/N).
class NgramLayeredLm final : public LayeredLm {
 public:
  NgramLayeredLm(std::shared_ptr<const NgramLm> lm, int depth, double epsilon0);

  int depth() const override { return depth_; }
  int vocab_size() const override { return lm_->vocab_size(); }
  Distribution layer_dist(TokenSpan ctx, int layer) const override;

 private:
  std::shared_ptr<const NgramLm> lm_;
  int depth_;
  double epsilon0_;
};

/// Byte-level (V = 256) or whitespace-word tokenization of UTF-8 text.
class Vocabulary {
 public:
  static Vocabulary bytes();
  /// One token string per line; "<unk>" (if listed) absorbs unknown words.
  static Vocabulary from_file(const std::filesystem::path& path);

  int size() const;
  bool byte_level() const { return byte_level_; }
  TokenSeq encode(const std::string& text) const;
  std::string decode(TokenSpan tokens) const;

 private:
  bool byte_level_ = true;
  std::vector<std::string> words_;
  std::map<std::string, Token> index_;
};

std::string read_text_file(const std::filesystem::path& path);

}  // namespace spdlab
