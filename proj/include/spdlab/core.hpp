#pragma once

// Vocabulary, distributions, counter-based randomness and sampling shared by
// every other part of the library.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace spdlab {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;
using TokenSpan = std::span<const Token>;

inline constexpr double kProbTolerance = 1e-9;

/// Stateless 64-bit mixer (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

/// Order-sensitive combination of two keys.
std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b);

/// FNV-1a over the bytes of a label.
std::uint64_t hash_label(std::string_view label);

/// Maps a 64-bit hash onto [0, 1) with 53 bits of resolution.
double to_unit(std::uint64_t h);

/// Maps a 64-bit hash onto [-1, 1].
double to_signed_unit(std::uint64_t h);

/// Counter-based generator: the i-th draw is mix(seed, i). Child streams are a
/// function of (seed, label) only, so they do not depend on how many draws the
/// parent has made.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();

  [[nodiscard]] Rng split(std::uint64_t label) const;
  [[nodiscard]] Rng split(std::string_view label) const;

  std::uint64_t seed() const { return seed_; }
  std::uint64_t draws() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Probability vector over a vocabulary of size V. Immutable after
/// construction; entries are non-negative and sum to 1 within 1e-9.
class Distribution {
 public:
  explicit Distribution(std::vector<double> probs);

  /// Numerically stable softmax.
  static Distribution from_logits(std::span<const double> logits);
  /// Renormalizes non-negative weights with a positive sum.
  static Distribution from_weights(std::vector<double> weights);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  /// Lowest-index maximizer.
  Token argmax() const;

  /// Sup-norm distance; sizes must match.
  double max_abs_diff(const Distribution& other) const;

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  std::vector<double> probs_;
};

struct TopKEntry {
  Token token = 0;
  double logp = 0.0;  // natural log

  friend bool operator==(const TopKEntry&, const TopKEntry&) = default;
};

/// Early-exit token channel payload: the κ most probable tokens of a
/// distribution with their log-probabilities.
struct TopKMessage {
  std::vector<TopKEntry> entries;
  int origin_layer = 0;
  std::size_t origin_position = 0;

  std::size_t size() const { return entries.size(); }
  bool contains(Token t) const;
  /// Number of (id, logp) items carried on the channel for a batch.
  std::size_t payload_items(std::size_t batch) const { return batch * entries.size(); }
};

/// κ distinct tokens sorted by probability descending, ties by ascending id.
/// Throws std::invalid_argument when κ is outside [1, V].
TopKMessage top_k(const Distribution& dist, int kappa);

/// Inverse-CDF draw over ascending token ids with a single uniform u in
/// [0, 1). temperature 0 is argmax and ignores u.
Token sample_with_uniform(const Distribution& dist, double temperature, double u);

/// temperature 0: argmax, no randomness consumed. temperature > 0: exactly one
/// draw from rng applied to probs^(1/temperature), renormalized.
Token sample(const Distribution& dist, double temperature, Rng& rng);

/// probs^(1/temperature) renormalized; temperature must be positive.
Distribution temper(const Distribution& dist, double temperature);

struct DecodeConfig {
  int gamma = 7;
  int kappa = 8;
  int exit_layer = 0;  // 0 selects depth/2
  double temperature = 0.0;
  int max_new_tokens = 200;
  std::uint64_t seed = 1;
  std::optional<Token> eos;

  /// Resolves defaults against a model and throws std::invalid_argument on
  /// any violated range.
  DecodeConfig resolved(int depth, int vocab_size) const;
};

}  // namespace spdlab
