#include "spdlab/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace spdlab {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b + 0x632BE59BD9B4E019ULL + (a << 6) + (a >> 2)));
}

std::uint64_t hash_label(std::string_view label) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

double to_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

double to_signed_unit(std::uint64_t h) {
  // (h >> 11) spans [0, 2^53 - 1]; map the endpoints exactly onto -1 and 1.
  return 2.0 * static_cast<double>(h >> 11) / static_cast<double>((1ULL << 53) - 1) - 1.0;
}

std::uint64_t Rng::next_u64() { return hash_combine(seed_, counter_++); }

double Rng::uniform() { return to_unit(next_u64()); }

Rng Rng::split(std::uint64_t label) const {
  return Rng(hash_combine(seed_ ^ 0xA5A5A5A5A5A5A5A5ULL, label));
}

Rng Rng::split(std::string_view label) const { return split(hash_label(label)); }

Distribution::Distribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw std::invalid_argument("distribution: empty vocabulary");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw std::invalid_argument("distribution: negative or non-finite entry");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbTolerance) {
    throw std::invalid_argument("distribution: entries sum to " + std::to_string(sum));
  }
}

Distribution Distribution::from_logits(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) w[i] = std::exp(logits[i] - hi);
  return from_weights(std::move(w));
}

Distribution Distribution::from_weights(std::vector<double> weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    throw std::invalid_argument("distribution: weights must have a positive finite sum");
  }
  for (double& w : weights) w /= sum;
  return Distribution(std::move(weights));
}

Token Distribution::argmax() const {
  // max_element returns the first maximizer, i.e. the lowest id.
  return static_cast<Token>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double Distribution::max_abs_diff(const Distribution& other) const {
  if (other.size() != size()) throw std::invalid_argument("distribution: size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < size(); ++i) d = std::max(d, std::abs(probs_[i] - other.probs_[i]));
  return d;
}

bool TopKMessage::contains(Token t) const {
  return std::any_of(entries.begin(), entries.end(), [t](const TopKEntry& e) { return e.token == t; });
}

TopKMessage top_k(const Distribution& dist, int kappa) {
  const auto v = static_cast<int>(dist.size());
  if (kappa < 1 || kappa > v) {
    throw std::invalid_argument("top_k: kappa " + std::to_string(kappa) + " outside [1, " +
                                std::to_string(v) + "]");
  }
  std::vector<Token> ids(dist.size());
  std::iota(ids.begin(), ids.end(), Token{0});
  auto by_prob = [&](Token a, Token b) {
    if (dist[a] != dist[b]) return dist[a] > dist[b];
    return a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + kappa, ids.end(), by_prob);
  TopKMessage msg;
  msg.entries.reserve(kappa);
  for (int i = 0; i < kappa; ++i) msg.entries.push_back({ids[i], std::log(dist[ids[i]])});
  return msg;
}

Distribution temper(const Distribution& dist, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temper: temperature must be > 0");
  if (temperature == 1.0) return dist;
  const double inv = 1.0 / temperature;
  std::vector<double> w(dist.size());
  for (std::size_t i = 0; i < dist.size(); ++i) w[i] = dist[i] > 0.0 ? std::pow(dist[i], inv) : 0.0;
  return Distribution::from_weights(std::move(w));
}

Token sample_with_uniform(const Distribution& dist, double temperature, double u) {
  if (temperature < 0.0) throw std::invalid_argument("sample: negative temperature");
  if (temperature == 0.0) return dist.argmax();
  const Distribution d = temper(dist, temperature);
  double cum = 0.0;
  Token last_positive = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= 0.0) continue;
    last_positive = static_cast<Token>(i);
    cum += d[i];
    if (u < cum) return last_positive;
  }
  // Rounding left cum slightly below 1.
  return last_positive;
}

Token sample(const Distribution& dist, double temperature, Rng& rng) {
  if (temperature == 0.0) return sample_with_uniform(dist, 0.0, 0.0);
  return sample_with_uniform(dist, temperature, rng.uniform());
}

DecodeConfig DecodeConfig::resolved(int depth, int vocab_size) const {
  DecodeConfig c = *this;
  if (c.exit_layer == 0) c.exit_layer = depth / 2;
  if (c.gamma < 1) throw std::invalid_argument("decode.gamma must be >= 1");
  if (c.kappa < 1 || c.kappa > vocab_size) {
    throw std::invalid_argument("decode.kappa must lie in [1, vocab_size]");
  }
  if (c.exit_layer < 1 || c.exit_layer >= depth) {
    throw std::invalid_argument("decode.exit_layer must lie in [1, depth - 1]");
  }
  if (c.temperature < 0.0) throw std::invalid_argument("decode.temperature must be >= 0");
  if (c.max_new_tokens < 0) throw std::invalid_argument("decode.max_new_tokens must be >= 0");
  if (c.eos && (*c.eos < 0 || *c.eos >= vocab_size)) {
    throw std::invalid_argument("decode.eos outside the vocabulary");
  }
  return c;
}

}  // namespace spdlab
