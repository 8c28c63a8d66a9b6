#include "spdlab/models.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace spdlab {

namespace {

constexpr std::uint64_t kLogitSalt = 0x4C4F474954ULL;
constexpr std::uint64_t kNoiseSalt = 0x4E4F495345ULL;
constexpr std::uint64_t kDraftSalt = 0x4452414654ULL;

void check_layer(int layer, int depth) {
  if (layer < 1 || layer > depth) {
    throw std::invalid_argument("layer " + std::to_string(layer) + " outside [1, " +
                                std::to_string(depth) + "]");
  }
}

}  // namespace

std::uint64_t context_hash(TokenSpan ctx, std::uint64_t seed) {
  const std::size_t n = std::min(ctx.size(), kContextWindow);
  std::uint64_t h = hash_combine(seed, n);
  for (std::size_t i = ctx.size() - n; i < ctx.size(); ++i) {
    h = hash_combine(h, static_cast<std::uint64_t>(ctx[i]));
  }
  return h;
}

SyntheticLayeredLm::SyntheticLayeredLm(SyntheticLmParams params) : params_(params) {
  if (params_.depth < 2) throw std::invalid_argument("synthetic lm: depth must be >= 2");
  if (params_.vocab_size < 1) throw std::invalid_argument("synthetic lm: vocab_size must be >= 1");
  if (params_.epsilon0 < 0.0) throw std::invalid_argument("synthetic lm: epsilon0 must be >= 0");
  if (!(params_.sharpness > 0.0)) throw std::invalid_argument("synthetic lm: sharpness must be > 0");
}

double SyntheticLayeredLm::epsilon(int layer) const {
  check_layer(layer, params_.depth);
  if (layer == params_.depth) return 0.0;
  return params_.epsilon0 * (1.0 - static_cast<double>(layer) / params_.depth);
}

Distribution SyntheticLayeredLm::layer_dist(TokenSpan ctx, int layer) const {
  const double eps = epsilon(layer);
  const std::uint64_t h = context_hash(ctx, params_.base_seed);
  const std::uint64_t hl = hash_combine(h, kLogitSalt);
  const std::uint64_t hn = hash_combine(hash_combine(h, kNoiseSalt), static_cast<std::uint64_t>(layer));
  std::vector<double> logits(params_.vocab_size);
  for (int v = 0; v < params_.vocab_size; ++v) {
    logits[v] = params_.sharpness * to_signed_unit(hash_combine(hl, v));
    if (eps > 0.0) logits[v] += eps * to_signed_unit(hash_combine(hn, v));
  }
  return Distribution::from_logits(logits);
}

AlignedDraft::AlignedDraft(std::shared_ptr<const LayeredLm> target, double fidelity,
                           std::uint64_t draft_seed, double noise_sharpness)
    : target_(std::move(target)),
      fidelity_(fidelity),
      draft_seed_(draft_seed),
      noise_sharpness_(noise_sharpness) {
  if (!target_) throw std::invalid_argument("aligned draft: null target");
  if (fidelity_ < 0.0 || fidelity_ > 1.0) {
    throw std::invalid_argument("aligned draft: fidelity must lie in [0, 1]");
  }
}

Distribution AlignedDraft::noise_dist(TokenSpan ctx) const {
  const int v_size = target_->vocab_size();
  const std::uint64_t h = hash_combine(context_hash(ctx, draft_seed_), kDraftSalt);
  std::vector<double> logits(v_size);
  for (int v = 0; v < v_size; ++v) logits[v] = noise_sharpness_ * to_signed_unit(hash_combine(h, v));
  return Distribution::from_logits(logits);
}

Distribution AlignedDraft::next_dist(TokenSpan ctx) const {
  if (fidelity_ == 1.0) return target_->final_dist(ctx);
  if (fidelity_ == 0.0) return noise_dist(ctx);
  const Distribution p = target_->final_dist(ctx);
  const Distribution n = noise_dist(ctx);
  std::vector<double> w(p.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = fidelity_ * p[i] + (1.0 - fidelity_) * n[i];
  return Distribution::from_weights(std::move(w));
}

NgramLm::NgramLm(int order, int vocab_size, double add_k)
    : order_(order), vocab_size_(vocab_size), add_k_(add_k), unigram_counts_(vocab_size, 0.0) {
  if (order_ < 1) throw std::invalid_argument("ngram: order must be >= 1");
  if (vocab_size_ < 1) throw std::invalid_argument("ngram: vocab_size must be >= 1");
  if (add_k_ < 0.0) throw std::invalid_argument("ngram: add_k must be >= 0");
}

void NgramLm::observe_unigram(Token t) {
  if (t < 0 || t >= vocab_size_) throw std::invalid_argument("ngram: token out of range");
  unigram_counts_[t] += 1.0;
  unigram_total_ += 1.0;
}

void NgramLm::observe(TokenSpan context, Token next) {
  observe_unigram(next);
  if (order_ == 1) return;
  auto& row = table_[TokenSeq(context.begin(), context.end())];
  if (row.empty()) row.assign(vocab_size_, 0.0);
  row[next] += 1.0;
}

double NgramLm::count(TokenSpan context, Token next) const {
  if (order_ == 1) return unigram_counts_.at(next);
  auto it = table_.find(TokenSeq(context.begin(), context.end()));
  return it == table_.end() ? 0.0 : it->second.at(next);
}

Distribution NgramLm::unigram() const {
  std::vector<double> w(vocab_size_);
  for (int v = 0; v < vocab_size_; ++v) w[v] = unigram_counts_[v] + add_k_;
  return Distribution::from_weights(std::move(w));
}

Distribution NgramLm::next_dist(TokenSpan ctx) const {
  const auto need = static_cast<std::size_t>(order_ - 1);
  if (order_ == 1 || ctx.size() < need) return unigram();
  auto it = table_.find(TokenSeq(ctx.end() - need, ctx.end()));
  if (it == table_.end()) return unigram();
  std::vector<double> w(vocab_size_);
  for (int v = 0; v < vocab_size_; ++v) w[v] = it->second[v] + add_k_;
  return Distribution::from_weights(std::move(w));
}

NgramLm fit_ngram(TokenSpan corpus, int n, double add_k, int vocab_size) {
  if (corpus.empty()) throw std::invalid_argument("fit_ngram: empty corpus");
  if (n < 1) throw std::invalid_argument("fit_ngram: n must be >= 1");
  if (corpus.size() < static_cast<std::size_t>(n)) {
    throw std::invalid_argument("fit_ngram: corpus shorter than n");
  }
  NgramLm lm(n, vocab_size, add_k);
  for (std::size_t i = 0; i + 1 < static_cast<std::size_t>(n); ++i) lm.observe_unigram(corpus[i]);
  for (std::size_t end = static_cast<std::size_t>(n); end <= corpus.size(); ++end) {
    lm.observe(corpus.subspan(end - n, n - 1), corpus[end - 1]);
  }
  return lm;
}

NgramLayeredLm::NgramLayeredLm(std::shared_ptr<const NgramLm> lm, int depth, double epsilon0)
    : lm_(std::move(lm)), depth_(depth), epsilon0_(epsilon0) {
  if (!lm_) throw std::invalid_argument("ngram layered: null model");
  if (depth_ < 2) throw std::invalid_argument("ngram layered: depth must be >= 2");
  if (epsilon0_ < 0.0 || epsilon0_ > 1.0) {
    throw std::invalid_argument("ngram layered: epsilon0 must lie in [0, 1]");
  }
}

Distribution NgramLayeredLm::layer_dist(TokenSpan ctx, int layer) const {
  check_layer(layer, depth_);
  Distribution p = lm_->next_dist(ctx);
  if (layer == depth_ || epsilon0_ == 0.0) return p;
  const double eps = epsilon0_ * (1.0 - static_cast<double>(layer) / depth_);
  const Distribution u = lm_->unigram();
  std::vector<double> w(p.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = (1.0 - eps) * p[i] + eps * u[i];
  return Distribution::from_weights(std::move(w));
}

Vocabulary Vocabulary::bytes() { return Vocabulary{}; }

Vocabulary Vocabulary::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  Vocabulary vocab;
  vocab.byte_level_ = false;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || vocab.index_.contains(line)) continue;
    vocab.index_.emplace(line, static_cast<Token>(vocab.words_.size()));
    vocab.words_.push_back(line);
  }
  if (vocab.words_.empty()) throw std::runtime_error("vocabulary file " + path.string() + " is empty");
  return vocab;
}

int Vocabulary::size() const { return byte_level_ ? 256 : static_cast<int>(words_.size()); }

TokenSeq Vocabulary::encode(const std::string& text) const {
  TokenSeq out;
  if (byte_level_) {
    out.reserve(text.size());
    for (unsigned char c : text) out.push_back(static_cast<Token>(c));
    return out;
  }
  std::istringstream words(text);
  std::string w;
  while (words >> w) {
    auto it = index_.find(w);
    if (it == index_.end()) it = index_.find("<unk>");
    if (it == index_.end()) throw std::invalid_argument("word '" + w + "' not in vocabulary");
    out.push_back(it->second);
  }
  return out;
}

std::string Vocabulary::decode(TokenSpan tokens) const {
  std::string out;
  for (Token t : tokens) {
    if (byte_level_) {
      out.push_back(static_cast<char>(t));
    } else {
      if (!out.empty()) out.push_back(' ');
      out += words_.at(t);
    }
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace spdlab
