#include "spdlab/sd.hpp"

#include <algorithm>
#include <stdexcept>

namespace spdlab {

namespace {

constexpr std::uint64_t kTargetLabel = 0x7461726765740000ULL;
constexpr std::uint64_t kFreshLabel = 0x6672657368000000ULL;
constexpr std::uint64_t kTreeLabel = 0x7472656500000000ULL;

}  // namespace

double SessionStreams::target_uniform(std::size_t pos) const {
  return root_.split(kTargetLabel).split(pos).uniform();
}

Rng SessionStreams::draft_fresh(std::size_t pos) const { return root_.split(kFreshLabel).split(pos); }

Rng SessionStreams::tree_branch(std::size_t pos, std::size_t branch) const {
  return root_.split(kTreeLabel).split(pos).split(branch);
}

const char* to_string(WindowSource s) {
  switch (s) {
    case WindowSource::fresh: return "fresh";
    case WindowSource::reused_branch: return "reused-branch";
    case WindowSource::reused_root: return "reused-root";
  }
  return "?";
}

const char* to_string(ReuseCase c) {
  switch (c) {
    case ReuseCase::none: return "none";
    case ReuseCase::root_hit: return "root_hit";
    case ReuseCase::deep_hit: return "deep_hit";
    case ReuseCase::fallback: return "fallback";
    case ReuseCase::no_correction: return "no_correction";
  }
  return "?";
}

TokenSeq AcceptanceResult::corrected_prefix() const {
  TokenSeq out(target_tokens.begin(), target_tokens.begin() + accepted_len);
  if (correction) out.push_back(*correction);
  return out;
}

SpeculativeWindow speculate_window(const DraftLm& draft, TokenSpan ctx, int gamma, double temperature,
                                   Rng& rng) {
  SpeculativeWindow w;
  w.tokens.reserve(gamma);
  TokenSeq running(ctx.begin(), ctx.end());
  for (int j = 0; j < gamma; ++j) {
    const Token t = sample(draft.next_dist(running), temperature, rng);
    w.tokens.push_back(t);
    running.push_back(t);
  }
  return w;
}

ArDrafter::ArDrafter(std::shared_ptr<const DraftLm> draft) : draft_(std::move(draft)) {
  if (!draft_) throw std::invalid_argument("ar drafter: null draft");
}

Proposal ArDrafter::propose(TokenSpan ctx, int len, double temperature, Rng& rng) const {
  Proposal p;
  p.window = speculate_window(*draft_, ctx, len, temperature, rng);
  p.internal_steps = len;
  p.eta_bar = len > 0 ? 1.0 : 0.0;
  p.eta_bar_emitted = p.eta_bar;
  return p;
}

AcceptanceResult verify(const LayeredLm& target, TokenSpan ctx, const SpeculativeWindow& window,
                        double temperature, const SessionStreams& streams, bool allow_bonus) {
  if (window.tokens.empty()) throw std::invalid_argument("verify: empty window");
  AcceptanceResult r;
  r.position = ctx.size();
  r.window_len = static_cast<int>(window.tokens.size());
  TokenSeq running(ctx.begin(), ctx.end());
  for (int j = 0; j < r.window_len; ++j) {
    const std::size_t pos = r.position + j;
    const Token y = sample_with_uniform(target.final_dist(running), temperature,
                                        streams.target_uniform(pos));
    r.target_tokens.push_back(y);
    r.committed.push_back(y);
    if (window.tokens[j] != y) {
      r.accepted_len = j;
      r.correction = y;
      r.tau = j + 1;
      return r;
    }
    running.push_back(y);
  }
  r.accepted_len = r.window_len;
  if (allow_bonus) {
    const std::size_t pos = r.position + r.window_len;
    const Token bonus = sample_with_uniform(target.final_dist(running), temperature,
                                            streams.target_uniform(pos));
    r.target_tokens.push_back(bonus);
    r.committed.push_back(bonus);
  }
  return r;
}

int longest_agreeing_prefix(TokenSpan window, TokenSpan target_tokens) {
  const std::size_t n = std::min(window.size(), target_tokens.size());
  std::size_t i = 0;
  while (i < n && window[i] == target_tokens[i]) ++i;
  return static_cast<int>(i);
}

bool commit_tokens(TokenSeq& out, TokenSpan committed, const DecodeConfig& config) {
  const auto budget = static_cast<std::size_t>(config.max_new_tokens);
  for (Token t : committed) {
    if (out.size() >= budget) return true;
    out.push_back(t);
    if (config.eos && t == *config.eos) return true;
  }
  return out.size() >= budget;
}

TokenSeq ar_decode(const LayeredLm& target, TokenSpan prompt, const DecodeConfig& config) {
  if (prompt.empty()) throw std::invalid_argument("ar_decode: empty prompt");
  const SessionStreams streams(config.seed);
  TokenSeq ctx(prompt.begin(), prompt.end());
  TokenSeq out;
  while (static_cast<int>(out.size()) < config.max_new_tokens) {
    const Token y = sample_with_uniform(target.final_dist(ctx), config.temperature,
                                        streams.target_uniform(ctx.size()));
    ctx.push_back(y);
    if (commit_tokens(out, std::span(&y, 1), config)) break;
  }
  return out;
}

DecodeTrace sd_decode(const LayeredLm& target, const Drafter& drafter, TokenSpan prompt,
                      const DecodeConfig& config) {
  if (prompt.empty()) throw std::invalid_argument("sd_decode: empty prompt");
  if (drafter.vocab_size() != target.vocab_size()) {
    throw std::invalid_argument("sd_decode: draft and target vocabularies differ");
  }
  const SessionStreams streams(config.seed);
  TokenSeq ctx(prompt.begin(), prompt.end());
  DecodeTrace trace;
  bool done = config.max_new_tokens <= 0;
  while (!done) {
    const int remaining = config.max_new_tokens - static_cast<int>(trace.tokens.size());
    const int len = std::min(config.gamma, remaining);
    Rng rng = streams.draft_fresh(ctx.size());
    const Proposal prop = drafter.propose(ctx, len, config.temperature, rng);
    AcceptanceResult r = verify(target, ctx, prop.window, config.temperature, streams, len < remaining);

    StepRecord rec;
    rec.step = trace.steps.size();
    rec.position = ctx.size();
    rec.window_len = len;
    rec.accepted_len = r.accepted_len;
    rec.corrected = r.has_correction();
    rec.draft_steps = prop.internal_steps;
    rec.eta_bar = prop.eta_bar;

    const std::size_t before = trace.tokens.size();
    done = commit_tokens(trace.tokens, r.committed, config);
    rec.committed = static_cast<int>(trace.tokens.size() - before);
    ctx.insert(ctx.end(), trace.tokens.begin() + before, trace.tokens.end());
    trace.steps.push_back(rec);
    trace.results.push_back(std::move(r));
  }
  return trace;
}

AcceptanceStats acceptance_stats(std::span<const AcceptanceResult> trace, int gamma) {
  if (trace.empty()) throw std::invalid_argument("acceptance_stats: empty trace");
  if (gamma < 1) throw std::invalid_argument("acceptance_stats: gamma must be >= 1");
  double sum = 0.0;
  for (const auto& r : trace) sum += r.accepted_len;
  AcceptanceStats s;
  s.mean_accept_len = sum / static_cast<double>(trace.size());
  s.rho = s.mean_accept_len / gamma;
  return s;
}

AcceptanceStats acceptance_stats(std::span<const StepRecord> trace, int gamma) {
  if (trace.empty()) throw std::invalid_argument("acceptance_stats: empty trace");
  if (gamma < 1) throw std::invalid_argument("acceptance_stats: gamma must be >= 1");
  double sum = 0.0;
  for (const auto& r : trace) sum += r.accepted_len;
  AcceptanceStats s;
  s.mean_accept_len = sum / static_cast<double>(trace.size());
  s.rho = s.mean_accept_len / gamma;
  return s;
}

}  // namespace spdlab
