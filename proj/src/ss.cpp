#include "spdlab/ss.hpp"

#include <cmath>
#include <stdexcept>

namespace spdlab {

SsDraft::SsDraft(std::shared_ptr<const DraftLm> inner, int streams, std::vector<double> keep_probs)
    : inner_(std::move(inner)), streams_(streams), keep_probs_(std::move(keep_probs)) {
  if (!inner_) throw std::invalid_argument("ss draft: null inner draft");
  if (streams_ < 1) throw std::invalid_argument("ss draft: streams must be >= 1");
  if (static_cast<int>(keep_probs_.size()) != streams_) {
    throw std::invalid_argument("ss draft: one keep probability per stream required");
  }
  for (double p : keep_probs_) {
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("ss draft: keep probability outside [0, 1]");
  }
}

SsDraft::SsDraft(std::shared_ptr<const DraftLm> inner, int streams, double keep_prob)
    : SsDraft(std::move(inner), streams, std::vector<double>(std::max(streams, 0), keep_prob)) {}

SsEmission ss_emit(const SsDraft& draft, TokenSpan ctx, double temperature, Rng& rng) {
  SsEmission e;
  TokenSeq running(ctx.begin(), ctx.end());
  auto emit_one = [&] {
    const Token t = sample(draft.inner().next_dist(running), temperature, rng);
    e.tokens.push_back(t);
    running.push_back(t);
  };
  emit_one();
  for (int j = 1; j <= draft.streams(); ++j) {
    const double keep = draft.keep_prob(j);
    bool kept = keep >= 1.0;
    if (keep > 0.0 && keep < 1.0) kept = rng.uniform() < keep;
    if (!kept) break;
    emit_one();
  }
  return e;
}

SsWindow ss_window(const SsDraft& draft, TokenSpan ctx, int gamma, double temperature, Rng& rng) {
  if (gamma < 0) throw std::invalid_argument("ss_window: negative gamma");
  SsWindow w;
  TokenSeq running(ctx.begin(), ctx.end());
  int total = 0;
  while (static_cast<int>(w.window.tokens.size()) < gamma) {
    SsEmission e = ss_emit(draft, running, temperature, rng);
    w.emitted.push_back(e.eta());
    total += e.eta();
    for (Token t : e.tokens) {
      running.push_back(t);
      if (static_cast<int>(w.window.tokens.size()) < gamma) w.window.tokens.push_back(t);
    }
  }
  w.internal_steps = static_cast<int>(w.emitted.size());
  if (w.internal_steps > 0) {
    w.eta_bar = static_cast<double>(gamma) / w.internal_steps;
    w.eta_bar_emitted = static_cast<double>(total) / w.internal_steps;
  }
  return w;
}

int work_bound(int gamma, double eta_bar) {
  if (!(eta_bar > 0.0)) throw std::invalid_argument("work_bound: eta_bar must be > 0");
  // Guard against gamma / eta_bar landing a hair above an integer.
  const double q = static_cast<double>(gamma) / eta_bar;
  const double r = std::round(q);
  return static_cast<int>(std::abs(q - r) < 1e-12 ? r : std::ceil(q));
}

Proposal SsDrafter::propose(TokenSpan ctx, int len, double temperature, Rng& rng) const {
  SsWindow w = ss_window(draft_, ctx, len, temperature, rng);
  Proposal p;
  p.window = std::move(w.window);
  p.internal_steps = w.internal_steps;
  p.eta_bar = w.eta_bar;
  p.eta_bar_emitted = w.eta_bar_emitted;
  return p;
}

}  // namespace spdlab
