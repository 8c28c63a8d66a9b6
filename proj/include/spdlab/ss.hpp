#pragma once

// Speculative-streaming draft: one internal step emits a main-stream token
// plus up to `streams` lookahead tokens, each kept with a per-stream
// probability. A dropped lookahead token ends the emission.

#include <memory>
#include <vector>

#include "spdlab/sd.hpp"

namespace spdlab {

class SsDraft {
 public:
  /// keep_probs.size() must equal streams; every entry in [0, 1].
  SsDraft(std::shared_ptr<const DraftLm> inner, int streams, std::vector<double> keep_probs);
  /// Constant keep probability across streams.
  SsDraft(std::shared_ptr<const DraftLm> inner, int streams, double keep_prob);

  const DraftLm& inner() const { return *inner_; }
  int streams() const { return streams_; }
  double keep_prob(int stream) const { return keep_probs_.at(stream - 1); }

 private:
  std::shared_ptr<const DraftLm> inner_;
  int streams_;
  std::vector<double> keep_probs_;
};

struct SsEmission {
  TokenSeq tokens;
  int eta() const { return static_cast<int>(tokens.size()); }
};

/// Keep decisions consume an rng draw only when the stream's keep probability
/// lies strictly between 0 and 1, and precede the lookahead token's draw.
SsEmission ss_emit(const SsDraft& draft, TokenSpan ctx, double temperature, Rng& rng);

struct SsWindow {
  SpeculativeWindow window;
  int internal_steps = 0;           // J
  std::vector<int> emitted;         // eta_j as emitted
  double eta_bar = 0.0;             // gamma / J: tokens actually placed per step
  double eta_bar_emitted = 0.0;     // sum(eta_j) / J before truncation to gamma
};

/// Emits until at least gamma tokens exist, then truncates to gamma.
SsWindow ss_window(const SsDraft& draft, TokenSpan ctx, int gamma, double temperature, Rng& rng);

/// ceil(gamma / eta_bar): the internal-step bound for a given mean emission.
int work_bound(int gamma, double eta_bar);

class SsDrafter final : public Drafter {
 public:
  explicit SsDrafter(SsDraft draft) : draft_(std::move(draft)) {}
  int vocab_size() const override { return draft_.inner().vocab_size(); }
  Proposal propose(TokenSpan ctx, int len, double temperature, Rng& rng) const override;
  const SsDraft& draft() const { return draft_; }

 private:
  SsDraft draft_;
};

}  // namespace spdlab
