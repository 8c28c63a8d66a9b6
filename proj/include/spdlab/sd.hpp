#pragma once

// Vanilla speculative decoding: window speculation, left-to-right
// verification with the token-match acceptance operator, and the target-only
// reference decoder.

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "spdlab/core.hpp"
#include "spdlab/models.hpp"

namespace spdlab {

/// Randomness for one decode session. Every stream is keyed by absolute
/// token position, so vanilla SD, the mirror decoder and target-only decoding
/// draw identical target randomness per position.
class SessionStreams {
 public:
  explicit SessionStreams(std::uint64_t seed) : root_(seed) {}

  /// Uniform driving the target's token at absolute position pos.
  double target_uniform(std::size_t pos) const;
  /// Draft stream for a fresh window whose first token lands at pos.
  Rng draft_fresh(std::size_t pos) const;
  /// Draft stream for hypothesis-tree branch `branch` built at pos.
  Rng tree_branch(std::size_t pos, std::size_t branch) const;

 private:
  Rng root_;
};

enum class WindowSource { fresh, reused_branch, reused_root };

const char* to_string(WindowSource s);

struct SpeculativeWindow {
  TokenSeq tokens;
  WindowSource source = WindowSource::fresh;
};

struct AcceptanceResult {
  std::size_t position = 0;  // absolute index of the first window token
  int window_len = 0;
  int accepted_len = 0;  // A_t
  std::optional<Token> correction;
  std::optional<int> tau;  // A_t + 1 when a correction exists
  TokenSeq committed;
  TokenSeq target_tokens;
  bool fallback = false;

  bool has_correction() const { return correction.has_value(); }
  /// Accepted target tokens followed by the correction (the corrected prefix).
  TokenSeq corrected_prefix() const;
};

/// A proposed window plus the draft work it took.
struct Proposal {
  SpeculativeWindow window;
  int internal_steps = 0;  // J
  double eta_bar = 0.0;    // tokens placed in the window per internal step
  double eta_bar_emitted = 0.0;  // tokens emitted (before truncation) per step
};

/// Strategy for producing draft windows (plain autoregressive or streaming).
class Drafter {
 public:
  virtual ~Drafter() = default;
  virtual int vocab_size() const = 0;
  /// Proposes `len` tokens continuing ctx; len == 0 yields an empty proposal.
  virtual Proposal propose(TokenSpan ctx, int len, double temperature, Rng& rng) const = 0;
};

/// γ tokens sampled autoregressively from the draft; γ draws at temperature
/// > 0 and none at temperature 0.
SpeculativeWindow speculate_window(const DraftLm& draft, TokenSpan ctx, int gamma,
                                   double temperature, Rng& rng);

class ArDrafter final : public Drafter {
 public:
  explicit ArDrafter(std::shared_ptr<const DraftLm> draft);
  int vocab_size() const override { return draft_->vocab_size(); }
  Proposal propose(TokenSpan ctx, int len, double temperature, Rng& rng) const override;
  const DraftLm& model() const { return *draft_; }

 private:
  std::shared_ptr<const DraftLm> draft_;
};

/// Rolls the target forward along the window with teacher forcing and stops
/// at the first disagreement. On full acceptance a bonus target token is
/// committed when allow_bonus is set.
AcceptanceResult verify(const LayeredLm& target, TokenSpan ctx, const SpeculativeWindow& window,
                        double temperature, const SessionStreams& streams, bool allow_bonus = true);

/// Brute-force longest agreeing prefix of two token sequences.
int longest_agreeing_prefix(TokenSpan window, TokenSpan target_tokens);

enum class ReuseCase { none, root_hit, deep_hit, fallback, no_correction };

const char* to_string(ReuseCase c);

/// Per-step trace record shared by every speculative decoder.
struct StepRecord {
  std::size_t step = 0;
  std::size_t position = 0;
  int window_len = 0;
  int accepted_len = 0;
  bool corrected = false;
  std::optional<bool> fallback;  // present iff a correction occurred in a tree-based decoder
  ReuseCase reuse = ReuseCase::none;
  WindowSource source = WindowSource::fresh;
  int draft_steps = 0;  // J charged for producing this step's window (0 when reused)
  double eta_bar = 0.0;
  int tree_steps = 0;  // critical-path internal steps of the tree built during this step
  std::vector<int> branch_steps;  // internal steps of every branch of that tree
  int committed = 0;
  std::size_t payload_items = 0;
  double omega = std::nan("");
};

struct DecodeTrace {
  TokenSeq tokens;  // newly generated tokens only
  std::vector<AcceptanceResult> results;
  std::vector<StepRecord> steps;
};

/// Target-only reference decoder using the same per-position randomness.
TokenSeq ar_decode(const LayeredLm& target, TokenSpan prompt, const DecodeConfig& config);

/// Repeats speculate + verify until max_new_tokens are committed or eos is
/// emitted. Throws std::invalid_argument on an empty prompt or vocab mismatch.
DecodeTrace sd_decode(const LayeredLm& target, const Drafter& drafter, TokenSpan prompt,
                      const DecodeConfig& config);

struct AcceptanceStats {
  double mean_accept_len = 0.0;
  double rho = 0.0;
};

/// Throws std::invalid_argument on an empty trace.
AcceptanceStats acceptance_stats(std::span<const AcceptanceResult> trace, int gamma);
AcceptanceStats acceptance_stats(std::span<const StepRecord> trace, int gamma);

/// Appends committed tokens to out and reports whether decoding must stop
/// (budget reached or eos emitted; tokens after eos are dropped).
bool commit_tokens(TokenSeq& out, TokenSpan committed, const DecodeConfig& config);

}  // namespace spdlab
