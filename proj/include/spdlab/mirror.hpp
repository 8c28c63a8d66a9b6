#pragma once

// Mirror step semantics: the early-exit Top-κ message, the branch-complete
// hypothesis tree built from it, the verification-vs-reuse criterion that
// selects the next window, and fallback / overlap-mass accounting.

#include <optional>
#include <set>
#include <vector>

#include "spdlab/sd.hpp"

namespace spdlab {

/// Top-κ of the target's layer-`exit_layer` distribution at ctx, tagged with
/// the layer and the absolute position it predicts.
TopKMessage early_exit_message(const LayeredLm& target, TokenSpan ctx, int exit_layer, int kappa);

/// κ linear branches. Branch i starts with the message's i-th token and
/// carries gamma - 1 further draft tokens, so every branch has depth gamma.
struct HypothesisTree {
  std::size_t position = 0;  // absolute position of the root tokens
  int gamma = 0;
  TopKMessage message;
  std::vector<TokenSeq> branches;
  std::vector<int> branch_steps;  // internal draft steps spent on each branch

  std::size_t kappa() const { return branches.size(); }
};

/// Branch i draws from the substream keyed by (position, i), so branches are
/// order-independent and can be built concurrently.
HypothesisTree build_tree(const Drafter& drafter, TokenSpan ctx, const TopKMessage& msg, int gamma,
                          double temperature, const SessionStreams& streams);

/// Distinct length-r prefixes over all branches. Throws std::invalid_argument
/// unless 1 <= r <= gamma.
std::set<TokenSeq> paths_at_depth(const HypothesisTree& tree, int r);

struct ReuseDecision {
  ReuseCase kind = ReuseCase::fallback;  // root_hit, deep_hit or fallback
  bool no_correction = false;            // full acceptance; never reusable
  std::optional<std::size_t> branch_index;
  std::optional<TokenSeq> continuation;  // branch tokens after depth tau

  bool fallback() const { return kind == ReuseCase::fallback; }
};

/// Reuse succeeds when the corrected prefix is a tree path of depth tau; the
/// first matching branch by ascending index supplies the continuation.
/// Throws std::invalid_argument when tree and result positions differ.
ReuseDecision reuse_lookup(const HypothesisTree& tree, const AcceptanceResult& result);

/// Sum of final-distribution mass over the proxy's Top-κ set.
double overlap_mass(const Distribution& final_dist, const Distribution& proxy, int kappa);

struct MirrorOptions {
  /// Treat every corrected step as a fallback (the next window is always a
  /// fresh rollout). Used to compare against vanilla speculative decoding.
  bool force_fallback = false;
};

struct MirrorStepOutcome {
  AcceptanceResult result;
  ReuseDecision decision;
  StepRecord record;
  HypothesisTree tree;
};

/// One step: early exit at ctx, tree build for the next window, verification
/// of `window`, and reuse lookup. `window` is the current step's window
/// (a fresh rollout or the previous step's reused continuation).
MirrorStepOutcome mirror_step(const LayeredLm& target, const Drafter& drafter, TokenSpan ctx,
                              const SpeculativeWindow& window, const DecodeConfig& config,
                              const SessionStreams& streams, bool allow_bonus,
                              const MirrorOptions& options = {});

/// Full decode; config must be resolved (exit_layer set).
DecodeTrace mirror_decode(const LayeredLm& target, const Drafter& drafter, TokenSpan prompt,
                          const DecodeConfig& config, const MirrorOptions& options = {});

struct FallbackStats {
  double ff = 0.0;              // mean F_t over corrected steps
  double ff_stderr = 0.0;
  double omega_estimate = 0.0;  // mean overlap mass over the same corrected steps
  double omega_all = 0.0;       // mean overlap mass over every step
  std::size_t corrected_steps = 0;
};

/// Throws std::invalid_argument on an empty trace.
FallbackStats fallback_stats(std::span<const StepRecord> trace);

}  // namespace spdlab
