#include "spdlab/mirror.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spdlab {

TopKMessage early_exit_message(const LayeredLm& target, TokenSpan ctx, int exit_layer, int kappa) {
  if (exit_layer < 1 || exit_layer >= target.depth()) {
    throw std::invalid_argument("early exit layer must lie in [1, depth - 1]");
  }
  TopKMessage msg = top_k(target.layer_dist(ctx, exit_layer), kappa);
  msg.origin_layer = exit_layer;
  msg.origin_position = ctx.size();
  return msg;
}

HypothesisTree build_tree(const Drafter& drafter, TokenSpan ctx, const TopKMessage& msg, int gamma,
                          double temperature, const SessionStreams& streams) {
  if (gamma < 1) throw std::invalid_argument("build_tree: gamma must be >= 1");
  HypothesisTree tree;
  tree.position = ctx.size();
  tree.gamma = gamma;
  tree.message = msg;
  tree.branches.resize(msg.size());
  tree.branch_steps.assign(msg.size(), 0);
  TokenSeq rooted(ctx.begin(), ctx.end());
  rooted.push_back(0);
  for (std::size_t i = 0; i < msg.size(); ++i) {
    rooted.back() = msg.entries[i].token;
    TokenSeq& branch = tree.branches[i];
    branch.push_back(msg.entries[i].token);
    if (gamma > 1) {
      Rng rng = streams.tree_branch(tree.position, i);
      Proposal p = drafter.propose(rooted, gamma - 1, temperature, rng);
      branch.insert(branch.end(), p.window.tokens.begin(), p.window.tokens.end());
      tree.branch_steps[i] = p.internal_steps;
    }
  }
  return tree;
}

std::set<TokenSeq> paths_at_depth(const HypothesisTree& tree, int r) {
  if (r < 1 || r > tree.gamma) {
    throw std::invalid_argument("paths_at_depth: r outside [1, gamma]");
  }
  std::set<TokenSeq> out;
  for (const auto& b : tree.branches) out.emplace(b.begin(), b.begin() + r);
  return out;
}

ReuseDecision reuse_lookup(const HypothesisTree& tree, const AcceptanceResult& result) {
  if (tree.position != result.position) {
    throw std::invalid_argument("reuse_lookup: tree and verification positions differ");
  }
  ReuseDecision d;
  if (!result.has_correction()) {
    d.kind = ReuseCase::fallback;
    d.no_correction = true;
    return d;
  }
  const int tau = *result.tau;
  if (tau > tree.gamma) return d;
  const TokenSeq prefix = result.corrected_prefix();
  for (std::size_t i = 0; i < tree.branches.size(); ++i) {
    const TokenSeq& b = tree.branches[i];
    if (!std::equal(prefix.begin(), prefix.end(), b.begin())) continue;
    d.kind = result.accepted_len == 0 ? ReuseCase::root_hit : ReuseCase::deep_hit;
    d.branch_index = i;
    d.continuation = TokenSeq(b.begin() + tau, b.end());
    return d;
  }
  return d;
}

double overlap_mass(const Distribution& final_dist, const Distribution& proxy, int kappa) {
  if (final_dist.size() != proxy.size()) {
    throw std::invalid_argument("overlap_mass: vocabulary sizes differ");
  }
  const TopKMessage msg = top_k(proxy, kappa);
  double mass = 0.0;
  for (const auto& e : msg.entries) mass += final_dist[e.token];
  return std::min(mass, 1.0);
}

MirrorStepOutcome mirror_step(const LayeredLm& target, const Drafter& drafter, TokenSpan ctx,
                              const SpeculativeWindow& window, const DecodeConfig& config,
                              const SessionStreams& streams, bool allow_bonus,
                              const MirrorOptions& options) {
  if (ctx.empty()) throw std::invalid_argument("mirror_step: empty context");
  MirrorStepOutcome out;
  const TopKMessage msg = early_exit_message(target, ctx, config.exit_layer, config.kappa);
  out.tree = build_tree(drafter, ctx, msg, config.gamma, config.temperature, streams);
  out.result = verify(target, ctx, window, config.temperature, streams, allow_bonus);
  out.decision = reuse_lookup(out.tree, out.result);
  if (options.force_fallback && !out.decision.no_correction) {
    out.decision = ReuseDecision{};
  }
  out.result.fallback = out.result.has_correction() && out.decision.fallback();

  StepRecord& rec = out.record;
  rec.position = ctx.size();
  rec.window_len = out.result.window_len;
  rec.accepted_len = out.result.accepted_len;
  rec.corrected = out.result.has_correction();
  if (rec.corrected) rec.fallback = out.decision.fallback();
  rec.reuse = out.decision.no_correction ? ReuseCase::no_correction : out.decision.kind;
  rec.source = window.source;
  rec.branch_steps = out.tree.branch_steps;
  rec.tree_steps = out.tree.branch_steps.empty()
                       ? 0
                       : *std::max_element(out.tree.branch_steps.begin(), out.tree.branch_steps.end());
  rec.payload_items = out.tree.message.payload_items(1);
  rec.omega = overlap_mass(target.final_dist(ctx), target.layer_dist(ctx, config.exit_layer), config.kappa);
  return out;
}

DecodeTrace mirror_decode(const LayeredLm& target, const Drafter& drafter, TokenSpan prompt,
                          const DecodeConfig& config, const MirrorOptions& options) {
  if (prompt.empty()) throw std::invalid_argument("mirror_decode: empty prompt");
  if (drafter.vocab_size() != target.vocab_size()) {
    throw std::invalid_argument("mirror_decode: draft and target vocabularies differ");
  }
  const SessionStreams streams(config.seed);
  TokenSeq ctx(prompt.begin(), prompt.end());
  DecodeTrace trace;
  if (config.max_new_tokens <= 0) return trace;

  auto fresh = [&](int len, int& steps, double& eta_bar) {
    Rng rng = streams.draft_fresh(ctx.size());
    Proposal p = drafter.propose(ctx, len, config.temperature, rng);
    steps = p.internal_steps;
    eta_bar = p.eta_bar;
    return std::move(p.window);
  };

  int remaining = config.max_new_tokens;
  int draft_steps = 0;
  double eta_bar = 0.0;
  SpeculativeWindow window = fresh(std::min(config.gamma, remaining), draft_steps, eta_bar);
  bool done = false;
  while (!done) {
    const int len = static_cast<int>(window.tokens.size());
    MirrorStepOutcome step =
        mirror_step(target, drafter, ctx, window, config, streams, len < remaining, options);
    step.record.step = trace.steps.size();
    step.record.draft_steps = draft_steps;
    step.record.eta_bar = eta_bar;

    const std::size_t before = trace.tokens.size();
    done = commit_tokens(trace.tokens, step.result.committed, config);
    step.record.committed = static_cast<int>(trace.tokens.size() - before);
    ctx.insert(ctx.end(), trace.tokens.begin() + before, trace.tokens.end());
    remaining = config.max_new_tokens - static_cast<int>(trace.tokens.size());
    trace.steps.push_back(step.record);
    trace.results.push_back(step.result);
    if (done) break;

    const ReuseDecision& d = step.decision;
    if (!d.fallback() && d.continuation && !d.continuation->empty()) {
      window.tokens.assign(d.continuation->begin(),
                           d.continuation->begin() + std::min<std::size_t>(d.continuation->size(), remaining));
      window.source = d.kind == ReuseCase::root_hit ? WindowSource::reused_root : WindowSource::reused_branch;
      draft_steps = 0;
      eta_bar = 0.0;
    } else {
      window = fresh(std::min(config.gamma, remaining), draft_steps, eta_bar);
    }
  }
  return trace;
}

FallbackStats fallback_stats(std::span<const StepRecord> trace) {
  if (trace.empty()) throw std::invalid_argument("fallback_stats: empty trace");
  FallbackStats s;
  double ff_sum = 0.0, om_corr = 0.0, om_all = 0.0;
  std::size_t om_n = 0;
  for (const auto& r : trace) {
    if (!std::isnan(r.omega)) {
      om_all += r.omega;
      ++om_n;
    }
    if (!r.fallback) continue;
    ++s.corrected_steps;
    ff_sum += *r.fallback ? 1.0 : 0.0;
    om_corr += r.omega;
  }
  if (om_n > 0) s.omega_all = om_all / static_cast<double>(om_n);
  if (s.corrected_steps > 0) {
    const auto n = static_cast<double>(s.corrected_steps);
    s.ff = ff_sum / n;
    s.omega_estimate = om_corr / n;
    s.ff_stderr = std::sqrt(s.ff * (1.0 - s.ff) / n);
  }
  return s;
}

}  // namespace spdlab
