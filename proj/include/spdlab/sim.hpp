#pragma once

// End-to-end experiments: semantic decodes charged with the latency model,
// per-step device timelines, and the tri-objective / fallback / batching
// sweeps.

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "spdlab/mirror.hpp"
#include "spdlab/sd.hpp"
#include "spdlab/ss.hpp"
#include "spdlab/timing.hpp"

namespace spdlab {

enum class Mode { ar, vanilla, mirror, mirror_ss };

const char* to_string(Mode m);
/// Throws std::invalid_argument for an unknown name.
Mode parse_mode(const std::string& name);
inline constexpr Mode kAllModes[] = {Mode::ar, Mode::vanilla, Mode::mirror, Mode::mirror_ss};

struct ModelPair {
  std::shared_ptr<const LayeredLm> target;
  std::shared_ptr<const DraftLm> draft;
};

struct SsSettings {
  int streams = 3;
  double keep_prob = 0.7;
};

struct SimOptions {
  SsSettings ss;
  MirrorOptions mirror;
  bool record_timelines = false;
};

struct Interval {
  std::string lane;  // target | draft | channel
  double start = 0.0;
  double end = 0.0;
  std::string label;
};

struct StepTimeline {
  std::size_t step = 0;
  double start = 0.0;
  std::vector<Interval> intervals;
  double total = 0.0;             // max lane end - start
  double overlapped_total = 0.0;  // target-prefix start to final rendezvous end
  double analytic = 0.0;          // closed-form latency of the same span
};

/// Event-driven schedule of one mirror step: an optional serial fresh
/// rollout, then prefix -> early-exit rendezvous -> (suffix || tree) ->
/// final rendezvous. Each task starts once its lane is free and its inputs
/// are done.
StepTimeline schedule_mirror_step(const LatencyParams& p, double start, double fresh_gen, double tree_gen);
/// Draft rollout then full target verification on separate lanes.
StepTimeline schedule_vanilla_step(const LatencyParams& p, double start, double draft_gen);

struct ExperimentResult {
  Mode mode = Mode::ar;
  TokenSeq tokens;
  std::size_t steps = 0;
  double mean_accept = 0.0;
  double rho = 0.0;
  double ff = std::nan("");
  double ff_stderr = std::nan("");
  double omega = std::nan("");
  std::size_t corrected_steps = 0;
  double wall_ms = 0.0;
  double ar_wall_ms = 0.0;
  double mean_step_ms = 0.0;
  double draft_ms = 0.0;          // all draft work: fresh rollouts plus tree expansion
  double exposed_draft_ms = 0.0;  // draft work on the critical path
  double exposed_tree_ms = 0.0;   // tree expansion beyond the overlap budget
  double mean_tree_ms = 0.0;      // tree expansion per step (mirror modes)
  double mean_fresh_steps = 0.0;  // mean J over fresh windows
  double tokens_per_sec = 0.0;
  double speedup = 0.0;
  std::vector<StepRecord> records;
  std::vector<StepTimeline> timelines;
  double max_timeline_error = 0.0;  // max |overlapped_total - analytic| over steps
};

/// Runs one decoding mode and charges its latency. Throws
/// std::invalid_argument on a vocabulary mismatch, an empty prompt, or a
/// latency depth that differs from the target's.
ExperimentResult run_mode(Mode mode, const ModelPair& models, TokenSpan prompt, const DecodeConfig& config,
                          const LatencyParams& latency, const SimOptions& options = {});

/// The drafter each mode uses (null for ar).
std::unique_ptr<Drafter> make_drafter(Mode mode, const ModelPair& models, const SsSettings& ss);

/// Latency params with the decode's gamma, kappa and exit layer folded in.
LatencyParams bind_latency(const LatencyParams& latency, const DecodeConfig& config);

struct LosslessReport {
  bool ok = true;
  std::string detail;  // first divergence per offending mode
};

/// Compares every result's tokens with the first ar result (or the first
/// result when no ar run is present).
LosslessReport check_lossless(const std::vector<ExperimentResult>& results);

// ---- four-mode bench -----------------------------------------------------

struct BenchSeed {
  std::uint64_t seed = 0;
  std::vector<ExperimentResult> results;  // one per mode, in request order
};

struct Bench {
  std::vector<Mode> modes;
  std::vector<BenchSeed> seeds;
  std::vector<std::string> violations;     // ordering failures
  std::vector<std::string> lossless_errors;
};

/// Ordering checked per seed over the modes present: mirror_ss >= mirror >=
/// vanilla >= 1 in speedup.
Bench run_bench(const std::vector<Mode>& modes, const ModelPair& models, TokenSpan prompt,
                const DecodeConfig& config, const LatencyParams& latency, const SimOptions& options,
                const std::vector<std::uint64_t>& seeds, int jobs = 0);

// ---- tri-objective sweep -------------------------------------------------

struct TriRow {
  int gamma = 0;
  Mode mode = Mode::ar;
  double mean_accept = 0.0;
  double rho = 0.0;
  double internal_steps = 0.0;  // mean J behind the draft work counted in draft_gen_ms
  double draft_gen_ms = 0.0;    // per-step draft time the step formula sees
  double step_ms = 0.0;         // analytic step latency at that draft time
  double budget_ms = 0.0;
  double wall_ms = 0.0;
  double speedup = 0.0;
  ExperimentResult result;
};

struct TriSweep {
  std::vector<TriRow> rows;  // gamma-major, mode-minor
  std::vector<std::string> violations;
  std::vector<std::string> lossless_errors;
};

/// Throws std::invalid_argument on an empty gamma list.
TriSweep sweep_tri_objective(const std::vector<int>& gammas, const std::vector<Mode>& modes,
                             const ModelPair& models, TokenSpan prompt, const DecodeConfig& config,
                             const LatencyParams& latency, const SimOptions& options, int jobs = 0);

/// Largest gamma of the sweep with draft time within the budget; 0 if none.
int zero_slope_threshold(const TriSweep& sweep, Mode mode);

// ---- fallback sweep ------------------------------------------------------

struct FallbackCell {
  int exit_layer = 0;
  int kappa = 0;
  std::size_t corrected_steps = 0;
  std::size_t seeds_used = 0;
  double ff = 0.0;
  double ff_stderr = 0.0;
  double omega = 0.0;         // mean overlap mass over the corrected steps
  double omega_stderr = 0.0;
  double bound_gap = 0.0;     // mean of F_t - (1 - omega_t)
  double bound_stderr = 0.0;  // standard error of that mean
  bool bound_ok = false;      // bound_gap <= 3 bound_stderr
};

/// One corrected verification step of a driving trajectory, kept so every
/// (exit, kappa) tree is evaluated on identical steps.
struct CorrectedStep {
  std::uint64_t seed = 0;
  TokenSeq ctx;
  AcceptanceResult result;
};

/// Vanilla-SD trajectories over seed, seed+1, ... until at least
/// min_corrected corrected steps are collected; truncated to exactly that many.
std::vector<CorrectedStep> collect_corrected_steps(const ModelPair& models, TokenSpan prompt,
                                                   const DecodeConfig& config, std::size_t min_corrected,
                                                   int jobs = 0);

struct PointwiseFallback {
  std::vector<int> exits;
  std::vector<int> kappas;
  std::vector<std::vector<std::vector<unsigned char>>> f;  // [exit][step][kappa] = F_t
  std::size_t steps = 0;
  std::size_t violations = 0;  // steps where F_t increased along ascending kappa
};

/// F_t for every (exit, kappa) on shared steps; each tree is built
/// independently with the mirror drafter.
PointwiseFallback pointwise_fallback(const std::vector<int>& kappas, const std::vector<int>& exits,
                                     const ModelPair& models, const std::vector<CorrectedStep>& steps,
                                     const DecodeConfig& config, int jobs = 0);

struct FallbackSweep {
  std::vector<FallbackCell> cells;  // exit-major, kappa-minor
  std::vector<int> exits;
  std::vector<int> kappas;
  std::vector<std::string> violations;
};

/// Mirror decodes per (exit, kappa) cell over seeds config.seed, +1, ...
/// until min_corrected corrected steps are reached. Throws
/// std::invalid_argument on an empty axis or an exit outside (0, N).
FallbackSweep sweep_fallback(const std::vector<int>& kappas, const std::vector<int>& exits,
                             const ModelPair& models, TokenSpan prompt, const DecodeConfig& config,
                             std::size_t min_corrected, int jobs = 0);
FallbackSweep sweep_fallback_serial(const std::vector<int>& kappas, const std::vector<int>& exits,
                                    const ModelPair& models, TokenSpan prompt, const DecodeConfig& config,
                                    std::size_t min_corrected);

// ---- batching sweep ------------------------------------------------------

struct BatchRow {
  int batch = 1;
  int kappa = 0;
  int ss_streams = 0;
  double ar_step_ms = 0.0;
  double vanilla_speedup = 0.0;
  double mirror_speedup = 0.0;
  double vanilla_step_ms = 0.0;
  double mirror_step_ms = 0.0;
  double vanilla_wall_ms = 0.0;  // pooled over seeds
  double mirror_wall_ms = 0.0;
  double budget_ms = 0.0;
  double vanilla_draft_ms = 0.0;
  double mirror_exposed_tree_ms = 0.0;
  double relative_draft_overhead = 0.0;  // mirror tree time beyond the budget / vanilla draft time
  double vanilla_mean_accept = 0.0;
  double mirror_mean_accept = 0.0;
  double mirror_ff = 0.0;
};

struct BatchSweep {
  std::vector<BatchRow> rows;
  std::vector<std::string> violations;
  std::vector<std::string> lossless_errors;
};

/// Per batch size: batching_policy picks kappa and the stream count, the
/// latency model is scaled by batch_scale, and vanilla (autoregressive draft)
/// and mirror (streaming draft) run on every seed. Totals are pooled over seeds.
BatchSweep sweep_batching(const std::vector<int>& batches, const ModelPair& models, TokenSpan prompt,
                          const DecodeConfig& config, const LatencyParams& latency,
                          const BatchCoefficients& coefficients, const SimOptions& options,
                          const std::vector<std::uint64_t>& seeds, int jobs = 0);

}  // namespace spdlab
