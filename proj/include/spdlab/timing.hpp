#pragma once

// Analytic latency and communication model for heterogeneous draft/target
// execution. All times are milliseconds.

#include <optional>
#include <utility>
#include <vector>

#include "json.hpp"

namespace spdlab {

struct Rendezvous {
  double sample_ms = 0.05;
  double transfer_ms = 0.0;  // fixed part; the channel adds channel_beta * B * kappa
};

struct LatencyParams {
  std::vector<double> layer_compute = std::vector<double>(8, 1.0);  // u^t per target layer
  int exit_layer = 4;
  double draft_step_compute = 0.4;  // u^d for one window
  std::optional<double> tree_step_compute;  // u^d while expanding the tree; defaults to draft_step_compute
  double draft_step_sync = 0.0;     // non-collective part of s^d
  Rendezvous rv_ee;
  Rendezvous rv_fv;
  double channel_beta = 0.0;  // ms per (id, logp) item on the token channel
  double alpha = 0.01;        // per-hop allreduce latency
  double beta = 1e-6;         // per-word allreduce transfer time
  int target_group = 8;
  int draft_group = 8;
  double hidden_target = 4096.0;
  double hidden_draft = 2048.0;
  double tokens_per_collective_target = 1.0;
  std::optional<double> tokens_per_collective_draft;  // defaults to gamma * kappa
  int batch = 1;
  int kappa = 8;   // channel width, sizes the token-channel payload
  int gamma = 7;   // sizes the default draft collective
  bool include_collectives = true;  // add 2 allreduces per target layer and per draft step
  int branch_parallelism = 0;       // tree branches run concurrently; 0 means all

  int depth() const { return static_cast<int>(layer_compute.size()); }
  /// Throws std::invalid_argument on negative times, 1 <= exit_layer < N
  /// violations or groups below 1.
  void validate() const;
};

/// alpha * log2(group) + beta * words.
double allreduce_cost(double words, int group, double alpha, double beta);

/// Words per rank: B * S * H / G.
double target_shard_words(const LatencyParams& p);
double draft_shard_words(const LatencyParams& p);

/// 2 N allreduces over target shards.
double target_comm_cost(const LatencyParams& p, int layers);
/// 2 J allreduces over draft shards.
double draft_comm_cost(const LatencyParams& p, int internal_steps);

/// c_l = u^t_l (+ two allreduces when collectives are modeled); 1-based.
double layer_time(const LatencyParams& p, int layer);
double target_time(const LatencyParams& p);
double target_prefix_time(const LatencyParams& p);
/// Overlap budget: the target suffix after the early exit.
double overlap_budget(const LatencyParams& p);

/// u^d + s^d for one internal step (s^d includes the step's collectives).
double draft_step_time(const LatencyParams& p);
double tree_step_time(const LatencyParams& p);
/// J (u^d + s^d).
double draft_gen_time(const LatencyParams& p, int internal_steps);

double rendezvous_ee(const LatencyParams& p);
double rendezvous_fv(const LatencyParams& p);
double rendezvous_total(const LatencyParams& p);

struct StepLatency {
  double prefix = 0.0;
  double suffix = 0.0;  // overlap budget
  double draft_gen = 0.0;
  double rv_ee = 0.0;
  double rv_fv = 0.0;
  double total = 0.0;
};

/// prefix + rv_ee + max(suffix, draft_gen) + rv_fv.
StepLatency mirror_step_latency(const LatencyParams& p, double draft_gen);

/// T_target + draft_gen; vanilla pays no rendezvous.
double vanilla_step_latency(const LatencyParams& p, double draft_gen);

struct TimeSaved {
  double delta_t = 0.0;   // min(budget, draft_gen) - T_rv
  double speedup = 0.0;   // vanilla / mirror via the piecewise form
  bool mirror_faster = false;  // T_rv < min(budget, draft_gen)
};

TimeSaved time_saved_and_speedup(const LatencyParams& p, double draft_gen);

struct BatchingChoice {
  int kappa = 8;
  int ss_streams = 2;
  friend bool operator==(const BatchingChoice&, const BatchingChoice&) = default;
};

/// Channel width and streaming depth per batch size. Throws on B < 1.
BatchingChoice batching_policy(int batch);

struct BatchCoefficients {
  double target_a = 1.0;
  double target_b = 0.0;
  double draft_a = 1.0;
  double draft_b = 0.0;
};

/// Scales target layer compute by (a_t + b_t B), single-window draft compute
/// by (a_d + b_d B) and tree-expansion draft compute by (a_d + b_d kappa B).
/// Collective sizes follow from batch = B. Throws on B < 1.
LatencyParams batch_scale(const LatencyParams& base, int batch, int kappa, const BatchCoefficients& c);

/// Critical-path internal steps of a tree whose branches took `branch_steps`,
/// run `parallelism` at a time (0 means all at once).
int tree_critical_steps(const std::vector<int>& branch_steps, int parallelism);

void to_json(nlohmann::json& j, const LatencyParams& p);
/// Every field optional; unknown keys throw std::invalid_argument naming the key.
void from_json(const nlohmann::json& j, LatencyParams& p);
void to_json(nlohmann::json& j, const BatchCoefficients& c);
void from_json(const nlohmann::json& j, BatchCoefficients& c);

}  // namespace spdlab
