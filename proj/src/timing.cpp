#include "spdlab/timing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "json_util.hpp"

namespace spdlab {

void LatencyParams::validate() const {
  const int n = depth();
  if (n < 2) throw std::invalid_argument("latency.layer_compute needs at least 2 layers");
  if (exit_layer < 1 || exit_layer >= n) {
    throw std::invalid_argument("latency.exit_layer must lie in [1, N - 1]");
  }
  for (double c : layer_compute) {
    if (!(c >= 0.0)) throw std::invalid_argument("latency.layer_compute entries must be >= 0");
  }
  auto non_negative = [](double v, const char* name) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string("latency.") + name + " must be >= 0");
  };
  non_negative(draft_step_compute, "draft_step_compute");
  if (tree_step_compute) non_negative(*tree_step_compute, "tree_step_compute");
  non_negative(draft_step_sync, "draft_step_sync");
  non_negative(rv_ee.sample_ms, "rv_ee.sample_ms");
  non_negative(rv_ee.transfer_ms, "rv_ee.transfer_ms");
  non_negative(rv_fv.sample_ms, "rv_fv.sample_ms");
  non_negative(rv_fv.transfer_ms, "rv_fv.transfer_ms");
  non_negative(channel_beta, "channel_beta");
  non_negative(alpha, "alpha");
  non_negative(beta, "beta");
  non_negative(hidden_target, "hidden_target");
  non_negative(hidden_draft, "hidden_draft");
  non_negative(tokens_per_collective_target, "tokens_per_collective_target");
  if (tokens_per_collective_draft) non_negative(*tokens_per_collective_draft, "tokens_per_collective_draft");
  if (target_group < 1 || draft_group < 1) throw std::invalid_argument("latency groups must be >= 1");
  if (batch < 1) throw std::invalid_argument("latency.batch must be >= 1");
  if (kappa < 1) throw std::invalid_argument("latency.kappa must be >= 1");
  if (gamma < 1) throw std::invalid_argument("latency.gamma must be >= 1");
  if (branch_parallelism < 0) throw std::invalid_argument("latency.branch_parallelism must be >= 0");
}

double allreduce_cost(double words, int group, double alpha, double beta) {
  if (group < 1) throw std::invalid_argument("allreduce_cost: group must be >= 1");
  if (words < 0.0) throw std::invalid_argument("allreduce_cost: negative message size");
  return alpha * std::log2(static_cast<double>(group)) + beta * words;
}

double target_shard_words(const LatencyParams& p) {
  return p.batch * p.tokens_per_collective_target * p.hidden_target / p.target_group;
}

double draft_shard_words(const LatencyParams& p) {
  const double s = p.tokens_per_collective_draft.value_or(static_cast<double>(p.gamma) * p.kappa);
  return p.batch * s * p.hidden_draft / p.draft_group;
}

double target_comm_cost(const LatencyParams& p, int layers) {
  return 2.0 * layers * allreduce_cost(target_shard_words(p), p.target_group, p.alpha, p.beta);
}

double draft_comm_cost(const LatencyParams& p, int internal_steps) {
  if (internal_steps < 0) throw std::invalid_argument("draft_comm_cost: negative step count");
  return 2.0 * internal_steps * allreduce_cost(draft_shard_words(p), p.draft_group, p.alpha, p.beta);
}

double layer_time(const LatencyParams& p, int layer) {
  const double c = p.layer_compute.at(layer - 1);
  return p.include_collectives ? c + target_comm_cost(p, 1) : c;
}

namespace {

double layer_range(const LatencyParams& p, int first, int last) {
  double t = 0.0;
  for (int l = first; l <= last; ++l) t += layer_time(p, l);
  return t;
}

}  // namespace

double target_prefix_time(const LatencyParams& p) { return layer_range(p, 1, p.exit_layer); }

double overlap_budget(const LatencyParams& p) { return layer_range(p, p.exit_layer + 1, p.depth()); }

double target_time(const LatencyParams& p) { return target_prefix_time(p) + overlap_budget(p); }

double draft_step_time(const LatencyParams& p) {
  const double sync = p.draft_step_sync + (p.include_collectives ? draft_comm_cost(p, 1) : 0.0);
  return p.draft_step_compute + sync;
}

double tree_step_time(const LatencyParams& p) {
  const double sync = p.draft_step_sync + (p.include_collectives ? draft_comm_cost(p, 1) : 0.0);
  return p.tree_step_compute.value_or(p.draft_step_compute) + sync;
}

double draft_gen_time(const LatencyParams& p, int internal_steps) {
  if (internal_steps < 0) throw std::invalid_argument("draft_gen_time: negative step count");
  return internal_steps * draft_step_time(p);
}

double rendezvous_ee(const LatencyParams& p) {
  return p.rv_ee.sample_ms + p.rv_ee.transfer_ms + p.channel_beta * p.batch * p.kappa;
}

double rendezvous_fv(const LatencyParams& p) {
  return p.rv_fv.sample_ms + p.rv_fv.transfer_ms + p.channel_beta * p.batch * p.kappa;
}

double rendezvous_total(const LatencyParams& p) { return rendezvous_ee(p) + rendezvous_fv(p); }

StepLatency mirror_step_latency(const LatencyParams& p, double draft_gen) {
  StepLatency s;
  s.prefix = target_prefix_time(p);
  s.suffix = overlap_budget(p);
  s.draft_gen = draft_gen;
  s.rv_ee = rendezvous_ee(p);
  s.rv_fv = rendezvous_fv(p);
  s.total = s.prefix + s.rv_ee + std::max(s.suffix, draft_gen) + s.rv_fv;
  return s;
}

double vanilla_step_latency(const LatencyParams& p, double draft_gen) { return target_time(p) + draft_gen; }

TimeSaved time_saved_and_speedup(const LatencyParams& p, double draft_gen) {
  const double prefix = target_prefix_time(p);
  const double budget = overlap_budget(p);
  const double t_rv = rendezvous_total(p);
  TimeSaved r;
  const double hidden = std::min(budget, draft_gen);
  r.delta_t = hidden - t_rv;
  r.mirror_faster = t_rv < hidden;
  if (draft_gen <= budget) {
    const double t = target_time(p);
    r.speedup = (t + draft_gen) / (t + t_rv);
  } else {
    r.speedup = (prefix + (budget + draft_gen)) / (prefix + (draft_gen + t_rv));
  }
  return r;
}

BatchingChoice batching_policy(int batch) {
  if (batch < 1) throw std::invalid_argument("batching_policy: batch must be >= 1");
  if (batch <= 8) return {8, 2};
  if (batch <= 16) return {4, 1};
  if (batch <= 32) return {2, 1};
  return {1, 1};
}

LatencyParams batch_scale(const LatencyParams& base, int batch, int kappa, const BatchCoefficients& c) {
  if (batch < 1) throw std::invalid_argument("batch_scale: batch must be >= 1");
  if (kappa < 1) throw std::invalid_argument("batch_scale: kappa must be >= 1");
  LatencyParams p = base;
  const double b = batch;
  const double target_factor = c.target_a + c.target_b * b;
  for (double& u : p.layer_compute) u *= target_factor;
  const double base_tree = base.tree_step_compute.value_or(base.draft_step_compute);
  p.draft_step_compute = base.draft_step_compute * (c.draft_a + c.draft_b * b);
  p.tree_step_compute = base_tree * (c.draft_a + c.draft_b * kappa * b);
  p.batch = batch;
  p.kappa = kappa;
  return p;
}

int tree_critical_steps(const std::vector<int>& branch_steps, int parallelism) {
  if (branch_steps.empty()) return 0;
  if (parallelism < 0) throw std::invalid_argument("tree_critical_steps: negative parallelism");
  const std::size_t width = parallelism == 0 ? branch_steps.size() : static_cast<std::size_t>(parallelism);
  int total = 0;
  for (std::size_t start = 0; start < branch_steps.size(); start += width) {
    const auto end = std::min(branch_steps.size(), start + width);
    total += *std::max_element(branch_steps.begin() + start, branch_steps.begin() + end);
  }
  return total;
}

namespace {

using detail::read_opt;
using detail::reject_unknown;

void from_json_rv(const nlohmann::json& j, Rendezvous& r, const std::string& where) {
  reject_unknown(j, {"sample_ms", "transfer_ms"}, where);
  read_opt(j, "sample_ms", r.sample_ms, where);
  read_opt(j, "transfer_ms", r.transfer_ms, where);
}

}  // namespace

void to_json(nlohmann::json& j, const LatencyParams& p) {
  j = nlohmann::json{
      {"layer_compute", p.layer_compute},
      {"exit_layer", p.exit_layer},
      {"draft_step_compute", p.draft_step_compute},
      {"tree_step_compute", p.tree_step_compute ? nlohmann::json(*p.tree_step_compute) : nlohmann::json()},
      {"draft_step_sync", p.draft_step_sync},
      {"rv_ee", {{"sample_ms", p.rv_ee.sample_ms}, {"transfer_ms", p.rv_ee.transfer_ms}}},
      {"rv_fv", {{"sample_ms", p.rv_fv.sample_ms}, {"transfer_ms", p.rv_fv.transfer_ms}}},
      {"channel_beta", p.channel_beta},
      {"alpha", p.alpha},
      {"beta", p.beta},
      {"target_group", p.target_group},
      {"draft_group", p.draft_group},
      {"hidden_target", p.hidden_target},
      {"hidden_draft", p.hidden_draft},
      {"tokens_per_collective_target", p.tokens_per_collective_target},
      {"tokens_per_collective_draft",
       p.tokens_per_collective_draft ? nlohmann::json(*p.tokens_per_collective_draft) : nlohmann::json()},
      {"batch", p.batch},
      {"kappa", p.kappa},
      {"gamma", p.gamma},
      {"include_collectives", p.include_collectives},
      {"branch_parallelism", p.branch_parallelism},
  };
}

void from_json(const nlohmann::json& j, LatencyParams& p) {
  const std::string w = "latency";
  reject_unknown(j,
                 {"layer_compute", "num_layers", "exit_layer", "draft_step_compute", "tree_step_compute",
                  "draft_step_sync", "rv_ee", "rv_fv", "channel_beta", "alpha", "beta", "target_group",
                  "draft_group", "hidden_target", "hidden_draft", "tokens_per_collective_target",
                  "tokens_per_collective_draft", "batch", "kappa", "gamma", "include_collectives",
                  "branch_parallelism"},
                 w);
  // num_layers resizes a uniform stack; an explicit layer_compute wins.
  if (j.contains("num_layers")) {
    int n = 0;
    read_opt(j, "num_layers", n, w);
    if (n < 2) throw std::invalid_argument("latency.num_layers must be >= 2");
    const double c = p.layer_compute.empty() ? 1.0 : p.layer_compute.front();
    p.layer_compute.assign(n, c);
  }
  read_opt(j, "layer_compute", p.layer_compute, w);
  read_opt(j, "exit_layer", p.exit_layer, w);
  read_opt(j, "draft_step_compute", p.draft_step_compute, w);
  read_opt(j, "tree_step_compute", p.tree_step_compute, w);
  read_opt(j, "draft_step_sync", p.draft_step_sync, w);
  if (j.contains("rv_ee")) from_json_rv(j.at("rv_ee"), p.rv_ee, w + ".rv_ee");
  if (j.contains("rv_fv")) from_json_rv(j.at("rv_fv"), p.rv_fv, w + ".rv_fv");
  read_opt(j, "channel_beta", p.channel_beta, w);
  read_opt(j, "alpha", p.alpha, w);
  read_opt(j, "beta", p.beta, w);
  read_opt(j, "target_group", p.target_group, w);
  read_opt(j, "draft_group", p.draft_group, w);
  read_opt(j, "hidden_target", p.hidden_target, w);
  read_opt(j, "hidden_draft", p.hidden_draft, w);
  read_opt(j, "tokens_per_collective_target", p.tokens_per_collective_target, w);
  read_opt(j, "tokens_per_collective_draft", p.tokens_per_collective_draft, w);
  read_opt(j, "batch", p.batch, w);
  read_opt(j, "kappa", p.kappa, w);
  read_opt(j, "gamma", p.gamma, w);
  read_opt(j, "include_collectives", p.include_collectives, w);
  read_opt(j, "branch_parallelism", p.branch_parallelism, w);
  p.validate();
}

void to_json(nlohmann::json& j, const BatchCoefficients& c) {
  j = nlohmann::json{{"target_a", c.target_a}, {"target_b", c.target_b}, {"draft_a", c.draft_a}, {"draft_b", c.draft_b}};
}

void from_json(const nlohmann::json& j, BatchCoefficients& c) {
  const std::string w = "batching";
  reject_unknown(j, {"target_a", "target_b", "draft_a", "draft_b"}, w);
  read_opt(j, "target_a", c.target_a, w);
  read_opt(j, "target_b", c.target_b, w);
  read_opt(j, "draft_a", c.draft_a, w);
  read_opt(j, "draft_b", c.draft_b, w);
}

}  // namespace spdlab
