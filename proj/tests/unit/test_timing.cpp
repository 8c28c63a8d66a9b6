#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "spdlab/timing.hpp"

using namespace spdlab;

namespace {

// Unit layers, no collectives, 0.1 ms per rendezvous.
LatencyParams unit_params() {
  LatencyParams p;
  p.layer_compute.assign(8, 1.0);
  p.exit_layer = 4;
  p.include_collectives = false;
  p.rv_ee = {0.1, 0.0};
  p.rv_fv = {0.1, 0.0};
  p.channel_beta = 0.0;
  return p;
}

}  // namespace

TEST_CASE("allreduce cost") {
  CHECK(allreduce_cost(1000, 8, 0.0, 0.0) == 0.0);
  CHECK(allreduce_cost(1000, 1, 5.0, 0.25) == 250.0);
  CHECK(allreduce_cost(3, 8, 1.0, 2.0) == 9.0);
}

TEST_CASE("collective costs") {
  LatencyParams p;
  p.layer_compute.assign(8, 1.0);
  p.batch = 1;
  p.tokens_per_collective_target = 1;
  p.hidden_target = 64;
  p.target_group = 8;
  p.alpha = 0.01;
  p.beta = 0.001;
  CHECK(target_shard_words(p) == 8.0);
  CHECK(target_comm_cost(p, 8) == doctest::Approx(0.608).epsilon(1e-12));
  CHECK(target_comm_cost(p, 0) == 0.0);
  p.beta = 0.0;
  CHECK(target_comm_cost(p, 8) == doctest::Approx(2 * 8 * 0.01 * 3));

  p.beta = 0.001;
  p.tokens_per_collective_draft = 2;
  p.hidden_draft = 64;
  p.draft_group = 4;
  CHECK(draft_shard_words(p) == 32.0);
  CHECK(draft_comm_cost(p, 0) == 0.0);
  // 2 J (alpha log2 4 + beta 32)
  CHECK(draft_comm_cost(p, 3) == doctest::Approx(6 * (0.02 + 0.032)).epsilon(1e-12));
  p.beta = 0.0;
  CHECK(draft_comm_cost(p, 3) == doctest::Approx(6 * 0.02));
}

TEST_CASE("draft generation time") {
  LatencyParams p = unit_params();
  p.draft_step_compute = 1.0;
  p.draft_step_sync = 0.2;
  CHECK(draft_gen_time(p, 0) == 0.0);
  CHECK(draft_gen_time(p, 3) == doctest::Approx(3.6));
  // streaming with mean emission 3.5 needs 2 steps instead of 7
  CHECK(draft_gen_time(p, 7) == doctest::Approx(7 * draft_gen_time(p, 2) / 2.0));
}

TEST_CASE("mirror step latency") {
  const LatencyParams p = unit_params();
  CHECK(target_prefix_time(p) == 4.0);
  CHECK(overlap_budget(p) == 4.0);
  CHECK(rendezvous_total(p) == doctest::Approx(0.2));

  const StepLatency a = mirror_step_latency(p, 3.0);
  CHECK(a.total == doctest::Approx(8.2).epsilon(1e-14));
  CHECK(a.total == doctest::Approx(target_time(p) + rendezvous_total(p)));
  CHECK(mirror_step_latency(p, 6.0).total == doctest::Approx(10.2).epsilon(1e-14));

  const double lo = mirror_step_latency(p, std::nextafter(4.0, 0.0)).total;
  const double at = mirror_step_latency(p, 4.0).total;
  CHECK(std::abs(at - lo) < 1e-12);
  double prev = 0.0;
  for (double g = 0.0; g < 10.0; g += 0.25) {
    const double t = mirror_step_latency(p, g).total;
    CHECK(t >= prev);
    prev = t;
  }
}

TEST_CASE("vanilla step latency") {
  const LatencyParams p = unit_params();
  CHECK(vanilla_step_latency(p, 0.0) == 8.0);
  CHECK(vanilla_step_latency(p, 3.0) == 11.0);
  for (double g = 0.0; g <= 4.0; g += 0.5) {
    CHECK(vanilla_step_latency(p, g) >= mirror_step_latency(p, g).total - rendezvous_total(p));
    CHECK(mirror_step_latency(p, g).total <= vanilla_step_latency(p, g) + rendezvous_total(p));
  }
}

TEST_CASE("piecewise time saved and speedup") {
  LatencyParams p = unit_params();
  const TimeSaved ts = time_saved_and_speedup(p, 3.0);
  CHECK(std::abs(ts.delta_t - 2.8) < 1e-12);
  CHECK(std::abs(ts.speedup - 11.0 / 8.2) < 1e-12);
  CHECK(ts.mirror_faster);

  // break-even: T_rv equal to the smaller of budget and draft time
  p.rv_ee = {1.5, 0.0};
  p.rv_fv = {1.5, 0.0};
  const TimeSaved even = time_saved_and_speedup(p, 3.0);
  CHECK(even.delta_t == 0.0);
  CHECK(even.speedup == 1.0);
  CHECK_FALSE(even.mirror_faster);

  p = unit_params();
  const double g = 6.0;
  const TimeSaved big = time_saved_and_speedup(p, g);
  const double expect = (4.0 + 4.0 + g) / (4.0 + g + 0.2);
  CHECK(std::abs(big.speedup - expect) < 1e-12);
  CHECK(std::abs(big.speedup - vanilla_step_latency(p, g) / mirror_step_latency(p, g).total) < 1e-12);
  CHECK(big.delta_t > 0.0);
}

TEST_CASE("batching policy") {
  CHECK(batching_policy(1) == BatchingChoice{8, 2});
  CHECK(batching_policy(8) == BatchingChoice{8, 2});
  CHECK(batching_policy(9) == BatchingChoice{4, 1});
  CHECK(batching_policy(16) == BatchingChoice{4, 1});
  CHECK(batching_policy(32) == BatchingChoice{2, 1});
  CHECK(batching_policy(33) == BatchingChoice{1, 1});
  CHECK(batching_policy(64) == BatchingChoice{1, 1});
  CHECK_THROWS(batching_policy(0));
}

TEST_CASE("batch scaling") {
  const LatencyParams base;
  const LatencyParams same = batch_scale(base, 1, base.kappa, {1.0, 0.0, 1.0, 0.0});
  CHECK(same.layer_compute == base.layer_compute);
  CHECK(same.draft_step_compute == base.draft_step_compute);
  CHECK(tree_step_time(same) == tree_step_time(base));
  CHECK(target_time(same) == target_time(base));

  const BatchCoefficients c{1.0, 0.05, 1.0, 0.1};
  const LatencyParams b8 = batch_scale(base, 8, 8, c);
  const LatencyParams b16 = batch_scale(base, 16, 8, c);
  CHECK(target_shard_words(b16) == 2.0 * target_shard_words(b8));
  CHECK(draft_shard_words(b16) == 2.0 * draft_shard_words(b8));
  CHECK(b8.layer_compute[0] == doctest::Approx(1.4));
  CHECK(b8.draft_step_compute == doctest::Approx(0.4 * 1.8));
  CHECK(*b8.tree_step_compute == doctest::Approx(0.4 * (1 + 0.1 * 64)));
  CHECK_THROWS(batch_scale(base, 0, 8, c));
}

TEST_CASE("tree critical path") {
  CHECK(tree_critical_steps({3, 5, 2}, 0) == 5);
  CHECK(tree_critical_steps({3, 5, 2}, 1) == 10);
  CHECK(tree_critical_steps({3, 5, 2}, 2) == 7);
  CHECK(tree_critical_steps({}, 0) == 0);
}

TEST_CASE("latency params json") {
  LatencyParams p = unit_params();
  p.tree_step_compute = 0.3;
  nlohmann::json j = p;
  const LatencyParams q = j.get<LatencyParams>();
  CHECK(q.layer_compute == p.layer_compute);
  CHECK(*q.tree_step_compute == 0.3);
  CHECK(q.rv_ee.sample_ms == 0.1);
  CHECK_THROWS_AS(nlohmann::json({{"alpah", 1.0}}).get<LatencyParams>(), std::invalid_argument);
  LatencyParams bad = p;
  bad.exit_layer = 8;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}
