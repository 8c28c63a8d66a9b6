// End-to-end acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 unless a criterion fails outside its known gap (README,
// "Known gaps"): the overlap bound in 4 and the batching shape in 10. Those
// still print FAIL.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "spdlab/cli.hpp"
#include "spdlab/config.hpp"
#include "spdlab/sim.hpp"

using namespace spdlab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  bool gap_only = false;  // failed, but only on a documented unattainable part
  std::string detail;
};

struct Note {
  std::ostringstream os;
  bool pass = true;
  void fail(const std::string& why) {
    if (pass) os << "; ";
    pass = false;
    os << "[" << why << "] ";
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Workspace default_workspace(void (*tweak)(ExperimentConfig&) = nullptr) {
  ExperimentConfig c;
  if (tweak) tweak(c);
  return make_workspace(c);
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------

Outcome lossless() {
  const auto t0 = std::chrono::steady_clock::now();
  const Workspace ws = default_workspace();
  std::size_t runs = 0;
  Outcome o;
  for (double temp : {0.0, 1.0}) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      DecodeConfig c = ws.decode;
      c.temperature = temp;
      c.seed = seed;
      c.max_new_tokens = 200;
      std::vector<ExperimentResult> rs;
      for (Mode m : kAllModes) rs.push_back(run_mode(m, ws.models, ws.prompt, c, ws.config.latency));
      runs += rs.size();
      const LosslessReport rep = check_lossless(rs);
      if (!rep.ok) {
        o.pass = false;
        o.detail = "temp " + fixed(temp, 0) + " seed " + std::to_string(seed) + ": " + rep.detail;
        return o;
      }
      for (const auto& r : rs) {
        if (r.tokens.size() != 200) {
          o.pass = false;
          o.detail = std::string(to_string(r.mode)) + " committed " + std::to_string(r.tokens.size()) + " tokens";
          return o;
        }
      }
    }
  }
  const double s = seconds_since(t0);
  o.pass = s < 5.0;
  o.detail = std::to_string(runs) + " decodes identical, " + fixed(s, 2) + " s";
  return o;
}

Outcome coupling() {
  const Workspace ws = default_workspace();
  MirrorOptions forced;
  forced.force_fallback = true;
  const ArDrafter drafter(ws.models.draft);
  std::size_t steps = 0;
  Outcome o;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    DecodeConfig c = ws.decode;
    c.temperature = 1.0;
    c.seed = seed;
    c.max_new_tokens = 4000;
    const DecodeTrace v = sd_decode(*ws.models.target, drafter, ws.prompt, c);
    const DecodeTrace m = mirror_decode(*ws.models.target, drafter, ws.prompt, c, forced);
    if (v.results.size() < 500 || m.results.size() != v.results.size()) {
      o.pass = false;
      o.detail = "seed " + std::to_string(seed) + ": step counts " + std::to_string(v.results.size()) + " vs " +
                 std::to_string(m.results.size());
      return o;
    }
    for (std::size_t i = 0; i < 500; ++i) {
      if (v.results[i].accepted_len != m.results[i].accepted_len) {
        o.pass = false;
        o.detail = "seed " + std::to_string(seed) + " step " + std::to_string(i) + " differs";
        return o;
      }
    }
    steps += 500;
  }
  o.detail = std::to_string(steps) + " A_t values identical";
  return o;
}

Outcome pointwise() {
  Outcome o;
  std::size_t steps = 0;
  for (double temp : {0.0, 1.0}) {
    const Workspace ws = default_workspace();
    DecodeConfig c = ws.decode;
    c.temperature = temp;
    const auto collected = collect_corrected_steps(ws.models, ws.prompt, c, 1000);
    const PointwiseFallback pw = pointwise_fallback({1, 2, 4, 8, 16}, ws.exits, ws.models, collected, c);
    steps += pw.steps * pw.exits.size();
    if (collected.size() != 1000 || pw.violations != 0) {
      o.pass = false;
      o.detail = "temp " + fixed(temp, 0) + ": " + std::to_string(pw.violations) + " violating steps of " +
                 std::to_string(collected.size());
      return o;
    }
  }
  o.detail = std::to_string(steps) + " (step, exit) pairs, F_t non-increasing in kappa at every one";
  return o;
}

Outcome fallback_statistics() {
  const auto t0 = std::chrono::steady_clock::now();
  const Workspace ws = default_workspace([](ExperimentConfig& c) { c.model.synthetic.epsilon0 = 0.8; });
  DecodeConfig c = ws.decode;
  c.temperature = 1.0;
  const FallbackSweep sw = sweep_fallback({8}, ws.exits, ws.models, ws.prompt, c, 2000);
  const double s = seconds_since(t0);

  bool enough = true, monotone = true, bound = true;
  std::ostringstream os;
  for (std::size_t i = 0; i < sw.cells.size(); ++i) {
    const FallbackCell& x = sw.cells[i];
    enough = enough && x.corrected_steps >= 2000;
    bound = bound && x.bound_ok;
    if (i > 0) {
      const FallbackCell& p = sw.cells[i - 1];
      if (x.ff > p.ff + 3.0 * std::hypot(p.ff_stderr, x.ff_stderr)) monotone = false;
    }
    os << "exit " << x.exit_layer << " FF " << fixed(x.ff, 3) << "+-" << fixed(x.ff_stderr, 3) << " vs 1-omega "
       << fixed(1.0 - x.omega, 3) << "; ";
  }
  Outcome o;
  o.pass = enough && monotone && bound && s < 30.0;
  o.gap_only = !o.pass && enough && monotone && s < 30.0;
  os << "monotone " << (monotone ? "yes" : "no") << ", bound " << (bound ? "holds" : "violated") << ", "
     << fixed(s, 2) << " s";
  o.detail = os.str();
  return o;
}

Outcome latency_law() {
  Rng rng(20240917);
  double worst = 0.0, worst_cont = 0.0;
  for (int i = 0; i < 100; ++i) {
    LatencyParams p;
    const int depth = 2 + static_cast<int>(rng.next_u64() % 31);
    p.layer_compute.resize(depth);
    for (auto& u : p.layer_compute) u = 0.05 + 3.0 * rng.uniform();
    p.exit_layer = 1 + static_cast<int>(rng.next_u64() % (depth - 1));
    p.draft_step_compute = 0.05 + 2.0 * rng.uniform();
    p.draft_step_sync = 0.2 * rng.uniform();
    p.rv_ee = {0.3 * rng.uniform(), 0.2 * rng.uniform()};
    p.rv_fv = {0.3 * rng.uniform(), 0.2 * rng.uniform()};
    p.channel_beta = 0.002 * rng.uniform();
    p.alpha = 0.05 * rng.uniform();
    p.beta = 1e-5 * rng.uniform();
    p.include_collectives = rng.uniform() < 0.7;
    p.target_group = 1 << (rng.next_u64() % 4);
    p.draft_group = 1 << (rng.next_u64() % 4);
    p.batch = 1 + static_cast<int>(rng.next_u64() % 64);
    p.kappa = 1 + static_cast<int>(rng.next_u64() % 16);
    p.gamma = 1 + static_cast<int>(rng.next_u64() % 16);
    p.validate();

    const double budget = overlap_budget(p);
    const double fresh = rng.uniform() < 0.5 ? 0.0 : 2.0 * rng.uniform();
    const double tree = budget * 2.0 * rng.uniform();
    const StepTimeline tl = schedule_mirror_step(p, 50.0 * rng.uniform(), fresh, tree);
    worst = std::max(worst, std::abs(tl.overlapped_total - mirror_step_latency(p, tree).total));
    worst = std::max(worst, std::abs(tl.total - fresh - mirror_step_latency(p, tree).total));

    const double below = mirror_step_latency(p, std::nextafter(budget, 0.0)).total;
    const double at = mirror_step_latency(p, budget).total;
    const double above = mirror_step_latency(p, std::nextafter(budget, 2.0 * budget + 1.0)).total;
    worst_cont = std::max({worst_cont, std::abs(at - below), std::abs(above - at)});
    const StepTimeline edge = schedule_mirror_step(p, 0.0, 0.0, budget);
    worst = std::max(worst, std::abs(edge.overlapped_total - at));
  }
  Outcome o;
  o.pass = worst <= 1e-9 && worst_cont <= 1e-9;
  char buf[128];
  std::snprintf(buf, sizeof buf, "max timeline error %.3g ms, max jump at the budget %.3g ms", worst, worst_cont);
  o.detail = buf;
  return o;
}

Outcome zero_slope() {
  const Workspace ws = default_workspace();
  LatencyParams lat;
  lat.layer_compute.assign(8, 1.0);
  lat.exit_layer = 4;
  lat.include_collectives = false;
  lat.draft_step_compute = 0.5;
  lat.draft_step_sync = 0.0;
  DecodeConfig c = ws.decode;
  c.exit_layer = 4;
  c.max_new_tokens = 120;
  std::vector<int> gammas;
  for (int g = 1; g <= 16; ++g) gammas.push_back(g);
  const TriSweep sw = sweep_tri_objective(gammas, {Mode::vanilla, Mode::mirror, Mode::mirror_ss}, ws.models,
                                          ws.prompt, c, lat, SimOptions{});
  Note n;
  if (!sw.lossless_errors.empty()) n.fail("lossless: " + sw.lossless_errors.front());
  double flat = -1.0, prev_m = -1.0, prev_v = -1.0;
  int flat_count = 0;
  for (const auto& r : sw.rows) {
    if (r.mode == Mode::vanilla) {
      if (r.step_ms <= prev_v) n.fail("vanilla not increasing at gamma " + std::to_string(r.gamma));
      prev_v = r.step_ms;
    } else if (r.mode == Mode::mirror) {
      if (r.internal_steps * 0.5 <= 4.0) {
        if (flat < 0.0) flat = r.step_ms;
        if (r.step_ms != flat) n.fail("mirror not flat at gamma " + std::to_string(r.gamma));
        ++flat_count;
      } else if (r.step_ms <= prev_m) {
        n.fail("mirror not increasing at gamma " + std::to_string(r.gamma));
      }
      prev_m = r.step_ms;
    }
  }
  const int gm = zero_slope_threshold(sw, Mode::mirror);
  const int gs = zero_slope_threshold(sw, Mode::mirror_ss);
  if (flat_count == 0) n.fail("empty flat region");
  Outcome o;
  o.pass = n.pass;
  o.detail = "mirror flat for gamma <= " + std::to_string(gm) + " at " + fixed(flat, 3) +
             " ms, mirror_ss flat for gamma <= " + std::to_string(gs) + n.os.str();
  return o;
}

Outcome work_conservation() {
  SyntheticLmParams sp;
  auto target = std::make_shared<SyntheticLayeredLm>(sp);
  auto draft = std::make_shared<AlignedDraft>(target, 0.6, 0xD2AF7);
  Rng pick(99);
  std::size_t placed_fail = 0, emitted_fail = 0;
  const int windows = 100000;
  for (int i = 0; i < windows; ++i) {
    const int streams = 1 + static_cast<int>(pick.next_u64() % 4);
    const int gamma = 1 + static_cast<int>(pick.next_u64() % 16);
    std::vector<double> keep(streams);
    for (auto& k : keep) k = pick.uniform();
    const SsDraft ss(draft, streams, keep);
    const TokenSeq ctx{static_cast<Token>(pick.next_u64() % 32), static_cast<Token>(i % 32)};
    Rng rng(static_cast<std::uint64_t>(i) * 7919 + 1);
    const SsWindow w = ss_window(ss, ctx, gamma, pick.uniform() < 0.5 ? 0.0 : 1.0, rng);
    if (w.internal_steps > work_bound(gamma, w.eta_bar)) ++placed_fail;
    if (w.internal_steps > work_bound(gamma, w.eta_bar_emitted)) ++emitted_fail;
  }

  std::size_t identity_fail = 0;
  const SsDraft plain(draft, 1, 0.0);
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const TokenSeq ctx{static_cast<Token>(seed % 32), static_cast<Token>((seed / 32) % 32)};
    const int gamma = 1 + static_cast<int>(seed % 16);
    const double temp = seed % 2 ? 1.0 : 0.0;
    Rng a(seed), b(seed);
    const SsWindow w = ss_window(plain, ctx, gamma, temp, a);
    const SpeculativeWindow v = speculate_window(*draft, ctx, gamma, temp, b);
    if (w.window.tokens != v.tokens || a.draws() != b.draws() || w.internal_steps != gamma) ++identity_fail;
  }
  Outcome o;
  o.pass = placed_fail == 0 && identity_fail == 0;
  o.detail = std::to_string(windows) + " windows, " + std::to_string(placed_fail) +
             " bound violations (emitted-mean variant: " + std::to_string(emitted_fail) + "); " +
             std::to_string(identity_fail) + " of 2000 single-stream windows differ from plain drafting";
  return o;
}

Outcome golden_values() {
  Note n;
  if (allreduce_cost(3, 8, 1.0, 2.0) != 9.0) n.fail("allreduce");

  LatencyParams p;
  p.layer_compute.assign(8, 1.0);
  p.batch = 1;
  p.tokens_per_collective_target = 1;
  p.hidden_target = 64;
  p.target_group = 8;
  p.alpha = 0.01;
  p.beta = 0.001;
  const double tc = target_comm_cost(p, 8);
  if (std::abs(tc - 0.608) > 1e-12) n.fail("target_comm " + std::to_string(tc));

  p.tokens_per_collective_draft = 2;
  p.hidden_draft = 64;
  p.draft_group = 4;
  const double dc = draft_comm_cost(p, 3);
  if (std::abs(dc - 6.0 * (0.02 + 0.032)) > 1e-12) n.fail("draft_comm " + std::to_string(dc));

  LatencyParams g;
  g.layer_compute.assign(8, 1.0);
  g.include_collectives = false;
  g.draft_step_compute = 1.0;
  g.draft_step_sync = 0.2;
  if (std::abs(draft_gen_time(g, 3) - 3.6) > 1e-12) n.fail("draft_gen");

  Outcome o;
  o.pass = n.pass;
  o.detail = "allreduce 9, target_comm " + fixed(tc, 12) + ", draft_comm " + fixed(dc, 12) + n.os.str();
  return o;
}

Outcome piecewise_speedup() {
  LatencyParams p;
  p.layer_compute.assign(8, 1.0);
  p.exit_layer = 4;
  p.include_collectives = false;
  p.rv_ee = {0.1, 0.0};
  p.rv_fv = {0.1, 0.0};
  const TimeSaved ts = time_saved_and_speedup(p, 3.0);
  Note n;
  if (std::abs(ts.delta_t - 2.8) > 1e-12) n.fail("delta_t");
  if (std::abs(ts.speedup - 11.0 / 8.2) > 1e-12) n.fail("speedup");

  Rng rng(5);
  int even_checked = 0;
  for (int i = 0; i < 200; ++i) {
    LatencyParams q = p;
    const double gen = 8.0 * rng.uniform();
    const double t_rv = std::min(overlap_budget(q), gen);
    q.rv_ee = {t_rv / 2.0, 0.0};
    q.rv_fv = {t_rv - t_rv / 2.0, 0.0};
    if (rendezvous_total(q) != t_rv) continue;
    ++even_checked;
    const TimeSaved e = time_saved_and_speedup(q, gen);
    if (e.speedup != 1.0 || e.delta_t != 0.0) n.fail("break-even at draft_gen " + std::to_string(gen));
    q.rv_ee.sample_ms *= 0.5;
    if (!(time_saved_and_speedup(q, gen).speedup > 1.0) && t_rv > 0.0) n.fail("below break-even");
  }
  Outcome o;
  o.pass = n.pass && even_checked > 100;
  o.detail = "delta_t " + fixed(ts.delta_t, 12) + ", S " + fixed(ts.speedup, 12) + ", " +
             std::to_string(even_checked) + " break-even points at S = 1" + n.os.str();
  return o;
}

Outcome desk_scale() {
  const auto t0 = std::chrono::steady_clock::now();
  const Workspace ws = default_workspace();
  const ExperimentConfig& cfg = ws.config;
  SimOptions opt;
  opt.ss = cfg.ss;
  const Bench b = run_bench(cfg.modes, ws.models, ws.prompt, ws.decode, cfg.latency, opt, cfg.seeds);
  const BatchSweep sw =
      sweep_batching(cfg.sweep.batches, ws.models, ws.prompt, ws.decode, cfg.latency, cfg.batching, opt, cfg.seeds);
  const double s = seconds_since(t0);

  const bool ordering = b.violations.empty() && b.lossless_errors.empty() && b.seeds.size() == 10;
  bool v_mono = true, m_mono = true, above = true, overhead = true;
  std::ostringstream rows;
  for (std::size_t i = 0; i < sw.rows.size(); ++i) {
    const BatchRow& r = sw.rows[i];
    above = above && r.mirror_speedup > r.vanilla_speedup;
    if (i > 0) {
      const BatchRow& p = sw.rows[i - 1];
      v_mono = v_mono && r.vanilla_speedup <= p.vanilla_speedup;
      m_mono = m_mono && r.mirror_speedup <= p.mirror_speedup;
      overhead = overhead && r.relative_draft_overhead >= p.relative_draft_overhead;
    }
    rows << " B=" << r.batch << " " << fixed(r.vanilla_speedup, 3) << "/" << fixed(r.mirror_speedup, 3) << "/"
         << fixed(r.relative_draft_overhead, 3);
  }
  const bool shape = v_mono && m_mono && above && overhead && sw.lossless_errors.empty();

  Outcome o;
  o.pass = ordering && shape && s < 60.0;
  o.gap_only = !o.pass && ordering && sw.lossless_errors.empty() && s < 60.0;
  std::ostringstream os;
  os << "ordering " << (ordering ? "holds on 10 seeds" : "violated: " + b.violations.front())
     << "; batching vanilla/mirror/overhead:" << rows.str() << "; vanilla non-increasing "
     << (v_mono ? "yes" : "no") << ", mirror non-increasing " << (m_mono ? "yes" : "no") << ", mirror above "
     << (above ? "yes" : "no") << ", overhead non-decreasing " << (overhead ? "yes" : "no") << "; " << fixed(s, 2)
     << " s";
  o.detail = os.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

Outcome determinism() {
  const std::vector<std::pair<std::vector<std::string>, std::string>> commands = {
      {{"decode", "--set", "decode.temperature=1"}, "spdlab_decode.csv"},
      {{"bench"}, "spdlab_bench.csv"},
      {{"sweep", "tri"}, "spdlab_tri.csv"},
      {{"sweep", "fallback", "--set", "sweep.min_corrected=300", "--set", "decode.temperature=1"},
       "spdlab_fallback.csv"},
      {{"sweep", "batching"}, "spdlab_batching.csv"},
  };
  const fs::path root = fs::temp_directory_path() / "spdlab_acceptance";
  Outcome o;
  std::size_t bytes = 0;
  for (const auto& [args, file] : commands) {
    std::string first;
    for (int rep = 0; rep < 2; ++rep) {
      const fs::path dir = root / std::to_string(rep);
      fs::remove_all(dir);
      auto a = args;
      a.insert(a.end(), {"--out", dir.string(), "--seed", "11", "--jobs", rep == 0 ? "1" : "0"});
      std::ostringstream out, err;
      const int code = run_cli(a, out, err);
      if (code == kExitConfig || code == kExitRuntime) {
        o.pass = false;
        o.detail = args.front() + " exited " + std::to_string(code) + ": " + err.str();
        return o;
      }
      const std::string csv = slurp(dir / file);
      if (csv.empty()) {
        o.pass = false;
        o.detail = file + " missing";
        return o;
      }
      if (rep == 0) {
        first = csv;
      } else if (csv != first) {
        o.pass = false;
        o.detail = file + " differs between reruns";
        return o;
      }
    }
    bytes += first.size();
  }
  fs::remove_all(root);
  o.detail = std::to_string(commands.size()) + " commands, " + std::to_string(bytes) +
             " CSV bytes identical across serial and parallel reruns";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "lossless decoding across all modes", lossless},
      {2, "vanilla and forced-fallback acceptance traces coincide", coupling},
      {3, "pointwise fallback monotone in kappa", pointwise},
      {4, "fallback frequency vs exit depth and overlap bound", fallback_statistics},
      {5, "timeline totals match the closed form", latency_law},
      {6, "zero-slope region", zero_slope},
      {7, "streaming work bound", work_conservation},
      {8, "communication golden values", golden_values},
      {9, "piecewise time saved and speedup", piecewise_speedup},
      {10, "desk-scale ordering and batching shape", desk_scale},
      {11, "byte-identical reruns", determinism},
  };
  int unexpected = 0;
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("threw: ") + e.what();
    }
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) {
      ++failed;
      if (!o.gap_only) ++unexpected;
    }
  }
  std::printf("%d of %zu criteria pass; %d unexpected failure(s)\n", static_cast<int>(criteria.size()) - failed,
              criteria.size(), unexpected);
  return unexpected == 0 ? 0 : 1;
}
