#include "spdlab/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "spdlab/parallel.hpp"

namespace spdlab {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::ar: return "ar";
    case Mode::vanilla: return "vanilla";
    case Mode::mirror: return "mirror";
    case Mode::mirror_ss: return "mirror_ss";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  for (Mode m : kAllModes) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown mode: " + name);
}

// ---- timelines -----------------------------------------------------------

namespace {

struct Task {
  const char* lane;
  const char* label;
  double duration;
  std::vector<int> deps;
};

// List scheduler: tasks are given in a topological order; each starts when
// its lane is free and all dependencies have finished.
std::vector<Interval> schedule(const std::vector<Task>& tasks, double start) {
  std::vector<Interval> out;
  out.reserve(tasks.size());
  std::vector<std::pair<std::string, double>> lane_free;
  for (const Task& t : tasks) {
    double ready = start;
    for (int d : t.deps) ready = std::max(ready, out.at(d).end);
    auto lane = std::find_if(lane_free.begin(), lane_free.end(), [&](const auto& l) { return l.first == t.lane; });
    if (lane == lane_free.end()) {
      lane_free.emplace_back(t.lane, start);
      lane = lane_free.end() - 1;
    }
    const double s = std::max(ready, lane->second);
    out.push_back({t.lane, s, s + t.duration, t.label});
    lane->second = s + t.duration;
  }
  return out;
}

double latest_end(const std::vector<Interval>& iv) {
  double e = 0.0;
  for (const auto& i : iv) e = std::max(e, i.end);
  return e;
}

}  // namespace

StepTimeline schedule_mirror_step(const LatencyParams& p, double start, double fresh_gen, double tree_gen) {
  const StepLatency s = mirror_step_latency(p, tree_gen);
  std::vector<Task> tasks;
  std::vector<int> after_fresh;
  if (fresh_gen > 0.0) {
    tasks.push_back({"draft", "fresh_rollout", fresh_gen, {}});
    after_fresh.push_back(0);
  }
  const int prefix = static_cast<int>(tasks.size());
  tasks.push_back({"target", "target_prefix", s.prefix, after_fresh});
  tasks.push_back({"channel", "rv_early_exit", s.rv_ee, {prefix}});
  tasks.push_back({"target", "target_suffix", s.suffix, {prefix + 1}});
  tasks.push_back({"draft", "tree_expansion", tree_gen, {prefix + 1}});
  tasks.push_back({"channel", "rv_final", s.rv_fv, {prefix + 2, prefix + 3}});

  StepTimeline tl;
  tl.start = start;
  tl.intervals = schedule(tasks, start);
  tl.total = latest_end(tl.intervals) - start;
  tl.overlapped_total = tl.intervals.back().end - tl.intervals[prefix].start;
  tl.analytic = s.total;
  return tl;
}

StepTimeline schedule_vanilla_step(const LatencyParams& p, double start, double draft_gen) {
  std::vector<Task> tasks;
  tasks.push_back({"draft", "draft_rollout", draft_gen, {}});
  tasks.push_back({"target", "target_verify", target_time(p), {0}});
  StepTimeline tl;
  tl.start = start;
  tl.intervals = schedule(tasks, start);
  tl.total = latest_end(tl.intervals) - start;
  tl.overlapped_total = tl.total;
  tl.analytic = vanilla_step_latency(p, draft_gen);
  return tl;
}

// ---- single runs ---------------------------------------------------------

std::unique_ptr<Drafter> make_drafter(Mode mode, const ModelPair& models, const SsSettings& ss) {
  switch (mode) {
    case Mode::ar: return nullptr;
    case Mode::vanilla:
    case Mode::mirror: return std::make_unique<ArDrafter>(models.draft);
    case Mode::mirror_ss:
      return std::make_unique<SsDrafter>(SsDraft(models.draft, ss.streams, ss.keep_prob));
  }
  return nullptr;
}

LatencyParams bind_latency(const LatencyParams& latency, const DecodeConfig& config) {
  LatencyParams p = latency;
  p.gamma = config.gamma;
  p.kappa = config.kappa;
  if (config.exit_layer > 0) p.exit_layer = config.exit_layer;
  p.validate();
  return p;
}

ExperimentResult run_mode(Mode mode, const ModelPair& models, TokenSpan prompt, const DecodeConfig& config,
                          const LatencyParams& latency, const SimOptions& options) {
  if (!models.target || !models.draft) throw std::invalid_argument("run_mode: missing model");
  if (models.draft->vocab_size() != models.target->vocab_size()) {
    throw std::invalid_argument("run_mode: draft and target vocabularies differ");
  }
  if (prompt.empty()) throw std::invalid_argument("run_mode: empty prompt");
  if (latency.depth() != models.target->depth()) {
    throw std::invalid_argument("run_mode: latency.layer_compute length differs from target depth");
  }
  const DecodeConfig cfg = config.resolved(models.target->depth(), models.target->vocab_size());
  const LatencyParams p = bind_latency(latency, cfg);

  ExperimentResult r;
  r.mode = mode;
  const double t_target = target_time(p);

  if (mode == Mode::ar) {
    r.tokens = ar_decode(*models.target, prompt, cfg);
    r.steps = r.tokens.size();
    r.wall_ms = static_cast<double>(r.tokens.size()) * t_target;
  } else {
    const auto drafter = make_drafter(mode, models, options.ss);
    const bool tree_mode = mode == Mode::mirror || mode == Mode::mirror_ss;
    DecodeTrace trace = tree_mode ? mirror_decode(*models.target, *drafter, prompt, cfg, options.mirror)
                                  : sd_decode(*models.target, *drafter, prompt, cfg);
    r.tokens = std::move(trace.tokens);
    r.steps = trace.steps.size();
    double clock = 0.0, tree_sum = 0.0, fresh_steps = 0.0;
    std::size_t fresh_windows = 0;
    const double budget = overlap_budget(p);
    for (const StepRecord& rec : trace.steps) {
      const bool fresh = rec.source == WindowSource::fresh;
      const double fresh_gen = fresh ? draft_gen_time(p, rec.draft_steps) : 0.0;
      if (fresh) {
        fresh_steps += rec.draft_steps;
        ++fresh_windows;
      }
      StepTimeline tl;
      if (tree_mode) {
        const double tree_gen = tree_critical_steps(rec.branch_steps, p.branch_parallelism) * tree_step_time(p);
        tl = schedule_mirror_step(p, clock, fresh_gen, tree_gen);
        tree_sum += tree_gen;
        r.draft_ms += fresh_gen + tree_gen;
        r.exposed_draft_ms += fresh_gen + std::max(0.0, tree_gen - budget);
        r.exposed_tree_ms += std::max(0.0, tree_gen - budget);
      } else {
        tl = schedule_vanilla_step(p, clock, fresh_gen);
        r.draft_ms += fresh_gen;
        r.exposed_draft_ms += fresh_gen;
      }
      tl.step = rec.step;
      r.max_timeline_error = std::max(r.max_timeline_error, std::abs(tl.overlapped_total - tl.analytic));
      clock += tl.total;
      if (options.record_timelines) r.timelines.push_back(std::move(tl));
    }
    r.wall_ms = clock;
    if (r.steps > 0) {
      const AcceptanceStats a = acceptance_stats(std::span<const StepRecord>(trace.steps), cfg.gamma);
      r.mean_accept = a.mean_accept_len;
      r.rho = a.rho;
      if (tree_mode) {
        const FallbackStats f = fallback_stats(trace.steps);
        r.corrected_steps = f.corrected_steps;
        if (f.corrected_steps > 0) {
          r.ff = f.ff;
          r.ff_stderr = f.ff_stderr;
          r.omega = f.omega_estimate;
        }
        r.mean_tree_ms = tree_sum / static_cast<double>(r.steps);
      }
    }
    if (fresh_windows > 0) r.mean_fresh_steps = fresh_steps / static_cast<double>(fresh_windows);
    r.records = std::move(trace.steps);
  }

  r.ar_wall_ms = static_cast<double>(r.tokens.size()) * t_target;
  if (r.steps > 0) r.mean_step_ms = r.wall_ms / static_cast<double>(r.steps);
  if (r.wall_ms > 0.0) {
    r.tokens_per_sec = 1000.0 * static_cast<double>(r.tokens.size()) / r.wall_ms;
    r.speedup = r.ar_wall_ms / r.wall_ms;
  }
  return r;
}

LosslessReport check_lossless(const std::vector<ExperimentResult>& results) {
  LosslessReport rep;
  if (results.empty()) return rep;
  auto ref = std::find_if(results.begin(), results.end(), [](const auto& r) { return r.mode == Mode::ar; });
  if (ref == results.end()) ref = results.begin();
  std::ostringstream os;
  for (const auto& r : results) {
    if (r.tokens == ref->tokens) continue;
    rep.ok = false;
    const auto n = std::min(r.tokens.size(), ref->tokens.size());
    std::size_t i = 0;
    while (i < n && r.tokens[i] == ref->tokens[i]) ++i;
    os << to_string(r.mode) << " diverges from " << to_string(ref->mode) << " at token " << i;
    if (i < n) os << " (" << r.tokens[i] << " vs " << ref->tokens[i] << ")";
    os << "; lengths " << r.tokens.size() << " vs " << ref->tokens.size() << '\n';
  }
  rep.detail = os.str();
  return rep;
}

// ---- bench ---------------------------------------------------------------

Bench run_bench(const std::vector<Mode>& modes, const ModelPair& models, TokenSpan prompt,
                const DecodeConfig& config, const LatencyParams& latency, const SimOptions& options,
                const std::vector<std::uint64_t>& seeds, int jobs) {
  if (modes.empty()) throw std::invalid_argument("run_bench: no modes");
  if (seeds.empty()) throw std::invalid_argument("run_bench: no seeds");
  Bench b;
  b.modes = modes;
  const std::size_t nm = modes.size();
  auto cells = run_cells<ExperimentResult>(seeds.size() * nm, jobs, [&](std::size_t i) {
    DecodeConfig c = config;
    c.seed = seeds[i / nm];
    return run_mode(modes[i % nm], models, prompt, c, latency, options);
  });
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    BenchSeed bs;
    bs.seed = seeds[s];
    for (std::size_t m = 0; m < nm; ++m) bs.results.push_back(std::move(cells[s * nm + m]));
    const LosslessReport lr = check_lossless(bs.results);
    if (!lr.ok) b.lossless_errors.push_back("seed " + std::to_string(bs.seed) + ": " + lr.detail);

    auto speed = [&](Mode m) -> std::optional<double> {
      for (const auto& r : bs.results) {
        if (r.mode == m) return r.speedup;
      }
      return std::nullopt;
    };
    const Mode chain[] = {Mode::mirror_ss, Mode::mirror, Mode::vanilla};
    std::optional<double> prev;
    const char* prev_name = nullptr;
    for (Mode m : chain) {
      const auto v = speed(m);
      if (!v) continue;
      if (prev && *prev < *v) {
        std::ostringstream os;
        os << "seed " << bs.seed << ": " << prev_name << " speedup " << *prev << " < " << to_string(m) << " "
           << *v;
        b.violations.push_back(os.str());
      }
      prev = v;
      prev_name = to_string(m);
    }
    if (const auto v = speed(Mode::vanilla); v && *v < 1.0) {
      std::ostringstream os;
      os << "seed " << bs.seed << ": vanilla speedup " << *v << " < 1";
      b.violations.push_back(os.str());
    }
    b.seeds.push_back(std::move(bs));
  }
  return b;
}

// ---- tri-objective -------------------------------------------------------

TriSweep sweep_tri_objective(const std::vector<int>& gammas, const std::vector<Mode>& modes,
                             const ModelPair& models, TokenSpan prompt, const DecodeConfig& config,
                             const LatencyParams& latency, const SimOptions& options, int jobs) {
  if (gammas.empty()) throw std::invalid_argument("sweep_tri_objective: empty gamma list");
  if (modes.empty()) throw std::invalid_argument("sweep_tri_objective: empty mode list");
  std::vector<Mode> run = modes;
  if (std::find(run.begin(), run.end(), Mode::ar) == run.end()) run.insert(run.begin(), Mode::ar);
  const std::size_t nm = run.size();

  auto results = run_cells<ExperimentResult>(gammas.size() * nm, jobs, [&](std::size_t i) {
    DecodeConfig c = config;
    c.gamma = gammas[i / nm];
    return run_mode(run[i % nm], models, prompt, c, latency, options);
  });

  TriSweep sweep;
  for (std::size_t g = 0; g < gammas.size(); ++g) {
    std::vector<ExperimentResult> group(results.begin() + g * nm, results.begin() + (g + 1) * nm);
    const LosslessReport lr = check_lossless(group);
    if (!lr.ok) sweep.lossless_errors.push_back("gamma " + std::to_string(gammas[g]) + ": " + lr.detail);

    DecodeConfig c = config;
    c.gamma = gammas[g];
    const LatencyParams p =
        bind_latency(latency, c.resolved(models.target->depth(), models.target->vocab_size()));
    for (std::size_t m = 0; m < nm; ++m) {
      if (std::find(modes.begin(), modes.end(), run[m]) == modes.end()) continue;
      ExperimentResult& r = group[m];
      TriRow row;
      row.gamma = gammas[g];
      row.mode = r.mode;
      row.mean_accept = r.mean_accept;
      row.rho = r.rho;
      row.budget_ms = overlap_budget(p);
      row.wall_ms = r.wall_ms;
      row.speedup = r.speedup;
      switch (r.mode) {
        case Mode::ar:
          row.step_ms = target_time(p);
          break;
        case Mode::vanilla:
          row.internal_steps = r.mean_fresh_steps;
          row.draft_gen_ms = r.mean_fresh_steps * draft_step_time(p);
          row.step_ms = vanilla_step_latency(p, row.draft_gen_ms);
          break;
        case Mode::mirror:
        case Mode::mirror_ss:
          row.draft_gen_ms = r.mean_tree_ms;
          row.internal_steps = tree_step_time(p) > 0.0 ? r.mean_tree_ms / tree_step_time(p) : 0.0;
          row.step_ms = mirror_step_latency(p, row.draft_gen_ms).total;
          break;
      }
      row.result = std::move(r);
      sweep.rows.push_back(std::move(row));
    }
  }

  // Shape checks along gamma for each mode.
  for (Mode m : modes) {
    std::vector<const TriRow*> rows;
    for (const auto& row : sweep.rows) {
      if (row.mode == m) rows.push_back(&row);
    }
    std::sort(rows.begin(), rows.end(), [](const auto* a, const auto* b) { return a->gamma < b->gamma; });
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const TriRow& a = *rows[i - 1];
      const TriRow& b = *rows[i];
      std::ostringstream os;
      if (m == Mode::vanilla && !(b.step_ms > a.step_ms)) {
        os << "vanilla step latency not increasing: gamma " << a.gamma << " -> " << b.gamma;
      } else if ((m == Mode::mirror || m == Mode::mirror_ss) && b.draft_gen_ms <= b.budget_ms &&
                 a.draft_gen_ms <= a.budget_ms && a.step_ms != b.step_ms) {
        os << to_string(m) << " step latency varies inside the budget: gamma " << a.gamma << " -> " << b.gamma;
      } else if ((m == Mode::mirror || m == Mode::mirror_ss) && b.draft_gen_ms > b.budget_ms &&
                 b.draft_gen_ms > a.draft_gen_ms && !(b.step_ms > a.step_ms)) {
        os << to_string(m) << " step latency not increasing past the budget: gamma " << a.gamma << " -> "
           << b.gamma;
      }
      if (!os.str().empty()) sweep.violations.push_back(os.str());
    }
  }
  const bool both = std::find(modes.begin(), modes.end(), Mode::mirror) != modes.end() &&
                    std::find(modes.begin(), modes.end(), Mode::mirror_ss) != modes.end();
  if (both) {
    const int g_ar = zero_slope_threshold(sweep, Mode::mirror);
    const int g_ss = zero_slope_threshold(sweep, Mode::mirror_ss);
    const int g_max = *std::max_element(gammas.begin(), gammas.end());
    if (g_ar < g_max && !(g_ss > g_ar)) {
      sweep.violations.push_back("mirror_ss zero-slope threshold " + std::to_string(g_ss) +
                                 " not wider than mirror " + std::to_string(g_ar));
    }
  }
  return sweep;
}

int zero_slope_threshold(const TriSweep& sweep, Mode mode) {
  int best = 0;
  for (const auto& row : sweep.rows) {
    if (row.mode == mode && row.draft_gen_ms <= row.budget_ms) best = std::max(best, row.gamma);
  }
  return best;
}

// ---- fallback ------------------------------------------------------------

std::vector<CorrectedStep> collect_corrected_steps(const ModelPair& models, TokenSpan prompt,
                                                   const DecodeConfig& config, std::size_t min_corrected,
                                                   int jobs) {
  const DecodeConfig cfg = config.resolved(models.target->depth(), models.target->vocab_size());
  const ArDrafter drafter(models.draft);
  constexpr std::size_t kChunk = 8;
  std::vector<CorrectedStep> out;
  auto corrected = [&](const DecodeConfig& c) {
    const DecodeTrace t = sd_decode(*models.target, drafter, prompt, c);
    std::vector<CorrectedStep> steps;
    TokenSeq ctx(prompt.begin(), prompt.end());
    std::size_t committed = 0;
    for (std::size_t k = 0; k < t.results.size(); ++k) {
      const AcceptanceResult& r = t.results[k];
      if (r.has_correction()) steps.push_back({c.seed, ctx, r});
      const std::size_t n = static_cast<std::size_t>(t.steps[k].committed);
      ctx.insert(ctx.end(), t.tokens.begin() + committed, t.tokens.begin() + committed + n);
      committed += n;
    }
    return steps;
  };
  if (cfg.temperature == 0.0) {
    DecodeConfig c = cfg;
    for (int tries = 0; out.size() < min_corrected; ++tries) {
      if (tries >= 32) throw std::runtime_error("collect_corrected_steps: decodes produce no corrections");
      out = corrected(c);
      c.max_new_tokens *= 2;
    }
    out.resize(min_corrected);
    return out;
  }
  std::uint64_t next_seed = cfg.seed;
  std::size_t empty_chunks = 0;
  while (out.size() < min_corrected) {
    auto chunk = run_cells<std::vector<CorrectedStep>>(kChunk, jobs, [&](std::size_t i) {
      DecodeConfig c = cfg;
      c.seed = next_seed + i;
      return corrected(c);
    });
    next_seed += kChunk;
    std::size_t added = 0;
    for (auto& v : chunk) {
      added += v.size();
      for (auto& s : v) out.push_back(std::move(s));
    }
    if (added == 0 && ++empty_chunks >= 4) {
      throw std::runtime_error("collect_corrected_steps: decodes produce no corrections");
    }
  }
  out.resize(min_corrected);
  return out;
}

namespace {

void check_exits(const std::vector<int>& exits, int depth) {
  for (int e : exits) {
    if (e <= 0 || e >= depth) {
      throw std::invalid_argument("fallback sweep: exit " + std::to_string(e) + " outside (0, N)");
    }
  }
}

}  // namespace

PointwiseFallback pointwise_fallback(const std::vector<int>& kappas, const std::vector<int>& exits,
                                     const ModelPair& models, const std::vector<CorrectedStep>& steps,
                                     const DecodeConfig& config, int jobs) {
  if (kappas.empty() || exits.empty()) throw std::invalid_argument("pointwise_fallback: empty axis");
  check_exits(exits, models.target->depth());
  const ArDrafter drafter(models.draft);
  PointwiseFallback pw;
  pw.exits = exits;
  pw.kappas = kappas;
  pw.steps = steps.size();
  std::vector<std::size_t> order(kappas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return kappas[a] < kappas[b]; });

  for (int exit : exits) {
    auto rows = run_cells<std::vector<unsigned char>>(steps.size(), jobs, [&](std::size_t s) {
      const CorrectedStep& cs = steps[s];
      const SessionStreams streams(cs.seed);
      std::vector<unsigned char> f(kappas.size());
      for (std::size_t k = 0; k < kappas.size(); ++k) {
        const TopKMessage msg = early_exit_message(*models.target, cs.ctx, exit, kappas[k]);
        const HypothesisTree tree = build_tree(drafter, cs.ctx, msg, config.gamma, config.temperature, streams);
        f[k] = reuse_lookup(tree, cs.result).fallback() ? 1 : 0;
      }
      return f;
    });
    for (const auto& f : rows) {
      for (std::size_t i = 1; i < order.size(); ++i) {
        if (f[order[i]] > f[order[i - 1]]) {
          ++pw.violations;
          break;
        }
      }
    }
    pw.f.push_back(std::move(rows));
  }
  return pw;
}

namespace {

FallbackCell fallback_cell(int exit, int kappa, const ModelPair& models, TokenSpan prompt,
                           const DecodeConfig& config, std::size_t min_corrected) {
  DecodeConfig c = config;
  c.exit_layer = exit;
  c.kappa = kappa;
  c = c.resolved(models.target->depth(), models.target->vocab_size());
  const ArDrafter drafter(models.draft);
  FallbackCell cell;
  cell.exit_layer = exit;
  cell.kappa = kappa;
  double f_sum = 0.0, om_sum = 0.0, om_sq = 0.0, d_sum = 0.0, d_sq = 0.0;
  std::size_t n = 0, idle = 0;
  // A greedy decode is the same for every seed, so grow one trajectory
  // instead of repeating it.
  const bool greedy = c.temperature == 0.0;
  while (n < min_corrected) {
    const DecodeTrace t = mirror_decode(*models.target, drafter, prompt, c);
    const std::size_t before = n;
    if (greedy) {
      f_sum = om_sum = om_sq = d_sum = d_sq = 0.0;
      n = 0;
      cell.seeds_used = 1;
      c.max_new_tokens *= 2;
    } else {
      ++cell.seeds_used;
      ++c.seed;
    }
    for (const StepRecord& r : t.steps) {
      if (!r.fallback) continue;
      const double f = *r.fallback ? 1.0 : 0.0;
      const double d = f - (1.0 - r.omega);
      f_sum += f;
      om_sum += r.omega;
      om_sq += r.omega * r.omega;
      d_sum += d;
      d_sq += d * d;
      ++n;
    }
    if (n <= before && ++idle >= 32) {
      throw std::runtime_error("fallback sweep: decodes produce no corrections");
    }
  }
  const double dn = static_cast<double>(n);
  cell.corrected_steps = n;
  cell.ff = f_sum / dn;
  cell.ff_stderr = std::sqrt(cell.ff * (1.0 - cell.ff) / dn);
  cell.omega = om_sum / dn;
  const double om_var = n > 1 ? std::max(0.0, (om_sq - dn * cell.omega * cell.omega) / (dn - 1.0)) : 0.0;
  cell.omega_stderr = std::sqrt(om_var / dn);
  cell.bound_gap = d_sum / dn;
  const double var = n > 1 ? std::max(0.0, (d_sq - dn * cell.bound_gap * cell.bound_gap) / (dn - 1.0)) : 0.0;
  cell.bound_stderr = std::sqrt(var / dn);
  cell.bound_ok = cell.bound_gap <= 3.0 * cell.bound_stderr;
  return cell;
}

void fallback_checks(FallbackSweep& sw) {
  const std::size_t nk = sw.kappas.size();
  auto at = [&](std::size_t e, std::size_t k) -> const FallbackCell& { return sw.cells[e * nk + k]; };
  std::vector<std::size_t> ko(nk), eo(sw.exits.size());
  std::iota(ko.begin(), ko.end(), 0);
  std::iota(eo.begin(), eo.end(), 0);
  std::stable_sort(ko.begin(), ko.end(), [&](auto a, auto b) { return sw.kappas[a] < sw.kappas[b]; });
  std::stable_sort(eo.begin(), eo.end(), [&](auto a, auto b) { return sw.exits[a] < sw.exits[b]; });
  for (const auto& c : sw.cells) {
    if (!c.bound_ok) {
      std::ostringstream os;
      os << "exit " << c.exit_layer << " kappa " << c.kappa << ": FF " << c.ff << " exceeds 1 - omega "
         << 1.0 - c.omega << " by more than 3 standard errors";
      sw.violations.push_back(os.str());
    }
  }
  for (std::size_t k = 0; k < nk; ++k) {
    for (std::size_t i = 1; i < eo.size(); ++i) {
      const auto& a = at(eo[i - 1], k);
      const auto& b = at(eo[i], k);
      if (b.ff > a.ff + 3.0 * std::hypot(a.ff_stderr, b.ff_stderr)) {
        std::ostringstream os;
        os << "kappa " << a.kappa << ": FF rises from " << a.ff << " at exit " << a.exit_layer << " to " << b.ff
           << " at exit " << b.exit_layer;
        sw.violations.push_back(os.str());
      }
      if (b.omega < a.omega - 3.0 * std::hypot(a.omega_stderr, b.omega_stderr)) {
        std::ostringstream os;
        os << "kappa " << a.kappa << ": overlap mass falls from " << a.omega << " at exit " << a.exit_layer
           << " to " << b.omega << " at exit " << b.exit_layer;
        sw.violations.push_back(os.str());
      }
    }
  }
  for (std::size_t e = 0; e < sw.exits.size(); ++e) {
    for (std::size_t i = 1; i < ko.size(); ++i) {
      const auto& a = at(e, ko[i - 1]);
      const auto& b = at(e, ko[i]);
      if (b.ff > a.ff + 3.0 * std::hypot(a.ff_stderr, b.ff_stderr)) {
        std::ostringstream os;
        os << "exit " << a.exit_layer << ": FF rises from " << a.ff << " at kappa " << a.kappa << " to " << b.ff
           << " at kappa " << b.kappa;
        sw.violations.push_back(os.str());
      }
    }
  }
}

FallbackSweep fallback_sweep_impl(const std::vector<int>& kappas, const std::vector<int>& exits,
                                  const ModelPair& models, TokenSpan prompt, const DecodeConfig& config,
                                  std::size_t min_corrected, bool serial, int jobs) {
  if (kappas.empty() || exits.empty()) throw std::invalid_argument("sweep_fallback: empty axis");
  if (min_corrected == 0) throw std::invalid_argument("sweep_fallback: min_corrected must be >= 1");
  check_exits(exits, models.target->depth());
  FallbackSweep sw;
  sw.exits = exits;
  sw.kappas = kappas;
  const std::size_t nk = kappas.size();
  auto body = [&](std::size_t i) {
    return fallback_cell(exits[i / nk], kappas[i % nk], models, prompt, config, min_corrected);
  };
  sw.cells = serial ? run_cells_serial<FallbackCell>(exits.size() * nk, body)
                    : run_cells<FallbackCell>(exits.size() * nk, jobs, body);
  fallback_checks(sw);
  return sw;
}

}  // namespace

FallbackSweep sweep_fallback(const std::vector<int>& kappas, const std::vector<int>& exits,
                             const ModelPair& models, TokenSpan prompt, const DecodeConfig& config,
                             std::size_t min_corrected, int jobs) {
  return fallback_sweep_impl(kappas, exits, models, prompt, config, min_corrected, false, jobs);
}

FallbackSweep sweep_fallback_serial(const std::vector<int>& kappas, const std::vector<int>& exits,
                                    const ModelPair& models, TokenSpan prompt, const DecodeConfig& config,
                                    std::size_t min_corrected) {
  return fallback_sweep_impl(kappas, exits, models, prompt, config, min_corrected, true, 1);
}

// ---- batching ------------------------------------------------------------

BatchSweep sweep_batching(const std::vector<int>& batches, const ModelPair& models, TokenSpan prompt,
                          const DecodeConfig& config, const LatencyParams& latency,
                          const BatchCoefficients& coefficients, const SimOptions& options,
                          const std::vector<std::uint64_t>& seeds, int jobs) {
  if (batches.empty()) throw std::invalid_argument("sweep_batching: empty batch list");
  if (seeds.empty()) throw std::invalid_argument("sweep_batching: no seeds");
  for (int b : batches) {
    if (b < 1) throw std::invalid_argument("sweep_batching: batch sizes must be >= 1");
  }
  constexpr Mode kModes[] = {Mode::ar, Mode::vanilla, Mode::mirror_ss};
  constexpr std::size_t nm = std::size(kModes);
  const std::size_t per_batch = seeds.size() * nm;

  auto results = run_cells<ExperimentResult>(batches.size() * per_batch, jobs, [&](std::size_t i) {
    const int b = batches[i / per_batch];
    const std::size_t rest = i % per_batch;
    const BatchingChoice choice = batching_policy(b);
    DecodeConfig c = config;
    c.seed = seeds[rest / nm];
    c.kappa = choice.kappa;
    SimOptions o = options;
    o.ss.streams = choice.ss_streams;
    const LatencyParams p = batch_scale(latency, b, choice.kappa, coefficients);
    return run_mode(kModes[rest % nm], models, prompt, c, p, o);
  });

  BatchSweep sw;
  for (std::size_t bi = 0; bi < batches.size(); ++bi) {
    const int b = batches[bi];
    const BatchingChoice choice = batching_policy(b);
    BatchRow row;
    row.batch = b;
    row.kappa = choice.kappa;
    row.ss_streams = choice.ss_streams;
    DecodeConfig c = config;
    c.kappa = choice.kappa;
    const LatencyParams p = bind_latency(batch_scale(latency, b, choice.kappa, coefficients),
                                         c.resolved(models.target->depth(), models.target->vocab_size()));
    row.ar_step_ms = target_time(p);
    row.budget_ms = overlap_budget(p);
    double ar_wall = 0.0, v_wall = 0.0, m_wall = 0.0, v_steps = 0.0, m_steps = 0.0;
    double v_acc = 0.0, m_acc = 0.0, m_ff = 0.0, m_corr = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const auto base = bi * per_batch + s * nm;
      std::vector<ExperimentResult> group(results.begin() + base, results.begin() + base + nm);
      const LosslessReport lr = check_lossless(group);
      if (!lr.ok) {
        sw.lossless_errors.push_back("B " + std::to_string(b) + " seed " + std::to_string(seeds[s]) + ": " +
                                     lr.detail);
      }
      const ExperimentResult& ar = group[0];
      const ExperimentResult& v = group[1];
      const ExperimentResult& m = group[2];
      ar_wall += ar.wall_ms;
      v_wall += v.wall_ms;
      m_wall += m.wall_ms;
      v_steps += static_cast<double>(v.steps);
      m_steps += static_cast<double>(m.steps);
      v_acc += v.mean_accept * static_cast<double>(v.steps);
      m_acc += m.mean_accept * static_cast<double>(m.steps);
      row.vanilla_draft_ms += v.draft_ms;
      row.mirror_exposed_tree_ms += m.exposed_tree_ms;
      if (m.corrected_steps > 0) {
        m_ff += m.ff * static_cast<double>(m.corrected_steps);
        m_corr += static_cast<double>(m.corrected_steps);
      }
    }
    row.vanilla_speedup = ar_wall / v_wall;
    row.mirror_speedup = ar_wall / m_wall;
    row.vanilla_wall_ms = v_wall;
    row.mirror_wall_ms = m_wall;
    row.vanilla_step_ms = v_wall / v_steps;
    row.mirror_step_ms = m_wall / m_steps;
    row.vanilla_mean_accept = v_acc / v_steps;
    row.mirror_mean_accept = m_acc / m_steps;
    row.mirror_ff = m_corr > 0.0 ? m_ff / m_corr : 0.0;
    row.relative_draft_overhead =
        row.vanilla_draft_ms > 0.0 ? row.mirror_exposed_tree_ms / row.vanilla_draft_ms : 0.0;
    sw.rows.push_back(row);
  }

  std::vector<std::size_t> order(sw.rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return sw.rows[a].batch < sw.rows[b].batch; });
  for (std::size_t i = 0; i < order.size(); ++i) {
    const BatchRow& r = sw.rows[order[i]];
    std::ostringstream os;
    if (!(r.mirror_speedup > r.vanilla_speedup)) {
      os << "B " << r.batch << ": mirror speedup " << r.mirror_speedup << " <= vanilla " << r.vanilla_speedup;
      sw.violations.push_back(os.str());
    }
    if (i == 0) continue;
    const BatchRow& q = sw.rows[order[i - 1]];
    std::ostringstream os2;
    if (r.vanilla_speedup > q.vanilla_speedup) {
      os2 << "vanilla speedup rises from B " << q.batch << " to B " << r.batch << "; ";
    }
    if (r.mirror_speedup > q.mirror_speedup) {
      os2 << "mirror speedup rises from B " << q.batch << " to B " << r.batch << "; ";
    }
    // Equal overheads can differ in the last bit once summed over steps.
    if (r.relative_draft_overhead < q.relative_draft_overhead * (1.0 - 1e-12)) {
      os2 << "relative draft overhead falls from B " << q.batch << " to B " << r.batch << "; ";
    }
    if (!os2.str().empty()) sw.violations.push_back(os2.str());
  }
  return sw;
}

}  // namespace spdlab
