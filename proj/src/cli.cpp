#include "spdlab/cli.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "spdlab/config.hpp"
#include "spdlab/sim.hpp"

namespace spdlab {

using nlohmann::json;
namespace fs = std::filesystem;

std::string format_number(double v) {
  if (std::isnan(v)) return "";
  if (v == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 10);
  return std::string(buf, res.ptr);
}

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  bool json_only = false;
  std::string out_dir;
  bool strict = false;
};

struct CsvRow {
  std::string mode;
  int batch = 1;
  int gamma = 0;
  int kappa = 0;
  int exit_layer = 0;
  double mean_accept = std::nan("");
  double rho = std::nan("");
  double ff = std::nan("");
  double omega = std::nan("");
  double step_ms = std::nan("");
  double wall_ms = std::nan("");
  double speedup = std::nan("");
};

std::string csv_text(const std::vector<CsvRow>& rows) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.mode << ',' << r.batch << ',' << r.gamma << ',' << r.kappa << ',' << r.exit_layer << ','
       << format_number(r.mean_accept) << ',' << format_number(r.rho) << ',' << format_number(r.ff) << ','
       << format_number(r.omega) << ',' << format_number(r.step_ms) << ',' << format_number(r.wall_ms) << ','
       << format_number(r.speedup) << '\n';
  }
  return os.str();
}

json num(double v) { return std::isnan(v) ? json() : json(v); }

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
}

Workspace load(const Common& c) {
  json j = c.config_path.empty() ? json::object() : load_json_file(c.config_path);
  for (const auto& s : c.sets) apply_override(j, s);
  ExperimentConfig cfg = config_from_json(j);
  if (c.seed) {
    cfg.decode.seed = *c.seed;
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = *c.seed + i;
  }
  if (!c.out_dir.empty()) cfg.output.dir = c.out_dir;
  return make_workspace(cfg);
}

SimOptions sim_options(const Workspace& ws) {
  SimOptions o;
  o.ss = ws.config.ss;
  o.record_timelines = ws.config.record_timelines;
  return o;
}

fs::path out_path(const Workspace& ws, const std::string& name) {
  return fs::path(output_dir(ws.config)) / (ws.config.output.prefix + "_" + name);
}

CsvRow result_row(const ExperimentResult& r, const DecodeConfig& d, const LatencyParams& p) {
  CsvRow row;
  row.mode = to_string(r.mode);
  row.batch = p.batch;
  row.gamma = d.gamma;
  row.kappa = d.kappa;
  row.exit_layer = d.exit_layer;
  row.mean_accept = r.mode == Mode::ar ? std::nan("") : r.mean_accept;
  row.rho = r.mode == Mode::ar ? std::nan("") : r.rho;
  row.ff = r.ff;
  row.omega = r.omega;
  row.step_ms = r.mean_step_ms;
  row.wall_ms = r.wall_ms;
  row.speedup = r.speedup;
  return row;
}

json step_json(const StepRecord& s) {
  json j{{"step", s.step},
         {"position", s.position},
         {"window_len", s.window_len},
         {"accepted_len", s.accepted_len},
         {"corrected", s.corrected},
         {"fallback", s.fallback ? json(*s.fallback ? 1 : 0) : json()},
         {"reuse", to_string(s.reuse)},
         {"source", to_string(s.source)},
         {"J", s.draft_steps},
         {"eta_bar", s.eta_bar},
         {"tree_steps", s.tree_steps},
         {"committed", s.committed},
         {"payload_items", s.payload_items},
         {"omega", num(s.omega)}};
  return j;
}

json result_json(const ExperimentResult& r, bool with_steps) {
  json j{{"mode", to_string(r.mode)},
         {"tokens", r.tokens},
         {"steps", r.steps},
         {"mean_accept", r.mean_accept},
         {"rho", r.rho},
         {"ff", num(r.ff)},
         {"ff_stderr", num(r.ff_stderr)},
         {"omega", num(r.omega)},
         {"corrected_steps", r.corrected_steps},
         {"wall_ms", r.wall_ms},
         {"ar_wall_ms", r.ar_wall_ms},
         {"mean_step_ms", r.mean_step_ms},
         {"draft_ms", r.draft_ms},
         {"exposed_draft_ms", r.exposed_draft_ms},
         {"tokens_per_sec", r.tokens_per_sec},
         {"speedup", r.speedup},
         {"max_timeline_error_ms", r.max_timeline_error}};
  if (with_steps) {
    json steps = json::array();
    for (const auto& s : r.records) steps.push_back(step_json(s));
    j["records"] = steps;
  }
  return j;
}

json timeline_json(const std::vector<StepTimeline>& tls) {
  json arr = json::array();
  for (const auto& t : tls) {
    json iv = json::array();
    for (const auto& i : t.intervals) {
      iv.push_back({{"lane", i.lane}, {"start_ms", i.start}, {"end_ms", i.end}, {"label", i.label}});
    }
    arr.push_back({{"step", t.step}, {"start_ms", t.start}, {"total_ms", t.total}, {"intervals", iv}});
  }
  return arr;
}

std::string fixed(double v, int prec = 3) {
  if (std::isnan(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

void emit_summary(std::ostream& out, const Common& c, const json& summary) {
  if (c.json_only) out << summary.dump(2) << '\n';
}

// ---- decode ----------------------------------------------------------------

int cmd_decode(const Common& c, std::ostream& out, std::ostream& err) {
  const Workspace ws = load(c);
  const SimOptions opts = sim_options(ws);
  const LatencyParams p = bind_latency(ws.config.latency, ws.decode);

  std::vector<ExperimentResult> results;
  for (Mode m : ws.config.modes) {
    results.push_back(run_mode(m, ws.models, ws.prompt, ws.decode, ws.config.latency, opts));
  }
  std::vector<ExperimentResult> check = results;
  if (std::none_of(results.begin(), results.end(), [](const auto& r) { return r.mode == Mode::ar; })) {
    check.insert(check.begin(), run_mode(Mode::ar, ws.models, ws.prompt, ws.decode, ws.config.latency, {}));
  }
  const LosslessReport lossless = check_lossless(check);

  std::vector<CsvRow> rows;
  json summary{{"command", "decode"}, {"config", config_to_json(ws.config)}, {"lossless", lossless.ok}};
  json jr = json::array();
  for (const auto& r : results) {
    rows.push_back(result_row(r, ws.decode, p));
    jr.push_back(result_json(r, true));
    if (ws.config.record_timelines && r.mode != Mode::ar) {
      write_file(out_path(ws, std::string("timeline_") + to_string(r.mode) + ".json"),
                 timeline_json(r.timelines).dump(1) + "\n");
    }
  }
  summary["results"] = jr;
  write_file(out_path(ws, "decode.csv"), csv_text(rows));
  write_file(out_path(ws, "decode.json"), summary.dump(2) + "\n");

  if (c.json_only) {
    emit_summary(out, c, summary);
  } else {
    for (const auto& r : results) {
      out << "== " << to_string(r.mode) << ": " << r.tokens.size() << " tokens, " << r.steps << " steps, E[A]="
          << fixed(r.mean_accept) << ", FF=" << fixed(r.ff) << ", wall=" << fixed(r.wall_ms) << " ms, speedup="
          << fixed(r.speedup) << "x\n";
      out << "tokens:";
      for (Token t : r.tokens) out << ' ' << t;
      out << '\n';
      if (ws.vocab) out << "text: " << ws.vocab->decode(r.tokens) << '\n';
      if (r.mode == Mode::ar) continue;
      out << "  step   pos  win  A_t  F_t  reuse          J  eta_bar  committed\n";
      for (const auto& s : r.records) {
        out << std::setw(6) << s.step << std::setw(6) << s.position << std::setw(5) << s.window_len
            << std::setw(5) << s.accepted_len << std::setw(5) << (s.fallback ? (*s.fallback ? "1" : "0") : "-")
            << "  " << std::left << std::setw(13) << to_string(s.reuse) << std::right << std::setw(3)
            << s.draft_steps << std::setw(9) << fixed(s.eta_bar, 2) << std::setw(11) << s.committed << '\n';
      }
    }
    out << "lossless: " << (lossless.ok ? "yes" : "NO") << '\n';
  }
  if (!lossless.ok) {
    err << "losslessness violation:\n" << lossless.detail;
    return kExitLossless;
  }
  return kExitOk;
}

// ---- sweeps ----------------------------------------------------------------

int finish(const std::vector<std::string>& lossless, const std::vector<std::string>& violations, std::ostream& err) {
  for (const auto& l : lossless) err << "losslessness violation: " << l;
  for (const auto& v : violations) err << "property violation: " << v << '\n';
  if (!lossless.empty()) return kExitLossless;
  if (!violations.empty()) return kExitProperty;
  return kExitOk;
}

int cmd_sweep_tri(const Common& c, std::ostream& out, std::ostream& err) {
  const Workspace ws = load(c);
  SimOptions opts = sim_options(ws);
  opts.record_timelines = false;
  const TriSweep sw = sweep_tri_objective(ws.config.sweep.gammas, ws.config.modes, ws.models, ws.prompt, ws.decode,
                                          ws.config.latency, opts, c.jobs);
  std::vector<CsvRow> rows;
  json jrows = json::array();
  for (const auto& r : sw.rows) {
    DecodeConfig d = ws.decode;
    d.gamma = r.gamma;
    CsvRow row = result_row(r.result, d, bind_latency(ws.config.latency, d));
    row.step_ms = r.step_ms;
    rows.push_back(row);
    jrows.push_back({{"gamma", r.gamma},
                     {"mode", to_string(r.mode)},
                     {"mean_accept", r.mean_accept},
                     {"rho", r.rho},
                     {"internal_steps", r.internal_steps},
                     {"draft_gen_ms", r.draft_gen_ms},
                     {"step_ms", r.step_ms},
                     {"budget_ms", r.budget_ms},
                     {"wall_ms", r.wall_ms},
                     {"speedup", r.speedup}});
  }
  json thresholds = json::object();
  for (Mode m : ws.config.modes) {
    if (m == Mode::mirror || m == Mode::mirror_ss) thresholds[to_string(m)] = zero_slope_threshold(sw, m);
  }
  json summary{{"command", "sweep tri"},
               {"config", config_to_json(ws.config)},
               {"rows", jrows},
               {"zero_slope_gamma", thresholds},
               {"violations", sw.violations},
               {"lossless_errors", sw.lossless_errors}};
  write_file(out_path(ws, "tri.csv"), csv_text(rows));
  write_file(out_path(ws, "tri.json"), summary.dump(2) + "\n");
  if (c.json_only) {
    emit_summary(out, c, summary);
  } else {
    out << "gamma  mode        E[A]     J   draft_ms  step_ms  speedup\n";
    for (const auto& r : sw.rows) {
      out << std::setw(5) << r.gamma << "  " << std::left << std::setw(10) << to_string(r.mode) << std::right
          << std::setw(6) << fixed(r.mean_accept, 2) << std::setw(6) << fixed(r.internal_steps, 1) << std::setw(11)
          << fixed(r.draft_gen_ms) << std::setw(9) << fixed(r.step_ms) << std::setw(9) << fixed(r.speedup) << '\n';
    }
    for (const auto& [k, v] : thresholds.items()) out << "zero-slope gamma* (" << k << "): " << v << '\n';
  }
  return finish(sw.lossless_errors, sw.violations, err);
}

int cmd_sweep_fallback(const Common& c, std::ostream& out, std::ostream& err) {
  const Workspace ws = load(c);
  const auto& ax = ws.config.sweep;
  const auto steps = collect_corrected_steps(ws.models, ws.prompt, ws.decode, ax.min_corrected, c.jobs);
  const PointwiseFallback pw = pointwise_fallback(ax.kappas, ws.exits, ws.models, steps, ws.decode, c.jobs);
  const FallbackSweep sw = sweep_fallback(ax.kappas, ws.exits, ws.models, ws.prompt, ws.decode, ax.min_corrected, c.jobs);

  std::vector<std::string> violations = sw.violations;
  if (pw.violations > 0) {
    violations.push_back(std::to_string(pw.violations) + " shared steps where F_t rises with kappa");
  }
  std::vector<CsvRow> rows;
  json cells = json::array();
  for (const auto& cell : sw.cells) {
    CsvRow row;
    row.mode = "mirror";
    row.batch = ws.config.latency.batch;
    row.gamma = ws.decode.gamma;
    row.kappa = cell.kappa;
    row.exit_layer = cell.exit_layer;
    row.ff = cell.ff;
    row.omega = cell.omega;
    rows.push_back(row);
    cells.push_back({{"exit_layer", cell.exit_layer},
                     {"kappa", cell.kappa},
                     {"corrected_steps", cell.corrected_steps},
                     {"seeds_used", cell.seeds_used},
                     {"ff", cell.ff},
                     {"ff_stderr", cell.ff_stderr},
                     {"omega_stderr", cell.omega_stderr},
                     {"omega", cell.omega},
                     {"bound_gap", cell.bound_gap},
                     {"bound_stderr", cell.bound_stderr},
                     {"bound_ok", cell.bound_ok}});
  }
  json pointwise = json::object();
  for (std::size_t e = 0; e < pw.exits.size(); ++e) {
    std::vector<double> ff(pw.kappas.size(), 0.0);
    for (const auto& f : pw.f[e]) {
      for (std::size_t k = 0; k < ff.size(); ++k) ff[k] += f[k];
    }
    for (double& v : ff) v /= static_cast<double>(std::max<std::size_t>(1, pw.steps));
    pointwise[std::to_string(pw.exits[e])] = ff;
  }
  json summary{{"command", "sweep fallback"},
               {"config", config_to_json(ws.config)},
               {"cells", cells},
               {"pointwise",
                {{"steps", pw.steps}, {"kappas", pw.kappas}, {"violations", pw.violations}, {"ff_by_exit", pointwise}}},
               {"violations", violations}};
  write_file(out_path(ws, "fallback.csv"), csv_text(rows));
  write_file(out_path(ws, "fallback.json"), summary.dump(2) + "\n");
  if (c.json_only) {
    emit_summary(out, c, summary);
  } else {
    out << "exit  kappa  steps     FF      +-    1-omega  bound\n";
    for (const auto& cell : sw.cells) {
      out << std::setw(4) << cell.exit_layer << std::setw(7) << cell.kappa << std::setw(7) << cell.corrected_steps
          << std::setw(7) << fixed(cell.ff) << std::setw(8) << fixed(cell.ff_stderr) << std::setw(10)
          << fixed(1.0 - cell.omega) << "  " << (cell.bound_ok ? "ok" : "FAIL") << '\n';
    }
    out << "pointwise (" << pw.steps << " shared steps): " << pw.violations << " monotonicity violations\n";
  }
  return finish({}, violations, err);
}

int cmd_sweep_batching(const Common& c, std::ostream& out, std::ostream& err) {
  const Workspace ws = load(c);
  SimOptions opts = sim_options(ws);
  opts.record_timelines = false;
  const BatchSweep sw = sweep_batching(ws.config.sweep.batches, ws.models, ws.prompt, ws.decode, ws.config.latency,
                                       ws.config.batching, opts, ws.config.seeds, c.jobs);
  std::vector<CsvRow> rows;
  json jrows = json::array();
  for (const auto& r : sw.rows) {
    CsvRow v;
    v.mode = "vanilla";
    v.batch = r.batch;
    v.gamma = ws.decode.gamma;
    v.kappa = r.kappa;
    v.exit_layer = ws.decode.exit_layer;
    v.mean_accept = r.vanilla_mean_accept;
    v.rho = r.vanilla_mean_accept / ws.decode.gamma;
    v.step_ms = r.vanilla_step_ms;
    v.wall_ms = r.vanilla_wall_ms;
    v.speedup = r.vanilla_speedup;
    CsvRow m = v;
    m.mode = "mirror_ss";
    m.mean_accept = r.mirror_mean_accept;
    m.rho = r.mirror_mean_accept / ws.decode.gamma;
    m.ff = r.mirror_ff;
    m.step_ms = r.mirror_step_ms;
    m.wall_ms = r.mirror_wall_ms;
    m.speedup = r.mirror_speedup;
    rows.push_back(v);
    rows.push_back(m);
    jrows.push_back({{"batch", r.batch},
                     {"kappa", r.kappa},
                     {"ss_streams", r.ss_streams},
                     {"ar_step_ms", r.ar_step_ms},
                     {"budget_ms", r.budget_ms},
                     {"vanilla_speedup", r.vanilla_speedup},
                     {"mirror_speedup", r.mirror_speedup},
                     {"vanilla_draft_ms", r.vanilla_draft_ms},
                     {"mirror_exposed_tree_ms", r.mirror_exposed_tree_ms},
                     {"relative_draft_overhead", r.relative_draft_overhead},
                     {"mirror_ff", r.mirror_ff}});
  }
  json summary{{"command", "sweep batching"},
               {"config", config_to_json(ws.config)},
               {"rows", jrows},
               {"violations", sw.violations},
               {"lossless_errors", sw.lossless_errors}};
  write_file(out_path(ws, "batching.csv"), csv_text(rows));
  write_file(out_path(ws, "batching.json"), summary.dump(2) + "\n");
  if (c.json_only) {
    emit_summary(out, c, summary);
  } else {
    out << "    B  kappa  streams  vanilla  mirror  rel_overhead\n";
    for (const auto& r : sw.rows) {
      out << std::setw(5) << r.batch << std::setw(7) << r.kappa << std::setw(9) << r.ss_streams << std::setw(9)
          << fixed(r.vanilla_speedup) << std::setw(8) << fixed(r.mirror_speedup) << std::setw(14)
          << fixed(r.relative_draft_overhead, 4) << '\n';
    }
  }
  return finish(sw.lossless_errors, sw.violations, err);
}

// ---- bench -------------------------------------------------------------------

int cmd_bench(const Common& c, std::ostream& out, std::ostream& err) {
  const Workspace ws = load(c);
  SimOptions opts = sim_options(ws);
  opts.record_timelines = false;
  const Bench b = run_bench(ws.config.modes, ws.models, ws.prompt, ws.decode, ws.config.latency, opts,
                            ws.config.seeds, c.jobs);
  const LatencyParams p = bind_latency(ws.config.latency, ws.decode);

  std::vector<CsvRow> rows;
  json per_mode = json::array();
  for (std::size_t m = 0; m < b.modes.size(); ++m) {
    double wall = 0.0, ar = 0.0, steps = 0.0, acc = 0.0, ff = 0.0, corr = 0.0, om = 0.0;
    for (const auto& s : b.seeds) {
      const ExperimentResult& r = s.results[m];
      wall += r.wall_ms;
      ar += r.ar_wall_ms;
      steps += static_cast<double>(r.steps);
      acc += r.mean_accept * static_cast<double>(r.steps);
      if (r.corrected_steps > 0) {
        ff += r.ff * static_cast<double>(r.corrected_steps);
        om += r.omega * static_cast<double>(r.corrected_steps);
        corr += static_cast<double>(r.corrected_steps);
      }
    }
    CsvRow row;
    row.mode = to_string(b.modes[m]);
    row.batch = p.batch;
    row.gamma = ws.decode.gamma;
    row.kappa = ws.decode.kappa;
    row.exit_layer = ws.decode.exit_layer;
    if (b.modes[m] != Mode::ar) {
      row.mean_accept = acc / steps;
      row.rho = row.mean_accept / ws.decode.gamma;
    }
    if (corr > 0.0) {
      row.ff = ff / corr;
      row.omega = om / corr;
    }
    row.step_ms = wall / steps;
    row.wall_ms = wall;
    row.speedup = ar / wall;
    rows.push_back(row);
    json seeds = json::array();
    for (const auto& s : b.seeds) seeds.push_back({{"seed", s.seed}, {"speedup", s.results[m].speedup}});
    per_mode.push_back({{"mode", row.mode}, {"speedup", row.speedup}, {"mean_accept", num(row.mean_accept)},
                        {"ff", num(row.ff)}, {"per_seed", seeds}});
  }
  const bool ordering = b.violations.empty();
  json summary{{"command", "bench"},
               {"config", config_to_json(ws.config)},
               {"modes", per_mode},
               {"ordering_holds", ordering},
               {"ordering_violations", b.violations},
               {"lossless_errors", b.lossless_errors}};
  write_file(out_path(ws, "bench.csv"), csv_text(rows));
  write_file(out_path(ws, "bench.json"), summary.dump(2) + "\n");
  if (c.json_only) {
    emit_summary(out, c, summary);
  } else {
    out << "    seed";
    for (Mode m : b.modes) out << std::setw(11) << to_string(m);
    out << '\n';
    for (const auto& s : b.seeds) {
      out << std::setw(8) << s.seed;
      for (const auto& r : s.results) out << std::setw(11) << fixed(r.speedup);
      out << '\n';
    }
    out << "  pooled";
    for (const auto& r : rows) out << std::setw(11) << fixed(r.speedup);
    out << '\n';
    out << "ordering mirror_ss >= mirror >= vanilla >= 1: " << (ordering ? "holds" : "does not hold") << '\n';
    for (const auto& v : b.violations) out << "  " << v << '\n';
  }
  if (!b.lossless_errors.empty()) return finish(b.lossless_errors, {}, err);
  if (c.strict && !ordering) return finish({}, b.violations, err);
  return kExitOk;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "Override a config field, e.g. --set decode.gamma=5")->take_all();
  app->add_option("--seed", c.seed, "Seed for the decode and first seed of the seed list");
  app->add_option("--jobs", c.jobs, "Parallel sweep cells (0 = OpenMP default)")->check(CLI::NonNegativeNumber);
  app->add_flag("--json", c.json_only, "Print only the machine-readable summary");
  app->add_option("--out", c.out_dir, "Output directory (overrides SPDLAB_OUT_DIR)");
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speculative decoding simulator with early-exit draft overlap"};
  app.require_subcommand(1);
  Common c;
  auto* decode = app.add_subcommand("decode", "Decode with every configured mode and report traces");
  add_common(decode, c);
  auto* sweep = app.add_subcommand("sweep", "Run a parameter sweep");
  sweep->require_subcommand(1);
  auto* tri = sweep->add_subcommand("tri", "Window size vs acceptance vs draft latency");
  auto* fallback = sweep->add_subcommand("fallback", "Fallback frequency over kappa and exit depth");
  auto* batching = sweep->add_subcommand("batching", "Speedup and draft overhead over batch size");
  for (auto* s : {tri, fallback, batching}) add_common(s, c);
  auto* bench = app.add_subcommand("bench", "Four-mode speedup comparison over the seed list");
  add_common(bench, c);
  bench->add_flag("--strict", c.strict, "Exit 4 when the speedup ordering does not hold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (decode->parsed()) return cmd_decode(c, out, err);
    if (tri->parsed()) return cmd_sweep_tri(c, out, err);
    if (fallback->parsed()) return cmd_sweep_fallback(c, out, err);
    if (batching->parsed()) return cmd_sweep_batching(c, out, err);
    if (bench->parsed()) return cmd_bench(c, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"spdlab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace spdlab
