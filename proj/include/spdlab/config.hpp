#pragma once

// Experiment configuration: JSON load with strict key checking, dotted-path
// overrides, and model construction.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "spdlab/sim.hpp"

namespace spdlab {

/// Raised for anything wrong with the configuration itself (bad keys, bad
/// values, unreadable files). The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  std::string family = "synthetic";  // synthetic | ngram
  SyntheticLmParams synthetic;
  double draft_fidelity = 0.6;
  std::uint64_t draft_seed = 0xD2AF7;
  double draft_noise_sharpness = 4.0;

  // ngram family
  std::string corpus;       // UTF-8 text file
  std::string vocab_file;   // empty: byte-level tokens
  int target_order = 3;
  int draft_order = 2;
  double add_k = 0.05;
  int depth = 8;
  double epsilon0 = 0.5;
};

struct SweepAxes {
  std::vector<int> gammas = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16};
  std::vector<int> kappas = {1, 2, 4, 8, 16};
  std::vector<int> exits;  // empty: N/4, N/2, 3N/4
  std::vector<int> batches = {1, 8, 16, 32, 64};
  std::size_t min_corrected = 1000;
};

struct OutputConfig {
  std::string dir;  // empty: $SPDLAB_OUT_DIR, else "out"
  std::string prefix = "spdlab";
};

struct ExperimentConfig {
  ModelConfig model;
  DecodeConfig decode;
  LatencyParams latency;
  BatchCoefficients batching{1.0, 0.05, 1.0, 0.1};
  SsSettings ss;
  std::vector<Mode> modes = {Mode::ar, Mode::vanilla, Mode::mirror, Mode::mirror_ss};
  SweepAxes sweep;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::optional<TokenSeq> prompt_tokens;
  std::optional<std::string> prompt_text;
  bool record_timelines = true;
  OutputConfig output;
};

/// Full configuration as JSON, every field present.
nlohmann::json config_to_json(const ExperimentConfig& c);

/// Missing fields keep their defaults. Throws ConfigError naming the first
/// unknown key or invalid value.
ExperimentConfig config_from_json(const nlohmann::json& j);

/// Reads a JSON file; throws ConfigError on I/O or parse failure.
nlohmann::json load_json_file(const std::string& path);

/// Applies "a.b.c=value"; value is parsed as JSON when possible and taken as
/// a string otherwise. Throws ConfigError on a malformed assignment.
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Everything a run needs, built and validated from a config.
struct Workspace {
  ExperimentConfig config;
  ModelPair models;
  TokenSeq prompt;
  std::optional<Vocabulary> vocab;  // ngram family only
  DecodeConfig decode;              // resolved against the target
  std::vector<int> exits;           // resolved sweep exits
};

/// Builds models and checks cross-field constraints. Throws ConfigError.
Workspace make_workspace(const ExperimentConfig& config);

/// Output directory: config, then $SPDLAB_OUT_DIR, then "out".
std::string output_dir(const ExperimentConfig& config);

}  // namespace spdlab
