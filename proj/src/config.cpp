#include "spdlab/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json_util.hpp"

namespace spdlab {

using nlohmann::json;
using detail::read_opt;
using detail::reject_unknown;

namespace {

json decode_to_json(const DecodeConfig& d) {
  return json{{"gamma", d.gamma},
              {"kappa", d.kappa},
              {"exit_layer", d.exit_layer},
              {"temperature", d.temperature},
              {"max_new_tokens", d.max_new_tokens},
              {"seed", d.seed},
              {"eos", d.eos ? json(*d.eos) : json()}};
}

void decode_from_json(const json& j, DecodeConfig& d) {
  const std::string w = "decode";
  reject_unknown(j, {"gamma", "kappa", "exit_layer", "temperature", "max_new_tokens", "seed", "eos"}, w);
  read_opt(j, "gamma", d.gamma, w);
  read_opt(j, "kappa", d.kappa, w);
  read_opt(j, "exit_layer", d.exit_layer, w);
  read_opt(j, "temperature", d.temperature, w);
  read_opt(j, "max_new_tokens", d.max_new_tokens, w);
  read_opt(j, "seed", d.seed, w);
  read_opt(j, "eos", d.eos, w);
}

json model_to_json(const ModelConfig& m) {
  return json{{"family", m.family},
              {"synthetic",
               {{"depth", m.synthetic.depth},
                {"vocab_size", m.synthetic.vocab_size},
                {"base_seed", m.synthetic.base_seed},
                {"epsilon0", m.synthetic.epsilon0},
                {"sharpness", m.synthetic.sharpness}}},
              {"draft", {{"fidelity", m.draft_fidelity}, {"seed", m.draft_seed}, {"noise_sharpness", m.draft_noise_sharpness}}},
              {"ngram",
               {{"corpus", m.corpus},
                {"vocab_file", m.vocab_file},
                {"target_order", m.target_order},
                {"draft_order", m.draft_order},
                {"add_k", m.add_k},
                {"depth", m.depth},
                {"epsilon0", m.epsilon0}}}};
}

void model_from_json(const json& j, ModelConfig& m) {
  const std::string w = "model";
  reject_unknown(j, {"family", "synthetic", "draft", "ngram"}, w);
  read_opt(j, "family", m.family, w);
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    const std::string ws = w + ".synthetic";
    reject_unknown(s, {"depth", "vocab_size", "base_seed", "epsilon0", "sharpness"}, ws);
    read_opt(s, "depth", m.synthetic.depth, ws);
    read_opt(s, "vocab_size", m.synthetic.vocab_size, ws);
    read_opt(s, "base_seed", m.synthetic.base_seed, ws);
    read_opt(s, "epsilon0", m.synthetic.epsilon0, ws);
    read_opt(s, "sharpness", m.synthetic.sharpness, ws);
  }
  if (j.contains("draft")) {
    const json& d = j.at("draft");
    const std::string wd = w + ".draft";
    reject_unknown(d, {"fidelity", "seed", "noise_sharpness"}, wd);
    read_opt(d, "fidelity", m.draft_fidelity, wd);
    read_opt(d, "seed", m.draft_seed, wd);
    read_opt(d, "noise_sharpness", m.draft_noise_sharpness, wd);
  }
  if (j.contains("ngram")) {
    const json& n = j.at("ngram");
    const std::string wn = w + ".ngram";
    reject_unknown(n, {"corpus", "vocab_file", "target_order", "draft_order", "add_k", "depth", "epsilon0"}, wn);
    read_opt(n, "corpus", m.corpus, wn);
    read_opt(n, "vocab_file", m.vocab_file, wn);
    read_opt(n, "target_order", m.target_order, wn);
    read_opt(n, "draft_order", m.draft_order, wn);
    read_opt(n, "add_k", m.add_k, wn);
    read_opt(n, "depth", m.depth, wn);
    read_opt(n, "epsilon0", m.epsilon0, wn);
  }
}

std::vector<int> int_list(const json& j, const char* key, const std::string& where, std::vector<int> fallback) {
  if (j.contains(key) && j.at(key).is_null()) return fallback;
  read_opt(j, key, fallback, where);
  if (j.contains(key) && fallback.empty()) {
    throw std::invalid_argument(std::string("empty sweep axis: ") + where + "." + key);
  }
  return fallback;
}

}  // namespace

json config_to_json(const ExperimentConfig& c) {
  json modes = json::array();
  for (Mode m : c.modes) modes.push_back(to_string(m));
  json latency;
  to_json(latency, c.latency);
  json batching;
  to_json(batching, c.batching);
  json j{{"model", model_to_json(c.model)},
         {"decode", decode_to_json(c.decode)},
         {"latency", latency},
         {"batching", batching},
         {"ss", {{"streams", c.ss.streams}, {"keep_prob", c.ss.keep_prob}}},
         {"modes", modes},
         {"sweep",
          {{"gammas", c.sweep.gammas},
           {"kappas", c.sweep.kappas},
           {"exits", c.sweep.exits.empty() ? json() : json(c.sweep.exits)},
           {"batches", c.sweep.batches},
           {"min_corrected", c.sweep.min_corrected}}},
         {"seeds", c.seeds},
         {"prompt", {{"tokens", c.prompt_tokens ? json(*c.prompt_tokens) : json()},
                     {"text", c.prompt_text ? json(*c.prompt_text) : json()}}},
         {"record_timelines", c.record_timelines},
         {"output", {{"dir", c.output.dir}, {"prefix", c.output.prefix}}}};
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  try {
    reject_unknown(j, {"model", "decode", "latency", "batching", "ss", "modes", "sweep", "seeds", "prompt",
                       "record_timelines", "output"},
                   "config");
    if (j.contains("model")) model_from_json(j.at("model"), c.model);
    if (j.contains("decode")) decode_from_json(j.at("decode"), c.decode);
    if (j.contains("latency")) from_json(j.at("latency"), c.latency);
    if (j.contains("batching")) from_json(j.at("batching"), c.batching);
    if (j.contains("ss")) {
      reject_unknown(j.at("ss"), {"streams", "keep_prob"}, "ss");
      read_opt(j.at("ss"), "streams", c.ss.streams, "ss");
      read_opt(j.at("ss"), "keep_prob", c.ss.keep_prob, "ss");
    }
    if (j.contains("modes")) {
      std::vector<std::string> names;
      read_opt(j, "modes", names, "config");
      if (names.empty()) throw std::invalid_argument("config.modes must not be empty");
      c.modes.clear();
      for (const auto& n : names) c.modes.push_back(parse_mode(n));
    }
    if (j.contains("sweep")) {
      const json& s = j.at("sweep");
      reject_unknown(s, {"gammas", "kappas", "exits", "batches", "min_corrected"}, "sweep");
      c.sweep.gammas = int_list(s, "gammas", "sweep", c.sweep.gammas);
      c.sweep.kappas = int_list(s, "kappas", "sweep", c.sweep.kappas);
      c.sweep.exits = int_list(s, "exits", "sweep", c.sweep.exits);
      c.sweep.batches = int_list(s, "batches", "sweep", c.sweep.batches);
      read_opt(s, "min_corrected", c.sweep.min_corrected, "sweep");
    }
    if (j.contains("seeds")) {
      read_opt(j, "seeds", c.seeds, "config");
      if (c.seeds.empty()) throw std::invalid_argument("config.seeds must not be empty");
    }
    if (j.contains("prompt")) {
      reject_unknown(j.at("prompt"), {"tokens", "text"}, "prompt");
      read_opt(j.at("prompt"), "tokens", c.prompt_tokens, "prompt");
      read_opt(j.at("prompt"), "text", c.prompt_text, "prompt");
    }
    read_opt(j, "record_timelines", c.record_timelines, "config");
    if (j.contains("output")) {
      reject_unknown(j.at("output"), {"dir", "prefix"}, "output");
      read_opt(j.at("output"), "dir", c.output.dir, "output");
      read_opt(j.at("output"), "prefix", c.output.prefix, "output");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return c;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("malformed JSON in " + path + ": " + e.what());
  }
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override must look like key.path=value: " + assignment);
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("empty segment in override path: " + path);
    if (!node->is_object()) {
      if (!node->is_null()) throw ConfigError("override path crosses a non-object: " + path);
      *node = json::object();
    }
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

Workspace make_workspace(const ExperimentConfig& config) {
  Workspace ws;
  ws.config = config;
  const ExperimentConfig& c = config;
  try {
    if (c.model.family == "synthetic") {
      auto target = std::make_shared<SyntheticLayeredLm>(c.model.synthetic);
      ws.models.target = target;
      ws.models.draft = std::make_shared<AlignedDraft>(target, c.model.draft_fidelity, c.model.draft_seed,
                                                       c.model.draft_noise_sharpness);
    } else if (c.model.family == "ngram") {
      if (c.model.corpus.empty()) throw std::invalid_argument("model.ngram.corpus is required for the ngram family");
      const std::string text = read_text_file(c.model.corpus);
      ws.vocab = c.model.vocab_file.empty() ? Vocabulary::bytes() : Vocabulary::from_file(c.model.vocab_file);
      const TokenSeq corpus = ws.vocab->encode(text);
      const int v = ws.vocab->size();
      auto lm = std::make_shared<NgramLm>(fit_ngram(corpus, c.model.target_order, c.model.add_k, v));
      ws.models.target = std::make_shared<NgramLayeredLm>(lm, c.model.depth, c.model.epsilon0);
      ws.models.draft = std::make_shared<NgramLm>(fit_ngram(corpus, c.model.draft_order, c.model.add_k, v));
    } else {
      throw std::invalid_argument("model.family must be synthetic or ngram, got " + c.model.family);
    }

    const LayeredLm& target = *ws.models.target;
    ws.decode = c.decode.resolved(target.depth(), target.vocab_size());
    if (c.latency.depth() != target.depth()) {
      throw std::invalid_argument("latency.layer_compute has " + std::to_string(c.latency.depth()) +
                                  " layers but the target has " + std::to_string(target.depth()));
    }
    bind_latency(c.latency, ws.decode);
    SsDraft(ws.models.draft, c.ss.streams, c.ss.keep_prob);

    if (c.prompt_tokens && c.prompt_text) throw std::invalid_argument("prompt: give tokens or text, not both");
    if (c.prompt_text) {
      if (!ws.vocab) throw std::invalid_argument("prompt.text needs a tokenizer (ngram family)");
      ws.prompt = ws.vocab->encode(*c.prompt_text);
    } else if (c.prompt_tokens) {
      ws.prompt = *c.prompt_tokens;
    } else {
      ws.prompt = {1, 2, 3};
    }
    if (ws.prompt.empty()) throw std::invalid_argument("prompt must not be empty");
    for (Token t : ws.prompt) {
      if (t < 0 || t >= target.vocab_size()) throw std::invalid_argument("prompt token outside the vocabulary");
    }

    ws.exits = c.sweep.exits;
    if (ws.exits.empty()) {
      const int n = target.depth();
      ws.exits = {std::max(1, n / 4), std::max(1, n / 2), std::max(1, 3 * n / 4)};
    }
    for (int e : ws.exits) {
      if (e <= 0 || e >= target.depth()) throw std::invalid_argument("sweep.exits must lie in (0, N)");
    }
    for (int g : c.sweep.gammas) {
      if (g < 1) throw std::invalid_argument("sweep.gammas must be >= 1");
    }
    for (int k : c.sweep.kappas) {
      if (k < 1 || k > target.vocab_size()) throw std::invalid_argument("sweep.kappas must lie in [1, V]");
    }
    for (int b : c.sweep.batches) {
      if (b < 1) throw std::invalid_argument("sweep.batches must be >= 1");
    }
    if (c.sweep.min_corrected == 0) throw std::invalid_argument("sweep.min_corrected must be >= 1");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return ws;
}

std::string output_dir(const ExperimentConfig& config) {
  if (!config.output.dir.empty()) return config.output.dir;
  if (const char* env = std::getenv("SPDLAB_OUT_DIR"); env && *env) return env;
  return "out";
}

}  // namespace spdlab
