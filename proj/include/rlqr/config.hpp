#pragma once

// Run configuration: one JSON document merged over built-in defaults, with
// presets and dotted-path overrides. Keys that are not in the defaults are
// rejected.

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rlqr/common.hpp"
#include "rlqr/corpus.hpp"
#include "rlqr/demo.hpp"
#include "rlqr/grpo.hpp"
#include "rlqr/retrieval.hpp"
#include "rlqr/reward.hpp"
#include "rlqr/synth.hpp"

namespace rlqr {

inline json default_config() {
  return json{
      {"seed", 7},
      {"preset", ""},
      {"paths",
       {{"root", "."},
        {"corpus", "corpus.jsonl"},
        {"chunks", "chunks.jsonl"},
        {"dataset", "dataset.jsonl"},
        {"synth_report", "synth_report.json"},
        {"lexical_index", "lexical_index.json"},
        {"vector_index", "vector_index.json"},
        {"policy", "policy.json"},
        {"train_log", "train_log.jsonl"},
        {"checkpoints", "checkpoints"},
        {"report", "report.json"},
        {"report_text", "report.txt"},
        {"report_csv", ""}}},
      {"chunking", {{"chunk_chars", 500}, {"overlap_chars", 100}, {"mode", "window"}}},
      {"tokenizer", "word"},
      {"retriever", {{"kind", "lexical"}, {"bm25", {{"k1", 1.2}, {"b", 0.75}, {"k3", 8.0}}}, {"rrf_k", 60}}},
      {"embedding",
       {{"kind", "toy"},
        {"dimension", 256},
        {"model", ""},
        {"base_url", ""},
        {"path", ""},
        {"api_key_env", "RLQR_API_KEY"},
        {"timeout_s", 60.0}}},
      {"provider",
       {{"kind", "scripted"},
        {"script", "completions.jsonl"},
        {"model", ""},
        {"base_url", ""},
        {"path", ""},
        {"api_key_env", "RLQR_API_KEY"},
        {"timeout_s", 60.0},
        {"temperature", 0.6},
        {"max_tokens", 2048},
        {"max_retries", 2},
        {"concurrency", 4}}},
      {"filters", {{"min_question_chars", 10}, {"max_foreign_fraction", 0.2}}},
      {"reward", {{"lambda_retrieval", 1.0}, {"lambda_penalty", -0.2}, {"k", 3}, {"relevance_level", "chunk"}}},
      {"grpo",
       {{"group_size", 8},
        {"clip_epsilon", 0.2},
        {"kl_beta", 0.0},
        {"learning_rate", 0.05},
        {"grad_accum_steps", 4},
        {"epochs", 1},
        {"advantage_epsilon", 1e-8},
        {"inner_iterations", 1},
        {"temperature", 1.0},
        {"checkpoint_every", 0}}},
      {"policy",
       {{"kind", "toy"},
        {"name", "rlqr"},
        {"init_keep_bias", 1.0},
        {"base_url", ""},
        {"path", ""},
        {"api_key_env", "RLQR_API_KEY"},
        {"timeout_s", 600.0}}},
      {"eval", {{"retrievers", json::array()}, {"rewriters", json::array()}}},
      {"demo",
       {{"n_chunks", 50},
        {"n_samples", 200},
        {"learning_rate", 1.0},
        {"inner_iterations", 4},
        {"checkpoint_every", 10},
        {"init_keep_bias", 1.0}}},
  };
}

inline const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = {"lexical", "semantic", "hybrid"};
  return names;
}

namespace detail {

inline std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

inline bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // Integers may not be replaced by fractions; anything numeric may replace a real.
    return !(a.is_number_integer() || a.is_number_unsigned()) || b.is_number_integer() ||
           b.is_number_unsigned();
  }
  return a.type() == b.type();
}

/// Overlays `patch` onto `base`. Every patch key must exist in `base` with a
/// value of the same JSON type; arrays and scalars are replaced whole.
inline void merge_checked(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw Error((where.empty() ? "config" : where) + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = join_path(where, key);
    if (!base.contains(key)) throw Error("unknown config key: " + path);
    json& slot = base[key];
    if (slot.is_object()) {
      merge_checked(slot, value, path);
    } else {
      if (!same_kind(slot, value)) {
        throw Error("config key " + path + " expects " + std::string(slot.type_name()) + ", got " +
                    std::string(value.type_name()));
      }
      slot = value;
    }
  }
}

}  // namespace detail

/// "a.b.c=value". The value is parsed as JSON when possible and otherwise
/// taken as a plain string, so `grpo.learning_rate=0.1` and
/// `retriever.kind=hybrid` both work.
inline void apply_override(json& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw Error("override must look like key.path=value: " + std::string(assignment));
  }
  const std::string key(assignment.substr(0, eq));
  const std::string raw(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json patch = value;
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    parts.push_back(key.substr(start, dot == std::string::npos ? std::string::npos : dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    if (it->empty()) throw Error("empty segment in override key: " + key);
    patch = json{{*it, std::move(patch)}};
  }
  detail::merge_checked(cfg, patch, "");
}

/// A preset pairs the rewriter with the retriever it is trained against.
inline void apply_preset(json& cfg, const std::string& name) {
  if (name.empty()) return;
  if (std::find(preset_names().begin(), preset_names().end(), name) == preset_names().end()) {
    throw Error("unknown preset: " + name + " (expected lexical, semantic or hybrid)");
  }
  cfg["preset"] = name;
  cfg["retriever"]["kind"] = name;
  cfg["policy"]["name"] = "rlqr-" + name;
}

struct ConfigSources {
  std::optional<std::filesystem::path> file;
  std::optional<std::string> preset;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

/// Defaults, then the config file, then the preset, then `key=value`
/// overrides, then --seed and --out.
inline json load_config(const ConfigSources& src) {
  json cfg = default_config();
  if (src.file) {
    json doc;
    try {
      doc = json::parse(read_file(*src.file));
    } catch (const json::parse_error& e) {
      throw Error(src.file->string() + ": " + e.what());
    }
    detail::merge_checked(cfg, doc, "");
  }
  apply_preset(cfg, src.preset.value_or(cfg.at("preset").get<std::string>()));
  for (const auto& o : src.overrides) apply_override(cfg, o);
  if (src.seed) cfg["seed"] = *src.seed;
  if (src.out) cfg["paths"]["root"] = *src.out;
  return cfg;
}

// ---------------------------------------------------------------------------
// Typed views
// ---------------------------------------------------------------------------

/// Output and intermediate paths live under paths.root; paths.corpus and
/// provider.script are inputs and resolve against the working directory.
inline std::filesystem::path artifact_path(const json& cfg, const std::string& key) {
  const std::filesystem::path p = cfg.at("paths").at(key).get<std::string>();
  if (p.is_absolute()) return p;
  return std::filesystem::path(cfg.at("paths").at("root").get<std::string>()) / p;
}

inline std::uint64_t config_seed(const json& cfg) { return cfg.at("seed").get<std::uint64_t>(); }

inline ChunkConfig chunk_config(const json& cfg) {
  const json& c = cfg.at("chunking");
  ChunkConfig out;
  out.chunk_chars = c.at("chunk_chars").get<std::size_t>();
  out.overlap_chars = c.at("overlap_chars").get<std::size_t>();
  const auto mode = c.at("mode").get<std::string>();
  if (mode == "window") {
    out.mode = ChunkMode::window;
  } else if (mode == "sentence") {
    out.mode = ChunkMode::sentence;
  } else {
    throw Error("chunking.mode must be window or sentence, got " + mode);
  }
  out.validate();
  return out;
}

inline TokenizerMode tokenizer_config(const json& cfg) {
  return tokenizer_mode_from_string(cfg.at("tokenizer").get<std::string>());
}

inline Bm25Params bm25_config(const json& cfg) {
  const json& b = cfg.at("retriever").at("bm25");
  return Bm25Params{b.at("k1").get<double>(), b.at("b").get<double>(), b.at("k3").get<double>()};
}

inline RewardConfig reward_config(const json& cfg) {
  const json& r = cfg.at("reward");
  RewardConfig out;
  out.lambda_retrieval = r.at("lambda_retrieval").get<double>();
  out.lambda_penalty = r.at("lambda_penalty").get<double>();
  out.ndcg_k = r.at("k").get<std::size_t>();
  out.relevance_level = relevance_level_from_string(r.at("relevance_level").get<std::string>());
  if (out.ndcg_k == 0) throw Error("reward.k must be at least 1");
  return out;
}

inline GrpoConfig grpo_config(const json& cfg) {
  const json& g = cfg.at("grpo");
  GrpoConfig out;
  out.group_size = g.at("group_size").get<std::size_t>();
  out.clip_epsilon = g.at("clip_epsilon").get<double>();
  out.kl_beta = g.at("kl_beta").get<double>();
  out.learning_rate = g.at("learning_rate").get<double>();
  out.grad_accum_steps = g.at("grad_accum_steps").get<std::size_t>();
  out.epochs = g.at("epochs").get<std::size_t>();
  out.advantage_epsilon = g.at("advantage_epsilon").get<double>();
  out.inner_iterations = g.at("inner_iterations").get<std::size_t>();
  out.temperature = g.at("temperature").get<double>();
  out.checkpoint_every = g.at("checkpoint_every").get<std::size_t>();
  out.seed = config_seed(cfg);
  out.validate();
  return out;
}

inline FilterConfig filter_config(const json& cfg) {
  const json& f = cfg.at("filters");
  FilterConfig out;
  out.min_question_chars = f.at("min_question_chars").get<std::size_t>();
  out.max_foreign_fraction = f.at("max_foreign_fraction").get<double>();
  return out;
}

inline SynthOptions synth_options(const json& cfg) {
  const json& p = cfg.at("provider");
  SynthOptions out;
  out.max_retries = p.at("max_retries").get<std::size_t>();
  out.concurrency = p.at("concurrency").get<std::size_t>();
  return out;
}

/// The demo uses the grpo section for everything except the knobs it carries
/// itself.
inline DemoConfig demo_config(const json& cfg) {
  const json& d = cfg.at("demo");
  DemoConfig out;
  out.seed = config_seed(cfg);
  out.corpus.n_chunks = d.at("n_chunks").get<std::size_t>();
  out.corpus.n_samples = d.at("n_samples").get<std::size_t>();
  out.grpo = grpo_config(cfg);
  out.grpo.learning_rate = d.at("learning_rate").get<double>();
  out.grpo.inner_iterations = d.at("inner_iterations").get<std::size_t>();
  out.grpo.checkpoint_every = d.at("checkpoint_every").get<std::size_t>();
  out.grpo.validate();
  out.reward = reward_config(cfg);
  out.init_keep_bias = d.at("init_keep_bias").get<double>();
  if (out.corpus.n_chunks == 0 || out.corpus.n_samples == 0) {
    throw Error("demo.n_chunks and demo.n_samples must be positive");
  }
  return out;
}

}  // namespace rlqr
