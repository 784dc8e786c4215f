#pragma once

// Command-line front end. dispatch() never throws: 0 on success, 1 on usage
// errors, 2 on runtime failures with the failing stage named.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rlqr/config.hpp"
#include "rlqr/demo.hpp"
#include "rlqr/eval.hpp"
#include "rlqr/grpo.hpp"
#include "rlqr/http_clients.hpp"
#include "rlqr/retrieval.hpp"
#include "rlqr/synth.hpp"

namespace rlqr::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Runtime failure tagged with the pipeline stage it happened in.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what) : Error(what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

inline std::string checkpoint_name(std::size_t step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "policy_step_%04zu.json", step);
  return buf;
}

inline std::string pretty(const json& j) {
  return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

// ---------------------------------------------------------------------------
// Pipeline pieces
// ---------------------------------------------------------------------------

inline std::shared_ptr<const ChunkStore> load_store(const json& cfg) {
  return std::make_shared<const ChunkStore>(ChunkStore::from_jsonl(read_file(artifact_path(cfg, "chunks"))));
}

inline std::vector<QuerySample> load_dataset(const json& cfg) {
  return dataset_from_jsonl(read_file(artifact_path(cfg, "dataset")));
}

inline HttpEndpoint endpoint_from(const json& section) {
  return HttpEndpoint{section.at("base_url").get<std::string>(), section.at("path").get<std::string>(),
                      section.at("api_key_env").get<std::string>(), section.at("timeout_s").get<double>()};
}

inline std::shared_ptr<const EmbeddingProvider> make_embedder(const json& cfg) {
  const json& e = cfg.at("embedding");
  const auto kind = e.at("kind").get<std::string>();
  const auto dim = e.at("dimension").get<std::size_t>();
  if (kind == "toy") return std::make_shared<ToyEmbedder>(dim, config_seed(cfg), tokenizer_config(cfg));
  if (kind == "http") {
    return std::make_shared<HttpEmbeddingProvider>(endpoint_from(e), e.at("model").get<std::string>(), dim);
  }
  throw Error("embedding.kind must be toy or http, got " + kind);
}

inline std::shared_ptr<CompletionProvider> make_completion_provider(const json& cfg) {
  const json& p = cfg.at("provider");
  const auto kind = p.at("kind").get<std::string>();
  if (kind == "scripted") {
    return std::make_shared<ScriptedProvider>(
        ScriptedProvider::parse_script(read_file(p.at("script").get<std::string>())));
  }
  if (kind == "http") {
    ChatSettings chat{p.at("model").get<std::string>(), p.at("temperature").get<double>(),
                      p.at("max_tokens").get<int>()};
    return std::make_shared<HttpCompletionProvider>(endpoint_from(p), chat);
  }
  throw Error("provider.kind must be scripted or http, got " + kind);
}

/// Loaded indexes; the lexical index is always present because the policy
/// features read its IDF table.
struct Indexes {
  std::shared_ptr<const LexicalIndex> lexical;
  std::shared_ptr<const VectorIndex> vector;
};

inline Indexes load_indexes(const json& cfg, const ChunkStore& store, bool need_vector) {
  Indexes ix;
  auto lex = LexicalIndex::from_json(json::parse(read_file(artifact_path(cfg, "lexical_index"))));
  if (lex.corpus_fingerprint() != store.fingerprint()) {
    throw Error("lexical index was built over a different chunk store");
  }
  ix.lexical = std::make_shared<const LexicalIndex>(std::move(lex));
  if (need_vector) {
    auto vec = VectorIndex::from_json(json::parse(read_file(artifact_path(cfg, "vector_index"))));
    if (vec.corpus_fingerprint() != store.fingerprint()) {
      throw Error("vector index was built over a different chunk store");
    }
    ix.vector = std::make_shared<const VectorIndex>(std::move(vec));
  }
  return ix;
}

inline bool needs_vector(const std::string& kind) { return kind == "semantic" || kind == "hybrid"; }

inline std::shared_ptr<const Retriever> make_retriever(const json& cfg, const std::string& kind,
                                                       const Indexes& ix) {
  auto lexical = std::make_shared<const LexicalRetriever>(ix.lexical);
  if (kind == "lexical") return lexical;
  if (!ix.vector) throw Error("retriever " + kind + " needs the vector index");
  auto semantic = std::make_shared<const SemanticRetriever>(ix.vector, make_embedder(cfg));
  if (kind == "semantic") return semantic;
  if (kind == "hybrid") {
    return std::make_shared<const HybridRetriever>(lexical, semantic,
                                                   cfg.at("retriever").at("rrf_k").get<std::size_t>());
  }
  throw Error("unknown retriever: " + kind + " (expected lexical, semantic or hybrid)");
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline void cmd_ingest(const json& cfg, std::ostream& out) {
  const auto docs = in_stage("ingest", [&] {
    return parse_corpus_jsonl(read_file(cfg.at("paths").at("corpus").get<std::string>()));
  });
  const ChunkStore store = in_stage("ingest", [&] { return build_db(docs, chunk_config(cfg)); });
  in_stage("ingest", [&] { write_file_atomic(artifact_path(cfg, "chunks"), store.to_jsonl()); });
  out << "ingest: " << docs.size() << " documents -> " << store.size() << " chunks\n";
}

inline void cmd_synth(const json& cfg, std::ostream& out) {
  const auto store = in_stage("synth", [&] { return load_store(cfg); });
  auto provider = in_stage("synth", [&] { return make_completion_provider(cfg); });
  const TrainingSet ts = in_stage("synth", [&] {
    return build_training_set(*store, *provider, filter_config(cfg), synth_options(cfg));
  });
  in_stage("synth", [&] {
    write_file_atomic(artifact_path(cfg, "dataset"), dataset_to_jsonl(ts.samples));
    write_file_atomic(artifact_path(cfg, "synth_report"), pretty(ts.report.to_json()));
  });
  out << "synth: accepted " << ts.report.accepted << " of " << ts.report.total_chunks << " chunks\n";
}

inline void cmd_index(const json& cfg, std::ostream& out) {
  const auto store = in_stage("index", [&] { return load_store(cfg); });
  bool vector = needs_vector(cfg.at("retriever").at("kind").get<std::string>());
  for (const auto& r : cfg.at("eval").at("retrievers")) vector = vector || needs_vector(r.get<std::string>());
  in_stage("index", [&] {
    const auto lex = LexicalIndex::build(*store, tokenizer_config(cfg), bm25_config(cfg));
    write_file_atomic(artifact_path(cfg, "lexical_index"), dump_line(lex.to_json()) + "\n");
  });
  out << "index: lexical over " << store->size() << " chunks\n";
  if (vector) {
    in_stage("index", [&] {
      const auto vec = VectorIndex::build(*store, *make_embedder(cfg));
      write_file_atomic(artifact_path(cfg, "vector_index"), dump_line(vec.to_json()) + "\n");
    });
    out << "index: vector over " << store->size() << " chunks\n";
  }
}

inline void cmd_train(const json& cfg, std::ostream& out) {
  const auto store = in_stage("train", [&] { return load_store(cfg); });
  const auto dataset = in_stage("train", [&] { return load_dataset(cfg); });
  const auto kind = cfg.at("retriever").at("kind").get<std::string>();
  const Indexes ix = in_stage("train", [&] { return load_indexes(cfg, *store, needs_vector(kind)); });
  const auto retriever = in_stage("train", [&] { return make_retriever(cfg, kind, ix); });
  const GrpoConfig g = in_stage("train", [&] { return grpo_config(cfg); });
  const RewardModel reward(retriever, store, in_stage("train", [&] { return reward_config(cfg); }));
  const json& pol = cfg.at("policy");
  const auto policy_kind = pol.at("kind").get<std::string>();

  std::vector<TrainRecord> log;
  if (policy_kind == "toy") {
    const GrpoTrainer trainer(TermFeaturizer(ix.lexical), reward, g);
    const auto ckpt_dir = artifact_path(cfg, "checkpoints");
    TrainResult result = in_stage("train", [&] {
      return trainer.train_loop(PolicyParams::initial(pol.at("init_keep_bias").get<double>()), dataset,
                                [&](std::size_t step, const PolicyParams& p) {
                                  write_file_atomic(ckpt_dir / checkpoint_name(step), pretty(p.to_json()));
                                });
    });
    in_stage("train", [&] { write_file_atomic(artifact_path(cfg, "policy"), pretty(result.params.to_json())); });
    log = std::move(result.log);
  } else if (policy_kind == "external") {
    HttpPolicyAdapter adapter(endpoint_from(pol), pol.at("name").get<std::string>());
    const ExternalGrpoTrainer trainer(reward, g);
    log = in_stage("train", [&] { return trainer.train_loop(adapter, dataset); });
  } else {
    throw StageError("train", "policy.kind must be toy or external, got " + policy_kind);
  }
  in_stage("train", [&] { write_file_atomic(artifact_path(cfg, "train_log"), train_log_to_jsonl(log)); });
  out << "train: " << log.size() << " steps";
  if (!log.empty()) out << ", final mean reward " << log.back().mean_reward;
  out << "\n";
}

inline void write_reports(const json& cfg, std::span<const EvalReport> reports, std::ostream& out) {
  const std::string table = render_table(reports);
  write_file_atomic(artifact_path(cfg, "report"), pretty(reports_to_json(reports)));
  write_file_atomic(artifact_path(cfg, "report_text"), table);
  if (!cfg.at("paths").at("report_csv").get<std::string>().empty()) {
    write_file_atomic(artifact_path(cfg, "report_csv"), render_csv(reports));
  }
  out << table;
}

/// `rewriter_flags` are NAME=PATH pairs added to eval.rewriters.
inline void cmd_eval(const json& cfg, const std::vector<std::string>& rewriter_flags, std::ostream& out) {
  const auto store = in_stage("eval", [&] { return load_store(cfg); });
  const auto dataset = in_stage("eval", [&] { return load_dataset(cfg); });

  std::vector<std::string> retriever_names = cfg.at("eval").at("retrievers").get<std::vector<std::string>>();
  if (retriever_names.empty()) retriever_names.push_back(cfg.at("retriever").at("kind").get<std::string>());
  bool vector = false;
  for (const auto& r : retriever_names) vector = vector || needs_vector(r);
  const Indexes ix = in_stage("eval", [&] { return load_indexes(cfg, *store, vector); });

  std::vector<Named<Retriever>> retrievers;
  for (const auto& r : retriever_names) {
    retrievers.push_back({r, in_stage("eval", [&] { return make_retriever(cfg, r, ix); })});
  }

  std::vector<std::pair<std::string, std::string>> specs;
  for (const auto& w : cfg.at("eval").at("rewriters")) {
    specs.emplace_back(w.at("name").get<std::string>(), w.at("policy").get<std::string>());
  }
  for (const auto& f : rewriter_flags) {
    const auto eq = f.find('=');
    specs.emplace_back(f.substr(0, eq), f.substr(eq + 1));
  }
  std::vector<Named<Rewriter>> rewriters;
  const TermFeaturizer featurizer(ix.lexical);
  for (const auto& [name, path] : specs) {
    auto params = in_stage("eval", [&] { return PolicyParams::from_json(json::parse(read_file(path))); });
    rewriters.push_back({name, std::make_shared<const PolicyRewriter>(name, std::move(params), featurizer)});
  }

  const RewardConfig rc = in_stage("eval", [&] { return reward_config(cfg); });
  const EvalConfig ec{rc.ndcg_k, rc.relevance_level};
  const auto reports = in_stage("eval", [&] { return cross_matrix(dataset, retrievers, rewriters, *store, ec); });
  in_stage("eval", [&] { write_reports(cfg, reports, out); });
}

inline void cmd_report(const json& cfg, bool csv, std::ostream& out) {
  const auto reports = in_stage("report", [&] {
    return reports_from_json(json::parse(read_file(artifact_path(cfg, "report"))));
  });
  out << (csv ? render_csv(reports) : render_table(reports));
}

/// Synthetic end-to-end run; every artifact lands under paths.root.
inline void cmd_demo(const json& cfg, std::ostream& out) {
  const DemoConfig dc = in_stage("demo", [&] { return demo_config(cfg); });
  const DemoResult r = in_stage("demo", [&] { return run_demo(dc); });
  in_stage("demo", [&] {
    write_file_atomic(artifact_path(cfg, "chunks"), r.store->to_jsonl());
    write_file_atomic(artifact_path(cfg, "dataset"), dataset_to_jsonl(r.dataset));
    write_file_atomic(artifact_path(cfg, "train_log"), train_log_to_jsonl(r.training.log));
    const auto ckpt_dir = artifact_path(cfg, "checkpoints");
    for (const auto& [step, params] : r.checkpoints) {
      write_file_atomic(ckpt_dir / checkpoint_name(step), pretty(params.to_json()));
    }
    write_file_atomic(artifact_path(cfg, "policy"), pretty(r.training.params.to_json()));
    const EvalReport reports[] = {r.raw, r.trained};
    write_reports(cfg, reports, out);
  });
  char buf[128];
  std::snprintf(buf, sizeof buf, "demo: NDCG@%zu %.4f -> %.4f (gain %+.4f)\n", dc.reward.ndcg_k,
                r.raw.mean_ndcg, r.trained.mean_ndcg, r.gain());
  out << buf;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Retriever-specific query rewriting: corpus, synthesis, retrieval, GRPO training and evaluation",
               "rlqr"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  ConfigSources src;
  std::string config_path, preset, out_dir;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for every stochastic component");
  app.add_option("--preset", preset, "Retriever pairing preset")
      ->check(CLI::IsMember(preset_names()));
  app.add_option("--out", out_dir, "Directory for artifacts (sets paths.root)");
  app.add_option("--set", src.overrides, "Override a config key, e.g. --set grpo.learning_rate=0.1")
      ->take_all()
      ->allow_extra_args(false);

  auto* ingest = app.add_subcommand("ingest", "Chunk the corpus into the chunk store");
  std::string corpus_path;
  ingest->add_option("--corpus", corpus_path, "Corpus JSONL (sets paths.corpus)");

  auto* synth = app.add_subcommand("synth", "Synthesize the training set from the chunk store");
  std::string script_path;
  synth->add_option("--script", script_path, "Scripted completions JSONL (sets provider.script)");

  app.add_subcommand("index", "Build the lexical and, when needed, vector index");
  app.add_subcommand("train", "Train the rewrite policy with GRPO");

  auto* eval = app.add_subcommand("eval", "Evaluate raw and rewritten queries");
  std::vector<std::string> rewriter_flags;
  eval->add_option("--rewriter", rewriter_flags, "NAME=POLICY_PATH, repeatable")
      ->check([](const std::string& s) {
        const auto eq = s.find('=');
        return (eq == std::string::npos || eq == 0 || eq + 1 == s.size()) ? std::string("expected NAME=PATH")
                                                                            : std::string();
      });

  auto* report = app.add_subcommand("report", "Print a stored evaluation report");
  bool csv = false;
  report->add_flag("--csv", csv, "CSV instead of the aligned table");

  app.add_subcommand("demo", "Offline end-to-end run on a synthetic corpus");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    std::string unknown;
    for (std::size_t i = 0; i < args.size() && unknown.empty(); ++i) {
      const std::string& a = args[i];
      const bool takes_value = a == "--config" || a == "--seed" || a == "--preset" || a == "--out" || a == "--set";
      if (takes_value) {
        ++i;
      } else if (!a.empty() && a[0] != '-') {
        if (!app.get_subcommand_no_throw(a)) unknown = a;
        break;
      }
    }
    if (!unknown.empty()) {
      err << "rlqr: unknown subcommand: " << unknown << "\n\n" << app.help();
    } else {
      err << "rlqr: " << e.what() << "\n\n" << app.help();
    }
    return kUsage;
  }

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  try {
    if (!config_path.empty()) src.file = config_path;
    if (!preset.empty()) src.preset = preset;
    if (app.count("--seed")) src.seed = seed;
    if (!out_dir.empty()) src.out = out_dir;
    json cfg = in_stage("config", [&] {
      json c = load_config(src);
      if (!corpus_path.empty()) c["paths"]["corpus"] = corpus_path;
      if (!script_path.empty()) c["provider"]["script"] = script_path;
      return c;
    });

    if (name == "ingest") cmd_ingest(cfg, out);
    else if (name == "synth") cmd_synth(cfg, out);
    else if (name == "index") cmd_index(cfg, out);
    else if (name == "train") cmd_train(cfg, out);
    else if (name == "eval") cmd_eval(cfg, rewriter_flags, out);
    else if (name == "report") cmd_report(cfg, csv, out);
    else if (name == "demo") cmd_demo(cfg, out);
    return kOk;
  } catch (const StageError& e) {
    err << "rlqr: " << e.stage() << " failed: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "rlqr: " << name << " failed: " << e.what() << "\n";
  }
  return kRuntime;
}

inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, out, err);
}

}  // namespace rlqr::cli
