#pragma once

// Offline end-to-end run: synthetic corpus -> lexical index -> GRPO training
// of the built-in policy -> greedy evaluation against the raw queries.

#include <memory>
#include <vector>

#include "rlqr/corpus.hpp"
#include "rlqr/eval.hpp"
#include "rlqr/grpo.hpp"
#include "rlqr/retrieval.hpp"
#include "rlqr/synthetic.hpp"

namespace rlqr {

struct DemoConfig {
  std::uint64_t seed = 7;
  synthetic::KeywordCorpusConfig corpus;
  GrpoConfig grpo = [] {
    GrpoConfig g;
    g.learning_rate = 1.0;
    g.inner_iterations = 4;
    return g;
  }();
  RewardConfig reward;
  double init_keep_bias = 1.0;
};

struct DemoResult {
  std::shared_ptr<const ChunkStore> store;
  std::vector<QuerySample> dataset;
  TrainResult training;
  std::vector<std::pair<std::size_t, PolicyParams>> checkpoints;
  EvalReport raw;
  EvalReport trained;

  double gain() const { return trained.mean_ndcg - raw.mean_ndcg; }
};

inline DemoResult run_demo(const DemoConfig& cfg) {
  DemoResult out;
  const auto corpus = synthetic::make_keyword_corpus(cfg.seed, cfg.corpus);
  ChunkConfig chunking;
  chunking.chunk_chars = 4000;
  chunking.overlap_chars = 0;
  out.store = std::make_shared<const ChunkStore>(build_db(corpus.documents, chunking));
  if (out.store->size() != corpus.documents.size()) throw Error("demo corpus must be one chunk per document");
  out.dataset = synthetic::make_noisy_queries(corpus, cfg.seed, cfg.corpus);

  auto index = std::make_shared<const LexicalIndex>(LexicalIndex::build(*out.store));
  auto retriever = std::make_shared<const LexicalRetriever>(index);
  TermFeaturizer featurizer(index);

  GrpoConfig g = cfg.grpo;
  g.seed = cfg.seed;
  GrpoTrainer trainer(featurizer, RewardModel(retriever, out.store, cfg.reward), g);
  out.training = trainer.train_loop(PolicyParams::initial(cfg.init_keep_bias), out.dataset,
                                    [&](std::size_t step, const PolicyParams& p) {
                                      out.checkpoints.emplace_back(step, p);
                                    });

  const EvalConfig ec{cfg.reward.ndcg_k, cfg.reward.relevance_level};
  out.raw = evaluate(out.dataset, *retriever, nullptr, *out.store, ec);
  const PolicyRewriter rewriter("rlqr-lexical", out.training.params, featurizer);
  out.trained = evaluate(out.dataset, *retriever, &rewriter, *out.store, ec);
  return out;
}

}  // namespace rlqr
