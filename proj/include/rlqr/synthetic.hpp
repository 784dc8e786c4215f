#pragma once

// Synthetic keyword + boilerplate corpus and long noisy queries for the
// offline end-to-end demo. Every chunk carries a few keywords no other chunk
// has; queries bury some of them at the end of a long scenario made of
// shared topic words and other chunks' keywords.

#include <set>
#include <string>
#include <vector>

#include "rlqr/common.hpp"
#include "rlqr/corpus.hpp"
#include "rlqr/sample.hpp"

namespace rlqr::synthetic {

struct KeywordCorpusConfig {
  std::size_t n_chunks = 50;
  std::size_t keywords_per_chunk = 3;
  std::size_t topic_pool = 60;
  std::size_t topics_per_chunk = 6;
  std::size_t n_samples = 200;
  std::size_t scenario_terms_min = 20;
  std::size_t scenario_terms_max = 26;
  /// Probability that a scenario term is a keyword of the sample's confuser
  /// chunk (a single other chunk the scenario drifts toward).
  double confuser_keyword_rate = 0.1;
  /// Probability that a scenario term is one of the confuser's topic words.
  double confuser_topic_rate = 0.4;
  /// Probability that a scenario term is boilerplate (otherwise any topic word).
  double boilerplate_rate = 0.3;
  std::size_t gold_keywords_in_question = 2;
};

struct KeywordCorpus {
  std::vector<Document> documents;  // one chunk-sized document each
  std::vector<std::vector<std::string>> keywords;
  std::vector<std::vector<std::string>> topics;
  std::vector<std::string> topic_pool;
};

inline const std::vector<std::string>& boilerplate_words() {
  static const std::vector<std::string> words = {
      "this", "section", "of",       "the",    "service", "manual", "describes", "settings",
      "for",  "your",    "customer", "account", "and",    "device", "please",    "check"};
  return words;
}

namespace detail {

inline std::string pseudo_word(Rng& rng, std::size_t syllables) {
  static constexpr std::string_view kOnset = "bdfgklmnprstvz";
  static constexpr std::string_view kVowel = "aeiou";
  std::string w;
  for (std::size_t i = 0; i < syllables; ++i) {
    w.push_back(kOnset[rng.below(kOnset.size())]);
    w.push_back(kVowel[rng.below(kVowel.size())]);
    if (rng.uniform() < 0.35) w.push_back(kOnset[rng.below(kOnset.size())]);
  }
  return w;
}

inline std::vector<std::string> unique_words(Rng& rng, std::size_t n, std::size_t syllables,
                                             std::set<std::string>& used) {
  std::vector<std::string> out;
  while (out.size() < n) {
    std::string w = pseudo_word(rng, syllables);
    if (used.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& v) {
  return v[rng.below(v.size())];
}

}  // namespace detail

inline KeywordCorpus make_keyword_corpus(std::uint64_t seed, const KeywordCorpusConfig& cfg = {}) {
  Rng rng(derive_seed(seed, 0xC0A9));
  KeywordCorpus kc;
  std::set<std::string> used(boilerplate_words().begin(), boilerplate_words().end());
  kc.topic_pool = detail::unique_words(rng, cfg.topic_pool, 2, used);
  const auto& boiler = boilerplate_words();
  for (std::size_t c = 0; c < cfg.n_chunks; ++c) {
    auto kws = detail::unique_words(rng, cfg.keywords_per_chunk, 3, used);
    std::vector<std::string> pool = kc.topic_pool;
    rng.shuffle(pool);
    std::vector<std::string> topics(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(
                                                               std::min(cfg.topics_per_chunk, pool.size())));
    std::vector<std::string> words;
    for (const auto& w : boiler) words.push_back(w);
    for (const auto& w : kws) words.push_back(w);
    for (const auto& w : topics) {
      words.push_back(w);
      if (rng.uniform() < 0.5) words.push_back(w);
    }
    rng.shuffle(words);
    std::string text;
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) text += (i % 9 == 0) ? ". " : " ";
      text += words[i];
    }
    text += ".";
    kc.documents.push_back(Document{"doc-" + std::to_string(c), std::move(text), {{"title", kws[0]}}});
    kc.keywords.push_back(std::move(kws));
    kc.topics.push_back(std::move(topics));
  }
  return kc;
}

/// Samples cycle over chunks in order; chunk i is the i-th chunk of the store
/// built from `corpus.documents` with one chunk per document.
inline std::vector<QuerySample> make_noisy_queries(const KeywordCorpus& corpus, std::uint64_t seed,
                                                   const KeywordCorpusConfig& cfg = {}) {
  Rng rng(derive_seed(seed, 0x9E41));
  const auto& boiler = boilerplate_words();
  const std::size_t n_chunks = corpus.keywords.size();
  std::vector<QuerySample> out;
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    const std::size_t gold = s % n_chunks;
    const std::size_t n_scenario =
        cfg.scenario_terms_min + rng.below(cfg.scenario_terms_max - cfg.scenario_terms_min + 1);
    std::size_t confuser = gold;
    if (n_chunks > 1) {
      confuser = rng.below(n_chunks - 1);
      if (confuser >= gold) ++confuser;
    }
    std::string scenario;
    for (std::size_t t = 0; t < n_scenario; ++t) {
      const double u = rng.uniform();
      const double kw_cut = confuser != gold ? cfg.confuser_keyword_rate : 0.0;
      const double topic_cut = kw_cut + cfg.confuser_topic_rate;
      std::string w;
      if (u < kw_cut) {
        w = detail::pick(rng, corpus.keywords[confuser]);
      } else if (u < topic_cut) {
        w = detail::pick(rng, corpus.topics[confuser]);
      } else if (u < topic_cut + cfg.boilerplate_rate) {
        w = detail::pick(rng, boiler);
      } else {
        w = detail::pick(rng, corpus.topic_pool);
      }
      if (!scenario.empty()) scenario += ' ';
      scenario += w;
    }
    scenario += '.';

    std::vector<std::string> kws = corpus.keywords[gold];
    rng.shuffle(kws);
    std::string question = "how do i change the";
    for (std::size_t k = 0; k < std::min(cfg.gold_keywords_in_question, kws.size()); ++k) {
      question += ' ';
      question += kws[k];
    }
    question += " for ";
    question += detail::pick(rng, corpus.topics[gold]);
    question += '?';
    out.push_back(make_sample(static_cast<ChunkIndex>(gold), std::move(scenario), std::move(question)));
  }
  return out;
}

}  // namespace rlqr::synthetic
