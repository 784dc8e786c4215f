#pragma once

// Lexical (BM25), semantic (exact cosine k-NN) and hybrid (RRF) retrievers
// over a ChunkStore.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rlqr/common.hpp"
#include "rlqr/corpus.hpp"
#include "rlqr/text.hpp"

namespace rlqr {

struct RankedEntry {
  ChunkIndex chunk_index = 0;
  double score = 0.0;
  bool operator==(const RankedEntry&) const = default;
};

/// Results ordered by score descending, ties by ascending chunk index.
struct RankedList {
  std::vector<RankedEntry> entries;
  std::size_t k = 0;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  /// 1-based rank of `chunk`, or 0 when absent.
  std::size_t rank_of(ChunkIndex chunk) const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (entries[i].chunk_index == chunk) return i + 1;
    }
    return 0;
  }
};

inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.chunk_index < b.chunk_index;
}

/// Sorts candidates into canonical order and keeps the best k.
inline RankedList make_ranked_list(std::vector<RankedEntry> candidates, std::size_t k) {
  const std::size_t keep = std::min(k, candidates.size());
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                    candidates.end(), ranks_before);
  candidates.resize(keep);
  return RankedList{std::move(candidates), k};
}

// ---------------------------------------------------------------------------
// BM25
// ---------------------------------------------------------------------------

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
  double k3 = 8.0;
};

struct Posting {
  ChunkIndex chunk_index = 0;
  std::uint32_t tf = 0;
};

/// Inverted index with document lengths. Postings per term are sorted by
/// chunk index.
class LexicalIndex {
 public:
  static constexpr int kFormatVersion = 1;

  LexicalIndex() = default;

  static LexicalIndex build(const ChunkStore& store, TokenizerMode mode = TokenizerMode::word,
                            Bm25Params params = {}) {
    LexicalIndex idx;
    idx.mode_ = mode;
    idx.params_ = params;
    idx.corpus_fingerprint_ = store.fingerprint();
    idx.doc_lengths_.reserve(store.size());
    for (const Chunk& c : store.chunks()) {
      const auto terms = tokenize(c.text, mode);
      std::map<std::string, std::uint32_t> counts;
      for (const auto& t : terms) ++counts[t];
      for (const auto& [term, tf] : counts) idx.postings_[term].push_back({c.chunk_index, tf});
      idx.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
    }
    idx.finish();
    return idx;
  }

  std::size_t num_chunks() const { return doc_lengths_.size(); }
  double avgdl() const { return avgdl_; }
  const Bm25Params& params() const { return params_; }
  TokenizerMode tokenizer() const { return mode_; }
  const std::string& corpus_fingerprint() const { return corpus_fingerprint_; }
  std::span<const std::uint32_t> doc_lengths() const { return doc_lengths_; }

  std::size_t df(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
  }

  /// ln((N - df + 0.5) / (df + 0.5) + 1); 0 for terms the index has never seen.
  double idf(const std::string& term) const {
    const std::size_t d = df(term);
    if (d == 0) return 0.0;
    const double n = static_cast<double>(num_chunks());
    return std::log((n - static_cast<double>(d) + 0.5) / (static_cast<double>(d) + 0.5) + 1.0);
  }

  std::uint32_t tf(const std::string& term, ChunkIndex chunk) const {
    auto it = postings_.find(term);
    if (it == postings_.end()) return 0;
    const auto& list = it->second;
    auto pos = std::lower_bound(list.begin(), list.end(), chunk,
                                [](const Posting& p, ChunkIndex c) { return p.chunk_index < c; });
    return (pos != list.end() && pos->chunk_index == chunk) ? pos->tf : 0;
  }

  /// Robertson BM25 with the query-side tf factor, summed over distinct query
  /// terms in lexicographic order.
  double score(std::span<const std::string> query_terms, ChunkIndex chunk) const {
    if (chunk >= num_chunks()) {
      throw Error("bm25_score: chunk index " + std::to_string(chunk) + " not in index of size " +
                  std::to_string(num_chunks()));
    }
    double total = 0.0;
    for (const auto& [term, qtf] : query_tf(query_terms)) {
      const std::uint32_t f = tf(term, chunk);
      if (f == 0) continue;
      total += term_weight(idf(term), f, doc_lengths_[chunk], qtf);
    }
    return total;
  }

  /// Top-k by BM25 over tokenize(query); zero-score chunks are excluded.
  RankedList search(std::string_view query, std::size_t k) const {
    const auto terms = tokenize(query, mode_);
    std::vector<double> acc(num_chunks(), 0.0);
    std::vector<char> hit(num_chunks(), 0);
    for (const auto& [term, qtf] : query_tf(terms)) {
      auto it = postings_.find(term);
      if (it == postings_.end()) continue;
      const double w = idf(term);
      for (const Posting& p : it->second) {
        acc[p.chunk_index] += term_weight(w, p.tf, doc_lengths_[p.chunk_index], qtf);
        hit[p.chunk_index] = 1;
      }
    }
    std::vector<RankedEntry> candidates;
    for (std::size_t i = 0; i < acc.size(); ++i) {
      if (hit[i] && acc[i] > 0.0) candidates.push_back({static_cast<ChunkIndex>(i), acc[i]});
    }
    return make_ranked_list(std::move(candidates), k);
  }

  json to_json() const {
    json postings = json::object();
    std::map<std::string, const std::vector<Posting>*> ordered;
    for (const auto& [term, list] : postings_) ordered[term] = &list;
    for (const auto& [term, list] : ordered) {
      json arr = json::array();
      for (const Posting& p : *list) arr.push_back({p.chunk_index, p.tf});
      postings[term] = std::move(arr);
    }
    return json{{"format", "rlqr-lexical-index"},
                {"version", kFormatVersion},
                {"corpus_fingerprint", corpus_fingerprint_},
                {"tokenizer", to_string(mode_)},
                {"params", {{"k1", params_.k1}, {"b", params_.b}, {"k3", params_.k3}}},
                {"doc_lengths", doc_lengths_},
                {"postings", std::move(postings)}};
  }

  static LexicalIndex from_json(const json& j) {
    if (j.value("format", "") != "rlqr-lexical-index") throw Error("not a lexical index file");
    if (j.value("version", 0) != kFormatVersion) {
      throw Error("unsupported lexical index version " + j.value("version", json()).dump());
    }
    LexicalIndex idx;
    idx.corpus_fingerprint_ = j.at("corpus_fingerprint").get<std::string>();
    idx.mode_ = tokenizer_mode_from_string(j.at("tokenizer").get<std::string>());
    const auto& p = j.at("params");
    idx.params_ = {p.at("k1").get<double>(), p.at("b").get<double>(), p.at("k3").get<double>()};
    idx.doc_lengths_ = j.at("doc_lengths").get<std::vector<std::uint32_t>>();
    for (const auto& [term, arr] : j.at("postings").items()) {
      auto& list = idx.postings_[term];
      for (const auto& e : arr) list.push_back({e.at(0).get<ChunkIndex>(), e.at(1).get<std::uint32_t>()});
    }
    idx.finish();
    return idx;
  }

 private:
  static std::map<std::string, std::uint32_t> query_tf(std::span<const std::string> terms) {
    std::map<std::string, std::uint32_t> qtf;
    for (const auto& t : terms) ++qtf[t];
    return qtf;
  }

  double term_weight(double idf, std::uint32_t tf, std::uint32_t dl, std::uint32_t qtf) const {
    const double f = tf;
    const double q = qtf;
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * static_cast<double>(dl) / avgdl_);
    return idf * ((params_.k1 + 1.0) * f) / (f + norm) * ((params_.k3 + 1.0) * q) / (params_.k3 + q);
  }

  void finish() {
    double sum = 0.0;
    for (auto len : doc_lengths_) sum += len;
    avgdl_ = doc_lengths_.empty() ? 1.0 : sum / static_cast<double>(doc_lengths_.size());
    if (avgdl_ <= 0.0) avgdl_ = 1.0;
    for (const auto& [term, list] : postings_) {
      for (const Posting& p : list) {
        if (p.tf == 0 || p.chunk_index >= doc_lengths_.size()) {
          throw Error("corrupt posting for term '" + term + "'");
        }
      }
    }
  }

  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::vector<std::uint32_t> doc_lengths_;
  double avgdl_ = 1.0;
  Bm25Params params_;
  TokenizerMode mode_ = TokenizerMode::word;
  std::string corpus_fingerprint_;
};

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  /// Identifies the embedding space; indexes refuse queries from another one.
  virtual std::string fingerprint() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

/// Normalizes in place; a zero vector becomes the first basis vector.
inline void normalize_or_basis(std::vector<double>& v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  if (sq == 0.0) {
    std::fill(v.begin(), v.end(), 0.0);
    if (!v.empty()) v[0] = 1.0;
    return;
  }
  const double inv = 1.0 / std::sqrt(sq);
  for (double& x : v) x *= inv;
}

/// Signed feature hashing of token counts into `dimension` buckets, then L2
/// normalization. Deterministic offline stand-in for a real embedder.
inline std::vector<double> toy_embed(std::string_view text, std::size_t dimension,
                                     std::uint64_t seed,
                                     TokenizerMode mode = TokenizerMode::word) {
  if (dimension < 8) throw Error("toy_embed dimension must be at least 8");
  std::vector<double> v(dimension, 0.0);
  for (const auto& token : tokenize(text, mode)) {
    const std::uint64_t h = splitmix64(fnv1a64(token) ^ splitmix64(seed));
    const std::size_t bucket = static_cast<std::size_t>(h % dimension);
    v[bucket] += (h >> 63) ? -1.0 : 1.0;
  }
  normalize_or_basis(v);
  return v;
}

class ToyEmbedder final : public EmbeddingProvider {
 public:
  ToyEmbedder(std::size_t dimension, std::uint64_t seed, TokenizerMode mode = TokenizerMode::word)
      : dimension_(dimension), seed_(seed), mode_(mode) {
    if (dimension < 8) throw Error("toy_embed dimension must be at least 8");
  }

  std::size_t dimension() const override { return dimension_; }
  std::string fingerprint() const override {
    return "toy-embed:d=" + std::to_string(dimension_) + ":seed=" + std::to_string(seed_) +
           ":tok=" + std::string(to_string(mode_));
  }
  std::vector<double> embed(std::string_view text) const override {
    return toy_embed(text, dimension_, seed_, mode_);
  }

 private:
  std::size_t dimension_;
  std::uint64_t seed_;
  TokenizerMode mode_;
};

/// Unit-norm chunk embeddings for exact k-NN.
class VectorIndex {
 public:
  static constexpr int kFormatVersion = 1;

  VectorIndex() = default;

  static VectorIndex build(const ChunkStore& store, const EmbeddingProvider& provider) {
    VectorIndex idx;
    idx.dimension_ = provider.dimension();
    idx.provider_fingerprint_ = provider.fingerprint();
    idx.corpus_fingerprint_ = store.fingerprint();
    idx.vectors_.reserve(store.size());
    for (const Chunk& c : store.chunks()) {
      auto v = provider.embed(c.text);
      if (v.size() != idx.dimension_) {
        throw Error("embedding for chunk " + std::to_string(c.chunk_index) + " has dimension " +
                    std::to_string(v.size()) + ", expected " + std::to_string(idx.dimension_));
      }
      normalize_or_basis(v);
      idx.vectors_.push_back(std::move(v));
    }
    return idx;
  }

  std::size_t size() const { return vectors_.size(); }
  std::size_t dimension() const { return dimension_; }
  const std::string& provider_fingerprint() const { return provider_fingerprint_; }
  const std::string& corpus_fingerprint() const { return corpus_fingerprint_; }
  std::span<const double> vector(ChunkIndex i) const { return vectors_.at(i); }

  json to_json() const {
    return json{{"format", "rlqr-vector-index"},
                {"version", kFormatVersion},
                {"corpus_fingerprint", corpus_fingerprint_},
                {"provider_fingerprint", provider_fingerprint_},
                {"dimension", dimension_},
                {"vectors", vectors_}};
  }

  static VectorIndex from_json(const json& j) {
    if (j.value("format", "") != "rlqr-vector-index") throw Error("not a vector index file");
    if (j.value("version", 0) != kFormatVersion) {
      throw Error("unsupported vector index version " + j.value("version", json()).dump());
    }
    VectorIndex idx;
    idx.corpus_fingerprint_ = j.at("corpus_fingerprint").get<std::string>();
    idx.provider_fingerprint_ = j.at("provider_fingerprint").get<std::string>();
    idx.dimension_ = j.at("dimension").get<std::size_t>();
    idx.vectors_ = j.at("vectors").get<std::vector<std::vector<double>>>();
    for (std::size_t i = 0; i < idx.vectors_.size(); ++i) {
      const auto& v = idx.vectors_[i];
      double sq = 0.0;
      for (double x : v) sq += x * x;
      if (v.size() != idx.dimension_ || std::abs(std::sqrt(sq) - 1.0) > 1e-9) {
        throw Error("vector " + std::to_string(i) + " is not a unit vector of dimension " +
                    std::to_string(idx.dimension_));
      }
    }
    return idx;
  }

 private:
  std::vector<std::vector<double>> vectors_;
  std::size_t dimension_ = 0;
  std::string provider_fingerprint_;
  std::string corpus_fingerprint_;
};

/// Exact top-k by cosine similarity.
inline RankedList search_semantic(const VectorIndex& index, const EmbeddingProvider& provider,
                                  std::string_view query, std::size_t k) {
  if (provider.fingerprint() != index.provider_fingerprint()) {
    throw Error("embedding provider fingerprint '" + provider.fingerprint() +
                "' does not match index fingerprint '" + index.provider_fingerprint() + "'");
  }
  auto q = provider.embed(query);
  if (q.size() != index.dimension()) throw Error("query embedding has wrong dimension");
  normalize_or_basis(q);
  std::vector<RankedEntry> candidates;
  candidates.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    const auto v = index.vector(static_cast<ChunkIndex>(i));
    double dot = 0.0;
    for (std::size_t d = 0; d < q.size(); ++d) dot += q[d] * v[d];
    candidates.push_back({static_cast<ChunkIndex>(i), dot});
  }
  return make_ranked_list(std::move(candidates), k);
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------

/// Reciprocal rank fusion: score(d) = sum over lists of 1 / (k_rrf + rank).
/// Returns every fused document; callers truncate.
inline RankedList rrf_fuse(std::span<const RankedList> lists, std::size_t k_rrf = 60) {
  if (lists.empty()) throw Error("rrf_fuse needs at least one list");
  if (k_rrf == 0) throw Error("rrf k must be positive");
  std::map<ChunkIndex, double> fused;
  for (const RankedList& list : lists) {
    for (std::size_t r = 0; r < list.entries.size(); ++r) {
      fused[list.entries[r].chunk_index] += 1.0 / static_cast<double>(k_rrf + r + 1);
    }
  }
  std::vector<RankedEntry> candidates;
  candidates.reserve(fused.size());
  for (const auto& [chunk, score] : fused) candidates.push_back({chunk, score});
  const std::size_t n = candidates.size();
  return make_ranked_list(std::move(candidates), n);
}

// ---------------------------------------------------------------------------
// Retriever interface
// ---------------------------------------------------------------------------

class Retriever {
 public:
  virtual ~Retriever() = default;
  virtual std::string name() const = 0;
  virtual RankedList search(std::string_view query, std::size_t k) const = 0;
};

class LexicalRetriever final : public Retriever {
 public:
  explicit LexicalRetriever(std::shared_ptr<const LexicalIndex> index) : index_(std::move(index)) {}
  std::string name() const override { return "lexical"; }
  RankedList search(std::string_view query, std::size_t k) const override {
    return index_->search(query, k);
  }
  const LexicalIndex& index() const { return *index_; }

 private:
  std::shared_ptr<const LexicalIndex> index_;
};

class SemanticRetriever final : public Retriever {
 public:
  SemanticRetriever(std::shared_ptr<const VectorIndex> index,
                    std::shared_ptr<const EmbeddingProvider> provider)
      : index_(std::move(index)), provider_(std::move(provider)) {
    if (provider_->fingerprint() != index_->provider_fingerprint()) {
      throw Error("embedding provider fingerprint '" + provider_->fingerprint() +
                  "' does not match index fingerprint '" + index_->provider_fingerprint() + "'");
    }
  }
  std::string name() const override { return "semantic"; }
  RankedList search(std::string_view query, std::size_t k) const override {
    return search_semantic(*index_, *provider_, query, k);
  }

 private:
  std::shared_ptr<const VectorIndex> index_;
  std::shared_ptr<const EmbeddingProvider> provider_;
};

/// Lexical and semantic candidates, each max(3k, 30) deep, fused by RRF.
class HybridRetriever final : public Retriever {
 public:
  HybridRetriever(std::shared_ptr<const Retriever> lexical, std::shared_ptr<const Retriever> semantic,
                  std::size_t k_rrf = 60)
      : lexical_(std::move(lexical)), semantic_(std::move(semantic)), k_rrf_(k_rrf) {}

  std::string name() const override { return "hybrid"; }

  static std::size_t candidate_depth(std::size_t k) { return std::max<std::size_t>(3 * k, 30); }

  RankedList search(std::string_view query, std::size_t k) const override {
    const std::size_t depth = candidate_depth(k);
    const RankedList lists[] = {lexical_->search(query, depth), semantic_->search(query, depth)};
    RankedList fused = rrf_fuse(lists, k_rrf_);
    if (fused.entries.size() > k) fused.entries.resize(k);
    fused.k = k;
    return fused;
  }

 private:
  std::shared_ptr<const Retriever> lexical_;
  std::shared_ptr<const Retriever> semantic_;
  std::size_t k_rrf_;
};

}  // namespace rlqr
