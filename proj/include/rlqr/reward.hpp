#pragma once

// Composite reward for a generated rewrite: NDCG@k of the rewritten query's
// ranking plus a group-normalized format/redundancy penalty.

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rlqr/corpus.hpp"
#include "rlqr/retrieval.hpp"
#include "rlqr/sample.hpp"

namespace rlqr {

enum class RelevanceLevel { chunk, document };

inline RelevanceLevel relevance_level_from_string(std::string_view s) {
  if (s == "chunk") return RelevanceLevel::chunk;
  if (s == "document") return RelevanceLevel::document;
  throw Error("unknown relevance level: " + std::string(s));
}

inline std::string_view to_string(RelevanceLevel l) {
  return l == RelevanceLevel::chunk ? "chunk" : "document";
}

struct RewardConfig {
  double lambda_retrieval = 1.0;
  double lambda_penalty = -0.2;
  std::size_t ndcg_k = 3;
  RelevanceLevel relevance_level = RelevanceLevel::chunk;
};

/// Characters outside the first <answer>...</answer> block; nullopt means no
/// such block (an infinite penalty).
using RawPenalty = std::optional<std::size_t>;

struct RewardBreakdown {
  double retrieval = 0.0;
  RawPenalty raw_penalty;
  double normalized_penalty = 0.0;
  double total = 0.0;
  std::optional<std::string> formatted_query;
};

inline json to_json(const RewardBreakdown& r) {
  return json{{"retrieval", r.retrieval},
              {"raw_penalty", r.raw_penalty ? json(*r.raw_penalty) : json(nullptr)},
              {"normalized_penalty", r.normalized_penalty},
              {"total", r.total}};
}

// ---------------------------------------------------------------------------
// NDCG with a single relevant item
// ---------------------------------------------------------------------------

inline double gain_at_rank(std::size_t rank, std::size_t k) {
  if (rank == 0 || rank > k) return 0.0;
  return 1.0 / std::log2(static_cast<double>(rank) + 1.0);
}

/// Binary relevance, one relevant chunk, IDCG = 1.
inline double ndcg_at_k(const RankedList& ranked, ChunkIndex relevant, std::size_t k) {
  return gain_at_rank(ranked.rank_of(relevant), k);
}

/// Document-level relevance: the best-ranked chunk of `doc_id` counts.
inline double ndcg_at_k(const RankedList& ranked, std::string_view doc_id, const ChunkStore& store,
                        std::size_t k) {
  for (std::size_t i = 0; i < ranked.entries.size() && i < k; ++i) {
    if (store.at(ranked.entries[i].chunk_index).parent_doc == doc_id) return gain_at_rank(i + 1, k);
  }
  return 0.0;
}

/// Runs `query` through the retriever and scores the sample's target.
inline double retrieval_ndcg(const Retriever& retriever, const ChunkStore& store,
                             const QuerySample& sample, std::string_view query, std::size_t k,
                             RelevanceLevel level) {
  if (!store.contains(sample.target_index)) {
    throw Error("sample target_index " + std::to_string(sample.target_index) +
                " outside store of size " + std::to_string(store.size()));
  }
  RankedList ranked;
  try {
    ranked = retriever.search(query, k);
  } catch (const std::exception& e) {
    throw Error("retrieval failed for sample with target_index " +
                std::to_string(sample.target_index) + ": " + e.what());
  }
  if (level == RelevanceLevel::document) {
    return ndcg_at_k(ranked, store.at(sample.target_index).parent_doc, store, k);
  }
  return ndcg_at_k(ranked, sample.target_index, k);
}

// ---------------------------------------------------------------------------
// Format penalty
// ---------------------------------------------------------------------------

struct FormatResult {
  std::optional<std::string> formatted_query;
  RawPenalty raw_penalty;
};

inline constexpr std::string_view kAnswerOpen = "<answer>";
inline constexpr std::string_view kAnswerClose = "</answer>";

inline FormatResult format_penalty(std::string_view y) {
  const auto open = y.find(kAnswerOpen);
  if (open == std::string_view::npos) return {};
  const auto inner = open + kAnswerOpen.size();
  const auto close = y.find(kAnswerClose, inner);
  if (close == std::string_view::npos) return {};
  const auto block_end = close + kAnswerClose.size();
  const std::size_t block_chars = utf8::length(y.substr(open, block_end - open));
  return {std::string(y.substr(inner, close - inner)), utf8::length(y) - block_chars};
}

/// Group-wise penalty normalization: 0 stays 0, infinite maps to 1, finite
/// non-zero values map affinely from [min, max] onto [0.5, 1]. A degenerate
/// finite range maps to 1, or to 0.5 when an infinite penalty holds the top.
inline std::vector<double> normalize_group_penalties(std::span<const RawPenalty> raw) {
  if (raw.empty()) throw Error("normalize_group_penalties: empty group");
  bool has_inf = false;
  std::optional<std::size_t> lo, hi;
  for (const auto& p : raw) {
    if (!p) {
      has_inf = true;
    } else if (*p > 0) {
      lo = lo ? std::min(*lo, *p) : *p;
      hi = hi ? std::max(*hi, *p) : *p;
    }
  }
  std::vector<double> out;
  out.reserve(raw.size());
  for (const auto& p : raw) {
    if (!p) {
      out.push_back(1.0);
    } else if (*p == 0) {
      out.push_back(0.0);
    } else if (*lo == *hi) {
      out.push_back(has_inf ? 0.5 : 1.0);
    } else {
      const double t = static_cast<double>(*p - *lo) / static_cast<double>(*hi - *lo);
      out.push_back(0.5 + 0.5 * t);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Combined reward
// ---------------------------------------------------------------------------

/// Scores rewrites of one sample against a retriever. Normalization of the
/// penalty is relative to the whole group, so groups are scored together.
class RewardModel {
 public:
  RewardModel(std::shared_ptr<const Retriever> retriever, std::shared_ptr<const ChunkStore> store,
              RewardConfig cfg)
      : retriever_(std::move(retriever)), store_(std::move(store)), cfg_(cfg) {
    if (cfg_.ndcg_k == 0) throw Error("ndcg_k must be at least 1");
  }

  const RewardConfig& config() const { return cfg_; }
  const Retriever& retriever() const { return *retriever_; }

  /// NDCG@k of `query` for the sample's target.
  double retrieval_score(const QuerySample& sample, std::string_view query) const {
    return retrieval_ndcg(*retriever_, *store_, sample, query, cfg_.ndcg_k, cfg_.relevance_level);
  }

  /// Reward of member `member` given the raw penalties of the whole group.
  RewardBreakdown score(const QuerySample& sample, std::string_view y,
                        std::span<const RawPenalty> group_raw, std::size_t member) const {
    if (member >= group_raw.size()) throw Error("group member index out of range");
    const FormatResult fmt = format_penalty(y);
    if (fmt.raw_penalty != group_raw[member]) {
      throw Error("group context does not match the member's own penalty");
    }
    RewardBreakdown r;
    r.formatted_query = fmt.formatted_query;
    r.raw_penalty = fmt.raw_penalty;
    r.normalized_penalty = normalize_group_penalties(group_raw)[member];
    r.retrieval = fmt.formatted_query ? retrieval_score(sample, *fmt.formatted_query) : 0.0;
    r.total = cfg_.lambda_retrieval * r.retrieval + cfg_.lambda_penalty * r.normalized_penalty;
    return r;
  }

  std::vector<RewardBreakdown> score_group(const QuerySample& sample,
                                           std::span<const std::string> outputs) const {
    std::vector<FormatResult> fmts;
    std::vector<RawPenalty> raw;
    for (const auto& y : outputs) {
      fmts.push_back(format_penalty(y));
      raw.push_back(fmts.back().raw_penalty);
    }
    const auto norm = normalize_group_penalties(raw);
    std::vector<RewardBreakdown> out;
    out.reserve(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) {
      RewardBreakdown r;
      r.formatted_query = fmts[i].formatted_query;
      r.raw_penalty = raw[i];
      r.normalized_penalty = norm[i];
      r.retrieval = r.formatted_query ? retrieval_score(sample, *r.formatted_query) : 0.0;
      r.total = cfg_.lambda_retrieval * r.retrieval + cfg_.lambda_penalty * r.normalized_penalty;
      out.push_back(std::move(r));
    }
    return out;
  }

 private:
  std::shared_ptr<const Retriever> retriever_;
  std::shared_ptr<const ChunkStore> store_;
  RewardConfig cfg_;
};

}  // namespace rlqr
