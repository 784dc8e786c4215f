#pragma once

// Retrieval evaluation of raw and rewritten queries, and the
// retriever x rewriter comparison matrix.

#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rlqr/policy.hpp"
#include "rlqr/reward.hpp"
#include "rlqr/sample.hpp"

namespace rlqr {

class Rewriter {
 public:
  virtual ~Rewriter() = default;
  virtual std::string name() const = 0;
  virtual std::string rewrite(std::string_view query) const = 0;
};

class IdentityRewriter final : public Rewriter {
 public:
  std::string name() const override { return "raw"; }
  std::string rewrite(std::string_view query) const override { return std::string(query); }
};

/// Greedy (argmax) decoding of the built-in policy.
class PolicyRewriter final : public Rewriter {
 public:
  PolicyRewriter(std::string name, PolicyParams params, TermFeaturizer featurizer)
      : name_(std::move(name)), params_(std::move(params)), featurizer_(std::move(featurizer)) {}

  std::string name() const override { return name_; }
  std::string rewrite(std::string_view query) const override {
    return greedy_rewrite(params_, featurizer_.featurize(query)).rewritten;
  }

 private:
  std::string name_;
  PolicyParams params_;
  TermFeaturizer featurizer_;
};

struct EvalConfig {
  std::size_t k = 3;
  RelevanceLevel relevance_level = RelevanceLevel::chunk;
};

struct EvalReport {
  std::string retriever;
  std::string rewriter;
  std::size_t k = 3;
  std::vector<double> per_sample;
  double mean_ndcg = 0.0;  // fraction in [0, 1]
  double mean_original_length = 0.0;
  double mean_rewritten_length = 0.0;

  double mean_ndcg_percent() const { return 100.0 * mean_ndcg; }

  json to_json() const {
    char pct[32];
    std::snprintf(pct, sizeof pct, "%.2f", mean_ndcg_percent());
    return json{{"retriever", retriever},
                {"rewriter", rewriter},
                {"k", k},
                {"mean_ndcg", mean_ndcg},
                {"mean_ndcg_percent", pct},
                {"mean_original_length", mean_original_length},
                {"mean_rewritten_length", mean_rewritten_length},
                {"per_sample", per_sample}};
  }

  static EvalReport from_json(const json& j) {
    EvalReport r;
    r.retriever = j.at("retriever").get<std::string>();
    r.rewriter = j.at("rewriter").get<std::string>();
    r.k = j.at("k").get<std::size_t>();
    r.mean_ndcg = j.at("mean_ndcg").get<double>();
    r.mean_original_length = j.at("mean_original_length").get<double>();
    r.mean_rewritten_length = j.at("mean_rewritten_length").get<double>();
    r.per_sample = j.at("per_sample").get<std::vector<double>>();
    return r;
  }
};

/// Per-sample NDCG@k of raw or rewritten queries; lengths in characters.
inline EvalReport evaluate(std::span<const QuerySample> dataset, const Retriever& retriever,
                           const Rewriter* rewriter, const ChunkStore& store, const EvalConfig& cfg) {
  EvalReport rep;
  rep.retriever = retriever.name();
  rep.rewriter = rewriter ? rewriter->name() : "raw";
  rep.k = cfg.k;
  rep.per_sample.reserve(dataset.size());
  double sum = 0.0, orig = 0.0, rewr = 0.0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const QuerySample& s = dataset[i];
    if (!store.contains(s.target_index)) {
      throw Error("eval: sample " + std::to_string(i) + " targets chunk " +
                  std::to_string(s.target_index) + " outside store of size " +
                  std::to_string(store.size()));
    }
    const std::string q = rewriter ? rewriter->rewrite(s.query) : s.query;
    const double ndcg = retrieval_ndcg(retriever, store, s, q, cfg.k, cfg.relevance_level);
    rep.per_sample.push_back(ndcg);
    sum += ndcg;
    orig += static_cast<double>(utf8::length(s.query));
    rewr += static_cast<double>(utf8::length(q));
  }
  if (!dataset.empty()) {
    const double n = static_cast<double>(dataset.size());
    rep.mean_ndcg = sum / n;
    rep.mean_original_length = orig / n;
    rep.mean_rewritten_length = rewr / n;
  }
  return rep;
}

template <typename T>
struct Named {
  std::string name;
  std::shared_ptr<const T> item;
};

/// One report per (retriever, rewriter) pair, with a raw-query row first for
/// every retriever.
inline std::vector<EvalReport> cross_matrix(std::span<const QuerySample> dataset,
                                            std::span<const Named<Retriever>> retrievers,
                                            std::span<const Named<Rewriter>> rewriters,
                                            const ChunkStore& store, const EvalConfig& cfg) {
  std::vector<EvalReport> out;
  for (const auto& r : retrievers) {
    EvalReport raw = evaluate(dataset, *r.item, nullptr, store, cfg);
    raw.retriever = r.name;
    out.push_back(std::move(raw));
    for (const auto& w : rewriters) {
      EvalReport rep = evaluate(dataset, *r.item, w.item.get(), store, cfg);
      rep.retriever = r.name;
      rep.rewriter = w.name;
      out.push_back(std::move(rep));
    }
  }
  return out;
}

inline json reports_to_json(std::span<const EvalReport> reports) {
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(r.to_json());
  return json{{"format", "rlqr-eval-report"}, {"version", 1}, {"reports", std::move(arr)}};
}

inline std::vector<EvalReport> reports_from_json(const json& j) {
  if (j.value("format", "") != "rlqr-eval-report") throw Error("not an eval report file");
  std::vector<EvalReport> out;
  for (const auto& r : j.at("reports")) out.push_back(EvalReport::from_json(r));
  return out;
}

/// Aligned text table, one row per report.
inline std::string render_table(std::span<const EvalReport> reports) {
  std::size_t wr = 9, ww = 8;
  for (const auto& r : reports) {
    wr = std::max(wr, r.retriever.size());
    ww = std::max(ww, r.rewriter.size());
  }
  std::string out;
  char buf[512];
  const std::size_t k = reports.empty() ? 3 : reports.front().k;
  const std::string metric = "NDCG@" + std::to_string(k);
  std::snprintf(buf, sizeof buf, "%-*s  %-*s  %8s  %11s  %11s\n", static_cast<int>(wr), "retriever",
                static_cast<int>(ww), "rewriter", metric.c_str(), "origin_len", "rewrote_len");
  out += buf;
  out += std::string(wr + ww + 8 + 11 + 11 + 8, '-') + "\n";
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%-*s  %-*s  %8.2f  %11.2f  %11.2f\n", static_cast<int>(wr),
                  r.retriever.c_str(), static_cast<int>(ww), r.rewriter.c_str(), r.mean_ndcg_percent(),
                  r.mean_original_length, r.mean_rewritten_length);
    out += buf;
  }
  return out;
}

inline std::string render_csv(std::span<const EvalReport> reports) {
  std::string out = "retriever,rewriter,k,mean_ndcg_percent,mean_original_length,mean_rewritten_length\n";
  char buf[512];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.2f,%.4f,%.4f\n", r.retriever.c_str(), r.rewriter.c_str(),
                  r.k, r.mean_ndcg_percent(), r.mean_original_length, r.mean_rewritten_length);
    out += buf;
  }
  return out;
}

}  // namespace rlqr
