#pragma once

// Rewrite policies. The built-in policy picks one edit action per query term
// (drop / keep / repeat x2 / repeat x3) from an independent softmax over
// linear features; an adapter interface covers external token-level policies.

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rlqr/common.hpp"
#include "rlqr/retrieval.hpp"
#include "rlqr/text.hpp"

namespace rlqr {

enum class RewriteAction : std::uint8_t { drop = 0, keep = 1, repeat2 = 2, repeat3 = 3 };

inline constexpr std::size_t kNumActions = 4;
inline constexpr std::array<std::string_view, kNumActions> kActionNames = {"drop", "keep", "repeat2",
                                                                          "repeat3"};

inline std::size_t copies(RewriteAction a) { return static_cast<std::size_t>(a); }

// ---------------------------------------------------------------------------
// Features
// ---------------------------------------------------------------------------

inline constexpr std::size_t kFeatureDim = 6;
using TermFeatures = std::array<double, kFeatureDim>;

/// [bias, normalized position, log(1 + query tf), idf, length / 10, is-CJK]
inline TermFeatures featurize_term(std::string_view term, std::size_t position, std::size_t n_terms,
                                   std::size_t query_tf, double idf) {
  return {1.0,
          n_terms > 1 ? static_cast<double>(position) / static_cast<double>(n_terms - 1) : 0.0,
          std::log1p(static_cast<double>(query_tf)),
          idf,
          static_cast<double>(utf8::length(term)) / 10.0,
          contains_cjk(term) ? 1.0 : 0.0};
}

struct FeaturizedQuery {
  std::string original;
  std::vector<std::string> terms;
  std::vector<TermFeatures> features;
};

/// Tokenizes queries and attaches per-term features. IDF comes from the
/// lexical index when one is supplied, otherwise it is 0.
class TermFeaturizer {
 public:
  explicit TermFeaturizer(std::shared_ptr<const LexicalIndex> idf_source = nullptr,
                          TokenizerMode mode = TokenizerMode::word)
      : index_(std::move(idf_source)), mode_(index_ ? index_->tokenizer() : mode) {}

  FeaturizedQuery featurize(std::string_view query) const {
    FeaturizedQuery fq;
    fq.original = std::string(query);
    fq.terms = tokenize(query, mode_);
    std::unordered_map<std::string, std::size_t> qtf;
    for (const auto& t : fq.terms) ++qtf[t];
    fq.features.reserve(fq.terms.size());
    for (std::size_t i = 0; i < fq.terms.size(); ++i) {
      const auto& t = fq.terms[i];
      fq.features.push_back(
          featurize_term(t, i, fq.terms.size(), qtf[t], index_ ? index_->idf(t) : 0.0));
    }
    return fq;
  }

 private:
  std::shared_ptr<const LexicalIndex> index_;
  TokenizerMode mode_;
};

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// Row-major feature_dim x 4 weight matrix.
struct PolicyParams {
  static constexpr int kFormatVersion = 1;

  std::size_t feature_dim = kFeatureDim;
  std::vector<double> weights = std::vector<double>(kFeatureDim * kNumActions, 0.0);

  double& at(std::size_t feature, std::size_t action) { return weights[feature * kNumActions + action]; }
  double at(std::size_t feature, std::size_t action) const {
    return weights[feature * kNumActions + action];
  }

  /// Zero weights except a bias toward `keep`, so greedy decoding starts as
  /// the identity rewrite while sampling still explores every action.
  static PolicyParams initial(double keep_bias = 1.0) {
    PolicyParams p;
    p.at(0, static_cast<std::size_t>(RewriteAction::keep)) = keep_bias;
    return p;
  }

  bool all_finite() const {
    for (double w : weights) {
      if (!std::isfinite(w)) return false;
    }
    return true;
  }

  json to_json() const {
    return json{{"format", "rlqr-policy"},
                {"version", kFormatVersion},
                {"feature_dim", feature_dim},
                {"actions", kActionNames},
                {"W", weights}};
  }

  static PolicyParams from_json(const json& j) {
    if (j.value("version", 0) != kFormatVersion) throw Error("unsupported policy file version");
    PolicyParams p;
    p.feature_dim = j.at("feature_dim").get<std::size_t>();
    if (p.feature_dim != kFeatureDim) {
      throw Error("policy feature_dim " + std::to_string(p.feature_dim) + " does not match " +
                  std::to_string(kFeatureDim));
    }
    const auto actions = j.at("actions").get<std::vector<std::string>>();
    if (actions.size() != kNumActions) throw Error("policy file must list 4 actions");
    for (std::size_t a = 0; a < kNumActions; ++a) {
      if (actions[a] != kActionNames[a]) throw Error("unexpected action name: " + actions[a]);
    }
    p.weights = j.at("W").get<std::vector<double>>();
    if (p.weights.size() != p.feature_dim * kNumActions) throw Error("policy W has wrong size");
    if (!p.all_finite()) throw Error("policy W has non-finite entries");
    return p;
  }
};

using ActionLogits = std::array<double, kNumActions>;

inline ActionLogits logits(const PolicyParams& params, const TermFeatures& x, double temperature) {
  ActionLogits z{};
  for (std::size_t a = 0; a < kNumActions; ++a) {
    double s = 0.0;
    for (std::size_t f = 0; f < kFeatureDim; ++f) s += params.at(f, a) * x[f];
    z[a] = s / temperature;
  }
  return z;
}

/// Numerically stable log-softmax.
inline ActionLogits log_softmax(const ActionLogits& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = m + std::log(sum);
  ActionLogits out{};
  for (std::size_t a = 0; a < kNumActions; ++a) out[a] = z[a] - lse;
  return out;
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

/// Joins terms with the per-term copy counts; all-dropped falls back to the
/// original query.
inline std::string apply_actions(std::span<const std::string> terms,
                                 std::span<const RewriteAction> actions,
                                 std::string_view original_query) {
  if (terms.size() != actions.size()) {
    throw Error("apply_actions: " + std::to_string(terms.size()) + " terms but " +
                std::to_string(actions.size()) + " actions");
  }
  std::string out;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    for (std::size_t c = 0; c < copies(actions[i]); ++c) {
      if (!out.empty()) out.push_back(' ');
      out += terms[i];
    }
  }
  return out.empty() ? std::string(original_query) : out;
}

inline std::string wrap_answer(std::string_view rewritten) {
  std::string y = "<answer>";
  y += rewritten;
  y += "</answer>";
  return y;
}

struct Rollout {
  std::vector<RewriteAction> actions;
  std::vector<double> logprobs;  // per step, under the sampling parameters
  std::string output;            // <answer>rewritten</answer>
  std::string rewritten;
};

/// Samples one action per term from softmax(W^T x / temperature).
inline Rollout sample_rewrite(const PolicyParams& params, const FeaturizedQuery& fq,
                              double temperature, std::uint64_t seed) {
  if (!(temperature > 0.0)) throw Error("sample_rewrite: temperature must be positive");
  Rng rng(seed);
  Rollout r;
  r.actions.reserve(fq.terms.size());
  r.logprobs.reserve(fq.terms.size());
  for (const auto& x : fq.features) {
    const ActionLogits lp = log_softmax(logits(params, x, temperature));
    const double u = rng.uniform();
    double cdf = 0.0;
    std::size_t chosen = kNumActions - 1;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      cdf += std::exp(lp[a]);
      if (u < cdf) {
        chosen = a;
        break;
      }
    }
    r.actions.push_back(static_cast<RewriteAction>(chosen));
    r.logprobs.push_back(lp[chosen]);
  }
  r.rewritten = apply_actions(fq.terms, r.actions, fq.original);
  r.output = wrap_answer(r.rewritten);
  return r;
}

/// Zero-temperature decoding: the argmax action per term (lowest action index
/// on exact ties).
inline Rollout greedy_rewrite(const PolicyParams& params, const FeaturizedQuery& fq) {
  Rollout r;
  for (const auto& x : fq.features) {
    const ActionLogits lp = log_softmax(logits(params, x, 1.0));
    std::size_t best = 0;
    for (std::size_t a = 1; a < kNumActions; ++a) {
      if (lp[a] > lp[best]) best = a;
    }
    r.actions.push_back(static_cast<RewriteAction>(best));
    r.logprobs.push_back(lp[best]);
  }
  r.rewritten = apply_actions(fq.terms, r.actions, fq.original);
  r.output = wrap_answer(r.rewritten);
  return r;
}

struct LogprobGradient {
  std::vector<double> grad;      // same layout as PolicyParams::weights
  std::vector<double> logprobs;  // per step, under `params`
};

/// Accumulates sum_t weight_t * d log pi(a_t | x_t) / dW into `grad` and
/// returns the per-step log-probabilities under `params`.
inline std::vector<double> accumulate_logprob_gradient(const PolicyParams& params,
                                                       const FeaturizedQuery& fq,
                                                       std::span<const RewriteAction> actions,
                                                       std::span<const double> step_weights,
                                                       double temperature,
                                                       std::span<double> grad) {
  if (actions.size() != fq.features.size() || step_weights.size() != actions.size()) {
    throw Error("logprob gradient: rollout does not match the query's term count");
  }
  std::vector<double> out;
  out.reserve(actions.size());
  for (std::size_t t = 0; t < actions.size(); ++t) {
    const auto& x = fq.features[t];
    const ActionLogits lp = log_softmax(logits(params, x, temperature));
    const auto a_t = static_cast<std::size_t>(actions[t]);
    out.push_back(lp[a_t]);
    const double w = step_weights[t];
    if (w == 0.0) continue;
    for (std::size_t a = 0; a < kNumActions; ++a) {
      const double coeff = w * ((a == a_t ? 1.0 : 0.0) - std::exp(lp[a])) / temperature;
      for (std::size_t f = 0; f < kFeatureDim; ++f) grad[f * kNumActions + a] += coeff * x[f];
    }
  }
  return out;
}

/// Exact gradient of sum_t log pi(a_t) with respect to W.
inline LogprobGradient logprob_gradient(const PolicyParams& params, const FeaturizedQuery& fq,
                                        std::span<const RewriteAction> actions,
                                        double temperature = 1.0) {
  LogprobGradient g;
  g.grad.assign(params.weights.size(), 0.0);
  const std::vector<double> ones(actions.size(), 1.0);
  g.logprobs = accumulate_logprob_gradient(params, fq, actions, ones, temperature, g.grad);
  return g;
}

// ---------------------------------------------------------------------------
// External policies
// ---------------------------------------------------------------------------

/// A continuation produced by an external token-level policy.
struct ExternalSample {
  std::vector<std::string> tokens;
  std::vector<double> logprobs;  // under the parameters that sampled it

  std::string text() const {
    std::string s;
    for (const auto& t : tokens) s += t;
    return s;
  }
};

struct TokenLogprobs {
  std::vector<double> current;
  std::vector<double> old;
};

/// Contract for a policy the trainer does not own. The trainer only needs
/// samples, per-token log-probs under current and snapshot parameters, and a
/// way to hand back dLoss/dlogprob per token.
class ExternalPolicy {
 public:
  virtual ~ExternalPolicy() = default;
  virtual std::string name() const = 0;
  virtual ExternalSample sample(std::string_view prompt, double temperature, std::uint64_t seed) = 0;
  virtual TokenLogprobs logprobs(std::string_view prompt, std::span<const std::string> tokens) = 0;
  /// Marks the current parameters as the "old" ones for ratio computation.
  virtual void snapshot() = 0;
  virtual void accumulate(std::string_view prompt, std::span<const std::string> tokens,
                          std::span<const double> loss_grad_wrt_logprobs) = 0;
  virtual void step(double learning_rate) = 0;
};

inline std::string render_rewrite_prompt(std::string_view query) {
  std::string p =
      "Rewrite the user query so that the retriever finds the document it needs. "
      "Place the rewritten query inside <answer>...</answer> and output nothing else.\n\n"
      "Query: ";
  p += query;
  return p;
}

// Wire messages for the HTTP adapter (see README, "External policy protocol").
namespace wire {

inline json sample_request(std::string_view prompt, double temperature, std::uint64_t seed) {
  return {{"prompt", prompt}, {"temperature", temperature}, {"seed", seed}};
}
inline ExternalSample sample_response(const json& j) {
  ExternalSample s{j.at("tokens").get<std::vector<std::string>>(),
                   j.at("logprobs").get<std::vector<double>>()};
  if (s.tokens.size() != s.logprobs.size()) throw Error("sample response: tokens/logprobs length mismatch");
  return s;
}
inline json logprobs_request(std::string_view prompt, std::span<const std::string> tokens) {
  return {{"prompt", prompt}, {"tokens", std::vector<std::string>(tokens.begin(), tokens.end())}};
}
inline TokenLogprobs logprobs_response(const json& j, std::size_t n_tokens) {
  TokenLogprobs t{j.at("current").get<std::vector<double>>(), j.at("old").get<std::vector<double>>()};
  if (t.current.size() != n_tokens || t.old.size() != n_tokens) {
    throw Error("logprobs response: expected " + std::to_string(n_tokens) + " values");
  }
  return t;
}
inline json accumulate_request(std::string_view prompt, std::span<const std::string> tokens,
                               std::span<const double> coefficients) {
  return {{"prompt", prompt},
          {"tokens", std::vector<std::string>(tokens.begin(), tokens.end())},
          {"coefficients", std::vector<double>(coefficients.begin(), coefficients.end())}};
}
inline json step_request(double learning_rate) { return {{"learning_rate", learning_rate}}; }

}  // namespace wire

}  // namespace rlqr
