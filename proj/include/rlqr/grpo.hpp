#pragma once

// Group Relative Policy Optimization for rewrite policies.
//
// For every training sample the trainer draws G rewrites from a snapshot of
// the policy, scores them with the composite reward, standardizes the rewards
// inside the group, and descends the clipped-ratio surrogate
//
//   L = -(1/G) sum_i (1/|o_i|) sum_t min(rho_it A_i, clip(rho_it, 1-eps, 1+eps) A_i)
//       + beta * KL
//
// with rho_it = exp(logp_current - logp_old).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rlqr/common.hpp"
#include "rlqr/policy.hpp"
#include "rlqr/reward.hpp"
#include "rlqr/sample.hpp"

namespace rlqr {

struct GrpoConfig {
  std::size_t group_size = 8;
  double clip_epsilon = 0.2;
  double kl_beta = 0.0;
  double learning_rate = 0.05;
  std::size_t grad_accum_steps = 4;
  std::size_t epochs = 1;
  double advantage_epsilon = 1e-8;
  /// Gradient updates per snapshot. With 1 the ratio is always 1 at gradient
  /// time; larger values exercise the clipping.
  std::size_t inner_iterations = 1;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  /// Emit a checkpoint every N optimizer steps (0 = only the final one).
  std::size_t checkpoint_every = 0;

  void validate() const {
    if (group_size < 2) throw Error("group_size must be at least 2");
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw Error("clip_epsilon must be in (0, 1)");
    if (kl_beta < 0.0) throw Error("kl_beta must be non-negative");
    if (learning_rate < 0.0) throw Error("learning_rate must be non-negative");
    if (grad_accum_steps == 0) throw Error("grad_accum_steps must be positive");
    if (inner_iterations == 0) throw Error("inner_iterations must be positive");
    if (!(temperature > 0.0)) throw Error("temperature must be positive");
  }
};

/// (r_i - mean) / (population std + delta); an all-equal group gets zeros.
inline std::vector<double> compute_advantages(std::span<const double> rewards, double delta = 1e-8) {
  if (rewards.size() < 2) throw Error("compute_advantages needs a group of at least 2");
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  bool all_equal = true;
  for (double r : rewards) {
    var += (r - mean) * (r - mean);
    all_equal = all_equal && r == rewards[0];
  }
  std::vector<double> adv(rewards.size(), 0.0);
  if (all_equal) return adv;
  const double sd = std::sqrt(var / n);
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / (sd + delta);
  return adv;
}

struct GrpoLoss {
  double loss = 0.0;
  /// Per rollout, per step: the clipped branch was selected (no gradient
  /// flows through the ratio).
  std::vector<std::vector<char>> clipped;
  /// dL / d logp_current per rollout, per step.
  std::vector<std::vector<double>> grad_logprobs;
  std::size_t clipped_steps = 0;
  std::size_t total_steps = 0;

  double clip_fraction() const {
    return total_steps == 0 ? 0.0 : static_cast<double>(clipped_steps) / static_cast<double>(total_steps);
  }
};

/// Surrogate loss for one group. Rollouts with zero steps contribute nothing.
inline GrpoLoss grpo_loss(std::span<const std::vector<double>> current,
                          std::span<const std::vector<double>> old, std::span<const double> advantages,
                          const GrpoConfig& cfg) {
  const std::size_t g = advantages.size();
  if (current.size() != g || old.size() != g) throw Error("grpo_loss: group shapes differ");
  GrpoLoss out;
  out.clipped.resize(g);
  out.grad_logprobs.resize(g);
  const double lo = 1.0 - cfg.clip_epsilon;
  const double hi = 1.0 + cfg.clip_epsilon;
  const double inv_g = 1.0 / static_cast<double>(g);
  for (std::size_t i = 0; i < g; ++i) {
    const std::size_t steps = current[i].size();
    if (old[i].size() != steps) {
      throw Error("grpo_loss: rollout " + std::to_string(i) + " has mismatched step counts");
    }
    out.clipped[i].assign(steps, 0);
    out.grad_logprobs[i].assign(steps, 0.0);
    if (steps == 0) continue;
    const double w = inv_g / static_cast<double>(steps);
    const double a = advantages[i];
    for (std::size_t t = 0; t < steps; ++t) {
      const double cur = current[i][t];
      const double prev = old[i][t];
      if (!std::isfinite(cur) || !std::isfinite(prev)) {
        throw Error("grpo_loss: non-finite log-prob at rollout " + std::to_string(i) + ", step " +
                    std::to_string(t));
      }
      const double rho = std::exp(cur - prev);
      const double unclipped = rho * a;
      const double clipped = std::clamp(rho, lo, hi) * a;
      double grad = 0.0;
      if (clipped < unclipped) {
        out.loss -= w * clipped;
        out.clipped[i][t] = 1;
        ++out.clipped_steps;
      } else {
        out.loss -= w * unclipped;
        grad = -w * unclipped;  // d(rho a)/d cur = rho a
      }
      if (cfg.kl_beta > 0.0) {
        const double diff = prev - cur;
        out.loss += cfg.kl_beta * w * (std::exp(diff) - diff - 1.0);
        grad += cfg.kl_beta * w * (1.0 - std::exp(diff));
      }
      out.grad_logprobs[i][t] = grad;
      ++out.total_steps;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training the built-in policy
// ---------------------------------------------------------------------------

struct TrainRecord {
  std::size_t step = 0;
  std::size_t samples = 0;
  double mean_reward = 0.0;
  double mean_retrieval = 0.0;
  double mean_penalty = 0.0;
  double loss = 0.0;            // at the first inner iteration
  double clip_fraction = 0.0;   // mean over inner iterations
  double first_clip_fraction = 0.0;
  double mean_rewrite_length = 0.0;

  json to_json() const {
    return json{{"step", step},
                {"samples", samples},
                {"mean_reward", mean_reward},
                {"mean_retrieval", mean_retrieval},
                {"mean_penalty", mean_penalty},
                {"loss", loss},
                {"clip_fraction", clip_fraction},
                {"mean_rewrite_length", mean_rewrite_length}};
  }
};

struct RolloutGroup {
  const QuerySample* sample = nullptr;
  FeaturizedQuery query;
  std::vector<Rollout> rollouts;
  std::vector<RewardBreakdown> rewards;
  std::vector<double> advantages;
  std::vector<std::vector<double>> old_logprobs;
};

struct TrainResult {
  PolicyParams params;
  std::vector<TrainRecord> log;
};

using CheckpointFn = std::function<void(std::size_t step, const PolicyParams&)>;

/// Batches for every epoch, in training order. Each epoch shuffles a
/// canonical ordering of the dataset, so the result does not depend on the
/// input order.
inline std::vector<std::vector<QuerySample>> training_batches(std::span<const QuerySample> dataset,
                                                              const GrpoConfig& cfg) {
  std::vector<const QuerySample*> order;
  for (const auto& s : dataset) order.push_back(&s);
  std::stable_sort(order.begin(), order.end(), [](const QuerySample* a, const QuerySample* b) {
    if (a->target_index != b->target_index) return a->target_index < b->target_index;
    return a->query < b->query;
  });
  std::vector<std::vector<QuerySample>> batches;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<const QuerySample*> epoch_order = order;
    Rng shuffler(derive_seed(cfg.seed, 0x5348554646ULL, epoch));
    shuffler.shuffle(epoch_order);
    for (std::size_t begin = 0; begin < epoch_order.size(); begin += cfg.grad_accum_steps) {
      const std::size_t end = std::min(begin + cfg.grad_accum_steps, epoch_order.size());
      std::vector<QuerySample> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(*epoch_order[i]);
      batches.push_back(std::move(batch));
    }
  }
  return batches;
}

class GrpoTrainer {
 public:
  GrpoTrainer(TermFeaturizer featurizer, RewardModel reward, GrpoConfig cfg)
      : featurizer_(std::move(featurizer)), reward_(std::move(reward)), cfg_(cfg) {
    cfg_.validate();
  }

  const GrpoConfig& config() const { return cfg_; }

  /// Samples and scores the G rollouts for one sample under `params`.
  RolloutGroup sample_group(const PolicyParams& params, const QuerySample& sample,
                            std::uint64_t group_seed) const {
    RolloutGroup grp;
    grp.sample = &sample;
    grp.query = featurizer_.featurize(sample.query);
    std::vector<std::string> outputs;
    for (std::size_t i = 0; i < cfg_.group_size; ++i) {
      grp.rollouts.push_back(
          sample_rewrite(params, grp.query, cfg_.temperature, derive_seed(group_seed, i)));
      outputs.push_back(grp.rollouts.back().output);
      grp.old_logprobs.push_back(grp.rollouts.back().logprobs);
    }
    grp.rewards = reward_.score_group(sample, outputs);
    std::vector<double> totals;
    for (const auto& r : grp.rewards) totals.push_back(r.total);
    grp.advantages = compute_advantages(totals, cfg_.advantage_epsilon);
    return grp;
  }

  /// Loss and gradient of the mean surrogate over `groups` at `params`.
  std::pair<GrpoLoss, std::vector<double>> loss_and_gradient(const PolicyParams& params,
                                                             std::span<const RolloutGroup> groups) const {
    std::vector<double> grad(params.weights.size(), 0.0);
    GrpoLoss total;
    const double scale = 1.0 / static_cast<double>(groups.size());
    for (const RolloutGroup& grp : groups) {
      std::vector<std::vector<double>> current;
      current.reserve(grp.rollouts.size());
      for (const Rollout& r : grp.rollouts) current.push_back(step_logprobs(params, grp.query, r.actions));
      const GrpoLoss gl = grpo_loss(current, grp.old_logprobs, grp.advantages, cfg_);
      for (std::size_t i = 0; i < grp.rollouts.size(); ++i) {
        std::vector<double> weights = gl.grad_logprobs[i];
        for (double& w : weights) w *= scale;
        accumulate_logprob_gradient(params, grp.query, grp.rollouts[i].actions, weights,
                                    cfg_.temperature, grad);
      }
      total.loss += scale * gl.loss;
      total.clipped_steps += gl.clipped_steps;
      total.total_steps += gl.total_steps;
    }
    return {std::move(total), std::move(grad)};
  }

  /// One optimizer step over `batch`: snapshot, sample groups, then
  /// `inner_iterations` gradient-descent updates.
  TrainRecord train_step(PolicyParams& params, std::span<const QuerySample> batch,
                         std::size_t step_index) const {
    if (batch.empty()) throw Error("train_step: empty batch");
    const PolicyParams snapshot = params;
    std::vector<RolloutGroup> groups;
    groups.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      groups.push_back(sample_group(snapshot, batch[b], derive_seed(cfg_.seed, step_index, b)));
    }

    TrainRecord rec;
    rec.step = step_index;
    rec.samples = batch.size();
    std::size_t n = 0;
    for (const auto& grp : groups) {
      for (std::size_t i = 0; i < grp.rollouts.size(); ++i) {
        rec.mean_reward += grp.rewards[i].total;
        rec.mean_retrieval += grp.rewards[i].retrieval;
        rec.mean_penalty += grp.rewards[i].normalized_penalty;
        rec.mean_rewrite_length += static_cast<double>(utf8::length(grp.rollouts[i].rewritten));
        ++n;
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    rec.mean_reward *= inv;
    rec.mean_retrieval *= inv;
    rec.mean_penalty *= inv;
    rec.mean_rewrite_length *= inv;

    for (std::size_t it = 0; it < cfg_.inner_iterations; ++it) {
      auto [gl, grad] = loss_and_gradient(params, groups);
      if (it == 0) {
        rec.loss = gl.loss;
        rec.first_clip_fraction = gl.clip_fraction();
      }
      rec.clip_fraction += gl.clip_fraction() / static_cast<double>(cfg_.inner_iterations);
      for (std::size_t j = 0; j < grad.size(); ++j) params.weights[j] -= cfg_.learning_rate * grad[j];
    }
    if (!params.all_finite()) throw Error("train_step " + std::to_string(step_index) + ": parameters diverged");
    return rec;
  }

  /// Epochs over a seeded shuffle of the dataset in batches of
  /// grad_accum_steps samples.
  TrainResult train_loop(PolicyParams params, std::span<const QuerySample> dataset,
                         const CheckpointFn& checkpoint = {}) const {
    TrainResult result;
    std::size_t step = 0;
    for (const auto& batch : training_batches(dataset, cfg_)) {
      ++step;
      result.log.push_back(train_step(params, batch, step));
      if (checkpoint && cfg_.checkpoint_every > 0 && step % cfg_.checkpoint_every == 0) {
        checkpoint(step, params);
      }
    }
    if (checkpoint && (cfg_.checkpoint_every == 0 || step % cfg_.checkpoint_every != 0)) {
      checkpoint(step, params);
    }
    result.params = std::move(params);
    return result;
  }

 private:
  std::vector<double> step_logprobs(const PolicyParams& params, const FeaturizedQuery& fq,
                                    std::span<const RewriteAction> actions) const {
    std::vector<double> lp;
    lp.reserve(actions.size());
    for (std::size_t t = 0; t < actions.size(); ++t) {
      lp.push_back(log_softmax(logits(params, fq.features[t], cfg_.temperature))[static_cast<std::size_t>(actions[t])]);
    }
    return lp;
  }

  TermFeaturizer featurizer_;
  RewardModel reward_;
  GrpoConfig cfg_;
};

// ---------------------------------------------------------------------------
// Training an external policy
// ---------------------------------------------------------------------------

/// Same objective, with generation and backpropagation delegated to an
/// ExternalPolicy. Unformatted generations reach the penalty path here.
class ExternalGrpoTrainer {
 public:
  ExternalGrpoTrainer(RewardModel reward, GrpoConfig cfg) : reward_(std::move(reward)), cfg_(cfg) {
    cfg_.validate();
  }

  TrainRecord train_step(ExternalPolicy& policy, std::span<const QuerySample> batch,
                         std::size_t step_index) const {
    if (batch.empty()) throw Error("train_step: empty batch");
    policy.snapshot();
    struct Group {
      std::string prompt;
      std::vector<ExternalSample> samples;
      std::vector<double> advantages;
    };
    std::vector<Group> groups;
    TrainRecord rec;
    rec.step = step_index;
    rec.samples = batch.size();
    std::size_t n = 0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Group grp;
      grp.prompt = render_rewrite_prompt(batch[b].query);
      std::vector<std::string> outputs;
      for (std::size_t i = 0; i < cfg_.group_size; ++i) {
        grp.samples.push_back(
            policy.sample(grp.prompt, cfg_.temperature, derive_seed(cfg_.seed, step_index, b, i)));
        outputs.push_back(grp.samples.back().text());
      }
      const auto rewards = reward_.score_group(batch[b], outputs);
      std::vector<double> totals;
      for (std::size_t i = 0; i < rewards.size(); ++i) {
        totals.push_back(rewards[i].total);
        rec.mean_reward += rewards[i].total;
        rec.mean_retrieval += rewards[i].retrieval;
        rec.mean_penalty += rewards[i].normalized_penalty;
        rec.mean_rewrite_length +=
            static_cast<double>(utf8::length(rewards[i].formatted_query.value_or(outputs[i])));
        ++n;
      }
      grp.advantages = compute_advantages(totals, cfg_.advantage_epsilon);
      groups.push_back(std::move(grp));
    }
    const double inv = 1.0 / static_cast<double>(n);
    rec.mean_reward *= inv;
    rec.mean_retrieval *= inv;
    rec.mean_penalty *= inv;
    rec.mean_rewrite_length *= inv;

    const double scale = 1.0 / static_cast<double>(groups.size());
    for (std::size_t it = 0; it < cfg_.inner_iterations; ++it) {
      double loss = 0.0;
      std::size_t clipped = 0, total = 0;
      for (const Group& grp : groups) {
        std::vector<std::vector<double>> current, old;
        for (const auto& s : grp.samples) {
          auto lp = policy.logprobs(grp.prompt, s.tokens);
          current.push_back(std::move(lp.current));
          old.push_back(std::move(lp.old));
        }
        const GrpoLoss gl = grpo_loss(current, old, grp.advantages, cfg_);
        for (std::size_t i = 0; i < grp.samples.size(); ++i) {
          std::vector<double> coeffs = gl.grad_logprobs[i];
          for (double& c : coeffs) c *= scale;
          policy.accumulate(grp.prompt, grp.samples[i].tokens, coeffs);
        }
        loss += scale * gl.loss;
        clipped += gl.clipped_steps;
        total += gl.total_steps;
      }
      const double frac = total == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(total);
      if (it == 0) {
        rec.loss = loss;
        rec.first_clip_fraction = frac;
      }
      rec.clip_fraction += frac / static_cast<double>(cfg_.inner_iterations);
      policy.step(cfg_.learning_rate);
    }
    return rec;
  }

  std::vector<TrainRecord> train_loop(ExternalPolicy& policy, std::span<const QuerySample> dataset) const {
    std::vector<TrainRecord> log;
    std::size_t step = 0;
    for (const auto& batch : training_batches(dataset, cfg_)) log.push_back(train_step(policy, batch, ++step));
    return log;
  }

 private:
  RewardModel reward_;
  GrpoConfig cfg_;
};

inline std::string train_log_to_jsonl(std::span<const TrainRecord> log) {
  std::vector<json> rows;
  rows.reserve(log.size());
  for (const auto& r : log) rows.push_back(r.to_json());
  return to_jsonl(rows);
}

}  // namespace rlqr
