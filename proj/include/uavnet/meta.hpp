#pragma once

// Meta-learning around the actor-critic learner: task loss, importance
// weighted gradients, inner-loop adaptation, first- and second-order
// meta-updates, meta-training and online adaptation.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "uavnet/a3c.hpp"
#include "uavnet/env.hpp"
#include "uavnet/error.hpp"
#include "uavnet/evaluation.hpp"
#include "uavnet/nn.hpp"
#include "uavnet/random.hpp"
#include "uavnet/scenario.hpp"

namespace uavnet {

struct MetaConfig {
  double inner_lr = 5e-4;
  double meta_lr = 1e-4;
  std::size_t inner_steps = 5;
  std::size_t meta_batch = 4;
  std::size_t iterations = 200;
  bool first_order = true;
  std::size_t episodes_per_step = 1;  // whole episodes behind each loss estimate
  std::size_t eval_episodes = 5;
  double weight_clip_lo = 0.1;
  double weight_clip_hi = 10.0;
  double hvp_epsilon = 1e-5;  // perturbation norm for Hessian-vector products
  std::size_t num_workers = 1;
  bool sampled_eval = true;  // online_adapt evaluates the stochastic policy

  void validate() const {
    require_config(inner_lr >= 0.0 && std::isfinite(inner_lr), "meta: inner learning rate must be >= 0");
    require_config(meta_lr >= 0.0 && std::isfinite(meta_lr), "meta: meta learning rate must be >= 0");
    require_config(inner_steps >= 1, "meta: inner steps must be >= 1");
    require_config(meta_batch >= 1, "meta: meta batch must be >= 1");
    require_config(episodes_per_step >= 1, "meta: episodes per step must be >= 1");
    require_config(eval_episodes >= 5, "meta: at least 5 evaluation episodes");
    require_config(weight_clip_lo > 0.0 && weight_clip_lo <= 1.0 && weight_clip_hi >= 1.0,
                   "meta: importance clip must bracket 1");
    require_config(hvp_epsilon > 0.0, "meta: hvp epsilon must be positive");
    require_config(num_workers >= 1, "meta: num_workers must be >= 1");
  }
};

struct Policy {
  ParamSet actor;
  ParamSet critic;

  friend bool operator==(const Policy&, const Policy&) = default;
};

inline Policy make_policy(const Scenario& sc, const TrainConfig& cfg, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x1417));
  std::size_t features = feature_dimension(sc.fleet);
  Policy p;
  p.actor = make_actor(features, cfg.hidden, Action::dimension(sc.fleet), rng);
  p.critic = make_critic(features, cfg.hidden, rng);
  return p;
}

struct AdaptationReport {
  std::uint64_t task_id = 0;
  double pre_reward = 0.0;
  double post_reward = 0.0;
  std::vector<double> losses;      // actor task loss before each inner step
  std::vector<double> grad_norms;  // actor gradient norm of each inner step
  std::vector<double> pre_per_seed;   // filled by online_adapt
  std::vector<double> post_per_seed;

  friend bool operator==(const AdaptationReport&, const AdaptationReport&) = default;
};

/// Rollouts flattened into transitions with returns and advantages frozen
/// at preparation time.
struct PreparedBatch {
  std::vector<Transition> steps;
  std::vector<double> returns;
  std::vector<double> advantages;
  double mean_reward = 0.0;
};

inline PreparedBatch prepare_batch(std::span<const RolloutBuffer> rollouts, const ParamSet& critic,
                                   double gamma) {
  PreparedBatch b;
  double reward_sum = 0.0;
  for (const RolloutBuffer& r : rollouts) {
    if (r.steps.empty()) continue;
    std::vector<double> ret = nstep_return(r, gamma);
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      const Transition& t = r.steps[i];
      b.steps.push_back(t);
      b.returns.push_back(ret[i]);
      b.advantages.push_back(ret[i] - forward_critic(critic, t.features));
      reward_sum += t.reward;
    }
  }
  require(!b.steps.empty(), "task_loss: empty rollouts");
  b.mean_reward = reward_sum / static_cast<double>(b.steps.size());
  return b;
}

/// mean_n -log pi(a_n | s_n) * adv_n, advantages constant.
inline LossGrads task_loss(const ParamSet& actor, const PreparedBatch& batch) {
  require(!batch.steps.empty(), "task_loss: empty rollouts");
  const double inv_n = 1.0 / static_cast<double>(batch.steps.size());
  LossGrads out{GradientSet::zeros_like(actor), 0.0};
  for (std::size_t n = 0; n < batch.steps.size(); ++n) {
    const Transition& t = batch.steps[n];
    double coef = -batch.advantages[n] * inv_n;
    double lp = accumulate_policy_grad(actor, t.features, t.raw_action, coef, 0.0, out.grads);
    out.loss += coef * lp;
  }
  return out;
}

/// mean_n (return_n - V(s_n))^2, the critic's share of the task loss.
inline LossGrads critic_task_loss(const ParamSet& critic, const PreparedBatch& batch) {
  require(!batch.steps.empty(), "task_loss: empty rollouts");
  const double inv_n = 1.0 / static_cast<double>(batch.steps.size());
  LossGrads out{GradientSet::zeros_like(critic), 0.0};
  for (std::size_t n = 0; n < batch.steps.size(); ++n) {
    ForwardTrace trace;
    double v = mlp_forward(critic, batch.steps[n].features, &trace)[0];
    double err = v - batch.returns[n];
    const double d[1] = {2.0 * err * inv_n};
    mlp_backward(critic, trace, d, out.grads);
    out.loss += err * err * inv_n;
  }
  return out;
}

struct ImportanceGrad {
  GradientSet grad;
  double loss = 0.0;             // mean -w * adv, whose gradient is `grad`
  std::vector<double> weights;   // after clipping
  std::size_t clipped = 0;
  std::size_t nonfinite = 0;     // ratios that were inf/nan before clipping
};

inline double action_log_prob(const ParamSet& actor, std::span<const double> features,
                              std::span<const double> raw) {
  return gaussian_log_prob(mlp_forward(actor, features), actor.free_block(), raw);
}

/// mean_n -w_n adv_n grad log pi_target(a_n | s_n), where
/// w_n = pi_target / pi_behavior is clipped to [lo, hi] and held constant.
inline ImportanceGrad importance_weighted_grad(const ParamSet& target, const ParamSet& behavior,
                                               const PreparedBatch& batch, double lo = 0.1,
                                               double hi = 10.0) {
  require(!batch.steps.empty(), "importance_weighted_grad: empty rollouts");
  const double inv_n = 1.0 / static_cast<double>(batch.steps.size());
  ImportanceGrad out{GradientSet::zeros_like(target), 0.0, {}, 0, 0};
  for (std::size_t n = 0; n < batch.steps.size(); ++n) {
    const Transition& t = batch.steps[n];
    double lp_b = action_log_prob(behavior, t.features, t.raw_action);
    double lp_t = action_log_prob(target, t.features, t.raw_action);
    double w = std::exp(lp_t - lp_b);
    if (!std::isfinite(w)) {
      ++out.nonfinite;
      if (std::isnan(w)) w = hi;
    }
    if (w < lo || w > hi) {
      ++out.clipped;
      w = std::clamp(w, lo, hi);
    }
    out.weights.push_back(w);
    out.loss -= w * batch.advantages[n] * inv_n;
    accumulate_policy_grad(target, t.features, t.raw_action, -w * batch.advantages[n] * inv_n,
                           0.0, out.grad);
  }
  return out;
}

/// One plain gradient step of the inner loop, with the data it used.
struct InnerStep {
  Policy before;
  PreparedBatch batch;
  GradientSet actor_grad;
  GradientSet critic_grad;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
};

struct InnerResult {
  Policy adapted;
  AdaptationReport report;
  std::vector<InnerStep> steps;
  PreparedBatch post;  // fresh rollouts under the adapted policy
  std::uint64_t env_steps = 0;
};

/// Adapts a copy of `phi` to `task` with `steps` plain gradient steps
/// (actor and critic). Each step collects fresh episodes under the current
/// iterate. Post-adaptation episodes are collected at the end.
inline InnerResult inner_adapt(const Policy& phi, std::shared_ptr<const Scenario> sc,
                               const Task& task, std::size_t steps, const MetaConfig& mc,
                               const TrainConfig& tc, std::uint64_t seed) {
  InnerResult out;
  out.adapted = phi;
  out.report.task_id = task.id;
  RolloutCollector collector(Environment(std::move(sc), task), seed);
  auto gather = [&](const Policy& p) {
    auto rollouts = collector.collect_episodes(p.actor, p.critic, mc.episodes_per_step,
                                               std::numeric_limits<std::size_t>::max());
    return prepare_batch(rollouts, p.critic, tc.gamma);
  };
  for (std::size_t j = 0; j < steps; ++j) {
    InnerStep st;
    st.before = out.adapted;
    st.batch = gather(out.adapted);
    LossGrads a = task_loss(out.adapted.actor, st.batch);
    LossGrads c = critic_task_loss(out.adapted.critic, st.batch);
    st.actor_grad = a.grads;
    st.critic_grad = c.grads;
    st.actor_loss = a.loss;
    st.critic_loss = c.loss;
    if (j == 0) out.report.pre_reward = st.batch.mean_reward;
    out.report.losses.push_back(a.loss);
    out.report.grad_norms.push_back(a.grads.norm());
    sgd_step(out.adapted.actor, a.grads, mc.inner_lr);
    sgd_step(out.adapted.critic, c.grads, mc.inner_lr);
    out.steps.push_back(std::move(st));
  }
  out.post = gather(out.adapted);
  out.report.post_reward = out.post.mean_reward;
  if (steps == 0) out.report.pre_reward = out.report.post_reward;
  out.env_steps = collector.env_steps();
  return out;
}

using GradFn = std::function<GradientSet(const ParamSet&)>;

/// Hessian-vector product of the loss behind `grad_fn` at `p` by central
/// differences of gradients; the perturbation has norm `eps`.
inline GradientSet hessian_vector_product(const GradFn& grad_fn, const ParamSet& p,
                                          const GradientSet& v, double eps) {
  require_congruent(p, v);
  double vn = v.norm();
  GradientSet out = GradientSet::zeros_like(p);
  if (vn == 0.0) return out;
  double h = eps / vn;
  ParamSet plus = p, minus = p;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    plus.values[i] += h * v.values[i];
    minus.values[i] -= h * v.values[i];
  }
  GradientSet gp = grad_fn(plus);
  GradientSet gm = grad_fn(minus);
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = (gp.values[i] - gm.values[i]) / (2.0 * h);
  return out;
}

/// Pulls a gradient taken at the adapted parameters back through the inner
/// steps: v <- (I - lr H_j) v for j = K-1 .. 0.
inline GradientSet backprop_through_inner(const std::vector<InnerStep>& steps, GradientSet v,
                                          double inner_lr, double eps, bool actor) {
  for (std::size_t j = steps.size(); j-- > 0;) {
    const InnerStep& st = steps[j];
    const PreparedBatch& batch = st.batch;
    GradFn fn = actor ? GradFn([&](const ParamSet& p) { return task_loss(p, batch).grads; })
                      : GradFn([&](const ParamSet& p) { return critic_task_loss(p, batch).grads; });
    const ParamSet& at = actor ? st.before.actor : st.before.critic;
    GradientSet hv = hessian_vector_product(fn, at, v, eps);
    for (std::size_t i = 0; i < v.values.size(); ++i) v.values[i] -= inner_lr * hv.values[i];
  }
  return v;
}

struct MetaObjective {
  double actor = 0.0;
  double critic = 0.0;
};

/// Replays the inner loop on frozen batches from `phi` and evaluates the
/// post-adaptation losses.
inline MetaObjective meta_objective(const Policy& phi, std::span<const PreparedBatch> inner,
                                    const PreparedBatch& post, double inner_lr) {
  Policy p = phi;
  for (const PreparedBatch& b : inner) {
    GradientSet ga = task_loss(p.actor, b).grads;
    GradientSet gc = critic_task_loss(p.critic, b).grads;
    sgd_step(p.actor, ga, inner_lr);
    sgd_step(p.critic, gc, inner_lr);
  }
  return {task_loss(p.actor, post).loss, critic_task_loss(p.critic, post).loss};
}

struct MetaOptimizer {
  RmsPropState actor;
  RmsPropState critic;

  friend bool operator==(const MetaOptimizer&, const MetaOptimizer&) = default;

  static MetaOptimizer for_policy(const Policy& p, const MetaConfig& mc, const TrainConfig& tc) {
    return {RmsPropState::for_params(p.actor, mc.meta_lr, tc.rms_decay, tc.rms_stability),
            RmsPropState::for_params(p.critic, mc.meta_lr, tc.rms_decay, tc.rms_stability)};
  }
};

/// Per-task pieces of a meta-gradient.
struct TaskMetaGrad {
  GradientSet actor;
  GradientSet critic;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  AdaptationReport report;
  std::uint64_t env_steps = 0;
};

inline TaskMetaGrad task_meta_gradient(const Policy& phi, std::shared_ptr<const Scenario> sc,
                                       const Task& task, const MetaConfig& mc,
                                       const TrainConfig& tc, std::uint64_t seed) {
  InnerResult r = inner_adapt(phi, std::move(sc), task, mc.inner_steps, mc, tc, seed);
  LossGrads a = task_loss(r.adapted.actor, r.post);
  LossGrads c = critic_task_loss(r.adapted.critic, r.post);
  TaskMetaGrad out{std::move(a.grads), std::move(c.grads), a.loss, c.loss, std::move(r.report),
                   r.env_steps};
  if (!mc.first_order) {
    out.actor = backprop_through_inner(r.steps, std::move(out.actor), mc.inner_lr, mc.hvp_epsilon, true);
    out.critic = backprop_through_inner(r.steps, std::move(out.critic), mc.inner_lr, mc.hvp_epsilon, false);
  }
  return out;
}

struct MetaUpdateResult {
  GradientSet actor_grad;   // summed over tasks, as applied
  GradientSet critic_grad;
  double meta_loss = 0.0;         // summed post-adaptation actor loss
  double critic_meta_loss = 0.0;
  std::vector<AdaptationReport> reports;
  std::uint64_t env_steps = 0;
};

/// Adapts to each task (concurrently when mc.num_workers > 1), sums the
/// per-task meta-gradients in task order and applies one RMSProp step.
inline MetaUpdateResult meta_update(Policy& phi, MetaOptimizer& opt,
                                    std::shared_ptr<const Scenario> sc, std::span<const Task> tasks,
                                    const MetaConfig& mc, const TrainConfig& tc, std::uint64_t seed) {
  require(!tasks.empty(), "meta_update: empty task batch");
  std::vector<TaskMetaGrad> parts(tasks.size());
  auto run = [&](std::size_t i) {
    parts[i] = task_meta_gradient(phi, sc, tasks[i], mc, tc, derive_seed(seed, i));
  };
  if (mc.num_workers <= 1 || tasks.size() == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run(i);
  } else {
    std::vector<std::exception_ptr> errors(tasks.size());
    std::atomic<std::size_t> next{0};
    {
      std::vector<std::jthread> threads;
      for (std::size_t w = 0; w < std::min(mc.num_workers, tasks.size()); ++w) {
        threads.emplace_back([&] {
          for (std::size_t i; (i = next.fetch_add(1)) < tasks.size();) {
            try {
              run(i);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  MetaUpdateResult out;
  out.actor_grad = GradientSet::zeros_like(phi.actor);
  out.critic_grad = GradientSet::zeros_like(phi.critic);
  for (TaskMetaGrad& p : parts) {
    out.actor_grad += p.actor;
    out.critic_grad += p.critic;
    out.meta_loss += p.actor_loss;
    out.critic_meta_loss += p.critic_loss;
    out.env_steps += p.env_steps;
    out.reports.push_back(std::move(p.report));
  }
  rmsprop_step(opt.actor, phi.actor, out.actor_grad);
  rmsprop_step(opt.critic, phi.critic, out.critic_grad);
  return out;
}

struct MetaIterationRecord {
  std::size_t iteration = 0;
  std::vector<std::uint64_t> task_ids;
  double pre_reward = 0.0;   // mean over the batch
  double post_reward = 0.0;
  double meta_grad_norm = 0.0;
  double meta_loss = 0.0;
  std::uint64_t env_steps = 0;  // cumulative
  double wall_seconds = 0.0;
};

using MetaSink = std::function<void(const MetaIterationRecord&, const Policy&, const MetaOptimizer&)>;

struct MetaTrainResult {
  Policy policy;
  MetaOptimizer optimizer;
  std::vector<MetaIterationRecord> records;
  std::uint64_t env_steps = 0;
};

/// Seed stream for training tasks; held-out tasks should use other streams.
inline std::uint64_t training_task_seed(std::uint64_t seed, std::size_t iteration, std::size_t b,
                                        std::size_t batch) {
  return derive_seed(derive_seed(seed, 0x7a5c), iteration * batch + b);
}

inline MetaTrainResult meta_train(std::shared_ptr<const Scenario> sc, const MetaConfig& mc,
                                  const TrainConfig& tc, std::uint64_t seed,
                                  const MetaSink& sink = {}, const Policy* initial = nullptr,
                                  const MetaOptimizer* initial_opt = nullptr,
                                  std::size_t first_iteration = 0) {
  mc.validate();
  tc.validate();
  sc->validate();
  const auto start = std::chrono::steady_clock::now();
  MetaTrainResult out;
  out.policy = initial ? *initial : make_policy(*sc, tc, seed);
  out.optimizer = initial_opt ? *initial_opt : MetaOptimizer::for_policy(out.policy, mc, tc);
  for (std::size_t it = first_iteration; it < first_iteration + mc.iterations; ++it) {
    std::vector<Task> tasks;
    for (std::size_t b = 0; b < mc.meta_batch; ++b)
      tasks.push_back(sample_task(sc->tasks, training_task_seed(seed, it, b, mc.meta_batch)));
    MetaUpdateResult u = meta_update(out.policy, out.optimizer, sc, tasks, mc, tc,
                                     derive_seed(derive_seed(seed, 0x3e7a), it));
    out.env_steps += u.env_steps;
    MetaIterationRecord rec;
    rec.iteration = it;
    for (const Task& t : tasks) rec.task_ids.push_back(t.id);
    for (const AdaptationReport& r : u.reports) {
      rec.pre_reward += r.pre_reward;
      rec.post_reward += r.post_reward;
    }
    rec.pre_reward /= static_cast<double>(tasks.size());
    rec.post_reward /= static_cast<double>(tasks.size());
    rec.meta_grad_norm = std::sqrt(u.actor_grad.norm() * u.actor_grad.norm() +
                                   u.critic_grad.norm() * u.critic_grad.norm());
    rec.meta_loss = u.meta_loss;
    rec.env_steps = out.env_steps;
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.records.push_back(rec);
    if (sink) sink(rec, out.policy, out.optimizer);
  }
  return out;
}

struct OnlineAdaptResult {
  Policy policy;
  AdaptationReport report;
};

/// Evaluation seeds for deployment reports.
inline std::vector<std::uint64_t> evaluation_seeds(std::uint64_t seed, std::size_t count) {
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(derive_seed(derive_seed(seed, 0xe7a1), i));
  return out;
}

/// k inner steps on a new task, with deterministic before/after evaluation
/// on the same seeded episodes.
inline OnlineAdaptResult online_adapt(const Policy& phi, std::shared_ptr<const Scenario> sc,
                                      const Task& task, std::size_t k, const MetaConfig& mc,
                                      const TrainConfig& tc, std::uint64_t seed) {
  OnlineAdaptResult out;
  std::vector<std::uint64_t> seeds = evaluation_seeds(seed, mc.eval_episodes);
  out.report.task_id = task.id;
  out.report.pre_per_seed = evaluate_rewards(phi.actor, *sc, task, seeds, mc.sampled_eval);
  if (k == 0) {
    out.policy = phi;
    out.report.post_per_seed = out.report.pre_per_seed;
  } else {
    InnerResult r = inner_adapt(phi, sc, task, k, mc, tc, derive_seed(seed, 0xada));
    out.policy = std::move(r.adapted);
    out.report.losses = std::move(r.report.losses);
    out.report.grad_norms = std::move(r.report.grad_norms);
    out.report.post_per_seed = evaluate_rewards(out.policy.actor, *sc, task, seeds, mc.sampled_eval);
  }
  out.report.pre_reward = mean_of(out.report.pre_per_seed);
  out.report.post_reward = mean_of(out.report.post_per_seed);
  return out;
}

}  // namespace uavnet
