#pragma once

// Asynchronous advantage actor-critic: n-step returns, advantages, actor and
// critic loss gradients, rollout workers and a serialized global updater.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <thread>
#include <utility>
#include <vector>

#include "uavnet/env.hpp"
#include "uavnet/error.hpp"
#include "uavnet/nn.hpp"
#include "uavnet/random.hpp"

namespace uavnet {

struct Transition {
  std::vector<double> features;
  std::vector<double> raw_action;
  double reward = 0.0;
  double log_prob = 0.0;  // under the behavior policy
  double value = 0.0;     // critic estimate at collection time
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

struct RolloutBuffer {
  std::vector<Transition> steps;
  double bootstrap_value = 0.0;  // V(s_{n+tau}), 0 after a terminal step

  friend bool operator==(const RolloutBuffer&, const RolloutBuffer&) = default;

  std::vector<double> rewards() const {
    std::vector<double> r;
    for (const auto& t : steps) r.push_back(t.reward);
    return r;
  }
  std::vector<double> values() const {
    std::vector<double> v;
    for (const auto& t : steps) v.push_back(t.value);
    return v;
  }
  double mean_reward() const {
    if (steps.empty()) return 0.0;
    double s = 0.0;
    for (const auto& t : steps) s += t.reward;
    return s / static_cast<double>(steps.size());
  }
};

struct TrainConfig {
  std::size_t num_workers = 1;
  std::size_t horizon = 20;  // tau, also the per-rollout transition cap
  double gamma = 0.99;
  double entropy_coef = 0.01;
  double actor_lr = 5e-4;
  double critic_lr = 1e-3;
  double rms_decay = 0.99;
  double rms_stability = 1e-8;
  double grad_clip = 40.0;
  std::size_t max_updates = 2000;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden{64, 64};

  void validate() const {
    require_config(num_workers >= 1, "train: num_workers must be >= 1");
    require_config(horizon >= 1, "train: horizon must be >= 1");
    require_config(gamma >= 0.0 && gamma <= 1.0, "train: gamma must be in [0, 1]");
    require_config(entropy_coef >= 0.0, "train: entropy coefficient must be >= 0");
    require_config(actor_lr >= 0.0 && critic_lr >= 0.0, "train: learning rates must be >= 0");
    require_config(grad_clip > 0.0, "train: gradient clip must be positive");
  }
};

/// Discounted returns for every position of the buffer, by backward
/// recursion from the bootstrap value.
inline std::vector<double> nstep_return(const RolloutBuffer& buffer, double gamma) {
  require(!buffer.steps.empty(), "nstep_return: empty buffer");
  std::vector<double> out(buffer.steps.size());
  double running = buffer.bootstrap_value;
  for (std::size_t i = buffer.steps.size(); i-- > 0;) {
    if (buffer.steps[i].done) running = 0.0;
    running = buffer.steps[i].reward + gamma * running;
    out[i] = running;
  }
  return out;
}

inline std::vector<double> advantage(std::span<const double> returns, std::span<const double> values) {
  require(returns.size() == values.size(), "advantage: length mismatch");
  std::vector<double> out(returns.size());
  for (std::size_t i = 0; i < returns.size(); ++i) out[i] = returns[i] - values[i];
  return out;
}

struct LossGrads {
  GradientSet grads;
  double loss = 0.0;
};

/// Gradient of the minimized actor loss
///   -sum_n [ log pi(a_n | s_n) * adv_n + entropy_coef * H(pi(. | s_n)) ]
/// with advantages held constant.
inline LossGrads actor_loss_grads(const ParamSet& actor, const RolloutBuffer& buffer,
                                  std::span<const double> advantages, double entropy_coef) {
  require(advantages.size() == buffer.steps.size(), "actor_loss_grads: advantage length mismatch");
  LossGrads out{GradientSet::zeros_like(actor), 0.0};
  const double entropy = gaussian_entropy(actor.free_block());
  for (std::size_t n = 0; n < buffer.steps.size(); ++n) {
    const auto& t = buffer.steps[n];
    double lp = accumulate_policy_grad(actor, t.features, t.raw_action, -advantages[n],
                                       -entropy_coef, out.grads);
    out.loss -= lp * advantages[n] + entropy_coef * entropy;
  }
  return out;
}

/// Gradient of sum_n (return_n - V(s_n))^2.
inline LossGrads critic_loss_grads(const ParamSet& critic, const RolloutBuffer& buffer,
                                   std::span<const double> returns) {
  require(returns.size() == buffer.steps.size(), "critic_loss_grads: return length mismatch");
  LossGrads out{GradientSet::zeros_like(critic), 0.0};
  for (std::size_t n = 0; n < buffer.steps.size(); ++n) {
    ForwardTrace trace;
    double v = mlp_forward(critic, buffer.steps[n].features, &trace)[0];
    double err = v - returns[n];
    const double d[1] = {2.0 * err};
    mlp_backward(critic, trace, d, out.grads);
    out.loss += err * err;
  }
  return out;
}

/// Collects transitions from one private environment, resetting it with a
/// fresh derived seed whenever an episode ends.
class RolloutCollector {
 public:
  RolloutCollector(Environment env, std::uint64_t seed)
      : env_(std::move(env)), rng_(derive_seed(seed, 0xac7)), seed_(seed) {}

  RolloutBuffer collect(const ParamSet& actor, const ParamSet& critic, std::size_t max_steps) {
    RolloutBuffer buf;
    for (std::size_t i = 0; i < max_steps; ++i) {
      if (needs_reset_) {
        env_.reset(derive_seed(seed_, episodes_++));
        needs_reset_ = false;
      }
      Transition t;
      t.features = env_.features();
      PolicyOutput pi = forward_actor(actor, t.features, &rng_);
      t.value = forward_critic(critic, t.features);
      t.raw_action = pi.raw_action;
      t.log_prob = pi.log_prob;
      StepOutcome o = env_.step(std::span<const double>(pi.action));
      t.reward = o.reward;
      t.done = o.done;
      ++env_steps_;
      buf.steps.push_back(std::move(t));
      if (o.done) {
        needs_reset_ = true;
        break;
      }
    }
    buf.bootstrap_value = needs_reset_ ? 0.0 : forward_critic(critic, env_.features());
    return buf;
  }

  /// Runs whole episodes until `episodes` have finished.
  std::vector<RolloutBuffer> collect_episodes(const ParamSet& actor, const ParamSet& critic,
                                              std::size_t episodes, std::size_t horizon) {
    std::vector<RolloutBuffer> out;
    needs_reset_ = true;
    for (std::size_t e = 0; e < episodes; ++e) {
      do {
        out.push_back(collect(actor, critic, horizon));
      } while (!needs_reset_);
    }
    return out;
  }

  std::uint64_t env_steps() const { return env_steps_; }
  const Environment& environment() const { return env_; }

 private:
  Environment env_;
  Rng rng_;
  std::uint64_t seed_;
  std::uint64_t episodes_ = 0;
  std::uint64_t env_steps_ = 0;
  bool needs_reset_ = true;
};

/// Everything a worker submits for one rollout; reproducible offline from
/// the rollout and the parameter snapshot it was collected under.
struct UpdateComputation {
  GradientSet actor_grad;
  GradientSet critic_grad;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
};

inline UpdateComputation compute_update(const ParamSet& actor, const ParamSet& critic,
                                        const RolloutBuffer& buffer, const TrainConfig& cfg) {
  std::vector<double> returns = nstep_return(buffer, cfg.gamma);
  std::vector<double> adv = advantage(returns, buffer.values());
  LossGrads a = actor_loss_grads(actor, buffer, adv, cfg.entropy_coef);
  LossGrads c = critic_loss_grads(critic, buffer, returns);
  clip_by_global_norm(a.grads, cfg.grad_clip);
  clip_by_global_norm(c.grads, cfg.grad_clip);
  return {std::move(a.grads), std::move(c.grads), a.loss, c.loss,
          gaussian_entropy(actor.free_block())};
}

struct ModelSnapshot {
  ParamSet actor;
  ParamSet critic;
  std::uint64_t version = 0;
};

/// Shared actor/critic parameters. Readers take immutable published
/// snapshots; updates go through apply(), one at a time.
class GlobalModel {
 public:
  GlobalModel(ParamSet actor, ParamSet critic, RmsPropState actor_opt, RmsPropState critic_opt,
              std::uint64_t version = 0)
      : actor_(std::move(actor)),
        critic_(std::move(critic)),
        actor_opt_(std::move(actor_opt)),
        critic_opt_(std::move(critic_opt)),
        version_(version) {
    publish();
  }

  std::shared_ptr<const ModelSnapshot> snapshot() const {
    std::lock_guard lock(publish_mu_);
    return current_;
  }

  /// Applies one RMSProp step to each network and returns the new version.
  std::uint64_t apply(const GradientSet& actor_grad, const GradientSet& critic_grad) {
    std::lock_guard lock(update_mu_);
    rmsprop_step(actor_opt_, actor_, actor_grad);
    rmsprop_step(critic_opt_, critic_, critic_grad);
    ++version_;
    actor_.version = critic_.version = version_;
    publish();
    return version_;
  }

  std::uint64_t version() const { return snapshot()->version; }

  /// Consistent copy of parameters and optimizer state (for checkpoints).
  struct State {
    ParamSet actor, critic;
    RmsPropState actor_opt, critic_opt;
    std::uint64_t version;
  };
  State state() const {
    std::lock_guard lock(update_mu_);
    return {actor_, critic_, actor_opt_, critic_opt_, version_};
  }

 private:
  void publish() {
    auto snap = std::make_shared<const ModelSnapshot>(ModelSnapshot{actor_, critic_, version_});
    std::lock_guard lock(publish_mu_);
    current_ = std::move(snap);
  }

  ParamSet actor_;
  ParamSet critic_;
  RmsPropState actor_opt_;
  RmsPropState critic_opt_;
  std::uint64_t version_;
  mutable std::mutex update_mu_;
  mutable std::mutex publish_mu_;
  std::shared_ptr<const ModelSnapshot> current_;
};

inline std::uint64_t global_update(GlobalModel& model, const GradientSet& actor_grad,
                                   const GradientSet& critic_grad) {
  return model.apply(actor_grad, critic_grad);
}

/// Fresh seeded actor/critic pair sized for the scenario.
inline GlobalModel make_global_model(const Scenario& sc, const TrainConfig& cfg) {
  Rng rng(derive_seed(cfg.seed, 0x1417));
  std::size_t features = feature_dimension(sc.fleet);
  ParamSet actor = make_actor(features, cfg.hidden, Action::dimension(sc.fleet), rng);
  ParamSet critic = make_critic(features, cfg.hidden, rng);
  auto aopt = RmsPropState::for_params(actor, cfg.actor_lr, cfg.rms_decay, cfg.rms_stability);
  auto copt = RmsPropState::for_params(critic, cfg.critic_lr, cfg.rms_decay, cfg.rms_stability);
  return GlobalModel(std::move(actor), std::move(critic), std::move(aopt), std::move(copt));
}

struct UpdateRecord {
  std::size_t worker = 0;
  std::uint64_t update_index = 0;  // global version after the update
  std::uint64_t env_steps = 0;     // steps taken by this worker so far
  double mean_reward = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
  double wall_seconds = 0.0;  // since training start
};

using UpdateSink = std::function<void(const UpdateRecord&)>;

/// Runs `cfg.max_updates` updates across `cfg.num_workers` workers. With one
/// worker everything happens on the calling thread and the run is
/// deterministic. Records are returned in update order.
inline std::vector<UpdateRecord> train_a3c(std::shared_ptr<const Scenario> scenario,
                                           const Task& task, const TrainConfig& cfg,
                                           GlobalModel& model, const UpdateSink& sink = {}) {
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  std::atomic<std::size_t> tickets{0};
  std::mutex records_mu;
  std::vector<UpdateRecord> records;

  auto worker = [&](std::size_t id) {
    RolloutCollector collector(Environment(scenario, task), derive_seed(cfg.seed, 1000 + id));
    while (tickets.fetch_add(1) < cfg.max_updates) {
      auto snap = model.snapshot();
      RolloutBuffer buffer = collector.collect(snap->actor, snap->critic, cfg.horizon);
      UpdateComputation c = compute_update(snap->actor, snap->critic, buffer, cfg);
      UpdateRecord rec;
      rec.worker = id;
      rec.update_index = global_update(model, c.actor_grad, c.critic_grad);
      rec.env_steps = collector.env_steps();
      rec.mean_reward = buffer.mean_reward();
      rec.actor_loss = c.actor_loss;
      rec.critic_loss = c.critic_loss;
      rec.entropy = c.entropy;
      rec.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      std::lock_guard lock(records_mu);
      records.push_back(rec);
      if (sink) sink(rec);
    }
  };

  if (cfg.num_workers == 1) {
    worker(0);
  } else {
    std::exception_ptr failure;
    {
      std::vector<std::jthread> threads;
      for (std::size_t w = 0; w < cfg.num_workers; ++w) {
        threads.emplace_back([&, w] {
          try {
            worker(w);
          } catch (...) {
            tickets = cfg.max_updates;  // stop the others
            std::lock_guard lock(records_mu);
            if (!failure) failure = std::current_exception();
          }
        });
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.update_index < b.update_index; });
  return records;
}

}  // namespace uavnet
