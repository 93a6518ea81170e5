#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "support.hpp"
#include "uavnet/a3c.hpp"

using namespace uavnet;
using testing_support::max_relative_error;
using testing_support::numeric_gradient;
using testing_support::random_buffer;
using testing_support::random_net;

namespace {

// Direct double sum: each return written out term by term.
std::vector<double> direct_returns(const RolloutBuffer& b, double gamma) {
  const std::size_t L = b.steps.size();
  std::vector<double> out(L);
  for (std::size_t n = 0; n < L; ++n) {
    long double s = 0.0L;
    bool cut = false;
    std::size_t i = 0;
    for (; n + i < L; ++i) {
      s += std::pow(static_cast<long double>(gamma), static_cast<long double>(i)) * b.steps[n + i].reward;
      if (b.steps[n + i].done) {
        cut = true;
        break;
      }
    }
    if (!cut) s += std::pow(static_cast<long double>(gamma), static_cast<long double>(L - n)) * b.bootstrap_value;
    out[n] = static_cast<double>(s);
  }
  return out;
}

RolloutBuffer two_step(double r0, double r1, double boot) {
  RolloutBuffer b;
  b.steps.resize(2);
  b.steps[0].reward = r0;
  b.steps[1].reward = r1;
  b.bootstrap_value = boot;
  return b;
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.hidden = {16};
  cfg.max_updates = 20;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST(NStepReturn, HandExample) {
  auto r = nstep_return(two_step(1, 2, 4), 0.5);
  EXPECT_DOUBLE_EQ(r[0], 3.0);
  EXPECT_DOUBLE_EQ(r[1], 4.0);
}

TEST(NStepReturn, ZeroDiscountAndZeroRewards) {
  auto r = nstep_return(two_step(1.5, -2, 9), 0.0);
  EXPECT_EQ(r, (std::vector<double>{1.5, -2.0}));
  RolloutBuffer z = two_step(0, 0, 0);
  z.steps[1].done = true;
  EXPECT_EQ(nstep_return(z, 0.9), (std::vector<double>{0.0, 0.0}));
  EXPECT_THROW(nstep_return(RolloutBuffer{}, 0.9), Error);
}

TEST(NStepReturn, MatchesDirectSumOnRandomBuffers) {
  Rng rng(1);
  for (int trial = 0; trial < 1000; ++trial) {
    RolloutBuffer b = random_buffer(rng, 1 + rng.index(20), 2, 1, rng.index(2) == 1);
    double gamma = rng.uniform(0.0, 1.0);
    auto fast = nstep_return(b, gamma);
    auto slow = direct_returns(b, gamma);
    for (std::size_t i = 0; i < fast.size(); ++i)
      ASSERT_LE(std::abs(fast[i] - slow[i]), 1e-12 * std::max(1.0, std::abs(slow[i])));
  }
}

TEST(Advantage, Examples) {
  std::vector<double> ret{3.0, 1.0}, val{1.0, 1.0};
  EXPECT_EQ(advantage(ret, val), (std::vector<double>{2.0, 0.0}));
  EXPECT_EQ(advantage(ret, ret), (std::vector<double>{0.0, 0.0}));
  std::vector<double> shifted{1.5, 1.5};
  auto a = advantage(ret, shifted);
  EXPECT_DOUBLE_EQ(a[0], 2.0 - 0.5);
  EXPECT_DOUBLE_EQ(a[1], 0.0 - 0.5);
  std::vector<double> one{1.0};
  EXPECT_THROW(advantage(ret, one), Error);
}

TEST(ActorLoss, ZeroAdvantageZeroEntropyGivesZeroGradient) {
  Rng rng(2);
  ParamSet a = random_net(rng, 3, 2, 2, ParamRole::kActor);
  RolloutBuffer b = random_buffer(rng, 5, 3, 2, false);
  std::vector<double> adv(5, 0.0);
  for (double g : actor_loss_grads(a, b, adv, 0.0).grads.values) EXPECT_EQ(g, 0.0);
}

TEST(ActorLoss, SingleTransitionMatchesFiniteDifferences) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ParamSet a = random_net(rng, 3, 2, 2, ParamRole::kActor);
    RolloutBuffer b = random_buffer(rng, 1, 3, 2, false);
    std::vector<double> adv{rng.uniform(-3, 3)};
    auto loss = [&](const ParamSet& q) {
      auto mean = mlp_forward(q, b.steps[0].features);
      return -gaussian_log_prob(mean, q.free_block(), b.steps[0].raw_action) * adv[0];
    };
    LossGrads g = actor_loss_grads(a, b, adv, 0.0);
    EXPECT_NEAR(g.loss, loss(a), 1e-12);
    EXPECT_LT(max_relative_error(g.grads.values, numeric_gradient(loss, a)), 1e-4);
  }
}

TEST(ActorLoss, EntropyTermMatchesFiniteDifferences) {
  Rng rng(4);
  ParamSet a = random_net(rng, 3, 4, 4, ParamRole::kActor);
  RolloutBuffer b = random_buffer(rng, 3, 3, 4, false);
  std::vector<double> adv(3, 0.0);
  const double phi = 0.05;
  auto entropy = [&](const ParamSet& q) { return gaussian_entropy(q.free_block()); };
  auto fd = numeric_gradient(entropy, a);
  LossGrads g = actor_loss_grads(a, b, adv, phi);
  // Minimized loss: -phi * H per transition.
  for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_NEAR(g.grads.values[i], -3.0 * phi * fd[i], 1e-8);
}

TEST(CriticLoss, PerfectCriticHasZeroGradient) {
  Rng rng(5);
  ParamSet c = random_net(rng, 3, 1, 0, ParamRole::kCritic);
  RolloutBuffer b = random_buffer(rng, 4, 3, 1, false);
  std::vector<double> ret;
  for (const auto& t : b.steps) ret.push_back(forward_critic(c, t.features));
  LossGrads g = critic_loss_grads(c, b, ret);
  EXPECT_EQ(g.loss, 0.0);
  for (double v : g.grads.values) EXPECT_EQ(v, 0.0);
}

TEST(CriticLoss, LinearClosedForm) {
  Rng rng(6);
  std::vector<std::size_t> none;
  ParamSet c = make_critic(2, none, rng);
  RolloutBuffer b = random_buffer(rng, 1, 2, 1, false);
  std::vector<double> ret{0.4};
  double v = forward_critic(c, b.steps[0].features);
  LossGrads g = critic_loss_grads(c, b, ret);
  EXPECT_DOUBLE_EQ(g.grads.values[0], 2 * (v - 0.4) * b.steps[0].features[0]);
  EXPECT_DOUBLE_EQ(g.grads.values[1], 2 * (v - 0.4) * b.steps[0].features[1]);
  EXPECT_DOUBLE_EQ(g.grads.values[2], 2 * (v - 0.4));
}

TEST(CriticLoss, RandomNetsMatchFiniteDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    ParamSet c = random_net(rng, 4, 1, 0, ParamRole::kCritic);
    RolloutBuffer b = random_buffer(rng, 6, 4, 1, trial % 2 == 0);
    std::vector<double> ret = nstep_return(b, 0.9);
    auto loss = [&](const ParamSet& q) {
      double s = 0.0;
      for (std::size_t n = 0; n < b.steps.size(); ++n) {
        double e = forward_critic(q, b.steps[n].features) - ret[n];
        s += e * e;
      }
      return s;
    };
    LossGrads g = critic_loss_grads(c, b, ret);
    EXPECT_NEAR(g.loss, loss(c), 1e-10);
    EXPECT_LT(max_relative_error(g.grads.values, numeric_gradient(loss, c)), 1e-4);
  }
}

TEST(GlobalUpdate, ZeroGradientBumpsVersionOnly) {
  auto sc = testing_support::smoke_scenario();
  GlobalModel m = make_global_model(*sc, small_config());
  auto before = m.snapshot();
  auto v = global_update(m, GradientSet::zeros_like(before->actor), GradientSet::zeros_like(before->critic));
  EXPECT_EQ(v, 1u);
  EXPECT_EQ(m.snapshot()->actor.values, before->actor.values);
  EXPECT_EQ(m.snapshot()->critic.values, before->critic.values);
  EXPECT_EQ(before->version, 0u);
}

TEST(GlobalUpdate, EqualsDirectRmsPropStep) {
  auto sc = testing_support::smoke_scenario();
  TrainConfig cfg = small_config();
  GlobalModel m = make_global_model(*sc, cfg);
  auto s0 = m.state();
  Rng rng(8);
  GradientSet ga = GradientSet::zeros_like(s0.actor), gc = GradientSet::zeros_like(s0.critic);
  for (double& v : ga.values) v = rng.normal();
  for (double& v : gc.values) v = rng.normal();
  global_update(m, ga, gc);
  rmsprop_step(s0.actor_opt, s0.actor, ga);
  rmsprop_step(s0.critic_opt, s0.critic, gc);
  EXPECT_EQ(m.state().actor.values, s0.actor.values);
  EXPECT_EQ(m.state().critic.values, s0.critic.values);
  EXPECT_EQ(m.state().actor_opt.mean_square, s0.actor_opt.mean_square);
}

TEST(GlobalUpdate, OrderMattersAndEachIsAppliedOnce) {
  auto sc = testing_support::smoke_scenario();
  TrainConfig cfg = small_config();
  Rng rng(9);
  GlobalModel ab = make_global_model(*sc, cfg), ba = make_global_model(*sc, cfg);
  auto s = ab.state();
  GradientSet a = GradientSet::zeros_like(s.actor), b = a;
  GradientSet c0 = GradientSet::zeros_like(s.critic);
  for (double& v : a.values) v = rng.normal();
  for (double& v : b.values) v = 3.0 * rng.normal();
  global_update(ab, a, c0);
  global_update(ab, b, c0);
  global_update(ba, b, c0);
  global_update(ba, a, c0);
  EXPECT_EQ(ab.version(), 2u);
  EXPECT_EQ(ba.version(), 2u);
  EXPECT_NE(ab.state().actor.values, ba.state().actor.values);

  auto manual = s;
  rmsprop_step(manual.actor_opt, manual.actor, a);
  rmsprop_step(manual.actor_opt, manual.actor, b);
  EXPECT_EQ(ab.state().actor.values, manual.actor.values);
  manual = s;
  rmsprop_step(manual.actor_opt, manual.actor, b);
  rmsprop_step(manual.actor_opt, manual.actor, a);
  EXPECT_EQ(ba.state().actor.values, manual.actor.values);
}

TEST(GlobalUpdate, ShapeMismatchThrows) {
  auto sc = testing_support::smoke_scenario();
  GlobalModel m = make_global_model(*sc, small_config());
  auto s = m.snapshot();
  EXPECT_THROW(global_update(m, GradientSet::zeros_like(s->critic), GradientSet::zeros_like(s->critic)), Error);
}

TEST(Training, SingleWorkerIsDeterministic) {
  auto sc = testing_support::smoke_scenario();
  Task t = sample_task(sc->tasks, 1);
  TrainConfig cfg = small_config();
  GlobalModel m1 = make_global_model(*sc, cfg), m2 = make_global_model(*sc, cfg);
  auto r1 = train_a3c(sc, t, cfg, m1), r2 = train_a3c(sc, t, cfg, m2);
  ASSERT_EQ(r1.size(), cfg.max_updates);
  for (std::size_t i = 0; i < r1.size(); ++i) {
    EXPECT_EQ(r1[i].update_index, i + 1);
    EXPECT_EQ(r1[i].mean_reward, r2[i].mean_reward);
    EXPECT_EQ(r1[i].actor_loss, r2[i].actor_loss);
    EXPECT_EQ(r1[i].critic_loss, r2[i].critic_loss);
    EXPECT_EQ(r1[i].env_steps, r2[i].env_steps);
  }
  EXPECT_EQ(m1.state().actor.values, m2.state().actor.values);
}

TEST(Training, FourWorkersShareTheUpdateBudget) {
  auto sc = testing_support::smoke_scenario();
  Task t = sample_task(sc->tasks, 1);
  TrainConfig cfg = small_config();
  cfg.num_workers = 4;
  cfg.max_updates = 40;
  GlobalModel m = make_global_model(*sc, cfg);
  std::size_t sunk = 0;
  auto recs = train_a3c(sc, t, cfg, m, [&](const UpdateRecord&) { ++sunk; });
  EXPECT_EQ(recs.size(), 40u);
  EXPECT_EQ(sunk, 40u);
  EXPECT_EQ(m.version(), 40u);
  std::set<std::uint64_t> idx;
  for (const auto& r : recs) idx.insert(r.update_index);
  EXPECT_EQ(idx.size(), 40u);
  EXPECT_EQ(*idx.begin(), 1u);
  EXPECT_EQ(*idx.rbegin(), 40u);
}

TEST(Training, SubmittedGradientsMatchOfflineReplay) {
  auto sc = testing_support::smoke_scenario();
  Task t = sample_task(sc->tasks, 2);
  TrainConfig cfg = small_config();
  cfg.max_updates = 3;
  GlobalModel trained = make_global_model(*sc, cfg);
  train_a3c(sc, t, cfg, trained);

  GlobalModel fresh = make_global_model(*sc, cfg);
  auto s = fresh.state();
  RolloutCollector collector(Environment(sc, t), derive_seed(cfg.seed, 1000));
  for (std::size_t u = 0; u < cfg.max_updates; ++u) {
    RolloutBuffer buf = collector.collect(s.actor, s.critic, cfg.horizon);
    ASSERT_LE(buf.steps.size(), cfg.horizon);
    // Unclipped actor gradient against finite differences of the loss.
    auto ret = nstep_return(buf, cfg.gamma);
    auto adv = advantage(ret, buf.values());
    auto actor_loss = [&](const ParamSet& q) { return actor_loss_grads(q, buf, adv, cfg.entropy_coef).loss; };
    if (u == 0) {
      LossGrads lg = actor_loss_grads(s.actor, buf, adv, cfg.entropy_coef);
      EXPECT_LT(max_relative_error(lg.grads.values, numeric_gradient(actor_loss, s.actor)), 1e-4);
    }
    UpdateComputation c = compute_update(s.actor, s.critic, buf, cfg);
    EXPECT_LE(c.actor_grad.norm(), cfg.grad_clip * (1 + 1e-12));
    rmsprop_step(s.actor_opt, s.actor, c.actor_grad);
    rmsprop_step(s.critic_opt, s.critic, c.critic_grad);
  }
  EXPECT_EQ(trained.state().actor.values, s.actor.values);
  EXPECT_EQ(trained.state().critic.values, s.critic.values);
}

TEST(Training, CollectorRespectsHorizonAndEpisodeEnd) {
  auto sc = testing_support::smoke_scenario();
  Task t = sample_task(sc->tasks, 3);
  GlobalModel m = make_global_model(*sc, small_config());
  auto s = m.snapshot();
  RolloutCollector collector(Environment(sc, t), 5);
  std::size_t total = 0;
  for (int i = 0; i < 6; ++i) {
    RolloutBuffer b = collector.collect(s->actor, s->critic, 7);
    ASSERT_LE(b.steps.size(), 7u);
    total += b.steps.size();
    if (b.steps.back().done) {
      EXPECT_EQ(b.bootstrap_value, 0.0);
    }
    for (std::size_t n = 0; n + 1 < b.steps.size(); ++n) EXPECT_FALSE(b.steps[n].done);
  }
  EXPECT_EQ(total, collector.env_steps());
  auto eps = collector.collect_episodes(s->actor, s->critic, 2, 7);
  std::size_t steps = 0;
  for (const auto& b : eps) steps += b.steps.size();
  EXPECT_EQ(steps, 2 * sc->fleet.num_slots);
}

TEST(TrainConfig, RejectsInvalidValues) {
  TrainConfig c;
  c.gamma = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.num_workers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.entropy_coef = -1;
  EXPECT_THROW(c.validate(), ConfigError);
}
