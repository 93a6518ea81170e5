#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "support.hpp"
#include "uavnet/nn.hpp"

using namespace uavnet;
using testing_support::max_relative_error;
using testing_support::numeric_gradient;
using testing_support::random_net;
using testing_support::random_vector;

namespace {

// Independent density: product of 1-D normal pdfs, logged at the end.
long double normal_log_density(const std::vector<double>& mu, const std::vector<double>& log_sigma,
                               const std::vector<double>& x) {
  long double log_p = 0.0L;
  for (std::size_t d = 0; d < mu.size(); ++d) {
    long double sigma = std::exp(static_cast<long double>(log_sigma[d]));
    long double z = (x[d] - mu[d]) / sigma;
    long double pdf = std::exp(-z * z / 2.0L) / (sigma * std::sqrt(2.0L * std::numbers::pi_v<long double>));
    log_p += std::log(pdf);
  }
  return log_p;
}

// Re-walk of the layer chain using explicit matrix indexing.
double recompute(const ParamSet& p, const std::vector<double>& x) {
  std::vector<long double> a(x.begin(), x.end());
  std::size_t off = 0;
  for (std::size_t l = 0; l < p.shape.layers.size(); ++l) {
    std::size_t in = p.shape.layers[l].in, out = p.shape.layers[l].out;
    std::vector<long double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      long double acc = p.values[off + in * out + o];
      for (std::size_t i = 0; i < in; ++i) acc += p.values[off + o * in + i] * a[i];
      z[o] = l + 1 < p.shape.layers.size() ? std::tanh(acc) : acc;
    }
    off += in * out + out;
    a = z;
  }
  return static_cast<double>(a[0]);
}

ParamSet zero_actor(std::size_t in, std::size_t d) {
  Rng rng(1);
  std::vector<std::size_t> hidden{4};
  ParamSet p = make_actor(in, hidden, d, rng);
  std::fill(p.values.begin(), p.values.end(), 0.0);
  return p;
}

}  // namespace

TEST(ForwardActor, ZeroNetwork) {
  ParamSet p = zero_actor(3, 5);
  std::vector<double> f{0.3, -1.0, 2.0};
  PolicyOutput out = forward_actor(p, f);
  for (double m : out.mean) EXPECT_EQ(m, 0.0);
  EXPECT_NEAR(out.entropy, 5 * 0.5 * std::log(2 * std::numbers::pi * std::numbers::e), 1e-14);
  EXPECT_NEAR(out.log_prob, -2.5 * std::log(2 * std::numbers::pi), 1e-14);
  for (double a : out.action) EXPECT_EQ(a, 0.0);
}

TEST(ForwardActor, LogProbMatchesDensityCalculator) {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    ParamSet p = random_net(rng, 4, 3, 3, ParamRole::kActor);
    for (double& v : p.free_block()) v = rng.uniform(-1.5, 0.5);
    std::vector<double> f = random_vector(rng, 4);
    PolicyOutput out = forward_actor(p, f, &rng);
    long double want = normal_log_density(out.mean, out.log_std, out.raw_action);
    EXPECT_NEAR(out.log_prob, static_cast<double>(want), 1e-10);
    for (std::size_t d = 0; d < 3; ++d) EXPECT_DOUBLE_EQ(out.action[d], std::tanh(out.raw_action[d]));
  }
}

TEST(ForwardActor, SamplingIsSeeded) {
  Rng init(3);
  ParamSet p = random_net(init, 4, 2, 2, ParamRole::kActor);
  std::vector<double> f{1, 2, 3, 4};
  Rng a(9), b(9);
  EXPECT_EQ(forward_actor(p, f, &a).raw_action, forward_actor(p, f, &b).raw_action);
  EXPECT_EQ(forward_actor(p, f).raw_action, forward_actor(p, f).mean);
}

TEST(ForwardActor, RejectsBadInput) {
  ParamSet p = zero_actor(3, 2);
  std::vector<double> f{1.0, 2.0};
  EXPECT_THROW(forward_actor(p, f), Error);
  std::vector<double> ok{1.0, 2.0, 3.0};
  p.values[0] = std::nan("");
  EXPECT_THROW(forward_actor(p, ok), Error);
}

TEST(ForwardCritic, ZeroAndAffineCases) {
  Rng rng(4);
  std::vector<std::size_t> none;
  ParamSet c = make_critic(3, none, rng);
  std::vector<double> zero(3, 0.0);
  std::fill(c.values.begin(), c.values.end(), 0.0);
  EXPECT_EQ(forward_critic(c, zero), 0.0);
  c.bias(0)[0] = 1.75;
  c.weights(0)[1] = 3.0;
  EXPECT_EQ(forward_critic(c, zero), 1.75);
}

TEST(ForwardCritic, MatchesRecomputation) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    ParamSet c = random_net(rng, 6, 1, 0, ParamRole::kCritic, 32);
    std::vector<double> f = random_vector(rng, 6);
    double v = forward_critic(c, f);
    EXPECT_NEAR(v, recompute(c, f), 1e-12 * std::max(1.0, std::abs(v)));
  }
}

TEST(Backward, ConstantLossGivesZeroGradient) {
  Rng rng(6);
  ParamSet c = random_net(rng, 3, 2, 0, ParamRole::kCritic);
  ForwardTrace trace;
  std::vector<double> f = random_vector(rng, 3);
  mlp_forward(c, f, &trace);
  GradientSet g = GradientSet::zeros_like(c);
  std::vector<double> d_out(2, 0.0);
  mlp_backward(c, trace, d_out, g);
  for (double v : g.values) EXPECT_EQ(v, 0.0);
}

TEST(Backward, LinearSquaredErrorClosedForm) {
  Rng rng(7);
  std::vector<std::size_t> none;
  ParamSet c = make_critic(3, none, rng);
  std::vector<double> x{0.5, -2.0, 1.5};
  double target = 0.7;
  double pred = forward_critic(c, x);
  GradientSet g = GradientSet::zeros_like(c);
  accumulate_value_grad(c, x, 2.0 * (pred - target), g);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(g.values[i], 2.0 * (pred - target) * x[i], 1e-15);
  EXPECT_NEAR(g.values[3], 2.0 * (pred - target), 1e-15);
}

TEST(Backward, MissingForwardContextThrows) {
  Rng rng(8);
  ParamSet c = random_net(rng, 3, 1, 0, ParamRole::kCritic);
  GradientSet g = GradientSet::zeros_like(c);
  ForwardTrace empty;
  std::vector<double> d{1.0};
  EXPECT_THROW(mlp_backward(c, empty, d, g), Error);
}

TEST(Backward, RandomNetsMatchFiniteDifferences) {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    ParamSet p = random_net(rng, 5, 3, 0, ParamRole::kCritic, 32);
    std::vector<double> x = random_vector(rng, 5);
    std::vector<double> target = random_vector(rng, 3);
    auto loss = [&](const ParamSet& q) {
      auto y = mlp_forward(q, x);
      double s = 0.0;
      for (std::size_t i = 0; i < 3; ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
      return s;
    };
    ForwardTrace trace;
    auto y = mlp_forward(p, x, &trace);
    std::vector<double> d(3);
    for (std::size_t i = 0; i < 3; ++i) d[i] = 2.0 * (y[i] - target[i]);
    GradientSet g = GradientSet::zeros_like(p);
    mlp_backward(p, trace, d, g);
    EXPECT_LT(max_relative_error(g.values, numeric_gradient(loss, p)), 1e-4) << "trial " << trial;
  }
}

TEST(Backward, PolicyLogProbAndEntropyMatchFiniteDifferences) {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    ParamSet p = random_net(rng, 4, 3, 3, ParamRole::kActor);
    std::vector<double> x = random_vector(rng, 4);
    std::vector<double> raw = random_vector(rng, 3);
    double c_lp = rng.uniform(-2, 2), c_h = rng.uniform(-0.5, 0.5);
    auto objective = [&](const ParamSet& q) {
      auto mean = mlp_forward(q, x);
      return c_lp * gaussian_log_prob(mean, q.free_block(), raw) + c_h * gaussian_entropy(q.free_block());
    };
    GradientSet g = GradientSet::zeros_like(p);
    accumulate_policy_grad(p, x, raw, c_lp, c_h, g);
    EXPECT_LT(max_relative_error(g.values, numeric_gradient(objective, p)), 1e-4) << "trial " << trial;
  }
}

TEST(RmsProp, ZeroGradientLeavesParameters) {
  Rng rng(11);
  ParamSet p = random_net(rng, 3, 1, 0, ParamRole::kCritic);
  ParamSet before = p;
  RmsPropState s = RmsPropState::for_params(p, 1e-3);
  rmsprop_step(s, p, GradientSet::zeros_like(p));
  EXPECT_EQ(p.values, before.values);
  for (double m : s.mean_square) EXPECT_EQ(m, 0.0);
}

TEST(RmsProp, HandEvaluatedStep) {
  Rng rng(12);
  std::vector<std::size_t> none;
  ParamSet p = make_critic(1, none, rng);
  double w0 = p.values[0];
  RmsPropState s = RmsPropState::for_params(p, 0.001, 0.9, 1e-8);
  GradientSet g = GradientSet::zeros_like(p);
  g.values[0] = 0.1;
  rmsprop_step(s, p, g);
  EXPECT_NEAR(s.mean_square[0], 1e-3, 1e-18);
  EXPECT_NEAR(w0 - p.values[0], 3.1623e-3, 1e-7);
  double first = w0 - p.values[0];
  double w1 = p.values[0];
  rmsprop_step(s, p, g);
  EXPECT_LT(w1 - p.values[0], first);
}

TEST(RmsProp, RejectsBadHyperparameters) {
  Rng rng(13);
  ParamSet p = random_net(rng, 2, 1, 0, ParamRole::kCritic);
  EXPECT_THROW(RmsPropState::for_params(p, 1e-3, 1.0), ConfigError);
  EXPECT_THROW(RmsPropState::for_params(p, 1e-3, 0.9, 0.0), ConfigError);
  RmsPropState s = RmsPropState::for_params(p, 1e-3);
  ParamSet other = random_net(rng, 5, 1, 0, ParamRole::kCritic);
  EXPECT_THROW(rmsprop_step(s, other, GradientSet::zeros_like(p)), Error);
}

TEST(Gaussian, EntropyIsPermutationInvariant) {
  Rng rng(14);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> ls = random_vector(rng, 6);
    double h = gaussian_entropy(ls);
    std::reverse(ls.begin(), ls.end());
    std::swap(ls[0], ls[3]);
    EXPECT_NEAR(gaussian_entropy(ls), h, 1e-12);
  }
}

TEST(Gaussian, TanhJacobianMatchesDirectFormula) {
  for (double u : {-3.0, -0.5, 0.0, 0.2, 1.7, 4.0}) {
    std::vector<double> raw{u};
    EXPECT_NEAR(tanh_log_jacobian(raw), std::log(1.0 - std::tanh(u) * std::tanh(u)), 1e-10);
  }
  std::vector<double> big{40.0};
  EXPECT_TRUE(std::isfinite(tanh_log_jacobian(big)));
}

TEST(ParamSet, CloneIsIndependent) {
  Rng rng(15);
  ParamSet p = random_net(rng, 3, 2, 2, ParamRole::kActor);
  ParamSet q = p;
  EXPECT_EQ(p, q);
  q.values[0] += 1.0;
  q.free_block()[0] = 5.0;
  EXPECT_NE(p.values[0], q.values[0]);
  EXPECT_NE(p.free_block()[0], 5.0);
}

TEST(ParamSet, ShapesChain) {
  Rng rng(16);
  std::vector<std::size_t> hidden{64, 64};
  ParamSet a = make_actor(29, hidden, 24, rng);
  EXPECT_TRUE(a.shape.chains());
  EXPECT_EQ(a.values.size(), 29u * 64 + 64 + 64 * 64 + 64 + 64 * 24 + 24 + 24);
  for (double v : a.free_block()) EXPECT_EQ(v, 0.0);
  for (double w : a.weights(0)) EXPECT_LE(std::abs(w), 1.0 / std::sqrt(29.0));
}

TEST(ClipByGlobalNorm, ScalesOnlyWhenAbove) {
  GradientSet g{ParamShape{{{1, 2}}, 0}, {3.0, 4.0, 0.0, 0.0}, true};
  EXPECT_DOUBLE_EQ(clip_by_global_norm(g, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(g.values[0], 3.0);
  clip_by_global_norm(g, 1.0);
  EXPECT_NEAR(g.norm(), 1.0, 1e-15);
}
