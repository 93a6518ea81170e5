#pragma once

// Small dense networks with exact analytic gradients: a tanh MLP core, a
// diagonal-Gaussian policy head with a state-independent log-std block, a
// scalar value head, and RMSProp.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <span>
#include <vector>

#include "uavnet/error.hpp"
#include "uavnet/random.hpp"

namespace uavnet {

struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Layer table plus a trailing block of free parameters (the actor's
/// log-std vector). Flat layout: for each layer W (out x in, row-major) then
/// b (out), followed by the free block.
struct ParamShape {
  std::vector<LayerShape> layers;
  std::size_t free = 0;

  friend bool operator==(const ParamShape&, const ParamShape&) = default;

  std::size_t size() const {
    std::size_t n = free;
    for (const auto& l : layers) n += l.out * l.in + l.out;
    return n;
  }
  std::size_t input_dim() const { return layers.front().in; }
  std::size_t output_dim() const { return layers.back().out; }

  std::size_t weight_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += layers[l].out * layers[l].in + layers[l].out;
    return off;
  }
  std::size_t bias_offset(std::size_t layer) const {
    return weight_offset(layer) + layers[layer].out * layers[layer].in;
  }
  std::size_t free_offset() const { return size() - free; }

  bool chains() const {
    if (layers.empty()) return false;
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
      if (layers[l].out != layers[l + 1].in) return false;
    }
    return true;
  }
};

enum class ParamRole : std::uint8_t { kActor = 0, kCritic = 1 };

/// Parameters of one network. Copies are deep and independent.
struct ParamSet {
  ParamShape shape;
  std::vector<double> values;
  ParamRole role = ParamRole::kCritic;
  std::uint64_t version = 0;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

  std::span<double> weights(std::size_t l) {
    return {values.data() + shape.weight_offset(l), shape.layers[l].out * shape.layers[l].in};
  }
  std::span<const double> weights(std::size_t l) const {
    return {values.data() + shape.weight_offset(l), shape.layers[l].out * shape.layers[l].in};
  }
  std::span<double> bias(std::size_t l) {
    return {values.data() + shape.bias_offset(l), shape.layers[l].out};
  }
  std::span<const double> bias(std::size_t l) const {
    return {values.data() + shape.bias_offset(l), shape.layers[l].out};
  }
  std::span<double> free_block() { return {values.data() + shape.free_offset(), shape.free}; }
  std::span<const double> free_block() const {
    return {values.data() + shape.free_offset(), shape.free};
  }

  bool finite() const {
    return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
  }
};

/// Gradient with the same block structure as a ParamSet.
struct GradientSet {
  ParamShape shape;
  std::vector<double> values;
  bool accumulated = false;

  static GradientSet zeros_like(const ParamSet& p) { return {p.shape, std::vector<double>(p.values.size(), 0.0), false}; }

  GradientSet& operator+=(const GradientSet& other) {
    require(other.shape == shape, "gradient: shape mismatch");
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += other.values[i];
    accumulated = true;
    return *this;
  }
  GradientSet& operator*=(double k) {
    for (double& v : values) v *= k;
    return *this;
  }
  double norm() const {
    return std::sqrt(std::inner_product(values.begin(), values.end(), values.begin(), 0.0));
  }
};

inline void require_congruent(const ParamSet& p, const GradientSet& g) {
  require(p.shape == g.shape && p.values.size() == g.values.size(),
          "gradient/parameter shape mismatch");
}

/// Fan-in scaled uniform weights U(-1/sqrt(in), 1/sqrt(in)), zero biases,
/// zero free block.
inline ParamSet make_mlp(std::size_t input, std::span<const std::size_t> hidden,
                         std::size_t output, std::size_t free, ParamRole role, Rng& rng) {
  ParamSet p;
  p.role = role;
  std::size_t prev = input;
  for (std::size_t h : hidden) {
    p.shape.layers.push_back({prev, h});
    prev = h;
  }
  p.shape.layers.push_back({prev, output});
  p.shape.free = free;
  p.values.assign(p.shape.size(), 0.0);
  for (std::size_t l = 0; l < p.shape.layers.size(); ++l) {
    double bound = 1.0 / std::sqrt(static_cast<double>(p.shape.layers[l].in));
    for (double& w : p.weights(l)) w = rng.uniform(-bound, bound);
  }
  return p;
}

inline ParamSet make_actor(std::size_t features, std::span<const std::size_t> hidden,
                           std::size_t action_dim, Rng& rng) {
  return make_mlp(features, hidden, action_dim, action_dim, ParamRole::kActor, rng);
}

inline ParamSet make_critic(std::size_t features, std::span<const std::size_t> hidden, Rng& rng) {
  return make_mlp(features, hidden, 1, 0, ParamRole::kCritic, rng);
}

// ---------------------------------------------------------------------------
// MLP forward / backward

/// Activations of every layer from one forward pass; activations[0] is the
/// input, activations.back() the (linear) output.
struct ForwardTrace {
  std::vector<std::vector<double>> activations;
};

inline std::vector<double> mlp_forward(const ParamSet& p, std::span<const double> x,
                                       ForwardTrace* trace = nullptr) {
  require(!p.shape.layers.empty() && x.size() == p.shape.input_dim(),
          "forward: feature dimension mismatch");
  std::vector<double> a(x.begin(), x.end());
  if (trace) {
    trace->activations.clear();
    trace->activations.push_back(a);
  }
  const std::size_t depth = p.shape.layers.size();
  for (std::size_t l = 0; l < depth; ++l) {
    const auto [in, out] = p.shape.layers[l];
    auto w = p.weights(l);
    auto b = p.bias(l);
    std::vector<double> z(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = b[o];
      const double* row = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) acc += row[i] * a[i];
      z[o] = l + 1 < depth ? std::tanh(acc) : acc;
    }
    a = std::move(z);
    if (trace) trace->activations.push_back(a);
  }
  return a;
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output).
inline void mlp_backward(const ParamSet& p, const ForwardTrace& trace,
                         std::span<const double> d_output, GradientSet& grads) {
  const std::size_t depth = p.shape.layers.size();
  require(trace.activations.size() == depth + 1, "backward: missing forward context");
  require_congruent(p, grads);
  require(d_output.size() == p.shape.output_dim(), "backward: output gradient dimension mismatch");

  std::vector<double> delta(d_output.begin(), d_output.end());  // d loss / d pre-activation
  for (std::size_t l = depth; l-- > 0;) {
    const auto [in, out] = p.shape.layers[l];
    const auto& a_in = trace.activations[l];
    double* gw = grads.values.data() + p.shape.weight_offset(l);
    double* gb = grads.values.data() + p.shape.bias_offset(l);
    for (std::size_t o = 0; o < out; ++o) {
      gb[o] += delta[o];
      double* row = gw + o * in;
      for (std::size_t i = 0; i < in; ++i) row[i] += delta[o] * a_in[i];
    }
    if (l == 0) break;
    auto w = p.weights(l);
    const auto& h = trace.activations[l];  // tanh outputs of layer l-1
    std::vector<double> prev(in, 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w.data() + o * in;
      for (std::size_t i = 0; i < in; ++i) prev[i] += row[i] * delta[o];
    }
    for (std::size_t i = 0; i < in; ++i) prev[i] *= 1.0 - h[i] * h[i];
    delta = std::move(prev);
  }
  grads.accumulated = true;
}

// ---------------------------------------------------------------------------
// Gaussian policy head

inline constexpr double kHalfLog2PiE = 0.5 * (1.0 + 1.8378770664093454835606594728112);  // ln(2 pi e)/2
inline constexpr double kHalfLog2Pi = 0.5 * 1.8378770664093454835606594728112;

inline double gaussian_log_prob(std::span<const double> mean, std::span<const double> log_std,
                                std::span<const double> x) {
  double lp = 0.0;
  for (std::size_t d = 0; d < mean.size(); ++d) {
    double z = (x[d] - mean[d]) * std::exp(-log_std[d]);
    lp += -0.5 * z * z - log_std[d] - kHalfLog2Pi;
  }
  return lp;
}

inline double gaussian_entropy(std::span<const double> log_std) {
  double h = 0.0;
  for (double ls : log_std) h += kHalfLog2PiE + ls;
  return h;
}

/// log |d tanh(u) / du| summed over dimensions; subtract from the Gaussian
/// log-density of u to get the density of the squashed action tanh(u).
inline double tanh_log_jacobian(std::span<const double> raw) {
  double s = 0.0;
  for (double u : raw) {
    // log(1 - tanh(u)^2) = 2 (log 2 - u - softplus(-2u)), stable for large |u|
    double x = -2.0 * u;
    double softplus = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
    s += 2.0 * (std::numbers::ln2 - u - softplus);
  }
  return s;
}

struct PolicyOutput {
  std::vector<double> mean;
  std::vector<double> log_std;
  std::vector<double> raw_action;  // Gaussian sample (pre-squash)
  std::vector<double> action;      // tanh(raw), in [-1, 1]
  double log_prob = 0.0;           // Gaussian log-density of raw_action
  double entropy = 0.0;            // of the pre-squash Gaussian
};

/// Policy at `features`. With `rng` a Gaussian sample is drawn, without it
/// the mean is used (deterministic evaluation).
inline PolicyOutput forward_actor(const ParamSet& actor, std::span<const double> features,
                                  Rng* rng = nullptr) {
  require(actor.role == ParamRole::kActor && actor.shape.free == actor.shape.output_dim(),
          "forward_actor: not an actor parameter set");
  require(actor.finite(), "forward_actor: non-finite parameters");
  PolicyOutput out;
  out.mean = mlp_forward(actor, features);
  auto ls = actor.free_block();
  out.log_std.assign(ls.begin(), ls.end());
  out.raw_action = out.mean;
  if (rng) {
    for (std::size_t d = 0; d < out.mean.size(); ++d) {
      out.raw_action[d] += std::exp(out.log_std[d]) * rng->normal();
    }
  }
  out.action.resize(out.raw_action.size());
  std::transform(out.raw_action.begin(), out.raw_action.end(), out.action.begin(),
                 [](double u) { return std::tanh(u); });
  out.log_prob = gaussian_log_prob(out.mean, out.log_std, out.raw_action);
  out.entropy = gaussian_entropy(out.log_std);
  return out;
}

inline double forward_critic(const ParamSet& critic, std::span<const double> features) {
  require(critic.role == ParamRole::kCritic && critic.shape.output_dim() == 1,
          "forward_critic: not a critic parameter set");
  return mlp_forward(critic, features)[0];
}

/// grads += coef_logp * d log pi(raw | features) + coef_entropy * d H.
/// Returns log pi(raw | features).
inline double accumulate_policy_grad(const ParamSet& actor, std::span<const double> features,
                                     std::span<const double> raw, double coef_logp,
                                     double coef_entropy, GradientSet& grads) {
  ForwardTrace trace;
  std::vector<double> mean = mlp_forward(actor, features, &trace);
  auto ls = actor.free_block();
  require(raw.size() == mean.size(), "policy gradient: action dimension mismatch");
  std::vector<double> d_mean(mean.size());
  double* g_ls = grads.values.data() + actor.shape.free_offset();
  for (std::size_t d = 0; d < mean.size(); ++d) {
    double inv_var = std::exp(-2.0 * ls[d]);
    double diff = raw[d] - mean[d];
    d_mean[d] = coef_logp * diff * inv_var;
    g_ls[d] += coef_logp * (diff * diff * inv_var - 1.0) + coef_entropy;
  }
  mlp_backward(actor, trace, d_mean, grads);
  return gaussian_log_prob(mean, ls, raw);
}

/// grads += coef * dV(features). Returns V(features).
inline double accumulate_value_grad(const ParamSet& critic, std::span<const double> features,
                                    double coef, GradientSet& grads) {
  ForwardTrace trace;
  double v = mlp_forward(critic, features, &trace)[0];
  const double d[1] = {coef};
  mlp_backward(critic, trace, d, grads);
  return v;
}

/// Scales `g` in place so its global L2 norm is at most max_norm. Returns the
/// norm before clipping.
inline double clip_by_global_norm(GradientSet& g, double max_norm) {
  double n = g.norm();
  if (n > max_norm && n > 0.0) g *= max_norm / n;
  return n;
}

// ---------------------------------------------------------------------------
// RMSProp

struct RmsPropState {
  std::vector<double> mean_square;
  double decay = 0.99;
  double learning_rate = 1e-3;
  double stability = 1e-8;

  friend bool operator==(const RmsPropState&, const RmsPropState&) = default;

  static RmsPropState for_params(const ParamSet& p, double learning_rate, double decay = 0.99,
                                 double stability = 1e-8) {
    require_config(decay >= 0.0 && decay < 1.0, "rmsprop: decay must be in [0, 1)");
    require_config(learning_rate >= 0.0 && stability > 0.0,
                   "rmsprop: learning rate must be >= 0 and stability > 0");
    return {std::vector<double>(p.values.size(), 0.0), decay, learning_rate, stability};
  }
};

/// mu <- decay mu + (1 - decay) g^2;  p <- p - lr g / sqrt(mu + stability)
inline void rmsprop_step(RmsPropState& state, ParamSet& params, const GradientSet& grads) {
  require_congruent(params, grads);
  require(state.mean_square.size() == params.values.size(), "rmsprop: state shape mismatch");
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    double g = grads.values[i];
    double& mu = state.mean_square[i];
    mu = state.decay * mu + (1.0 - state.decay) * g * g;
    params.values[i] -= state.learning_rate * g / std::sqrt(mu + state.stability);
  }
}

/// p <- p - lr g
inline void sgd_step(ParamSet& params, const GradientSet& grads, double lr) {
  require_congruent(params, grads);
  for (std::size_t i = 0; i < params.values.size(); ++i) params.values[i] -= lr * grads.values[i];
}

}  // namespace uavnet
