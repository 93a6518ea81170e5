#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "uavnet/a3c.hpp"
#include "uavnet/config.hpp"
#include "uavnet/meta.hpp"
#include "uavnet/nn.hpp"
#include "uavnet/random.hpp"

namespace testing_support {

using namespace uavnet;

/// |a - n| / max(|a|, |n|, floor), maximized over coordinates.
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double a = analytic[i], n = numeric[i];
    double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

/// Central differences of a scalar function of the parameter vector.
inline std::vector<double> numeric_gradient(const std::function<double(const ParamSet&)>& f,
                                            const ParamSet& p, double h = 1e-5) {
  std::vector<double> g(p.values.size());
  ParamSet q = p;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    double x = p.values[i];
    q.values[i] = x + h;
    double fp = f(q);
    q.values[i] = x - h;
    double fm = f(q);
    q.values[i] = x;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Random small MLP: 1-3 layers, up to `max_units` units per hidden layer,
/// with non-trivial biases and free block.
inline ParamSet random_net(Rng& rng, std::size_t in, std::size_t out, std::size_t free,
                           ParamRole role, std::size_t max_units = 8) {
  std::size_t depth = 1 + rng.index(3);
  std::vector<std::size_t> hidden;
  for (std::size_t l = 0; l + 1 < depth; ++l) hidden.push_back(1 + rng.index(max_units));
  ParamSet p = make_mlp(in, hidden, out, free, role, rng);
  for (double& v : p.values) v += 0.3 * rng.normal();
  return p;
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

/// Synthetic rollout with random features, actions, rewards and values.
inline RolloutBuffer random_buffer(Rng& rng, std::size_t len, std::size_t features, std::size_t action_dim,
                                   bool terminal) {
  RolloutBuffer b;
  for (std::size_t i = 0; i < len; ++i) {
    Transition t;
    t.features = random_vector(rng, features);
    t.raw_action = random_vector(rng, action_dim);
    t.reward = rng.uniform(-2.0, 2.0);
    t.value = rng.uniform(-1.0, 1.0);
    t.log_prob = 0.0;
    t.done = terminal && i + 1 == len;
    b.steps.push_back(std::move(t));
  }
  b.bootstrap_value = terminal ? 0.0 : rng.uniform(-3.0, 3.0);
  return b;
}

/// Message of the exception `f` throws, or "" if it returns normally.
template <class F>
std::string error_message(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

inline bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

inline std::shared_ptr<const Scenario> smoke_scenario() { return build_scenario(smoke_spec()); }
inline std::shared_ptr<const Scenario> default_scenario() { return build_scenario(default_spec()); }

}  // namespace testing_support
