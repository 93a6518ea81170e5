#pragma once

// Policy rollouts for evaluation and trajectory export.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "uavnet/env.hpp"
#include "uavnet/network.hpp"
#include "uavnet/nn.hpp"
#include "uavnet/random.hpp"

namespace uavnet {

struct EpisodeResult {
  double total_reward = 0.0;
  double mean_reward = 0.0;         // per slot
  double mean_sum_rate_bps = 0.0;   // per slot
  std::size_t qos_satisfied = 0;    // (user, slot) pairs meeting the rate floor
  std::size_t qos_total = 0;
  std::vector<double> rewards;      // per slot, slots 1..N
  EpisodeHistory history;           // slots 0..N
  std::vector<ConstraintReport> slot_constraints;  // slots 1..N, from step()
};

/// Runs one full episode. Without `rng` the policy's mean action is used.
inline EpisodeResult run_episode(const ParamSet& actor, const Scenario& sc, const Task& task,
                                 std::uint64_t seed, Rng* rng = nullptr) {
  EpisodeResult out;
  WorldState s = reset(sc, task, seed);
  out.history.users = s.users;
  auto record = [&](const WorldState& w) {
    out.history.uavs.push_back(w.uavs);
    out.history.ugvs.push_back(w.ugv_points);
    out.history.associations.push_back(w.assoc);
  };
  record(s);
  while (s.slot < sc.fleet.num_slots) {
    std::vector<double> f = encode_state(s, sc);
    PolicyOutput pi = forward_actor(actor, f, rng);
    StepOutcome o = step(sc, task, s, decode_action(pi.action, sc.fleet));
    out.rewards.push_back(o.reward);
    out.total_reward += o.reward;
    out.mean_sum_rate_bps += o.rates.sum_rate;
    for (double r : o.rates.per_user_rate) {
      out.qos_satisfied += r >= task.qos.r_min_bps ? 1 : 0;
      ++out.qos_total;
    }
    out.slot_constraints.push_back(o.constraints);
    s = std::move(o.next);
    record(s);
  }
  double n = static_cast<double>(sc.fleet.num_slots);
  out.mean_reward = out.total_reward / n;
  out.mean_sum_rate_bps /= n;
  return out;
}

/// Mean per-slot reward over seeded episodes. With `sample` set, actions are
/// drawn from the policy using a noise stream fixed by the episode seed, so
/// two policies evaluated on the same seeds see common random numbers.
inline std::vector<double> evaluate_rewards(const ParamSet& actor, const Scenario& sc,
                                            const Task& task, std::span<const std::uint64_t> seeds,
                                            bool sample = false) {
  std::vector<double> out;
  for (std::uint64_t seed : seeds) {
    Rng noise(derive_seed(seed, 0x5a3e));
    out.push_back(run_episode(actor, sc, task, seed, sample ? &noise : nullptr).mean_reward);
  }
  return out;
}

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double stdev_of(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace uavnet
