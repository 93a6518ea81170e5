#pragma once

// The MDP: world state, continuous joint action, constraint-respecting
// kinematics (clipped UAV flight, road-constrained UGV walks), reward and
// feature encoding.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "uavnet/channel.hpp"
#include "uavnet/error.hpp"
#include "uavnet/geometry.hpp"
#include "uavnet/network.hpp"
#include "uavnet/random.hpp"
#include "uavnet/scenario.hpp"

namespace uavnet {

struct RewardWeights {
  double qos_penalty = 10.0;       // w, per normalized rate shortfall
  double backhaul_penalty = 10.0;  // w_b, per normalized backhaul shortfall
  double return_penalty = 10.0;    // terminal, per (distance from start / area diagonal)
  double rate_unit_bps = 1e6;      // rates enter the reward in Mbit/s
};

/// Everything static shared by all episodes of an experiment.
struct Scenario {
  std::shared_ptr<const RoadGraph> graph;
  ServiceArea area;
  FleetParams fleet;
  RewardWeights reward;
  TaskDistribution tasks;

  void validate() const {
    require_config(graph != nullptr, "scenario: missing road graph");
    area.validate();
    fleet.validate();
    tasks.validate();
    require_config(fleet.num_ugv <= graph->nodes().size(),
                   "scenario: more UGVs than road-graph nodes");
  }
};

struct WorldState {
  std::vector<Vec3> uavs;
  std::vector<GraphPosition> ugvs;
  std::vector<Vec3> ugv_points;  // derived from `ugvs`, z = 0
  std::vector<Vec3> users;
  std::size_t slot = 0;
  std::vector<Vec3> uav_start;
  std::vector<Vec3> ugv_start;
  AssociationState assoc;
  std::vector<double> user_sinr;

  NetworkGeometry geometry() const { return {uavs, ugv_points, users}; }

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct Action {
  std::vector<Vec3> uav_velocity;  // m/s
  std::vector<Vec2> ugv_heading;
  std::vector<double> ugv_speed;   // m/s

  static std::size_t dimension(const FleetParams& fleet) {
    return 3 * fleet.num_uav + 3 * fleet.num_ugv;
  }
};

/// Maps a policy output in [-1, 1]^D to physical units: UAV velocity
/// components scale by V_u^max, UGV headings pass through, UGV speed maps
/// [-1, 1] onto [0, V_m^max].
inline Action decode_action(std::span<const double> normalized, const FleetParams& fleet) {
  require(normalized.size() == Action::dimension(fleet), "action dimension mismatch");
  Action a;
  std::size_t i = 0;
  for (std::size_t u = 0; u < fleet.num_uav; ++u, i += 3) {
    a.uav_velocity.push_back({fleet.v_max_uav * normalized[i], fleet.v_max_uav * normalized[i + 1],
                              fleet.v_max_uav * normalized[i + 2]});
  }
  for (std::size_t m = 0; m < fleet.num_ugv; ++m, i += 3) {
    a.ugv_heading.push_back({normalized[i], normalized[i + 1]});
    a.ugv_speed.push_back(0.5 * (normalized[i + 2] + 1.0) * fleet.v_max_ugv);
  }
  return a;
}

inline Vec3 ugv_point(const RoadGraph& graph, GraphPosition p) {
  return on_ground(graph.point_on(p.edge, p.s));
}

/// Graph position sitting on node `n`, using its lowest-id incident edge.
inline GraphPosition position_at_node(const RoadGraph& graph, std::size_t n) {
  std::size_t e = graph.incident(n).front();
  return {e, graph.edge(e).from == n ? 0.0 : graph.edge(e).length};
}

/// Walks a UGV along the graph for `dt` seconds. Along an edge it moves in
/// the direction of the heading's projection; at a node it turns onto the
/// incident edge best aligned with the heading (lowest id on ties) and stops
/// if no edge points forward. Speed on each edge is
/// min(desired, edge limit, v_max).
inline GraphPosition advance_ugv(const RoadGraph& graph, GraphPosition pos, Vec2 heading,
                                 double desired_speed, double v_max, double dt) {
  double cap = std::min(std::max(desired_speed, 0.0), v_max);
  double h_norm = norm(heading);
  if (!(cap > 0.0) || !(h_norm > 0.0) || !std::isfinite(h_norm)) return pos;
  Vec2 h = (1.0 / h_norm) * heading;

  double remaining = dt;
  for (int guard = 0; guard < 1024 && remaining > 0.0; ++guard) {
    const RoadEdge& ed = graph.edge(pos.edge);
    double eps = 1e-9 * ed.length;
    int sign = 0;
    if (pos.s <= eps || pos.s >= ed.length - eps) {
      std::size_t node = pos.s <= eps ? ed.from : ed.to;
      double best_dot = 0.0;
      std::size_t best = AssociationState::npos;
      for (std::size_t e : graph.incident(node)) {
        Vec2 out = graph.edge(e).from == node ? graph.direction(e) : -1.0 * graph.direction(e);
        double d = dot(out, h);
        if (d > best_dot) {
          best_dot = d;
          best = e;
        }
      }
      if (best == AssociationState::npos) {
        return {pos.edge, pos.s <= eps ? 0.0 : ed.length};
      }
      bool forward = graph.edge(best).from == node;
      pos = {best, forward ? 0.0 : graph.edge(best).length};
      sign = forward ? 1 : -1;
    } else {
      double d = dot(h, graph.direction(pos.edge));
      if (d == 0.0) return pos;
      sign = d > 0.0 ? 1 : -1;
    }

    const RoadEdge& cur = graph.edge(pos.edge);
    double v = std::min(cap, cur.speed_limit);
    double to_end = sign > 0 ? cur.length - pos.s : pos.s;
    double travel = v * remaining;
    if (travel < to_end) {
      pos.s += sign * travel;
      return pos;
    }
    pos.s = sign > 0 ? cur.length : 0.0;
    remaining -= to_end / v;
  }
  return pos;
}

/// Moves UAVs in index order: velocity clipped to V_u^max, altitude clamped,
/// then each displacement is scaled back along its direction so the UAV
/// stays at least d_safe from every other UAV (already-moved ones at their
/// new positions, the rest where they are).
inline std::vector<Vec3> move_uavs(std::span<const Vec3> current,
                                   std::span<const Vec3> desired_velocity,
                                   const FleetParams& fleet, double d_safe) {
  std::vector<Vec3> next(current.begin(), current.end());
  for (std::size_t u = 0; u < current.size(); ++u) {
    Vec3 v = desired_velocity[u];
    double speed = norm(v);
    if (!std::isfinite(speed)) v = {};
    else if (speed > fleet.v_max_uav) v = (fleet.v_max_uav / speed) * v;
    Vec3 target = current[u] + fleet.slot_s * v;
    target.z = std::clamp(target.z, fleet.z_min, fleet.z_max);

    Vec3 start = current[u];
    Vec3 step = target - start;
    double step2 = dot(step, step);
    double t_max = 1.0;
    if (step2 > 0.0) {
      for (std::size_t j = 0; j < current.size(); ++j) {
        if (j == u) continue;
        Vec3 rel = start - next[j];  // next[j] is current[j] for j > u
        double b = dot(rel, step);
        if (b >= 0.0) continue;  // moving away
        double c = dot(rel, rel) - d_safe * d_safe;
        double disc = b * b - step2 * c;
        if (disc < 0.0) continue;
        double t_enter = (-b - std::sqrt(disc)) / step2;
        t_max = std::min(t_max, std::max(0.0, t_enter));
      }
    }
    next[u] = t_max >= 1.0 ? target : start + t_max * step;
  }
  return next;
}

/// Per-slot reward: sum rate minus normalized hinge penalties on user rate
/// floors and on the backhaul SNR of every UAV paired with a UGV.
inline double reward(const RateReport& rates, const QoSParams& qos, const RewardWeights& w) {
  double total = 0.0;
  double qos_shortfall = 0.0;
  for (double r : rates.per_user_rate) {
    total += r / w.rate_unit_bps;
    qos_shortfall += std::max(0.0, (qos.r_min_bps - r) / qos.r_min_bps);
  }
  double backhaul_shortfall = 0.0;
  for (std::size_t u = 0; u < rates.backhaul_sinr.size(); ++u) {
    if (!rates.backhaul_paired[u]) continue;
    backhaul_shortfall +=
        std::max(0.0, (qos.sinr_backhaul_min - rates.backhaul_sinr[u]) / qos.sinr_backhaul_min);
  }
  return total - w.qos_penalty * qos_shortfall - w.backhaul_penalty * backhaul_shortfall;
}

/// Terminal penalty for vehicles that did not return to their start.
inline double return_penalty(const WorldState& s, const ServiceArea& area, const RewardWeights& w) {
  double total = 0.0;
  for (std::size_t u = 0; u < s.uavs.size(); ++u) total += distance(s.uavs[u], s.uav_start[u]);
  for (std::size_t m = 0; m < s.ugv_points.size(); ++m) {
    total += distance(s.ugv_points[m], s.ugv_start[m]);
  }
  return w.return_penalty * total / area.diagonal();
}

inline std::size_t feature_dimension(const FleetParams& fleet) {
  return 3 * fleet.num_uav + 2 * fleet.num_ugv + 2 * fleet.num_uav + 1;
}

/// Fixed-length policy input: UAV positions (x, y / area size, z / z_max),
/// UGV positions (/ area size), per-UAV served fraction and mean served
/// SINR in dB / 60, and the slot fraction n / N.
inline std::vector<double> encode_state(const WorldState& s, const Scenario& sc) {
  const double size = sc.area.size();
  std::vector<double> f;
  f.reserve(feature_dimension(sc.fleet));
  for (const Vec3& q : s.uavs) {
    f.push_back(q.x / size);
    f.push_back(q.y / size);
    f.push_back(q.z / sc.fleet.z_max);
  }
  for (const Vec3& p : s.ugv_points) {
    f.push_back(p.x / size);
    f.push_back(p.y / size);
  }
  const double k_total = static_cast<double>(std::max<std::size_t>(s.users.size(), 1));
  for (std::size_t u = 0; u < s.uavs.size(); ++u) {
    double count = 0.0;
    double db_sum = 0.0;
    for (std::size_t k = 0; k < s.users.size(); ++k) {
      if (s.assoc.alpha(k, u) == 0) continue;
      count += 1.0;
      db_sum += std::clamp(linear_to_db(std::max(s.user_sinr[k], 1e-6)), -60.0, 120.0);
    }
    f.push_back(count / k_total);
    f.push_back(count > 0.0 ? db_sum / count / 60.0 : 0.0);
  }
  f.push_back(static_cast<double>(s.slot) / static_cast<double>(sc.fleet.num_slots));
  return f;
}

struct StepOutcome {
  WorldState next;
  double reward = 0.0;
  RateReport rates;
  ConstraintReport constraints;
  bool done = false;
};

namespace detail {

inline void refresh_links(WorldState& s, const Task& task) {
  s.assoc = associate(s.geometry(), task.channel, task.qos);
  s.user_sinr = evaluate_rates(s.geometry(), s.assoc, task.channel).user_sinr;
}

}  // namespace detail

/// Initial state: UGVs on distinct, randomly chosen graph nodes; UAVs at
/// random positions inside the area and altitude band, pairwise >= d_safe.
inline WorldState reset(const Scenario& sc, const Task& task, std::uint64_t seed) {
  const RoadGraph& graph = *sc.graph;
  const FleetParams& fleet = sc.fleet;
  require_config(fleet.num_ugv <= graph.nodes().size(),
                 "reset: more UGVs than road-graph nodes");
  Rng rng(derive_seed(seed, 0x5e7));
  WorldState s;

  std::vector<std::size_t> nodes(graph.nodes().size());
  std::iota(nodes.begin(), nodes.end(), 0);
  for (std::size_t i = 0; i < fleet.num_ugv; ++i) {
    std::size_t j = i + rng.index(nodes.size() - i);
    std::swap(nodes[i], nodes[j]);
    GraphPosition p = position_at_node(graph, nodes[i]);
    s.ugvs.push_back(p);
    s.ugv_points.push_back(ugv_point(graph, p));
  }

  for (std::size_t u = 0; u < fleet.num_uav; ++u) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      Vec3 q{rng.uniform(0.0, sc.area.width), rng.uniform(0.0, sc.area.height),
             rng.uniform(fleet.z_min, fleet.z_max)};
      placed = std::all_of(s.uavs.begin(), s.uavs.end(), [&](const Vec3& other) {
        return distance(q, other) >= task.qos.d_safe_m;
      });
      if (placed) s.uavs.push_back(q);
    }
    require_config(placed, "reset: cannot place UAVs pairwise d_safe apart in the area");
  }

  for (Vec2 p : task.users) s.users.push_back(on_ground(p));
  s.uav_start = s.uavs;
  s.ugv_start = s.ugv_points;
  detail::refresh_links(s, task);
  return s;
}

inline StepOutcome step(const Scenario& sc, const Task& task, const WorldState& state,
                        const Action& action) {
  const FleetParams& fleet = sc.fleet;
  require(state.slot < fleet.num_slots, "step: episode already finished");
  require(action.uav_velocity.size() == state.uavs.size() &&
              action.ugv_heading.size() == state.ugvs.size() &&
              action.ugv_speed.size() == state.ugvs.size(),
          "action dimension mismatch");

  StepOutcome out;
  WorldState& next = out.next;
  next = state;
  next.uavs = move_uavs(state.uavs, action.uav_velocity, fleet, task.qos.d_safe_m);
  for (std::size_t m = 0; m < state.ugvs.size(); ++m) {
    next.ugvs[m] = advance_ugv(*sc.graph, state.ugvs[m], action.ugv_heading[m],
                               action.ugv_speed[m], fleet.v_max_ugv, fleet.slot_s);
    next.ugv_points[m] = ugv_point(*sc.graph, next.ugvs[m]);
  }
  next.slot = state.slot + 1;
  next.assoc = associate(next.geometry(), task.channel, task.qos);
  out.rates = evaluate_rates(next.geometry(), next.assoc, task.channel);
  next.user_sinr = out.rates.user_sinr;
  out.done = next.slot == fleet.num_slots;

  out.reward = reward(out.rates, task.qos, sc.reward);
  if (out.done) out.reward -= return_penalty(next, sc.area, sc.reward);

  SlotCheckInput check;
  check.geometry = next.geometry();
  check.assoc = &next.assoc;
  check.prev_uavs = state.uavs;
  check.prev_ugvs = state.ugv_points;
  if (out.done) {
    check.uav_start = next.uav_start;
    check.ugv_start = next.ugv_start;
  }
  out.constraints = check_slot(check, task.channel, task.qos, fleet, *sc.graph);
  return out;
}

/// Stateful wrapper owned by one worker: a scenario, a task and the current
/// world state.
class Environment {
 public:
  Environment(std::shared_ptr<const Scenario> scenario, Task task)
      : scenario_(std::move(scenario)), task_(std::move(task)) {
    require(scenario_ != nullptr, "environment: missing scenario");
  }

  const WorldState& reset(std::uint64_t seed) {
    state_ = uavnet::reset(*scenario_, task_, seed);
    return state_;
  }

  StepOutcome step(std::span<const double> normalized_action) {
    return step(decode_action(normalized_action, scenario_->fleet));
  }

  StepOutcome step(const Action& action) {
    StepOutcome out = uavnet::step(*scenario_, task_, state_, action);
    state_ = out.next;
    return out;
  }

  std::vector<double> features() const { return encode_state(state_, *scenario_); }
  const WorldState& state() const { return state_; }
  const Scenario& scenario() const { return *scenario_; }
  const Task& task() const { return task_; }
  bool done() const { return state_.slot >= scenario_->fleet.num_slots; }

  std::size_t action_dim() const { return Action::dimension(scenario_->fleet); }
  std::size_t feature_dim() const { return feature_dimension(scenario_->fleet); }

 private:
  std::shared_ptr<const Scenario> scenario_;
  Task task_;
  WorldState state_;
};

}  // namespace uavnet
