#pragma once

// Static world description: road graph, fleet and QoS parameters, and the
// task distribution sampled for meta-learning.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "uavnet/channel.hpp"
#include "uavnet/error.hpp"
#include "uavnet/geometry.hpp"
#include "uavnet/random.hpp"

namespace uavnet {

/// Rectangular service area [0, width] x [0, height], meters.
struct ServiceArea {
  double width = 3000.0;
  double height = 3000.0;

  bool contains(Vec2 p) const { return p.x >= 0.0 && p.x <= width && p.y >= 0.0 && p.y <= height; }
  double diagonal() const { return std::hypot(width, height); }
  double size() const { return std::max(width, height); }

  void validate() const {
    require_config(width > 0.0 && height > 0.0, "service area: dimensions must be positive");
  }
};

struct QoSParams {
  double r_min_bps = 0.5e6;
  double sinr_backhaul_min = 1.0;  // linear
  double d_safe_m = 10.0;

  friend bool operator==(const QoSParams&, const QoSParams&) = default;

  void validate() const {
    require_config(r_min_bps > 0.0 && sinr_backhaul_min > 0.0 && d_safe_m > 0.0,
                   "qos: all thresholds must be strictly positive");
  }
};

struct FleetParams {
  std::size_t num_ugv = 4;
  std::size_t num_uav = 4;
  std::size_t num_users = 100;
  std::size_t num_slots = 25;
  double slot_s = 1.0;
  double v_max_ugv = 20.0;
  double v_max_uav = 30.0;
  double z_min = 30.0;
  double z_max = 150.0;

  double horizon_s() const { return static_cast<double>(num_slots) * slot_s; }

  void validate() const {
    require_config(num_ugv >= 1 && num_uav >= 1 && num_users >= 1 && num_slots >= 1,
                   "fleet: all counts must be >= 1");
    require_config(slot_s > 0.0, "fleet: slot duration must be positive");
    require_config(z_min < z_max && z_min > 0.0, "fleet: need 0 < z_min < z_max");
    require_config(v_max_ugv > 0.0 && v_max_uav > 0.0, "fleet: speeds must be positive");
  }
};

// ---------------------------------------------------------------------------
// Road graph

struct RoadEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  double length = 0.0;
  double speed_limit = 0.0;
};

/// Raw node/edge lists as read from configuration; lengths are derived.
struct GraphSpec {
  struct Edge {
    std::size_t from = 0;
    std::size_t to = 0;
    double speed_limit = 15.0;
  };
  std::vector<Vec2> nodes;
  std::vector<Edge> edges;
};

/// Undirected road network. Positions on it are (edge, arclength from
/// `edge.from`). Immutable after build().
class RoadGraph {
 public:
  static RoadGraph build(const GraphSpec& spec) {
    require_config(!spec.nodes.empty() && !spec.edges.empty(), "road graph: empty specification");
    RoadGraph g;
    g.nodes_ = spec.nodes;
    g.incident_.resize(spec.nodes.size());
    for (std::size_t e = 0; e < spec.edges.size(); ++e) {
      const auto& raw = spec.edges[e];
      std::string where = "edge " + std::to_string(e);
      require_config(raw.from < spec.nodes.size() && raw.to < spec.nodes.size(),
                     "road graph: dangling node reference in " + where);
      require_config(raw.from != raw.to, "road graph: self-loop in " + where);
      double length = distance(spec.nodes[raw.from], spec.nodes[raw.to]);
      require_config(length > 0.0, "road graph: zero-length edge in " + where);
      require_config(raw.speed_limit > 0.0, "road graph: non-positive speed limit in " + where);
      g.edges_.push_back({raw.from, raw.to, length, raw.speed_limit});
      g.incident_[raw.from].push_back(e);
      g.incident_[raw.to].push_back(e);
    }

    std::vector<bool> seen(g.nodes_.size(), false);
    std::queue<std::size_t> frontier;
    frontier.push(0);
    seen[0] = true;
    while (!frontier.empty()) {
      std::size_t n = frontier.front();
      frontier.pop();
      for (std::size_t e : g.incident_[n]) {
        std::size_t other = g.other_end(e, n);
        if (!seen[other]) {
          seen[other] = true;
          frontier.push(other);
        }
      }
    }
    for (std::size_t n = 0; n < seen.size(); ++n) {
      require_config(seen[n], "road graph: disconnected graph (node " + std::to_string(n) +
                                  " unreachable from node 0)");
    }
    return g;
  }

  std::span<const Vec2> nodes() const { return nodes_; }
  std::span<const RoadEdge> edges() const { return edges_; }
  const RoadEdge& edge(std::size_t e) const { return edges_.at(e); }
  std::span<const std::size_t> incident(std::size_t node) const { return incident_.at(node); }

  std::size_t other_end(std::size_t e, std::size_t node) const {
    const auto& ed = edges_[e];
    return ed.from == node ? ed.to : ed.from;
  }

  /// Point at arclength s along edge e, measured from its `from` node.
  Vec2 point_on(std::size_t e, double s) const {
    const auto& ed = edges_.at(e);
    double t = s / ed.length;
    Vec2 a = nodes_[ed.from];
    Vec2 b = nodes_[ed.to];
    return a + t * (b - a);
  }

  /// Unit direction of edge e from its `from` to its `to` node.
  Vec2 direction(std::size_t e) const {
    const auto& ed = edges_.at(e);
    return (1.0 / ed.length) * (nodes_[ed.to] - nodes_[ed.from]);
  }

 private:
  RoadGraph() = default;

  std::vector<Vec2> nodes_;
  std::vector<RoadEdge> edges_;
  std::vector<std::vector<std::size_t>> incident_;
};

inline RoadGraph build_graph(const GraphSpec& spec) { return RoadGraph::build(spec); }

/// n x n Manhattan grid spanning the whole service area.
inline GraphSpec manhattan_grid(const ServiceArea& area, std::size_t per_side,
                                double speed_limit) {
  require_config(per_side >= 2, "grid generator: need at least 2 nodes per side");
  GraphSpec spec;
  auto id = [per_side](std::size_t i, std::size_t j) { return j * per_side + i; };
  double step_x = area.width / static_cast<double>(per_side - 1);
  double step_y = area.height / static_cast<double>(per_side - 1);
  for (std::size_t j = 0; j < per_side; ++j) {
    for (std::size_t i = 0; i < per_side; ++i) {
      spec.nodes.push_back({static_cast<double>(i) * step_x, static_cast<double>(j) * step_y});
    }
  }
  for (std::size_t j = 0; j < per_side; ++j) {
    for (std::size_t i = 0; i + 1 < per_side; ++i) {
      spec.edges.push_back({id(i, j), id(i + 1, j), speed_limit});
    }
  }
  for (std::size_t i = 0; i < per_side; ++i) {
    for (std::size_t j = 0; j + 1 < per_side; ++j) {
      spec.edges.push_back({id(i, j), id(i, j + 1), speed_limit});
    }
  }
  return spec;
}

struct GraphPosition {
  std::size_t edge = 0;
  double s = 0.0;

  friend bool operator==(const GraphPosition&, const GraphPosition&) = default;
};

struct GraphProjection {
  GraphPosition position;
  Vec2 point;
  double distance = 0.0;
};

/// Closest point of the road graph to `point`; ties go to the lowest edge id.
inline GraphProjection project_to_graph(const RoadGraph& graph, Vec2 point) {
  GraphProjection best;
  best.distance = std::numeric_limits<double>::infinity();
  auto edges = graph.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    Vec2 a = graph.nodes()[edges[e].from];
    Vec2 dir = graph.direction(e);
    double s = std::clamp(dot(point - a, dir), 0.0, edges[e].length);
    Vec2 q = graph.point_on(e, s);
    double d = distance(point, q);
    if (d < best.distance) {
      best = {{e, s}, q, d};
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Tasks

struct Task {
  std::uint64_t id = 0;
  std::vector<Vec2> users;
  ChannelParams channel;
  QoSParams qos;
  std::uint64_t seed = 0;

  friend bool operator==(const Task&, const Task&) = default;
};

/// Ranges the task sampler draws from. Users are placed uniformly in the
/// area; S-curve parameters are jittered multiplicatively around nominal;
/// the per-user rate floor is uniform in [r_min_lo, r_min_hi].
struct TaskDistribution {
  ServiceArea area;
  std::size_t users_min = 100;
  std::size_t users_max = 100;
  double channel_jitter = 0.2;
  double r_min_lo_bps = 0.25e6;
  double r_min_hi_bps = 1.0e6;
  ChannelParams nominal_channel;
  QoSParams nominal_qos;

  void validate() const {
    area.validate();
    nominal_channel.validate();
    nominal_qos.validate();
    require_config(users_min >= 1 && users_min <= users_max,
                   "task distribution: empty or inverted user-count range");
    require_config(channel_jitter >= 0.0 && channel_jitter < 1.0,
                   "task distribution: channel jitter must be in [0, 1)");
    require_config(r_min_lo_bps > 0.0 && r_min_lo_bps <= r_min_hi_bps,
                   "task distribution: empty or inverted rate-floor range");
  }
};

inline Task sample_task(const TaskDistribution& dist, std::uint64_t seed) {
  dist.validate();
  Rng rng(derive_seed(seed, 0x7a5c));
  Task task;
  task.id = seed;
  task.seed = seed;

  std::size_t span = dist.users_max - dist.users_min + 1;
  std::size_t k = dist.users_min + rng.index(span);
  task.users.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    double x = rng.uniform(0.0, dist.area.width);
    double y = rng.uniform(0.0, dist.area.height);
    task.users.push_back({x, y});
  }

  auto jitter = [&](double nominal) {
    return nominal * (1.0 + dist.channel_jitter * (2.0 * rng.uniform() - 1.0));
  };
  task.channel = dist.nominal_channel;
  task.channel.g2a = {jitter(dist.nominal_channel.g2a.a), jitter(dist.nominal_channel.g2a.b)};
  task.channel.a2g = {jitter(dist.nominal_channel.a2g.a), jitter(dist.nominal_channel.a2g.b)};

  task.qos = dist.nominal_qos;
  task.qos.r_min_bps = rng.uniform(dist.r_min_lo_bps, dist.r_min_hi_bps);
  return task;
}

}  // namespace uavnet
