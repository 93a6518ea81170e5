#pragma once

// Experiment configuration: JSON <-> structs, built-in presets and the
// scenario fingerprint stored in checkpoints.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "uavnet/a3c.hpp"
#include "uavnet/env.hpp"
#include "uavnet/error.hpp"
#include "uavnet/meta.hpp"
#include "uavnet/scenario.hpp"

namespace uavnet {

using Json = nlohmann::ordered_json;

enum class Algorithm { kA3c, kMetaA3c };

inline std::string algorithm_name(Algorithm a) { return a == Algorithm::kA3c ? "a3c" : "meta-a3c"; }

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "a3c") return Algorithm::kA3c;
  if (s == "meta-a3c") return Algorithm::kMetaA3c;
  throw ConfigError("unknown algorithm '" + s + "' (expected a3c or meta-a3c)");
}

/// Road network as configured: either a generated grid or explicit lists.
struct RoadConfig {
  std::size_t grid_per_side = 4;
  double speed_limit = 15.0;
  GraphSpec explicit_graph;  // used when it has nodes
};

struct ExperimentSpec {
  std::string name = "default";
  Algorithm algorithm = Algorithm::kMetaA3c;
  ServiceArea area;
  FleetParams fleet;
  RoadConfig road;
  TaskDistribution tasks;
  RewardWeights reward;
  TrainConfig train;
  MetaConfig meta;
  std::size_t eval_episodes = 5;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::size_t> sweep_users;
  std::uint64_t task_seed = 1;  // training task for plain a3c
  std::string out_dir = "out";
  std::size_t checkpoint_every = 50;  // meta iterations between checkpoints, 0 = final only

  void validate() const {
    require_config(!seeds.empty(), "config: seeds must be non-empty");
    require_config(eval_episodes >= 1, "config: eval episodes must be >= 1");
    for (std::size_t k : sweep_users) require_config(k >= 1, "config: sweep user counts must be >= 1");
    train.validate();
    meta.validate();
  }
};

inline GraphSpec road_spec(const ExperimentSpec& spec) {
  if (!spec.road.explicit_graph.nodes.empty()) return spec.road.explicit_graph;
  return manhattan_grid(spec.area, spec.road.grid_per_side, spec.road.speed_limit);
}

inline std::shared_ptr<const Scenario> build_scenario(const ExperimentSpec& spec) {
  auto sc = std::make_shared<Scenario>();
  sc->graph = std::make_shared<const RoadGraph>(build_graph(road_spec(spec)));
  sc->area = spec.area;
  sc->fleet = spec.fleet;
  sc->reward = spec.reward;
  sc->tasks = spec.tasks;
  sc->tasks.area = spec.area;
  sc->validate();
  return sc;
}

// ---------------------------------------------------------------------------
// JSON mapping

namespace detail {

/// Reads `obj[key]` into `out` when present, rejecting keys not listed.
class Reader {
 public:
  Reader(const Json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    require_config(obj.is_object(), "config: '" + where_ + "' must be an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : obj_.items()) {
      if (!seen_.contains(k)) throw ConfigError("config: unknown key '" + where_ + "." + k + "'");
    }
  }
  template <class T>
  Reader& get(const char* key, T& out) {
    seen_.insert(key);
    if (!obj_.contains(key)) return *this;
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config: bad value for '" + where_ + "." + key + "'");
    }
    return *this;
  }
  const Json* child(const char* key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

 private:
  const Json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Json channel_to_json(const ChannelParams& c) {
  return Json{{"carrier_hz", c.carrier_hz},
              {"excess_los_db", c.excess_los_db},
              {"excess_nlos_db", c.excess_nlos_db},
              {"g2a_a", c.g2a.a},
              {"g2a_b", c.g2a.b},
              {"a2g_a", c.a2g.a},
              {"a2g_b", c.a2g.b},
              {"bandwidth_hz", c.bandwidth_hz},
              {"uav_power_w", c.uav_power_w},
              {"ugv_power_w", c.ugv_power_w},
              {"noise_w", c.noise_w}};
}

/// The part of the configuration that defines the environment family.
inline Json scenario_json(const ExperimentSpec& s) {
  Json road;
  if (s.road.explicit_graph.nodes.empty()) {
    road = {{"grid_per_side", s.road.grid_per_side}, {"speed_limit", s.road.speed_limit}};
  } else {
    Json nodes = Json::array(), edges = Json::array();
    for (Vec2 n : s.road.explicit_graph.nodes) nodes.push_back({n.x, n.y});
    for (const auto& e : s.road.explicit_graph.edges) edges.push_back({e.from, e.to, e.speed_limit});
    road = {{"nodes", nodes}, {"edges", edges}};
  }
  return Json{
      {"area", {{"width", s.area.width}, {"height", s.area.height}}},
      {"fleet",
       {{"num_ugv", s.fleet.num_ugv},
        {"num_uav", s.fleet.num_uav},
        {"num_users", s.fleet.num_users},
        {"num_slots", s.fleet.num_slots},
        {"slot_s", s.fleet.slot_s},
        {"v_max_ugv", s.fleet.v_max_ugv},
        {"v_max_uav", s.fleet.v_max_uav},
        {"z_min", s.fleet.z_min},
        {"z_max", s.fleet.z_max}}},
      {"road", road},
      {"qos",
       {{"r_min_bps", s.tasks.nominal_qos.r_min_bps},
        {"sinr_backhaul_min", s.tasks.nominal_qos.sinr_backhaul_min},
        {"d_safe_m", s.tasks.nominal_qos.d_safe_m}}},
      {"channel", channel_to_json(s.tasks.nominal_channel)},
      {"tasks",
       {{"users_min", s.tasks.users_min},
        {"users_max", s.tasks.users_max},
        {"channel_jitter", s.tasks.channel_jitter},
        {"r_min_lo_bps", s.tasks.r_min_lo_bps},
        {"r_min_hi_bps", s.tasks.r_min_hi_bps}}},
      {"reward",
       {{"qos_penalty", s.reward.qos_penalty},
        {"backhaul_penalty", s.reward.backhaul_penalty},
        {"return_penalty", s.reward.return_penalty},
        {"rate_unit_bps", s.reward.rate_unit_bps}}}};
}

inline Json to_json(const ExperimentSpec& s) {
  Json j{{"name", s.name}, {"algorithm", algorithm_name(s.algorithm)}};
  j.update(scenario_json(s));
  j["train"] = {{"num_workers", s.train.num_workers},
                {"horizon", s.train.horizon},
                {"gamma", s.train.gamma},
                {"entropy_coef", s.train.entropy_coef},
                {"actor_lr", s.train.actor_lr},
                {"critic_lr", s.train.critic_lr},
                {"rms_decay", s.train.rms_decay},
                {"rms_stability", s.train.rms_stability},
                {"grad_clip", s.train.grad_clip},
                {"max_updates", s.train.max_updates},
                {"hidden", s.train.hidden}};
  j["meta"] = {{"inner_lr", s.meta.inner_lr},
               {"meta_lr", s.meta.meta_lr},
               {"inner_steps", s.meta.inner_steps},
               {"meta_batch", s.meta.meta_batch},
               {"iterations", s.meta.iterations},
               {"first_order", s.meta.first_order},
               {"episodes_per_step", s.meta.episodes_per_step},
               {"eval_episodes", s.meta.eval_episodes},
               {"weight_clip_lo", s.meta.weight_clip_lo},
               {"weight_clip_hi", s.meta.weight_clip_hi},
               {"hvp_epsilon", s.meta.hvp_epsilon},
               {"num_workers", s.meta.num_workers},
               {"sampled_eval", s.meta.sampled_eval}};
  j["eval"] = {{"episodes", s.eval_episodes}, {"seeds", s.seeds}, {"sweep_users", s.sweep_users}};
  j["task_seed"] = s.task_seed;
  j["out_dir"] = s.out_dir;
  j["checkpoint_every"] = s.checkpoint_every;
  return j;
}

/// Fills `base` from `j`; keys absent from `j` keep their values.
inline ExperimentSpec spec_from_json(const Json& j, ExperimentSpec base = {}) {
  ExperimentSpec s = std::move(base);
  detail::Reader top(j, "root");
  top.get("name", s.name);
  std::string algo = algorithm_name(s.algorithm);
  top.get("algorithm", algo);
  s.algorithm = parse_algorithm(algo);
  top.get("task_seed", s.task_seed).get("out_dir", s.out_dir).get("checkpoint_every", s.checkpoint_every);
  if (auto* a = top.child("area")) {
    detail::Reader(*a, "area").get("width", s.area.width).get("height", s.area.height);
  }
  if (auto* f = top.child("fleet")) {
    detail::Reader(*f, "fleet")
        .get("num_ugv", s.fleet.num_ugv)
        .get("num_uav", s.fleet.num_uav)
        .get("num_users", s.fleet.num_users)
        .get("num_slots", s.fleet.num_slots)
        .get("slot_s", s.fleet.slot_s)
        .get("v_max_ugv", s.fleet.v_max_ugv)
        .get("v_max_uav", s.fleet.v_max_uav)
        .get("z_min", s.fleet.z_min)
        .get("z_max", s.fleet.z_max);
  }
  if (auto* r = top.child("road")) {
    detail::Reader rr(*r, "road");
    rr.get("grid_per_side", s.road.grid_per_side).get("speed_limit", s.road.speed_limit);
    const Json* nodes = rr.child("nodes");
    const Json* edges = rr.child("edges");
    if (nodes || edges) {
      require_config(nodes && edges, "config: road needs both 'nodes' and 'edges'");
      GraphSpec g;
      try {
        for (const auto& n : *nodes) g.nodes.push_back({n.at(0).get<double>(), n.at(1).get<double>()});
        for (const auto& e : *edges) {
          GraphSpec::Edge edge{e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>(), s.road.speed_limit};
          if (e.size() > 2) edge.speed_limit = e.at(2).get<double>();
          g.edges.push_back(edge);
        }
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("config: malformed road node/edge list");
      }
      s.road.explicit_graph = std::move(g);
    }
  }
  if (auto* q = top.child("qos")) {
    detail::Reader(*q, "qos")
        .get("r_min_bps", s.tasks.nominal_qos.r_min_bps)
        .get("sinr_backhaul_min", s.tasks.nominal_qos.sinr_backhaul_min)
        .get("d_safe_m", s.tasks.nominal_qos.d_safe_m);
  }
  if (auto* c = top.child("channel")) {
    ChannelParams& ch = s.tasks.nominal_channel;
    detail::Reader(*c, "channel")
        .get("carrier_hz", ch.carrier_hz)
        .get("excess_los_db", ch.excess_los_db)
        .get("excess_nlos_db", ch.excess_nlos_db)
        .get("g2a_a", ch.g2a.a)
        .get("g2a_b", ch.g2a.b)
        .get("a2g_a", ch.a2g.a)
        .get("a2g_b", ch.a2g.b)
        .get("bandwidth_hz", ch.bandwidth_hz)
        .get("uav_power_w", ch.uav_power_w)
        .get("ugv_power_w", ch.ugv_power_w)
        .get("noise_w", ch.noise_w);
  }
  if (auto* t = top.child("tasks")) {
    detail::Reader(*t, "tasks")
        .get("users_min", s.tasks.users_min)
        .get("users_max", s.tasks.users_max)
        .get("channel_jitter", s.tasks.channel_jitter)
        .get("r_min_lo_bps", s.tasks.r_min_lo_bps)
        .get("r_min_hi_bps", s.tasks.r_min_hi_bps);
  }
  if (auto* w = top.child("reward")) {
    detail::Reader(*w, "reward")
        .get("qos_penalty", s.reward.qos_penalty)
        .get("backhaul_penalty", s.reward.backhaul_penalty)
        .get("return_penalty", s.reward.return_penalty)
        .get("rate_unit_bps", s.reward.rate_unit_bps);
  }
  if (auto* t = top.child("train")) {
    detail::Reader(*t, "train")
        .get("num_workers", s.train.num_workers)
        .get("horizon", s.train.horizon)
        .get("gamma", s.train.gamma)
        .get("entropy_coef", s.train.entropy_coef)
        .get("actor_lr", s.train.actor_lr)
        .get("critic_lr", s.train.critic_lr)
        .get("rms_decay", s.train.rms_decay)
        .get("rms_stability", s.train.rms_stability)
        .get("grad_clip", s.train.grad_clip)
        .get("max_updates", s.train.max_updates)
        .get("hidden", s.train.hidden);
  }
  if (auto* m = top.child("meta")) {
    detail::Reader(*m, "meta")
        .get("inner_lr", s.meta.inner_lr)
        .get("meta_lr", s.meta.meta_lr)
        .get("inner_steps", s.meta.inner_steps)
        .get("meta_batch", s.meta.meta_batch)
        .get("iterations", s.meta.iterations)
        .get("first_order", s.meta.first_order)
        .get("episodes_per_step", s.meta.episodes_per_step)
        .get("eval_episodes", s.meta.eval_episodes)
        .get("weight_clip_lo", s.meta.weight_clip_lo)
        .get("weight_clip_hi", s.meta.weight_clip_hi)
        .get("hvp_epsilon", s.meta.hvp_epsilon)
        .get("num_workers", s.meta.num_workers)
        .get("sampled_eval", s.meta.sampled_eval);
  }
  if (auto* e = top.child("eval")) {
    detail::Reader(*e, "eval")
        .get("episodes", s.eval_episodes)
        .get("seeds", s.seeds)
        .get("sweep_users", s.sweep_users);
  }
  s.tasks.area = s.area;
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// Presets

/// Full-size scenario: 4 UAVs, 4 UGVs, 100 users over 3 km x 3 km.
inline ExperimentSpec default_spec() {
  ExperimentSpec s;
  s.name = "default";
  s.tasks.area = s.area;
  s.tasks.users_min = s.tasks.users_max = s.fleet.num_users;
  s.tasks.r_min_lo_bps = s.tasks.r_min_hi_bps = s.tasks.nominal_qos.r_min_bps;
  s.eval_episodes = 5;
  s.sweep_users = {20, 60, 100};
  return s;
}

/// One UAV, one UGV, five users on a 2 x 2 road grid; small enough for
/// training tests to finish in minutes.
inline ExperimentSpec smoke_spec() {
  ExperimentSpec s;
  s.name = "smoke";
  s.area = {1000.0, 1000.0};
  s.fleet.num_ugv = 1;
  s.fleet.num_uav = 1;
  s.fleet.num_users = 5;
  s.fleet.num_slots = 20;
  s.road.grid_per_side = 2;
  s.tasks.area = s.area;
  s.tasks.users_min = s.tasks.users_max = 5;
  s.train.hidden = {32, 32};
  s.train.horizon = 20;
  s.meta.iterations = 200;
  s.meta.inner_lr = 3e-3;
  s.meta.episodes_per_step = 8;
  s.meta.eval_episodes = 10;
  s.sweep_users = {5};
  return s;
}

inline ExperimentSpec builtin_spec(const std::string& name) {
  if (name == "default") return default_spec();
  if (name == "smoke") return smoke_spec();
  throw ConfigError("unknown built-in config '" + name + "'");
}

/// `ref` is either a built-in name or a JSON file path. A file may name a
/// preset to start from with "base".
inline ExperimentSpec load_spec(const std::string& ref) {
  if (ref == "default" || ref == "smoke") {
    ExperimentSpec s = builtin_spec(ref);
    s.validate();
    return s;
  }
  std::ifstream in(ref);
  require_config(in.good(), "config: cannot open '" + ref + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: '" + ref + "' is not valid JSON: " + e.what());
  }
  require_config(j.is_object(), "config: top level must be an object");
  ExperimentSpec base = default_spec();
  if (j.contains("base")) {
    require_config(j["base"].is_string(), "config: 'base' must be a string");
    base = builtin_spec(j["base"].get<std::string>());
    j.erase("base");
  }
  return spec_from_json(j, base);
}

/// FNV-1a over the canonical scenario JSON.
inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t scenario_fingerprint(const ExperimentSpec& s) {
  return fnv1a64(scenario_json(s).dump());
}

}  // namespace uavnet
