#pragma once

// Experiment orchestration behind the CLI: training runs, adaptation,
// evaluation, trajectory export and runtime measurement.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "uavnet/a3c.hpp"
#include "uavnet/checkpoint.hpp"
#include "uavnet/config.hpp"
#include "uavnet/evaluation.hpp"
#include "uavnet/meta.hpp"
#include "uavnet/metrics.hpp"
#include "uavnet/network.hpp"

namespace uavnet {

inline std::vector<std::string> metrics_header() {
  return {"algorithm",   "iteration",   "env_steps", "mean_reward", "pre_reward", "post_reward",
          "actor_loss",  "critic_loss", "entropy",   "grad_norm",   "task_ids"};
}

struct TrainOutputs {
  std::filesystem::path metrics;
  std::filesystem::path timing;
  std::filesystem::path checkpoint;
  std::size_t rows = 0;
  Checkpoint final_checkpoint;
};

inline std::string checkpoint_metadata(const ExperimentSpec& spec) {
  return "config=" + spec.name + ";algorithm=" + algorithm_name(spec.algorithm) +
         ";seed=" + std::to_string(spec.seeds.front());
}

/// Fresh, untrained checkpoint for `spec` (its seed drives initialization).
inline Checkpoint initial_checkpoint(const ExperimentSpec& spec) {
  auto sc = build_scenario(spec);
  TrainConfig tc = spec.train;
  tc.seed = spec.seeds.front();
  GlobalModel model = make_global_model(*sc, tc);
  auto st = model.state();
  Checkpoint c;
  c.fingerprint = scenario_fingerprint(spec);
  c.algorithm = spec.algorithm;
  c.seed = tc.seed;
  c.policy = {st.actor, st.critic};
  c.actor_opt = st.actor_opt;
  c.critic_opt = st.critic_opt;
  c.metadata = checkpoint_metadata(spec);
  return c;
}

/// Runs the trainer selected by `spec.algorithm`, writing metrics.csv,
/// timing.csv and checkpoint.bin into `out_dir`. Wall-clock times live only
/// in timing.csv so the metrics file is reproducible.
inline TrainOutputs cmd_train(const ExperimentSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  std::filesystem::create_directories(out_dir);
  auto sc = build_scenario(spec);
  const std::uint64_t seed = spec.seeds.front();
  TrainOutputs out;
  out.metrics = out_dir / "metrics.csv";
  out.timing = out_dir / "timing.csv";
  out.checkpoint = out_dir / "checkpoint.bin";
  CsvWriter metrics(out.metrics.string(), "uavnet-metrics", metrics_header());
  CsvWriter timing(out.timing.string(), "uavnet-timing", {"iteration", "wall_seconds"});
  const std::string algo = algorithm_name(spec.algorithm);

  Checkpoint ck;
  ck.fingerprint = scenario_fingerprint(spec);
  ck.algorithm = spec.algorithm;
  ck.seed = seed;
  ck.metadata = checkpoint_metadata(spec);

  if (spec.algorithm == Algorithm::kA3c) {
    TrainConfig tc = spec.train;
    tc.seed = seed;
    Task task = sample_task(sc->tasks, spec.task_seed);
    GlobalModel model = make_global_model(*sc, tc);
    std::vector<std::uint64_t> worker_steps(tc.num_workers, 0);
    auto records = train_a3c(sc, task, tc, model);
    for (const UpdateRecord& r : records) {
      worker_steps[r.worker] = std::max(worker_steps[r.worker], r.env_steps);
      std::uint64_t total = 0;
      for (auto s : worker_steps) total += s;
      metrics.row(algo, r.update_index, total, r.mean_reward, "", "", r.actor_loss, r.critic_loss,
                  r.entropy, "", fmt(task.id));
      timing.row(r.update_index, r.wall_seconds);
    }
    auto st = model.state();
    ck.policy = {st.actor, st.critic};
    ck.actor_opt = st.actor_opt;
    ck.critic_opt = st.critic_opt;
    ck.updates = st.version;
    for (auto s : worker_steps) ck.env_steps += s;
    out.rows = records.size();
  } else {
    MetaConfig mc = spec.meta;
    auto save_partial = [&](const MetaIterationRecord& rec, const Policy& p, const MetaOptimizer& o) {
      metrics.row(algo, static_cast<std::uint64_t>(rec.iteration + 1), rec.env_steps,
                  rec.post_reward, rec.pre_reward, rec.post_reward, rec.meta_loss, "",
                  gaussian_entropy(p.actor.free_block()), rec.meta_grad_norm, join(rec.task_ids));
      timing.row(static_cast<std::uint64_t>(rec.iteration + 1), rec.wall_seconds);
      ++out.rows;
      if (spec.checkpoint_every > 0 && (rec.iteration + 1) % spec.checkpoint_every == 0) {
        Checkpoint partial = ck;
        partial.policy = p;
        partial.actor_opt = o.actor;
        partial.critic_opt = o.critic;
        partial.meta_iterations = rec.iteration + 1;
        partial.updates = rec.iteration + 1;
        partial.env_steps = rec.env_steps;
        partial.meta = mc;
        save_checkpoint(out.checkpoint.string(), partial);
      }
    };
    MetaTrainResult r = meta_train(sc, mc, spec.train, seed, save_partial);
    ck.policy = r.policy;
    ck.actor_opt = r.optimizer.actor;
    ck.critic_opt = r.optimizer.critic;
    ck.meta_iterations = r.records.size();
    ck.updates = r.records.size();
    ck.env_steps = r.env_steps;
    ck.meta = mc;
  }
  metrics.flush();
  timing.flush();
  save_checkpoint(out.checkpoint.string(), ck);
  out.final_checkpoint = std::move(ck);
  return out;
}

// ---------------------------------------------------------------------------
// Adaptation

inline AdaptationReport cmd_adapt(const ExperimentSpec& spec, const Checkpoint& ck,
                                  std::uint64_t task_seed, std::size_t k,
                                  const std::filesystem::path& out_path) {
  require(ck.fingerprint == scenario_fingerprint(spec),
          "checkpoint scenario fingerprint mismatch: the checkpoint was trained on a different scenario");
  auto sc = build_scenario(spec);
  MetaConfig mc = ck.meta ? *ck.meta : spec.meta;
  mc.eval_episodes = spec.meta.eval_episodes;
  Task task = sample_task(sc->tasks, task_seed);
  OnlineAdaptResult r = online_adapt(ck.policy, sc, task, k, mc, spec.train,
                                     derive_seed(task_seed, spec.seeds.front()));
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  CsvWriter csv(out_path.string(), "uavnet-adapt",
                {"task_id", "k", "episode", "pre_reward", "post_reward"});
  for (std::size_t i = 0; i < r.report.pre_per_seed.size(); ++i)
    csv.row(task.id, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i),
            r.report.pre_per_seed[i], r.report.post_per_seed[i]);
  csv.row(task.id, static_cast<std::uint64_t>(k), "mean", r.report.pre_reward, r.report.post_reward);
  csv.flush();
  return r.report;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalSummary {
  std::size_t users = 0;
  std::size_t episodes = 0;
  double mean_sum_rate_bps = 0.0;
  double stdev_sum_rate_bps = 0.0;
  double mean_reward = 0.0;
  double qos_fraction = 0.0;
  std::array<double, kNumConstraints> violation_fraction{};  // of checked slots
  std::array<double, kNumConstraints> max_violation{};

  friend bool operator==(const EvalSummary&, const EvalSummary&) = default;
};

/// Greedy rollouts of the checkpoint's actor. One summary per sweep point
/// (or a single one at the configured user count).
inline std::vector<EvalSummary> evaluate_checkpoint(const ExperimentSpec& spec, const Checkpoint& ck) {
  require(ck.fingerprint == scenario_fingerprint(spec),
          "checkpoint scenario fingerprint mismatch: the checkpoint was trained on a different scenario");
  std::vector<std::size_t> sweep = spec.sweep_users;
  if (sweep.empty()) sweep.push_back(spec.fleet.num_users);
  std::vector<EvalSummary> out;
  for (std::size_t users : sweep) {
    ExperimentSpec sp = spec;
    sp.fleet.num_users = users;
    sp.tasks.users_min = sp.tasks.users_max = users;
    auto sc = build_scenario(sp);
    EvalSummary s;
    s.users = users;
    std::vector<double> rates;
    std::size_t qos_ok = 0, qos_total = 0, slots_checked = 0;
    std::array<std::size_t, kNumConstraints> violated{};
    for (std::uint64_t seed : spec.seeds) {
      for (std::size_t e = 0; e < spec.eval_episodes; ++e) {
        Task task = sample_task(sc->tasks, derive_seed(seed, 2 * e));
        EpisodeResult ep = run_episode(ck.policy.actor, *sc, task, derive_seed(seed, 2 * e + 1));
        rates.push_back(ep.mean_sum_rate_bps);
        s.mean_reward += ep.mean_reward;
        qos_ok += ep.qos_satisfied;
        qos_total += ep.qos_total;
        auto report = check_constraints(ep.history, task.channel, task.qos, sc->fleet, *sc->graph);
        for (const ConstraintReport& slot : report.per_slot) {
          ++slots_checked;
          for (std::size_t c = 0; c < kNumConstraints; ++c) {
            if (!slot.status[c].satisfied) ++violated[c];
            s.max_violation[c] = std::max(s.max_violation[c], slot.status[c].violation);
          }
        }
        ++s.episodes;
      }
    }
    s.mean_sum_rate_bps = mean_of(rates);
    s.stdev_sum_rate_bps = stdev_of(rates);
    s.mean_reward /= static_cast<double>(s.episodes);
    s.qos_fraction = qos_total ? static_cast<double>(qos_ok) / static_cast<double>(qos_total) : 0.0;
    for (std::size_t c = 0; c < kNumConstraints; ++c)
      s.violation_fraction[c] = static_cast<double>(violated[c]) / static_cast<double>(slots_checked);
    out.push_back(s);
  }
  return out;
}

inline std::vector<std::string> eval_header() {
  std::vector<std::string> h{"users", "episodes", "mean_sum_rate_bps", "stdev_sum_rate_bps",
                             "mean_reward", "qos_fraction"};
  for (std::size_t c = 0; c < kNumConstraints; ++c) {
    h.push_back(std::string(constraint_name(c)) + "_violation_fraction");
    h.push_back(std::string(constraint_name(c)) + "_max_violation");
  }
  return h;
}

inline std::vector<EvalSummary> cmd_eval(const ExperimentSpec& spec, const Checkpoint& ck,
                                         const std::filesystem::path& out_path) {
  auto rows = evaluate_checkpoint(spec, ck);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  CsvWriter csv(out_path.string(), "uavnet-eval", eval_header());
  for (const EvalSummary& s : rows) {
    std::vector<std::string> f{fmt(static_cast<std::uint64_t>(s.users)),
                               fmt(static_cast<std::uint64_t>(s.episodes)),
                               fmt(s.mean_sum_rate_bps),
                               fmt(s.stdev_sum_rate_bps),
                               fmt(s.mean_reward),
                               fmt(s.qos_fraction)};
    for (std::size_t c = 0; c < kNumConstraints; ++c) {
      f.push_back(fmt(s.violation_fraction[c]));
      f.push_back(fmt(s.max_violation[c]));
    }
    csv.row_strings(f);
  }
  csv.flush();
  return rows;
}

// ---------------------------------------------------------------------------
// Trajectory export

inline std::vector<std::string> trajectory_header() {
  std::vector<std::string> h{"slot", "entity", "id", "x", "y", "z", "reward"};
  for (std::size_t c = 0; c < kNumConstraints; ++c) h.emplace_back(constraint_name(c));
  return h;
}

struct TrajectoryExport {
  EpisodeResult episode;
  EpisodeConstraintReport constraints;
  std::size_t vehicle_rows = 0;
  std::size_t user_rows = 0;
};

/// Greedy episode of `slots` slots on the task drawn from `task_seed`.
/// Vehicles get one row per slot 0..N; users one row each (slot 0).
inline TrajectoryExport cmd_export_traj(const ExperimentSpec& spec, const Checkpoint& ck,
                                        std::uint64_t task_seed, std::size_t slots,
                                        const std::filesystem::path& out_path) {
  require(ck.fingerprint == scenario_fingerprint(spec),
          "checkpoint scenario fingerprint mismatch: the checkpoint was trained on a different scenario");
  ExperimentSpec sp = spec;
  if (slots > 0) sp.fleet.num_slots = slots;
  auto sc = build_scenario(sp);
  Task task = sample_task(sc->tasks, task_seed);
  TrajectoryExport out;
  out.episode = run_episode(ck.policy.actor, *sc, task, derive_seed(task_seed, 0x7a1));
  out.constraints = check_constraints(out.episode.history, task.channel, task.qos, sc->fleet, *sc->graph);

  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  CsvWriter csv(out_path.string(), "uavnet-trajectory", trajectory_header());
  const auto& h = out.episode.history;
  for (std::size_t n = 0; n < h.uavs.size(); ++n) {
    std::string reward = n == 0 ? "" : fmt(out.episode.rewards[n - 1]);
    std::vector<std::string> viol;
    for (std::size_t c = 0; c < kNumConstraints; ++c)
      viol.push_back(fmt(out.constraints.per_slot[n].status[c].violation));
    auto emit = [&](const char* entity, std::size_t id, Vec3 p) {
      std::vector<std::string> f{fmt(static_cast<std::uint64_t>(n)), entity,
                                 fmt(static_cast<std::uint64_t>(id)), fmt(p.x), fmt(p.y), fmt(p.z), reward};
      f.insert(f.end(), viol.begin(), viol.end());
      csv.row_strings(f);
      ++out.vehicle_rows;
    };
    for (std::size_t u = 0; u < h.uavs[n].size(); ++u) emit("uav", u, h.uavs[n][u]);
    for (std::size_t m = 0; m < h.ugvs[n].size(); ++m) emit("ugv", m, h.ugvs[n][m]);
  }
  for (std::size_t k = 0; k < h.users.size(); ++k) {
    std::vector<std::string> f{"0", "user", fmt(static_cast<std::uint64_t>(k)), fmt(h.users[k].x),
                               fmt(h.users[k].y), fmt(h.users[k].z), ""};
    f.resize(f.size() + kNumConstraints);
    csv.row_strings(f);
    ++out.user_rows;
  }
  csv.flush();
  return out;
}

// ---------------------------------------------------------------------------
// Runtime measurement

struct RuntimeRow {
  std::string algorithm;
  std::string config;
  std::size_t reps = 0;
  double mean_episode_s = 0.0;   // training wall time per environment episode
  double stdev_episode_s = 0.0;
  double mean_rollout_s = 0.0;   // policy rollout alone, per episode
};

/// Times one training episode's worth of work per repetition for each
/// (algorithm, configuration) pair. Always serial.
inline std::vector<RuntimeRow> measure_runtime(const std::vector<ExperimentSpec>& specs,
                                               const std::vector<Algorithm>& algorithms,
                                               std::size_t reps) {
  require_config(reps >= 5, "bench: at least 5 repetitions");
  require_config(!specs.empty() && !algorithms.empty(), "bench: nothing to measure");
  using Clock = std::chrono::steady_clock;
  auto seconds = [](Clock::time_point a) { return std::chrono::duration<double>(Clock::now() - a).count(); };
  std::vector<RuntimeRow> rows;
  for (const ExperimentSpec& spec : specs) {
    auto sc = build_scenario(spec);
    const std::uint64_t seed = spec.seeds.front();
    for (Algorithm algo : algorithms) {
      RuntimeRow row{algorithm_name(algo), spec.name, reps};
      std::vector<double> per_episode, rollout;
      for (std::size_t r = 0; r < reps; ++r) {
        Task task = sample_task(sc->tasks, derive_seed(seed, r));
        TrainConfig tc = spec.train;
        tc.num_workers = 1;
        tc.seed = derive_seed(seed, 100 + r);
        Policy p = make_policy(*sc, tc, tc.seed);

        Rng rng(tc.seed);
        auto t0 = Clock::now();
        run_episode(p.actor, *sc, task, derive_seed(seed, 200 + r), &rng);
        rollout.push_back(seconds(t0));

        if (algo == Algorithm::kA3c) {
          tc.max_updates = (spec.fleet.num_slots + tc.horizon - 1) / tc.horizon;
          GlobalModel model = make_global_model(*sc, tc);
          t0 = Clock::now();
          train_a3c(sc, task, tc, model);
          per_episode.push_back(seconds(t0));
        } else {
          MetaConfig mc = spec.meta;
          mc.num_workers = 1;
          MetaOptimizer opt = MetaOptimizer::for_policy(p, mc, tc);
          std::vector<Task> tasks;
          for (std::size_t b = 0; b < mc.meta_batch; ++b)
            tasks.push_back(sample_task(sc->tasks, derive_seed(seed, 1000 * (r + 1) + b)));
          t0 = Clock::now();
          meta_update(p, opt, sc, tasks, mc, tc, tc.seed);
          double episodes = static_cast<double>(mc.meta_batch * (mc.inner_steps + 1) * mc.episodes_per_step);
          per_episode.push_back(seconds(t0) / episodes);
        }
      }
      row.mean_episode_s = mean_of(per_episode);
      row.stdev_episode_s = stdev_of(per_episode);
      row.mean_rollout_s = mean_of(rollout);
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_runtime_table(const std::vector<RuntimeRow>& rows, const std::filesystem::path& out_path) {
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  CsvWriter csv(out_path.string(), "uavnet-bench",
                {"algorithm", "config", "reps", "mean_episode_s", "stdev_episode_s", "mean_rollout_s"});
  for (const RuntimeRow& r : rows)
    csv.row(r.algorithm, r.config, static_cast<std::uint64_t>(r.reps), r.mean_episode_s,
            r.stdev_episode_s, r.mean_rollout_s);
  csv.flush();
}

}  // namespace uavnet
