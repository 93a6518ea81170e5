// Command-line front end: train, meta-train, adapt, eval, export-traj, bench.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "uavnet/harness.hpp"

namespace fs = std::filesystem;
using namespace uavnet;

namespace {

struct Options {
  std::string config = "default";
  std::vector<std::string> bench_configs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool serial = false;
  std::string out;
  std::string algo;
  std::optional<std::size_t> inner_steps;
  std::optional<std::size_t> meta_batch;
  std::vector<std::size_t> sweep_users;
  std::optional<std::size_t> updates;
  std::optional<std::size_t> meta_iters;
  std::string checkpoint;
  std::optional<std::uint64_t> task_seed;
  std::optional<std::size_t> steps;
  std::optional<std::size_t> episodes;
  std::optional<std::size_t> slots;
  std::size_t reps = 5;
};

ExperimentSpec apply_overrides(ExperimentSpec spec, const Options& o) {
  if (o.seed) spec.seeds = {*o.seed};
  if (o.workers) spec.train.num_workers = spec.meta.num_workers = *o.workers;
  if (o.serial) spec.train.num_workers = spec.meta.num_workers = 1;
  if (!o.algo.empty()) spec.algorithm = parse_algorithm(o.algo);
  if (o.inner_steps) spec.meta.inner_steps = *o.inner_steps;
  if (o.meta_batch) spec.meta.meta_batch = *o.meta_batch;
  if (!o.sweep_users.empty()) spec.sweep_users = o.sweep_users;
  if (o.updates) spec.train.max_updates = *o.updates;
  if (o.meta_iters) spec.meta.iterations = *o.meta_iters;
  if (o.task_seed) spec.task_seed = *o.task_seed;
  if (o.episodes) spec.eval_episodes = *o.episodes;
  if (!o.out.empty()) spec.out_dir = o.out;
  spec.validate();
  return spec;
}

fs::path output_file(const Options& o, const ExperimentSpec& spec, const char* name) {
  if (!o.out.empty()) return o.out;
  return fs::path(spec.out_dir) / name;
}

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "built-in name (default, smoke) or JSON file");
  cmd->add_option("--seed", o.seed, "run seed");
  cmd->add_option("--workers", o.workers, "parallel workers");
  cmd->add_flag("--serial", o.serial, "single worker, deterministic");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV/UGV network simulator with actor-critic and meta-learning trainers"};
  app.require_subcommand(1);
  Options o;

  auto* train = app.add_subcommand("train", "train with the configured algorithm");
  add_common(train, o);
  train->add_option("--algo", o.algo, "a3c or meta-a3c")->check(CLI::IsMember({"a3c", "meta-a3c"}));
  train->add_option("--out", o.out, "output directory");
  train->add_option("--updates", o.updates, "a3c: global updates");
  train->add_option("--meta-iters", o.meta_iters, "meta: iterations");
  train->add_option("--inner-steps", o.inner_steps, "meta: inner steps per task");
  train->add_option("--meta-batch", o.meta_batch, "meta: tasks per meta-update");
  train->add_option("--task-seed", o.task_seed, "a3c: training task");

  auto* meta = app.add_subcommand("meta-train", "meta-train the actor-critic");
  add_common(meta, o);
  meta->add_option("--out", o.out, "output directory");
  meta->add_option("--meta-iters", o.meta_iters, "iterations");
  meta->add_option("--inner-steps", o.inner_steps, "inner steps per task");
  meta->add_option("--meta-batch", o.meta_batch, "tasks per meta-update");

  auto* adapt = app.add_subcommand("adapt", "adapt a checkpoint to a new task");
  add_common(adapt, o);
  adapt->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  adapt->add_option("--task-seed", o.task_seed, "task to adapt to");
  adapt->add_option("--steps", o.steps, "adaptation steps (default: configured inner steps)");
  adapt->add_option("--inner-steps", o.inner_steps, "alias of --steps");
  adapt->add_option("--out", o.out, "report file");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint with mean actions");
  add_common(eval, o);
  eval->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  eval->add_option("--episodes", o.episodes, "episodes per seed");
  eval->add_option("--sweep-users", o.sweep_users, "user counts to evaluate")->delimiter(',');
  eval->add_option("--out", o.out, "summary file");

  auto* traj = app.add_subcommand("export-traj", "export one episode's trajectories");
  add_common(traj, o);
  traj->add_option("--checkpoint", o.checkpoint, "checkpoint file")->required();
  traj->add_option("--task-seed", o.task_seed, "task to roll out");
  traj->add_option("--slots", o.slots, "episode length");
  traj->add_option("--out", o.out, "trajectory file");

  auto* bench = app.add_subcommand("bench", "measure training wall time per episode");
  bench->add_option("--config", o.bench_configs, "configurations (repeatable)");
  bench->add_option("--seed", o.seed, "run seed");
  bench->add_option("--algo", o.algo, "a3c or meta-a3c (default: both)")
      ->check(CLI::IsMember({"a3c", "meta-a3c"}));
  bench->add_option("--reps", o.reps, "repetitions (>= 5)");
  bench->add_option("--out", o.out, "table file");
  bench->add_flag("--serial", o.serial, "accepted for symmetry; bench is always serial");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*bench) {
      if (o.bench_configs.empty()) o.bench_configs = {"smoke"};
      std::vector<ExperimentSpec> specs;
      for (const auto& ref : o.bench_configs) {
        ExperimentSpec s = load_spec(ref);
        if (o.seed) s.seeds = {*o.seed};
        specs.push_back(s);
      }
      std::vector<Algorithm> algos{Algorithm::kA3c, Algorithm::kMetaA3c};
      if (!o.algo.empty()) algos = {parse_algorithm(o.algo)};
      auto rows = measure_runtime(specs, algos, o.reps);
      fs::path out = o.out.empty() ? fs::path(specs.front().out_dir) / "bench.csv" : fs::path(o.out);
      write_runtime_table(rows, out);
      for (const auto& r : rows)
        std::cout << r.algorithm << " " << r.config << ": " << r.mean_episode_s << " s/episode (stdev "
                  << r.stdev_episode_s << ")\n";
      return 0;
    }

    ExperimentSpec base = load_spec(o.config);
    if (*train || *meta) {
      if (*meta) o.algo = "meta-a3c";
      ExperimentSpec spec = apply_overrides(base, o);
      TrainOutputs out = cmd_train(spec, spec.out_dir);
      std::cout << "wrote " << out.rows << " rows to " << out.metrics.string() << ", checkpoint "
                << out.checkpoint.string() << "\n";
      return 0;
    }

    const std::uint64_t fingerprint = scenario_fingerprint(base);
    ExperimentSpec spec = apply_overrides(base, o);
    Checkpoint ck = load_checkpoint(o.checkpoint, fingerprint);

    if (*adapt) {
      std::size_t k = o.steps ? *o.steps : (o.inner_steps ? *o.inner_steps : spec.meta.inner_steps);
      std::uint64_t task_seed = o.task_seed ? *o.task_seed : spec.task_seed;
      fs::path out = output_file(o, spec, "adapt.csv");
      AdaptationReport r = cmd_adapt(spec, ck, task_seed, k, out);
      std::cout << "task " << r.task_id << ": pre " << r.pre_reward << " post " << r.post_reward
                << " -> " << out.string() << "\n";
    } else if (*eval) {
      fs::path out = output_file(o, spec, "eval.csv");
      auto rows = cmd_eval(spec, ck, out);
      for (const auto& r : rows)
        std::cout << "K=" << r.users << ": sum rate " << r.mean_sum_rate_bps / 1e6 << " Mbit/s, QoS "
                  << r.qos_fraction << "\n";
    } else if (*traj) {
      std::uint64_t task_seed = o.task_seed ? *o.task_seed : spec.task_seed;
      fs::path out = output_file(o, spec, "trajectory.csv");
      auto t = cmd_export_traj(spec, ck, task_seed, o.slots.value_or(0), out);
      std::cout << "wrote " << t.vehicle_rows << " vehicle rows and " << t.user_rows
                << " user rows to " << out.string() << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
