// Copyright 2026 The mtpsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mtp/checkpoint.hpp"
#include "mtp/config.hpp"
#include "mtp/dataset.hpp"
#include "mtp/manifest.hpp"
#include "mtp/metrics.hpp"
#include "mtp/network.hpp"
#include "mtp/run_config.hpp"
#include "mtp/simulator.hpp"
#include "mtp/tracks.hpp"
#include "mtp/trainer.hpp"

namespace fs = std::filesystem;
using namespace mtp;

namespace {

std::string format_double(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

ConfigFile load_config(const std::string & path)
{
  try {
    return ConfigFile::parse_file(path);
  } catch (const ConfigError &) {
    throw;
  } catch (const std::exception & e) {
    throw ConfigError(e.what());  // unreadable file counts as a config error
  }
}

std::vector<std::string> collect_command(int argc, char ** argv)
{
  std::vector<std::string> cmd;
  for (int i = 0; i < argc; ++i) cmd.emplace_back(argv[i]);
  return cmd;
}

struct DatasetMeta
{
  int horizon = 30;
  double prediction_dt = 0.2;
  double scale = 50.0;

  static DatasetMeta read(const std::string & dir)
  {
    const auto path = fs::path(dir) / "dataset_meta.json";
    const auto j = nlohmann::json::parse(read_file(path.string()));
    DatasetMeta meta;
    meta.horizon = j.at("horizon").get<int>();
    meta.prediction_dt = j.at("prediction_dt").get<double>();
    meta.scale = j.at("scale").get<double>();
    return meta;
  }
};

void write_dataset_meta(const std::string & dir, const SimSetup & setup, int episodes,
                        std::uint64_t seed, std::size_t n_train, std::size_t n_val, int rejected)
{
  nlohmann::json j;
  j["horizon"] = setup.horizon;
  j["prediction_dt"] = setup.prediction_dt;
  j["scale"] = setup.scale;
  j["episodes"] = episodes;
  j["seed"] = seed;
  j["train_scenes"] = n_train;
  j["val_scenes"] = n_val;
  j["rejected_episodes"] = rejected;
  write_file_atomic((fs::path(dir) / "dataset_meta.json").string(), j.dump(2) + "\n");
}

void write_trajectory_csv(const std::string & path, const std::vector<EpisodeLog> & logs)
{
  std::string out = "episode,tick,vehicle,x,y,theta,v\n";
  for (const auto & log : logs) {
    for (int tick = 0; tick < static_cast<int>(log.ticks.size()); ++tick) {
      for (const auto & tv : log.ticks[static_cast<std::size_t>(tick)]) {
        out += std::to_string(log.episode_index) + "," + std::to_string(tick) + "," +
               std::to_string(tv.id) + "," + format_double(tv.x) + "," + format_double(tv.y) + "," +
               format_double(tv.theta) + "," + format_double(tv.v) + "\n";
      }
    }
  }
  write_file_atomic(path, out);
}

// ---- gen-data ----

struct GenDataArgs
{
  std::string config_path;
  std::string tracks_path;
  std::string heading_unit = "degrees";
  int frame_step = 5;
  int episodes = 100;
  std::uint64_t seed = 1;
  double val_fraction = 0.2;
  std::string out_dir;
  int workers = 1;
};

int run_gen_data(const GenDataArgs & args, const std::vector<std::string> & command)
{
  const ConfigFile cfg = load_config(args.config_path);
  const SimSetup setup = load_sim_setup(cfg);
  fs::create_directories(args.out_dir);

  std::vector<Scene> train_scenes;
  std::vector<Scene> val_scenes;
  int rejected = 0;

  if (!args.tracks_path.empty()) {
    // import real track recordings instead of simulating
    TrackCsvOptions opts;
    if (args.heading_unit == "degrees") {
      opts.heading_degrees = true;
    } else if (args.heading_unit == "radians") {
      opts.heading_degrees = false;
    } else {
      throw ConfigError("--heading-unit must be degrees or radians");
    }
    if (args.frame_step < 1) throw ConfigError("--frame-step must be >= 1");
    const auto raw = load_tracks(args.tracks_path, opts);
    std::vector<TrackSequence> subsampled;
    for (const auto & seq : raw) {
      TrackSequence s;
      s.id = seq.id;
      s.first_frame = (seq.first_frame + args.frame_step - 1) / args.frame_step;
      for (std::int64_t f = s.first_frame * args.frame_step; f <= seq.last_frame();
           f += args.frame_step) {
        s.poses.push_back(seq.poses[static_cast<std::size_t>(f - seq.first_frame)]);
      }
      if (!s.poses.empty()) subsampled.push_back(std::move(s));
    }
    const auto labeled = label_intentions(subsampled);
    const int stride_frames =
      std::max(1, setup.stride_ticks /
                    std::max(1, static_cast<int>(std::lround(setup.prediction_dt / setup.scenario.dt))));
    const auto scenes = slice_scenes(labeled, stride_frames, setup.horizon, setup.prediction_dt);
    // temporal split: early instants train, late instants validate
    const std::size_t split =
      scenes.size() - static_cast<std::size_t>(std::llround(args.val_fraction * scenes.size()));
    train_scenes.assign(scenes.begin(), scenes.begin() + static_cast<std::ptrdiff_t>(split));
    val_scenes.assign(scenes.begin() + static_cast<std::ptrdiff_t>(split), scenes.end());
    write_episode_logs((fs::path(args.out_dir) / "episodes.jsonl").string(), {});
  } else {
    ScenarioConfig scenario = setup.scenario;
    scenario.seed = args.seed;
    RouteTable table(setup.map);
    const auto rollout = rollout_expert(scenario, table, setup.run, args.episodes, args.workers);
    rejected = rollout.rejected_episodes;

    // split by episode so overlapping slices never straddle the split
    const int val_every = args.val_fraction > 0.0
                            ? std::max(2, static_cast<int>(std::lround(1.0 / args.val_fraction)))
                            : 0;
    for (const auto & log : rollout.logs) {
      const auto scenes = scenes_from_log(log, setup.horizon, setup.prediction_dt,
                                          setup.stride_ticks, setup.warmup_ticks);
      const bool is_val = val_every > 0 && log.episode_index % val_every == val_every - 1;
      auto & sink = is_val ? val_scenes : train_scenes;
      sink.insert(sink.end(), scenes.begin(), scenes.end());
    }
    write_episode_logs((fs::path(args.out_dir) / "episodes.jsonl").string(), rollout.logs);
  }

  write_scenes((fs::path(args.out_dir) / "train.jsonl").string(), train_scenes);
  write_scenes((fs::path(args.out_dir) / "val.jsonl").string(), val_scenes);
  write_dataset_meta(args.out_dir, setup, args.episodes, args.seed, train_scenes.size(),
                     val_scenes.size(), rejected);

  RunManifest manifest;
  manifest.subcommand = "gen-data";
  manifest.command = command;
  manifest.config_path = args.config_path;
  manifest.config_digest = cfg.digest();
  manifest.seed = args.seed;
  if (!args.tracks_path.empty()) manifest.inputs["tracks"] = args.tracks_path;
  manifest.outputs["train"] = "train.jsonl";
  manifest.outputs["val"] = "val.jsonl";
  manifest.outputs["episodes"] = "episodes.jsonl";
  write_manifest(args.out_dir, manifest);

  std::cout << "wrote " << train_scenes.size() << " training and " << val_scenes.size()
            << " validation scenes to " << args.out_dir << "\n";
  return 0;
}

// ---- train ----

struct TrainArgs
{
  std::string data_dir;
  std::string config_path;
  std::string out_dir;
  int epochs_override = -1;
  std::int64_t seed_override = -1;
  double collision_weight_override = -1.0;
  double lambda_override = -1.0;
  bool no_aggregation = false;
  bool no_augmentation = false;
  int checkpoint_every = 0;
  int workers = 1;
};

int run_train(const TrainArgs & args, const std::vector<std::string> & command)
{
  const ConfigFile cfg = load_config(args.config_path);
  const DatasetMeta meta = DatasetMeta::read(args.data_dir);
  TrainConfig train_cfg = load_train_config(cfg, meta.horizon, meta.prediction_dt, meta.scale);
  if (args.epochs_override > 0) train_cfg.epochs = args.epochs_override;
  if (args.seed_override >= 0) train_cfg.seed = static_cast<std::uint64_t>(args.seed_override);
  if (args.collision_weight_override >= 0.0) {
    train_cfg.loss.collision_weight = args.collision_weight_override;
  }
  if (args.lambda_override > 0.0) train_cfg.loss.lambda = args.lambda_override;
  if (args.no_aggregation) train_cfg.arch.disable_aggregation = true;
  if (args.no_augmentation) train_cfg.augment = false;
  train_cfg.workers = args.workers;

  const auto train_scenes = read_scenes((fs::path(args.data_dir) / "train.jsonl").string());
  const auto val_scenes = read_scenes((fs::path(args.data_dir) / "val.jsonl").string());
  if (train_scenes.empty()) throw std::runtime_error("train: no scenes in " + args.data_dir);

  fs::create_directories(args.out_dir);
  std::string csv = "epoch,train_loss,val_ade,val_fde,val_mr,val_cr\n";

  const auto t0 = std::chrono::steady_clock::now();
  const auto result =
    train(train_scenes, val_scenes, train_cfg,
          [&](int epoch, const MtpNetwork & net, const EpochRow & row) {
            csv += std::to_string(row.epoch) + "," + format_double(row.train_loss) + "," +
                   format_double(row.val_ade) + "," + format_double(row.val_fde) + "," +
                   format_double(row.val_mr) + "," + format_double(row.val_cr) + "\n";
            if (args.checkpoint_every > 0 && (epoch + 1) % args.checkpoint_every == 0) {
              char name[64];
              std::snprintf(name, sizeof(name), "model_epoch_%04d.ckpt", epoch + 1);
              save_params(net, (fs::path(args.out_dir) / name).string(), cfg.digest());
            }
          });
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_params(result.net, (fs::path(args.out_dir) / "model_final.ckpt").string(), cfg.digest());
  write_file_atomic((fs::path(args.out_dir) / "metrics.csv").string(), csv);

  RunManifest manifest;
  manifest.subcommand = "train";
  manifest.command = command;
  manifest.config_path = args.config_path;
  manifest.config_digest = cfg.digest();
  manifest.seed = train_cfg.seed;
  manifest.inputs["data"] = args.data_dir;
  manifest.outputs["checkpoint"] = "model_final.ckpt";
  manifest.outputs["metrics"] = "metrics.csv";
  write_manifest(args.out_dir, manifest);

  const auto & last = result.log.back();
  std::cout << "trained " << train_cfg.epochs << " epochs in " << format_double(seconds)
            << " s; final val ADE " << format_double(last.val_ade) << " FDE "
            << format_double(last.val_fde) << " MR " << format_double(last.val_mr) << " CR "
            << format_double(last.val_cr) << "\n";
  if (result.augmented_scenes > 0) {
    std::cout << "augmented " << result.augmented_scenes << " scenes (" << result.relabel_failures
              << " relabel failures)\n";
  }
  return 0;
}

// ---- eval-offline ----

struct EvalOfflineArgs
{
  std::string checkpoint;
  std::string data;
  std::string out_dir;
  double miss_threshold = 2.0;
  double lambda = 2.0;
  int workers = 1;
};

int run_eval_offline(const EvalOfflineArgs & args, const std::vector<std::string> & command)
{
  const MtpNetwork net = load_params(args.checkpoint);
  const std::string data_file =
    fs::is_directory(args.data) ? (fs::path(args.data) / "val.jsonl").string() : args.data;
  const auto scenes = read_scenes(data_file);
  if (scenes.empty()) throw std::runtime_error("eval-offline: no scenes in " + data_file);
  for (const auto & scene : scenes) {
    if (!scene.has_futures()) {
      throw std::runtime_error("eval-offline: dataset has no ground-truth futures");
    }
    if (static_cast<int>(scene.futures.front().points.size()) != net.cfg.horizon) {
      throw std::runtime_error(
        "eval-offline: dataset horizon " + std::to_string(scene.futures.front().points.size()) +
        " does not match checkpoint T=" + std::to_string(net.cfg.horizon));
    }
  }

  std::vector<std::vector<Trajectory>> preds(scenes.size());
  parallel_for(scenes.size(), args.workers,
               [&](std::size_t i) { preds[i] = forward(net, scenes[i]).predictions; });

  OfflineAccumulator acc(args.miss_threshold, args.lambda);
  std::string csv = "scene,n_vehicles,ade,fde,mr,cr\n";
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto m = acc.add_scene(preds[i], scenes[i].futures);
    csv += std::to_string(i) + "," + std::to_string(m.n_vehicles) + "," + format_double(m.ade) + "," +
           format_double(m.fde) + "," + format_double(m.mr) + "," + format_double(m.cr) + "\n";
  }
  const auto report = acc.report();

  fs::create_directories(args.out_dir);
  write_file_atomic((fs::path(args.out_dir) / "offline_report.json").string(),
                    report.to_json().dump(2) + "\n");
  write_file_atomic((fs::path(args.out_dir) / "per_scene.csv").string(), csv);

  RunManifest manifest;
  manifest.subcommand = "eval-offline";
  manifest.command = command;
  manifest.inputs["checkpoint"] = args.checkpoint;
  manifest.inputs["data"] = data_file;
  manifest.outputs["report"] = "offline_report.json";
  manifest.outputs["per_scene"] = "per_scene.csv";
  write_manifest(args.out_dir, manifest);

  std::cout << report.to_json().dump(2) << "\n";
  return 0;
}

// ---- eval-online ----

struct EvalOnlineArgs
{
  std::string checkpoint;
  std::string config_path;
  std::string scenario_path;
  int episodes = 50;
  std::uint64_t seed = 1;
  std::string out_dir;
  bool export_traj = false;
  int workers = 1;
};

int run_eval_online(const EvalOnlineArgs & args, const std::vector<std::string> & command)
{
  const std::string config_path = args.scenario_path.empty() ? args.config_path : args.scenario_path;
  const ConfigFile cfg = load_config(config_path);
  const SimSetup setup = load_sim_setup(cfg);
  const MtpNetwork net = load_params(args.checkpoint);
  require_horizon(net, setup.horizon, "eval-online");
  if (std::abs(net.cfg.prediction_dt - setup.prediction_dt) > 1e-9) {
    throw std::runtime_error("eval-online: checkpoint prediction dt " +
                             format_double(net.cfg.prediction_dt) + " does not match config " +
                             format_double(setup.prediction_dt));
  }

  ScenarioConfig scenario = setup.scenario;
  scenario.seed = args.seed;
  RouteTable table(setup.map);
  const auto result = closed_loop_eval(make_network_predictor(net), net.cfg.horizon, scenario, table,
                                       setup.run, setup.loop, args.episodes, args.workers);

  fs::create_directories(args.out_dir);
  auto report_json = result.report.to_json();
  report_json["diagnostic_failures"] = result.diagnostic_failures;
  write_file_atomic((fs::path(args.out_dir) / "online_report.json").string(),
                    report_json.dump(2) + "\n");
  write_episode_logs((fs::path(args.out_dir) / "episodes.jsonl").string(), result.logs);
  if (args.export_traj) {
    write_trajectory_csv((fs::path(args.out_dir) / "trajectories.csv").string(), result.logs);
  }

  RunManifest manifest;
  manifest.subcommand = "eval-online";
  manifest.command = command;
  manifest.config_path = config_path;
  manifest.config_digest = cfg.digest();
  manifest.seed = args.seed;
  manifest.inputs["checkpoint"] = args.checkpoint;
  manifest.outputs["report"] = "online_report.json";
  manifest.outputs["episodes"] = "episodes.jsonl";
  if (args.export_traj) manifest.outputs["trajectories"] = "trajectories.csv";
  write_manifest(args.out_dir, manifest);

  std::cout << report_json.dump(2) << "\n";
  return 0;
}

// ---- export-traj ----

struct ExportTrajArgs
{
  std::string log_path;
  std::string out_path;
};

int run_export_traj(const ExportTrajArgs & args)
{
  const auto logs = read_episode_logs(args.log_path);
  write_trajectory_csv(args.out_path, logs);
  std::cout << "wrote " << args.out_path << " from " << logs.size() << " episodes\n";
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"mtpsim: intention-conditioned multi-vehicle trajectory prediction and control"};
  app.require_subcommand(1);
  const auto command = collect_command(argc, argv);

  GenDataArgs gen;
  auto * gen_cmd = app.add_subcommand("gen-data", "generate a scene dataset from expert episodes");
  gen_cmd->add_option("--config", gen.config_path, "scenario config (TOML)")->required();
  gen_cmd->add_option("--episodes", gen.episodes, "number of expert episodes");
  gen_cmd->add_option("--seed", gen.seed, "scenario seed");
  gen_cmd->add_option("--out", gen.out_dir, "output directory")->required();
  gen_cmd->add_option("--val-fraction", gen.val_fraction, "held-out episode fraction");
  gen_cmd->add_option("--workers", gen.workers, "parallel episodes");
  gen_cmd->add_option("--tracks", gen.tracks_path, "import a track CSV instead of simulating");
  gen_cmd->add_option("--heading-unit", gen.heading_unit, "track heading unit: degrees|radians");
  gen_cmd->add_option("--frame-step", gen.frame_step, "track frames per prediction step");

  TrainArgs tr;
  auto * train_cmd = app.add_subcommand("train", "train the prediction network");
  train_cmd->add_option("--data", tr.data_dir, "dataset directory from gen-data")->required();
  train_cmd->add_option("--config", tr.config_path, "training config (TOML)")->required();
  train_cmd->add_option("--out", tr.out_dir, "checkpoint directory")->required();
  train_cmd->add_option("--epochs", tr.epochs_override, "override epochs");
  train_cmd->add_option("--seed", tr.seed_override, "override training seed");
  train_cmd->add_option("--collision-weight", tr.collision_weight_override,
                        "override the collision loss weight (0 disables)");
  train_cmd->add_option("--lambda", tr.lambda_override, "override the safety distance [m]");
  train_cmd->add_flag("--no-aggregation", tr.no_aggregation, "ablation: disable message passing");
  train_cmd->add_flag("--no-augmentation", tr.no_augmentation, "ablation: disable MPC augmentation");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "save every N epochs");
  train_cmd->add_option("--workers", tr.workers, "parallel scenes per batch");

  EvalOfflineArgs eo;
  auto * eval_off_cmd = app.add_subcommand("eval-offline", "ADE/FDE/MR/CR on a labeled dataset");
  eval_off_cmd->add_option("--checkpoint", eo.checkpoint, "trained checkpoint")->required();
  eval_off_cmd->add_option("--data", eo.data, "dataset directory or scene file")->required();
  eval_off_cmd->add_option("--out", eo.out_dir, "output directory")->required();
  eval_off_cmd->add_option("--miss-threshold", eo.miss_threshold, "miss-rate threshold [m]");
  eval_off_cmd->add_option("--lambda", eo.lambda, "collision-rate distance [m]");
  eval_off_cmd->add_option("--workers", eo.workers, "parallel scenes");

  EvalOnlineArgs en;
  auto * eval_on_cmd = app.add_subcommand("eval-online", "closed-loop DCR evaluation");
  eval_on_cmd->add_option("--checkpoint", en.checkpoint, "trained checkpoint")->required();
  eval_on_cmd->add_option("--config", en.config_path, "scenario config (TOML)")->required();
  eval_on_cmd->add_option("--scenario", en.scenario_path,
                          "scripted scenario config overriding --config");
  eval_on_cmd->add_option("--episodes", en.episodes, "evaluation episodes");
  eval_on_cmd->add_option("--seed", en.seed, "scenario seed");
  eval_on_cmd->add_option("--out", en.out_dir, "output directory")->required();
  eval_on_cmd->add_flag("--export-traj", en.export_traj, "also write per-tick trajectories.csv");
  eval_on_cmd->add_option("--workers", en.workers, "parallel episodes");

  ExportTrajArgs ex;
  auto * export_cmd = app.add_subcommand("export-traj", "episode log JSONL to per-tick CSV");
  export_cmd->add_option("--log", ex.log_path, "episodes.jsonl from gen-data or eval-online")
    ->required();
  export_cmd->add_option("--out", ex.out_path, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;  // usage errors
  }

  try {
    if (gen_cmd->parsed()) return run_gen_data(gen, command);
    if (train_cmd->parsed()) return run_train(tr, command);
    if (eval_off_cmd->parsed()) return run_eval_offline(eo, command);
    if (eval_on_cmd->parsed()) return run_eval_online(en, command);
    if (export_cmd->parsed()) return run_export_traj(ex);
  } catch (const ConfigError & e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
