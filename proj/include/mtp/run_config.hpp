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

#pragma once

#include <string>

#include <json.hpp>

#include "mtp/config.hpp"
#include "mtp/intersection.hpp"
#include "mtp/simulator.hpp"
#include "mtp/trainer.hpp"

namespace mtp {

/// Everything a simulation-side command needs, bound from one config file.
struct SimSetup
{
  IntersectionMap map;
  ScenarioConfig scenario;
  SimRunParams run;
  ControlLoopParams loop;
  int horizon = 30;
  double prediction_dt = 0.2;
  double scale = 50.0;
  int stride_ticks = 10;
  int warmup_ticks = 25;
};

inline SimSetup load_sim_setup(const ConfigFile & cfg)
{
  SimSetup s;

  s.map.arm_half_length = cfg.get_double("map.arm_half_length", 60.0);
  s.map.lane_width = cfg.get_double("map.lane_width", 3.5);
  s.map.stop_line_offset = cfg.get_double("map.stop_line_offset", 10.0);
  const std::string priority = cfg.get_string("map.priority", "vertical");
  if (priority == "vertical") {
    s.map.priority = IntersectionMap::PriorityAxis::Vertical;
  } else if (priority == "horizontal") {
    s.map.priority = IntersectionMap::PriorityAxis::Horizontal;
  } else {
    throw ConfigError(cfg.name() + ": map.priority must be \"vertical\" or \"horizontal\"");
  }
  {
    IntersectionMap defaults = make_default_map();
    defaults.arm_half_length = s.map.arm_half_length;
    defaults.lane_width = s.map.lane_width;
    defaults.stop_line_offset = s.map.stop_line_offset;
    defaults.priority = s.map.priority;
    s.map = defaults;
    const double b = s.map.box_half();
    const double l = s.map.arm_half_length;
    s.map.barriers = {
      {{b, -l}, {b, -b}, {l, -b}},
      {{l, b}, {b, b}, {b, l}},
      {{-b, l}, {-b, b}, {-l, b}},
      {{-l, -b}, {-b, -b}, {-b, -l}},
    };
    s.map.validate();
  }

  s.run.limits.wheelbase = cfg.get_double("vehicle.wheelbase", 2.5);
  s.run.limits.accel_max = cfg.get_double("vehicle.accel_max", 3.0);
  s.run.limits.steer_max = cfg.get_double("vehicle.steer_max", 0.6);
  s.run.limits.speed_max = cfg.get_double("vehicle.speed_max", 15.0);
  s.run.limits.validate();
  s.run.vehicle_radius = cfg.get_double("vehicle.radius", 0.9);

  s.run.expert.cruise_speed = cfg.get_double("expert.cruise_speed", 8.0);
  s.run.expert.yield_window = cfg.get_double("expert.yield_window", 4.0);
  s.run.expert.headway_min = cfg.get_double("expert.headway_min", 8.0);
  s.run.expert.brake_decel = cfg.get_double("expert.brake_decel", 2.5);
  s.run.expert.lat_accel_max = cfg.get_double("expert.lat_accel_max", 2.0);

  s.scenario.n_min = static_cast<int>(cfg.get_int("spawn.n_min", 2));
  s.scenario.n_max = static_cast<int>(cfg.get_int("spawn.n_max", 6));
  s.scenario.speed_min = cfg.get_double("spawn.speed_min", 5.0);
  s.scenario.speed_max = cfg.get_double("spawn.speed_max", 8.0);
  s.scenario.headway_min = cfg.get_double("spawn.headway_min", s.run.expert.headway_min);
  {
    std::vector<Arm> arms;
    for (const auto & name : cfg.get_string_array("spawn.arms", {"north", "east", "south", "west"})) {
      arms.push_back(arm_from_string(name));
    }
    s.scenario.arms = arms;
    std::vector<Intention> intentions;
    for (const auto & name : cfg.get_string_array("spawn.intentions", {"left", "straight", "right"})) {
      intentions.push_back(intention_from_string(name));
    }
    s.scenario.intentions = intentions;
  }
  s.scenario.episode_length = cfg.get_double("episode.length", 30.0);
  s.scenario.dt = cfg.get_double("episode.dt", 0.1);

  // scripted spawns: [[vehicles]] blocks
  const int scripted = cfg.table_count("vehicles");
  for (int i = 0; i < scripted; ++i) {
    const std::string prefix = "vehicles." + std::to_string(i) + ".";
    SpawnSpec spec;
    spec.arm = arm_from_string(cfg.require_string(prefix + "arm"));
    spec.intention = intention_from_string(cfg.require_string(prefix + "intention"));
    spec.offset = cfg.require_double(prefix + "offset");
    spec.speed = cfg.require_double(prefix + "speed");
    s.scenario.script.push_back(spec);
  }

  s.horizon = static_cast<int>(cfg.get_int("prediction.horizon", 30));
  s.prediction_dt = cfg.get_double("prediction.dt", 0.2);
  s.scale = cfg.get_double("prediction.scale", 50.0);
  s.stride_ticks = static_cast<int>(cfg.get_int("prediction.stride_ticks", 10));
  s.warmup_ticks = static_cast<int>(cfg.get_int("prediction.warmup_ticks", 25));

  s.loop.mpc_points = static_cast<int>(cfg.get_int("control.mpc_points", 10));
  s.loop.prediction_dt = s.prediction_dt;
  const int substeps = static_cast<int>(std::lround(s.prediction_dt / s.scenario.dt));
  s.loop.substeps = std::max(1, substeps);
  s.loop.handover_ticks = static_cast<int>(cfg.get_int("control.handover_ticks", s.warmup_ticks));
  s.loop.mpc.max_iters = static_cast<int>(cfg.get_int("control.mpc_max_iters", 200));

  return s;
}

/// Training settings bound from a config file; horizon / dt / scale come
/// from the dataset's generation config and are passed in.
inline TrainConfig load_train_config(const ConfigFile & cfg, int horizon, double prediction_dt,
                                     double scale)
{
  TrainConfig t;
  t.arch.encoder_widths = cfg.get_int_array("arch.encoder", {64, 64});
  t.arch.aggregation_widths = cfg.get_int_array("arch.aggregation", {64, 64});
  t.arch.horizon = horizon;
  t.arch.prediction_dt = prediction_dt;
  t.arch.scale = scale;

  t.epochs = static_cast<int>(cfg.get_int("train.epochs", 300));
  t.batch_size = static_cast<int>(cfg.get_int("train.batch_size", 32));
  t.lr = cfg.get_double("train.lr", 1e-3);
  t.beta1 = cfg.get_double("train.beta1", 0.9);
  t.beta2 = cfg.get_double("train.beta2", 0.999);
  t.adam_eps = cfg.get_double("train.adam_eps", 1e-8);
  t.lr_decay_fraction = cfg.get_double("train.lr_decay_fraction", 0.8);
  t.lr_decay_factor = cfg.get_double("train.lr_decay_factor", 0.1);
  t.seed = static_cast<std::uint64_t>(cfg.get_int("train.seed", 1));
  t.miss_threshold = cfg.get_double("train.miss_threshold", 2.0);

  t.loss.lambda = cfg.get_double("train.lambda", 2.0);
  t.loss.collision_weight = cfg.get_double("train.collision_weight", 1.0);
  t.loss.normalize_by_t = cfg.get_bool("train.normalize_by_t", false);

  t.augment = cfg.get_bool("augment.enabled", true);
  t.aug.sigma = cfg.get_double("augment.sigma", 0.5);
  t.aug.sigma_theta = cfg.get_double("augment.sigma_theta", 0.1);
  t.aug.fraction = cfg.get_double("augment.fraction", 0.5);

  t.limits.wheelbase = cfg.get_double("vehicle.wheelbase", 2.5);
  t.limits.accel_max = cfg.get_double("vehicle.accel_max", 3.0);
  t.limits.steer_max = cfg.get_double("vehicle.steer_max", 0.6);
  t.limits.speed_max = cfg.get_double("vehicle.speed_max", 15.0);

  return t;
}

}  // namespace mtp
