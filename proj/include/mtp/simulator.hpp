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

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtp/bicycle.hpp"
#include "mtp/common.hpp"
#include "mtp/expert.hpp"
#include "mtp/intersection.hpp"
#include "mtp/metrics.hpp"
#include "mtp/mpc.hpp"
#include "mtp/network.hpp"
#include "mtp/scene.hpp"
#include "mtp/tracks.hpp"

namespace mtp {

/// One spawn request: where the vehicle starts (arclength from the arm end),
/// what it wants to do, and how fast it enters.
struct SpawnSpec
{
  Arm arm = Arm::South;
  Intention intention = Intention::Straight;
  double offset = 0.0;  // initial route arclength [m]
  double speed = 8.0;   // [m/s]
};

/// Scenario generation knobs. A non-empty script bypasses random generation.
struct ScenarioConfig
{
  int n_min = 2;
  int n_max = 6;
  std::vector<Arm> arms = {Arm::North, Arm::East, Arm::South, Arm::West};
  std::vector<Intention> intentions = {Intention::Left, Intention::Straight, Intention::Right};
  double speed_min = 5.0;
  double speed_max = 8.0;
  double headway_min = 8.0;
  double episode_length = 30.0;  // [s]
  double dt = 0.1;               // [s]
  std::uint64_t seed = 1;
  std::vector<SpawnSpec> script;

  bool scripted() const { return !script.empty(); }

  void validate() const
  {
    if (!(dt > 0.0)) throw std::invalid_argument("ScenarioConfig: dt must be > 0");
    if (!(headway_min > 0.0)) throw std::invalid_argument("ScenarioConfig: headway_min must be > 0");
    if (!scripted()) {
      if (n_min < 1 || n_max < n_min) throw std::invalid_argument("ScenarioConfig: bad vehicle count range");
      if (arms.empty() || intentions.empty()) {
        throw std::invalid_argument("ScenarioConfig: empty arm/intention pools");
      }
      if (!(speed_min <= speed_max)) throw std::invalid_argument("ScenarioConfig: bad speed range");
    }
  }
};

/**
 * Deterministic spawn list for one episode. Vehicles queue per arm, front
 * first, with at least headway_min between queue neighbors; an arm that
 * cannot take another vehicle without violating the headway is an error.
 */
inline std::vector<SpawnSpec> generate_scenario(const ScenarioConfig & cfg,
                                                const IntersectionMap & map,
                                                std::uint64_t episode_seed)
{
  cfg.validate();
  if (cfg.scripted()) {
    std::map<Arm, std::vector<double>> per_arm;
    for (const auto & s : cfg.script) per_arm[s.arm].push_back(s.offset);
    for (auto & [arm, offsets] : per_arm) {
      std::sort(offsets.begin(), offsets.end());
      for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
        if (offsets[i + 1] - offsets[i] < cfg.headway_min) {
          throw std::invalid_argument("scripted scenario violates the minimum headway on arm " +
                                      std::string(to_string(arm)));
        }
      }
    }
    return cfg.script;
  }

  Rng rng(episode_seed);
  const int n = cfg.n_min + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(cfg.n_max - cfg.n_min + 1)));
  const double max_offset = map.arm_half_length - map.stop_line_offset - 5.0;

  std::map<Arm, double> arm_tail;  // offset of the last (rearmost) vehicle per arm
  std::vector<SpawnSpec> spawns;
  for (int i = 0; i < n; ++i) {
    SpawnSpec s;
    s.arm = cfg.arms[rng.uniform_index(cfg.arms.size())];
    s.intention = cfg.intentions[rng.uniform_index(cfg.intentions.size())];
    s.speed = rng.uniform(cfg.speed_min, cfg.speed_max);
    const auto it = arm_tail.find(s.arm);
    if (it == arm_tail.end()) {
      s.offset = max_offset - rng.uniform(0.0, 12.0);
    } else {
      s.offset = it->second - cfg.headway_min - rng.uniform(0.0, 6.0);
    }
    if (s.offset < 0.0) {
      throw std::runtime_error("generate_scenario: cannot respect the minimum headway on arm " +
                               std::string(to_string(s.arm)));
    }
    arm_tail[s.arm] = s.offset;
    spawns.push_back(s);
  }
  return spawns;
}

struct CollisionEvent
{
  enum class Kind { V2V, V2B };
  Kind kind = Kind::V2V;
  int tick = 0;
  std::int64_t a = 0;
  std::int64_t b = -1;  // -1 for barrier events
};

/// Per-tick contacts (no edge logic): pairs closer than 2 r_veh and vehicles
/// whose disc touches a barrier polyline.
struct Contacts
{
  std::vector<std::pair<std::int64_t, std::int64_t>> v2v;
  std::vector<std::int64_t> v2b;
};

inline Contacts detect_collisions(const std::vector<SimVehicle> & vehicles,
                                  const IntersectionMap & map, double vehicle_radius)
{
  Contacts contacts;
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    if (!vehicles[i].alive) continue;
    const Vec2 pi{vehicles[i].dyn.x, vehicles[i].dyn.y};
    for (std::size_t j = i + 1; j < vehicles.size(); ++j) {
      if (!vehicles[j].alive) continue;
      const Vec2 pj{vehicles[j].dyn.x, vehicles[j].dyn.y};
      if (distance(pi, pj) < 2.0 * vehicle_radius) {
        contacts.v2v.emplace_back(std::min(vehicles[i].id, vehicles[j].id),
                                  std::max(vehicles[i].id, vehicles[j].id));
      }
    }
    if (distance_to_barriers(pi, map) < vehicle_radius) contacts.v2b.push_back(vehicles[i].id);
  }
  return contacts;
}

/// Rising-edge event counting: one event per contiguous contact interval.
class CollisionTracker
{
public:
  std::vector<CollisionEvent> step(int tick, const Contacts & contacts)
  {
    std::vector<CollisionEvent> events;
    std::set<std::pair<std::int64_t, std::int64_t>> v2v_now(contacts.v2v.begin(), contacts.v2v.end());
    std::set<std::int64_t> v2b_now(contacts.v2b.begin(), contacts.v2b.end());
    for (const auto & pair : v2v_now) {
      if (!v2v_active_.count(pair)) {
        events.push_back({CollisionEvent::Kind::V2V, tick, pair.first, pair.second});
      }
    }
    for (const auto id : v2b_now) {
      if (!v2b_active_.count(id)) {
        events.push_back({CollisionEvent::Kind::V2B, tick, id, -1});
      }
    }
    v2v_active_ = std::move(v2v_now);
    v2b_active_ = std::move(v2b_now);
    return events;
  }

private:
  std::set<std::pair<std::int64_t, std::int64_t>> v2v_active_;
  std::set<std::int64_t> v2b_active_;
};

struct TickVehicle
{
  std::int64_t id = 0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;
};

/// Full record of one simulated episode.
struct EpisodeLog
{
  int episode_index = 0;
  std::uint64_t seed = 0;
  double dt = 0.1;
  std::vector<SpawnSpec> spawns;          // spawns[i] belongs to vehicle id i
  std::vector<std::vector<TickVehicle>> ticks;
  std::vector<CollisionEvent> events;
  std::map<std::int64_t, bool> completed;
  bool aborted = false;
  std::string abort_reason;

  int spawned() const { return static_cast<int>(spawns.size()); }
  std::int64_t v2v_count() const
  {
    std::int64_t c = 0;
    for (const auto & e : events) c += e.kind == CollisionEvent::Kind::V2V ? 1 : 0;
    return c;
  }
  std::int64_t v2b_count() const
  {
    std::int64_t c = 0;
    for (const auto & e : events) c += e.kind == CollisionEvent::Kind::V2B ? 1 : 0;
    return c;
  }
};

/// Controls for all vehicles at one tick (indexed like the vehicle vector).
using TickController = std::function<std::vector<ControlCommand>(const std::vector<SimVehicle> &, int tick)>;

/// Thrown by controllers to abort an episode (diagnostic failure, not a collision).
struct EpisodeAbort : std::runtime_error
{
  using std::runtime_error::runtime_error;
};

struct SimRunParams
{
  VehicleLimits limits;
  ExpertParams expert;
  double vehicle_radius = 0.9;  // [m] disc footprint
};

inline std::vector<SimVehicle> instantiate_spawns(const std::vector<SpawnSpec> & spawns,
                                                  const RouteTable & table,
                                                  const VehicleLimits & limits)
{
  std::vector<SimVehicle> vehicles;
  for (std::size_t i = 0; i < spawns.size(); ++i) {
    const auto & spec = spawns[i];
    SimVehicle v;
    v.id = static_cast<std::int64_t>(i);
    v.route_index = RouteTable::index(spec.arm, spec.intention);
    const Route & route = table.route(v.route_index);
    const RoutePose pose = route.pose_at(spec.offset);
    v.dyn = {pose.position.x, pose.position.y, pose.heading, clamp(spec.speed, 0.0, limits.speed_max),
             limits.wheelbase};
    v.progress = spec.offset;
    v.spawn_rank = static_cast<int>(i);
    v.arm = spec.arm;
    v.intention = spec.intention;
    vehicles.push_back(v);
  }
  return vehicles;
}

/**
 * Advance one episode tick by tick: record poses, detect collisions
 * (rising-edge), ask the controller for commands, integrate, update route
 * progress, despawn completed or out-of-bounds vehicles.
 */
inline EpisodeLog run_episode(const std::vector<SpawnSpec> & spawns, const RouteTable & table,
                              const SimRunParams & params, double dt, double episode_length,
                              const TickController & controller)
{
  EpisodeLog log;
  log.dt = dt;
  log.spawns = spawns;
  std::vector<SimVehicle> vehicles = instantiate_spawns(spawns, table, params.limits);

  CollisionTracker tracker;
  const int n_ticks = static_cast<int>(episode_length / dt);
  const double bound = table.map().arm_half_length - 0.5;

  for (int tick = 0; tick < n_ticks; ++tick) {
    std::vector<TickVehicle> row;
    for (const auto & v : vehicles) {
      if (v.alive) row.push_back({v.id, v.dyn.x, v.dyn.y, v.dyn.theta, v.dyn.v});
    }
    if (row.empty()) break;
    log.ticks.push_back(std::move(row));

    const auto events = tracker.step(tick, detect_collisions(vehicles, table.map(), params.vehicle_radius));
    log.events.insert(log.events.end(), events.begin(), events.end());

    std::vector<ControlCommand> commands;
    try {
      commands = controller(vehicles, tick);
    } catch (const EpisodeAbort & e) {
      log.aborted = true;
      log.abort_reason = e.what();
      break;
    }

    for (std::size_t k = 0; k < vehicles.size(); ++k) {
      SimVehicle & v = vehicles[k];
      if (!v.alive) continue;
      v.dyn = step_bicycle(v.dyn, clamp_command(commands[k], params.limits), dt, params.limits.speed_max);
      const Route & route = table.route(v.route_index);
      v.progress = route.advance_progress(v.progress, {v.dyn.x, v.dyn.y});
      if (v.progress >= route.length - 2.0) v.completed = true;
      const bool out_of_bounds = std::abs(v.dyn.x) > bound || std::abs(v.dyn.y) > bound;
      if (v.completed || out_of_bounds) v.alive = false;
    }
  }

  for (const auto & v : vehicles) log.completed[v.id] = v.completed;
  return log;
}

/// Expert controller closure over a route table.
inline TickController make_expert_controller(const RouteTable & table, const SimRunParams & params)
{
  return [&table, params](const std::vector<SimVehicle> & vehicles, int) {
    return expert_step(vehicles, table, params.expert, params.limits);
  };
}

struct RolloutResult
{
  std::vector<EpisodeLog> logs;
  int rejected_episodes = 0;  // expert collisions (rule bug guard) or infeasible spawns
};

/**
 * Run the rule-based expert over many scenarios. Episodes whose logs contain
 * any collision event are rejected and regenerated from a fresh seed stream;
 * accepted logs are collision-free by construction.
 */
inline RolloutResult rollout_expert(const ScenarioConfig & cfg, const RouteTable & table,
                                    const SimRunParams & params, int episodes, int workers = 1)
{
  RolloutResult result;
  result.logs.resize(static_cast<std::size_t>(episodes));
  std::vector<int> rejected(static_cast<std::size_t>(episodes), 0);
  const auto controller = make_expert_controller(table, params);

  parallel_for(static_cast<std::size_t>(episodes), workers, [&](std::size_t e) {
    constexpr int kMaxAttempts = 16;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const std::uint64_t seed = split_seed(cfg.seed, e * kMaxAttempts + static_cast<std::size_t>(attempt));
      std::vector<SpawnSpec> spawns;
      try {
        spawns = generate_scenario(cfg, table.map(), seed);
      } catch (const std::runtime_error &) {
        ++rejected[e];  // infeasible draw; reseed
        continue;
      }
      EpisodeLog log = run_episode(spawns, table, params, cfg.dt, cfg.episode_length, controller);
      log.episode_index = static_cast<int>(e);
      log.seed = seed;
      if (log.events.empty()) {
        result.logs[e] = std::move(log);
        return;
      }
      ++rejected[e];
    }
    throw std::runtime_error("rollout_expert: episode " + std::to_string(e) +
                             " kept colliding; expert rule bug");
  });
  for (int r : rejected) result.rejected_episodes += r;
  return result;
}

/**
 * Slice an episode log into training Scenes: vehicle pose sequences are
 * resampled at the prediction dt, then windowed by the shared slicing rule.
 * The first `warmup_ticks` of the episode are not sampled: spawn speeds are
 * random, so until they settle a pose does not determine its future.
 */
inline std::vector<Scene> scenes_from_log(const EpisodeLog & log, int horizon, double prediction_dt,
                                          int stride_ticks, int warmup_ticks = 0)
{
  const int net_step = static_cast<int>(std::lround(prediction_dt / log.dt));
  if (net_step < 1 || std::abs(net_step * log.dt - prediction_dt) > 1e-9) {
    throw std::invalid_argument("scenes_from_log: prediction_dt must be a multiple of the sim dt");
  }
  if (stride_ticks % net_step != 0) {
    throw std::invalid_argument("scenes_from_log: stride must be a multiple of the prediction step");
  }

  // per-vehicle contiguous pose series at sim rate
  std::map<std::int64_t, std::pair<int, std::vector<PoseSample>>> series;  // id -> (first tick, poses)
  for (int tick = 0; tick < static_cast<int>(log.ticks.size()); ++tick) {
    for (const auto & tv : log.ticks[static_cast<std::size_t>(tick)]) {
      auto & entry = series.try_emplace(tv.id, tick, std::vector<PoseSample>{}).first->second;
      entry.second.push_back({{tv.x, tv.y}, tv.theta});
    }
  }

  const int start_tick = (warmup_ticks + net_step - 1) / net_step * net_step;
  std::vector<LabeledSequence> seqs;
  for (const auto & [id, entry] : series) {
    const auto & [first_tick, poses] = entry;
    LabeledSequence seq;
    seq.id = id;
    seq.intention = log.spawns.at(static_cast<std::size_t>(id)).intention;
    // resample at the prediction rate, anchored on multiples of net_step
    const int first_net_tick = std::max((first_tick + net_step - 1) / net_step * net_step, start_tick);
    seq.first_frame = first_net_tick / net_step;
    for (int tick = first_net_tick; tick < first_tick + static_cast<int>(poses.size()); tick += net_step) {
      seq.poses.push_back(poses[static_cast<std::size_t>(tick - first_tick)]);
    }
    if (!seq.poses.empty()) seqs.push_back(std::move(seq));
  }
  return slice_scenes(seqs, stride_ticks / net_step, horizon, prediction_dt);
}

/// Prediction callback for closed-loop evaluation: trajectories for the
/// scene's vehicles, in scene order. The world view carries simulator state
/// so oracle stubs can cheat; network adapters ignore it.
using Predictor =
  std::function<std::vector<Trajectory>(const Scene &, const std::vector<SimVehicle> &)>;

inline Predictor make_network_predictor(const MtpNetwork & net)
{
  return [&net](const Scene & scene, const std::vector<SimVehicle> &) {
    return forward(net, scene).predictions;
  };
}

/// Oracle predictor: simulates the expert forward from the live world state
/// and reports where each vehicle will actually be. Vehicles that finish
/// their route during the preview hold their final pose.
inline Predictor make_expert_predictor(const RouteTable & table, const SimRunParams & params,
                                       double sim_dt, int horizon, double prediction_dt)
{
  const int net_step = static_cast<int>(std::lround(prediction_dt / sim_dt));
  if (net_step < 1) throw std::invalid_argument("make_expert_predictor: prediction_dt below sim dt");
  return [&table, params, sim_dt, horizon, net_step, prediction_dt](
           const Scene & scene, const std::vector<SimVehicle> & world) {
    std::vector<SimVehicle> sim;
    for (const auto & v : world) {
      if (v.alive) sim.push_back(v);
    }
    if (sim.size() != scene.vehicles.size()) {
      throw std::runtime_error("expert predictor: scene does not match the live world");
    }
    std::vector<Trajectory> futures(sim.size());
    for (std::size_t i = 0; i < sim.size(); ++i) {
      futures[i].dt = prediction_dt;
      futures[i].points.reserve(static_cast<std::size_t>(horizon));
      futures[i].points.push_back(scene.vehicles[i].position);
    }
    // Vehicles keep driving past their route end during the preview (pure
    // pursuit extrapolates); despawning here would predict phantom stops.
    const int total_ticks = (horizon - 1) * net_step;
    for (int t = 1; t <= total_ticks; ++t) {
      const auto commands = expert_step(sim, table, params.expert, params.limits);
      for (std::size_t k = 0; k < sim.size(); ++k) {
        SimVehicle & v = sim[k];
        v.dyn = step_bicycle(v.dyn, clamp_command(commands[k], params.limits), sim_dt,
                             params.limits.speed_max);
        const Route & route = table.route(v.route_index);
        v.progress = route.advance_progress(v.progress, {v.dyn.x, v.dyn.y});
      }
      if (t % net_step == 0) {
        for (std::size_t k = 0; k < sim.size(); ++k) {
          futures[k].points.push_back({sim[k].dyn.x, sim[k].dyn.y});
        }
      }
    }
    return futures;
  };
}

struct ControlLoopParams
{
  int mpc_points = 10;        // J waypoints tracked
  double prediction_dt = 0.2; // waypoint spacing [s]
  int substeps = 2;           // internal Euler steps per waypoint (matches sim dt)
  int handover_ticks = 25;    // expert drives the spawn transient, then the
                              // network takes over (training skips the same
                              // warmup, so spawn states are out of corpus)
  double reference_blend = 0.5;  // EMA on the replanned waypoints: per-tick  // EMA on the replanned waypoints: per-tick  // EMA on the replanned waypoints: per-tick
                                 // prediction noise shrinks, maneuvers lag
                                 // by ~one replan interval
  MpcOptions mpc;
};

/// Scene snapshot of the world at one tick (alive vehicles only).
inline Scene scene_from_world(const std::vector<SimVehicle> & vehicles)
{
  Scene scene;
  for (const auto & v : vehicles) {
    if (!v.alive) continue;
    scene.vehicles.emplace_back(v.id, Vec2{v.dyn.x, v.dyn.y}, v.dyn.theta, v.intention);
  }
  return scene;
}

/**
 * Controller that plans with a predictor and tracks the prediction with the
 * shooting MPC. Predicted point 0 anchors at the current pose, so waypoints
 * are points 1..J; reference headings come from consecutive displacements.
 */
class PredictionController
{
public:
  PredictionController(Predictor predictor, const ControlLoopParams & loop, const VehicleLimits & limits,
                       int horizon)
  : predictor_(std::move(predictor)), loop_(loop), limits_(limits)
  {
    if (horizon < loop.mpc_points + 1) {
      throw std::invalid_argument("closed_loop_eval: prediction horizon T=" + std::to_string(horizon) +
                                  " must exceed the J=" + std::to_string(loop.mpc_points) +
                                  " tracked points (point 0 is the anchor)");
    }
  }

  std::vector<ControlCommand> operator()(const std::vector<SimVehicle> & vehicles, int)
  {
    const Scene scene = scene_from_world(vehicles);
    if (scene.vehicles.empty()) return std::vector<ControlCommand>(vehicles.size());
    const auto predictions = predictor_(scene, vehicles);
    if (predictions.size() != scene.vehicles.size()) {
      throw EpisodeAbort("predictor returned wrong trajectory count");
    }
    for (const auto & traj : predictions) {
      for (const auto & p : traj.points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
          throw EpisodeAbort("non-finite network output");
        }
      }
    }

    std::vector<ControlCommand> commands(vehicles.size());
    std::size_t scene_idx = 0;
    for (std::size_t k = 0; k < vehicles.size(); ++k) {
      if (!vehicles[k].alive) continue;
      const Trajectory & pred = predictions[scene_idx++];
      commands[k] = track_prediction(vehicles[k], pred);
    }
    return commands;
  }

private:
  ControlCommand track_prediction(const SimVehicle & v, const Trajectory & pred)
  {
    const int j = loop_.mpc_points;
    MpcProblem problem;
    problem.initial = v.dyn;
    problem.dt = loop_.prediction_dt;
    problem.substeps = loop_.substeps;
    problem.limits = limits_;
    // Point 0 predicts the current pose, so its residual is the network's
    // common-mode bias at this state; shifting the references by it leaves
    // only the shape of the predicted motion to track.
    const Vec2 anchor_shift = Vec2{v.dyn.x, v.dyn.y} - pred.points[0];
    std::vector<Vec2> waypoints(static_cast<std::size_t>(j) + 1);
    for (int i = 0; i <= j; ++i) {
      waypoints[static_cast<std::size_t>(i)] = pred.points[static_cast<std::size_t>(i)] + anchor_shift;
    }

    // Blend with the previous tick's (filtered) waypoints. Replans come every
    // sim tick but waypoints sit on the coarser prediction grid, so the
    // previous tick's value for this instant lies between its points i and
    // i+1; the last point extrapolates.
    const double blend = clamp(loop_.reference_blend, 0.0, 1.0);
    const auto prev = filtered_.find(v.id);
    if (blend > 0.0 && prev != filtered_.end()) {
      const auto & old_pts = prev->second;
      for (int i = 1; i <= j; ++i) {
        const std::size_t idx = static_cast<std::size_t>(i);
        const Vec2 aligned =
          idx + 1 < old_pts.size()
            ? (old_pts[idx] + old_pts[idx + 1]) * 0.5
            : old_pts[idx] + (old_pts[idx] - old_pts[idx - 1]) * 0.5;
        waypoints[idx] = waypoints[idx] * (1.0 - blend) + aligned * blend;
      }
    }
    filtered_[v.id] = waypoints;

    problem.reference.resize(static_cast<std::size_t>(j));
    double prev_heading = v.dyn.theta;
    for (int i = 1; i <= j; ++i) {
      const Vec2 p = waypoints[static_cast<std::size_t>(i)];
      // heading from the surrounding displacement; the centered difference
      // halves the per-point noise the network puts on each position
      const std::size_t lo = static_cast<std::size_t>(i) - 1;
      const std::size_t hi = std::min(static_cast<std::size_t>(i) + 1, waypoints.size() - 1);
      const Vec2 d = waypoints[hi] - waypoints[lo];
      double heading = prev_heading;
      if (d.norm() > 1e-6) heading = std::atan2(d.y, d.x);
      problem.reference[static_cast<std::size_t>(i) - 1] = {p.x, p.y, heading};
      prev_heading = heading;
    }

    const auto warm = warm_starts_.find(v.id);
    const auto solution =
      solve_mpc(problem, loop_.mpc, warm == warm_starts_.end() ? nullptr : &warm->second);
    warm_starts_[v.id] = solution.commands;
    return solution.commands.front();
  }

  Predictor predictor_;
  ControlLoopParams loop_;
  VehicleLimits limits_;
  std::map<std::int64_t, std::vector<ControlCommand>> warm_starts_;
  std::map<std::int64_t, std::vector<Vec2>> filtered_;
};

struct ClosedLoopResult
{
  OnlineReport report;
  std::vector<EpisodeLog> logs;
  int diagnostic_failures = 0;  // aborted episodes (non-finite predictions)
};

inline EpisodeSummary summarize_episode(const EpisodeLog & log)
{
  EpisodeSummary summary;
  std::map<std::int64_t, std::vector<Vec2>> paths;
  for (const auto & row : log.ticks) {
    for (const auto & tv : row) paths[tv.id].push_back({tv.x, tv.y});
  }
  for (auto & [id, path] : paths) summary.paths.push_back(std::move(path));
  summary.v2v_collisions = log.v2v_count();
  summary.v2b_collisions = log.v2b_count();
  return summary;
}

/**
 * Closed-loop online evaluation: every tick, predict futures for the current
 * scene, track the first J predicted points per vehicle with MPC, apply the
 * first command. Aborted episodes (non-finite predictions) are excluded from
 * the DCR and counted as diagnostic failures.
 */
inline ClosedLoopResult closed_loop_eval(const Predictor & predictor, int horizon,
                                         const ScenarioConfig & cfg, const RouteTable & table,
                                         const SimRunParams & params, const ControlLoopParams & loop,
                                         int episodes, int workers = 1)
{
  ClosedLoopResult result;
  result.logs.resize(static_cast<std::size_t>(episodes));

  parallel_for(static_cast<std::size_t>(episodes), workers, [&](std::size_t e) {
    constexpr int kMaxAttempts = 16;
    std::vector<SpawnSpec> spawns;
    std::uint64_t seed = 0;
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxAttempts) {
        throw std::runtime_error("closed_loop_eval: cannot generate a feasible scenario for episode " +
                                 std::to_string(e));
      }
      seed = split_seed(cfg.seed, e * kMaxAttempts + static_cast<std::size_t>(attempt));
      try {
        spawns = generate_scenario(cfg, table.map(), seed);
        break;
      } catch (const std::runtime_error &) {
        continue;
      }
    }
    PredictionController controller(predictor, loop, params.limits, horizon);
    const auto expert_controller = make_expert_controller(table, params);
    EpisodeLog log = run_episode(spawns, table, params, cfg.dt, cfg.episode_length,
                                 [&](const std::vector<SimVehicle> & w, int t) {
                                   if (t < loop.handover_ticks) return expert_controller(w, t);
                                   return controller(w, t);
                                 });
    log.episode_index = static_cast<int>(e);
    log.seed = seed;
    result.logs[e] = std::move(log);
  });

  std::vector<EpisodeSummary> summaries;
  for (const auto & log : result.logs) {
    if (log.aborted) {
      ++result.diagnostic_failures;
      continue;
    }
    summaries.push_back(summarize_episode(log));
  }
  result.report = dcr(summaries);
  return result;
}

// ---- episode log JSONL ----

inline std::string episode_log_to_json_lines(const EpisodeLog & log)
{
  std::string out;
  nlohmann::json header;
  header["episode"] = log.episode_index;
  header["seed"] = log.seed;
  header["dt"] = log.dt;
  header["n_vehicles"] = log.spawned();
  header["spawns"] = nlohmann::json::array();
  for (std::size_t i = 0; i < log.spawns.size(); ++i) {
    const auto & s = log.spawns[i];
    header["spawns"].push_back({{"id", i},
                                {"arm", to_string(s.arm)},
                                {"intention", to_string(s.intention)},
                                {"offset", s.offset},
                                {"speed", s.speed}});
  }
  out += header.dump();
  out += '\n';

  std::map<int, std::vector<const CollisionEvent *>> events_by_tick;
  for (const auto & e : log.events) events_by_tick[e.tick].push_back(&e);

  for (int tick = 0; tick < static_cast<int>(log.ticks.size()); ++tick) {
    nlohmann::json row;
    row["episode"] = log.episode_index;
    row["tick"] = tick;
    row["vehicles"] = nlohmann::json::array();
    for (const auto & tv : log.ticks[static_cast<std::size_t>(tick)]) {
      row["vehicles"].push_back(
        {{"id", tv.id}, {"x", tv.x}, {"y", tv.y}, {"theta", tv.theta}, {"v", tv.v}});
    }
    const auto it = events_by_tick.find(tick);
    if (it != events_by_tick.end()) {
      row["events"] = nlohmann::json::array();
      for (const auto * e : it->second) {
        row["events"].push_back({{"kind", e->kind == CollisionEvent::Kind::V2V ? "V2V" : "V2B"},
                                 {"a", e->a},
                                 {"b", e->b}});
      }
    }
    out += row.dump();
    out += '\n';
  }

  nlohmann::json trailer;
  trailer["episode"] = log.episode_index;
  trailer["end"] = true;
  trailer["aborted"] = log.aborted;
  if (!log.abort_reason.empty()) trailer["abort_reason"] = log.abort_reason;
  nlohmann::json completed = nlohmann::json::object();
  for (const auto & [id, done] : log.completed) completed[std::to_string(id)] = done;
  trailer["completed"] = completed;
  out += trailer.dump();
  out += '\n';
  return out;
}

inline void write_episode_logs(const std::string & path, const std::vector<EpisodeLog> & logs)
{
  std::string out;
  for (const auto & log : logs) out += episode_log_to_json_lines(log);
  write_file_atomic(path, out);
}

inline std::vector<EpisodeLog> read_episode_logs(const std::string & path)
{
  const std::string data = read_file(path);
  std::istringstream in(data);
  std::vector<EpisodeLog> logs;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception & e) {
      throw std::runtime_error("episode log " + path + " line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    if (j.contains("spawns")) {
      EpisodeLog log;
      log.episode_index = j.at("episode").get<int>();
      log.seed = j.at("seed").get<std::uint64_t>();
      log.dt = j.at("dt").get<double>();
      for (const auto & s : j.at("spawns")) {
        log.spawns.push_back({arm_from_string(s.at("arm").get<std::string>()),
                              intention_from_string(s.at("intention").get<std::string>()),
                              s.at("offset").get<double>(), s.at("speed").get<double>()});
      }
      logs.push_back(std::move(log));
    } else if (j.contains("end")) {
      if (logs.empty()) throw std::runtime_error("episode log " + path + ": trailer before header");
      logs.back().aborted = j.at("aborted").get<bool>();
      for (const auto & [key, value] : j.at("completed").items()) {
        logs.back().completed[std::stoll(key)] = value.get<bool>();
      }
    } else {
      if (logs.empty()) throw std::runtime_error("episode log " + path + ": tick before header");
      EpisodeLog & log = logs.back();
      std::vector<TickVehicle> row;
      for (const auto & tv : j.at("vehicles")) {
        row.push_back({tv.at("id").get<std::int64_t>(), tv.at("x").get<double>(),
                       tv.at("y").get<double>(), tv.at("theta").get<double>(),
                       tv.at("v").get<double>()});
      }
      log.ticks.push_back(std::move(row));
      if (j.contains("events")) {
        for (const auto & e : j.at("events")) {
          log.events.push_back({e.at("kind").get<std::string>() == "V2V" ? CollisionEvent::Kind::V2V
                                                                         : CollisionEvent::Kind::V2B,
                                j.at("tick").get<int>(), e.at("a").get<std::int64_t>(),
                                e.at("b").get<std::int64_t>()});
        }
      }
    }
  }
  return logs;
}

}  // namespace mtp
