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

#include <cmath>
#include <cstdint>
#include <tuple>
#include <vector>

#include "mtp/bicycle.hpp"
#include "mtp/common.hpp"
#include "mtp/intersection.hpp"

namespace mtp {

/// One simulated vehicle: dynamics state plus its route binding.
struct SimVehicle
{
  std::int64_t id = 0;
  DynamicVehicle dyn;
  int route_index = 0;
  double progress = 0.0;  // arclength along the route [m]
  int spawn_rank = 0;     // tie-break for symmetric conflicts
  bool alive = true;
  bool completed = false;
  Arm arm = Arm::South;
  Intention intention = Intention::Straight;
};

/// Rule-based driver parameters. Defaults give an urban-intersection feel:
/// cruise ~8 m/s, comfortable braking, 4 s yield window.
struct ExpertParams
{
  double cruise_speed = 8.0;        // [m/s]
  double accel_gain = 2.0;          // [1/s] speed-tracking gain
  double brake_decel = 2.5;         // [m/s^2] planning deceleration
  double lat_accel_max = 2.0;       // [m/s^2] comfort limit in turns
  double yield_window = 4.0;        // [s] time-to-conflict gate at cruise speed
  double headway_min = 8.0;         // [m] center-to-center
  double headway_slack = 4.0;       // [m] extra spacing targeted above the minimum
  double stop_margin = 2.0;         // [m] stop this far before a conflict entry
  double lookahead_base = 2.5;      // [m] pure-pursuit lookahead at rest
  double lookahead_gain = 0.4;      // [s] speed-proportional lookahead
  double corridor_halfwidth = 1.6;  // [m] path-ahead leader detection
  double follow_range = 30.0;       // [m]
};

namespace detail {

/// Precedence order; lexicographically smaller goes first. Strict and total
/// (spawn ranks are unique), so yield decisions can never cycle.
inline std::tuple<int, int, int> precedence(const SimVehicle & v, const RouteTable & table)
{
  const bool priority_road = table.map().is_priority(v.arm);
  const bool left = v.intention == Intention::Left;
  return {priority_road ? 0 : 1, left ? 1 : 0, v.spawn_rank};
}

/// Leader gap along `route` ahead of `s`: the closest other vehicle whose
/// position projects into the forward corridor. Returns {gap, leader speed
/// along the path} or {infinity, 0}.
inline std::pair<double, double> path_ahead_gap(const Route & route, double s,
                                                const std::vector<SimVehicle> & vehicles,
                                                std::size_t self, const ExpertParams & params)
{
  double best_gap = std::numeric_limits<double>::infinity();
  double lead_speed = 0.0;
  const double step = route.sample_step();
  const std::size_t lo = static_cast<std::size_t>(std::max(0.0, (s + 0.5) / step));
  const std::size_t hi =
    std::min(route.samples().size(), static_cast<std::size_t>((s + params.follow_range) / step) + 1);
  for (std::size_t p = 0; p < vehicles.size(); ++p) {
    if (p == self || !vehicles[p].alive) continue;
    const Vec2 pos{vehicles[p].dyn.x, vehicles[p].dyn.y};
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const double d = distance(route.samples()[i], pos);
      if (d < best_d) {
        best_d = d;
        best_s = static_cast<double>(i) * step;
      }
    }
    if (best_d > params.corridor_halfwidth) continue;
    const double gap = best_s - s;
    if (gap < best_gap) {
      best_gap = gap;
      const double path_heading = route.pose_at(best_s).heading;
      lead_speed = std::max(0.0, vehicles[p].dyn.v * std::cos(wrap_angle(vehicles[p].dyn.theta - path_heading)));
    }
  }
  return {best_gap, lead_speed};
}

}  // namespace detail

/**
 * Rule-based expert: one control command per vehicle.
 *
 * Speed policy, most restrictive wins:
 *  - cruise toward cruise_speed;
 *  - comfort limit through turn arcs, with a braking approach profile;
 *  - car-following against the nearest vehicle in the forward corridor;
 *  - yield gate: before its own conflict entry, a vehicle stops for any
 *    conflicting vehicle currently occupying the shared region, and for any
 *    higher-precedence vehicle within the yield window of it. Non-priority
 *    vehicles hold at the stop line; priority left-turners hold just before
 *    the conflict point.
 *
 * Steering is pure pursuit on the route centerline.
 */
inline std::vector<ControlCommand> expert_step(const std::vector<SimVehicle> & vehicles,
                                               const RouteTable & table, const ExpertParams & params,
                                               const VehicleLimits & limits)
{
  std::vector<ControlCommand> commands(vehicles.size());
  const double window_dist = params.yield_window * params.cruise_speed;
  const double target_gap = params.headway_min + params.headway_slack;

  // Leader gaps for everyone first: the yield gate needs to know which
  // vehicles are imprisoned behind a stopped leader. Such a vehicle cannot
  // reach its conflict no matter its priority; letting it gate others
  // deadlocks rank cycles that run through a queue.
  std::vector<std::pair<double, double>> ahead(vehicles.size(),
                                               {std::numeric_limits<double>::infinity(), 0.0});
  std::vector<bool> queue_held(vehicles.size(), false);
  for (std::size_t k = 0; k < vehicles.size(); ++k) {
    if (!vehicles[k].alive) continue;
    const Route & route = table.route(vehicles[k].route_index);
    ahead[k] = detail::path_ahead_gap(route, vehicles[k].progress, vehicles, k, params);
    queue_held[k] = vehicles[k].dyn.v < 0.5 && std::isfinite(ahead[k].first) &&
                    ahead[k].first < target_gap + 2.0 && ahead[k].second < 0.5;
  }

  for (std::size_t k = 0; k < vehicles.size(); ++k) {
    const SimVehicle & me = vehicles[k];
    if (!me.alive) continue;
    const Route & route = table.route(me.route_index);
    const double s = me.progress;
    double v_des = params.cruise_speed;

    // turn comfort limit
    if (route.turn_radius > 0.0) {
      const double curve_v = std::sqrt(params.lat_accel_max * route.turn_radius);
      if (s >= route.s_box_entry && s <= route.s_box_exit) {
        v_des = std::min(v_des, curve_v);
      } else if (s < route.s_box_entry) {
        const double approach =
          std::sqrt(curve_v * curve_v + 2.0 * params.brake_decel * (route.s_box_entry - s));
        v_des = std::min(v_des, approach);
      }
    }

    // car following
    const auto [gap, lead_v] = ahead[k];
    if (std::isfinite(gap)) {
      const double follow =
        std::sqrt(std::max(0.0, lead_v * lead_v + 2.0 * params.brake_decel * (gap - target_gap)));
      v_des = std::min(v_des, follow);
    }

    // yield gate, evaluated only before the conflict box. A vehicle never
    // brakes for the gate once inside: in-box traffic always drains, so
    // circular occupancy waits (box gridlock) cannot form.
    const bool before_box = s < route.s_box_entry - 0.3;
    const auto my_rank = detail::precedence(me, table);
    double stop_at = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; before_box && p < vehicles.size(); ++p) {
      if (p == k || !vehicles[p].alive) continue;
      const SimVehicle & other = vehicles[p];
      const RouteConflict & c = table.conflict(me.route_index, other.route_index);
      if (!c.conflicts) continue;
      if (s >= c.s_begin_a - 0.3) continue;

      // "occupying" means actually inside the shared region; a vehicle held
      // at its gate hold point must not read as occupying, or two holders
      // could wait on each other forever
      const double other_s = other.progress;
      const bool occupying = other_s >= c.s_begin_b - 0.3 && other_s <= c.s_end_b + 0.5;
      const bool approaching = !queue_held[p] && detail::precedence(other, table) < my_rank &&
                               other_s < c.s_begin_b &&
                               c.s_begin_b - other_s <= window_dist;
      if (!occupying && !approaching) continue;

      double hold = std::min(route.s_box_entry, c.s_begin_a) - params.stop_margin;
      if (!table.map().is_priority(me.arm) && s < route.s_stop - 0.3) {
        hold = std::min(hold, route.s_stop);
      }
      stop_at = std::min(stop_at, hold);
    }
    if (std::isfinite(stop_at)) {
      const double brake =
        std::sqrt(2.0 * params.brake_decel * std::max(0.0, stop_at - 1.0 - s));
      v_des = std::min(v_des, brake);
    }

    // longitudinal command
    ControlCommand cmd;
    cmd.accel = clamp(params.accel_gain * (v_des - me.dyn.v), -limits.accel_max, limits.accel_max);

    // pure pursuit on the centerline
    const double lookahead = params.lookahead_base + params.lookahead_gain * me.dyn.v;
    const RoutePose target = route.pose_at_extended(s + lookahead);
    const double alpha =
      wrap_angle(std::atan2(target.position.y - me.dyn.y, target.position.x - me.dyn.x) - me.dyn.theta);
    cmd.steer = std::atan(2.0 * me.dyn.wheelbase * std::sin(alpha) / lookahead);
    commands[k] = clamp_command(cmd, limits);
  }
  return commands;
}

}  // namespace mtp
