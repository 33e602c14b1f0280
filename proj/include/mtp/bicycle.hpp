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
#include <stdexcept>

#include "mtp/common.hpp"

namespace mtp {

/// Actuator and state bounds shared by the controller and the simulator.
struct VehicleLimits
{
  double accel_max = 3.0;   // [m/s^2]
  double steer_max = 0.6;   // [rad]
  double speed_max = 15.0;  // [m/s]
  double wheelbase = 2.5;   // [m]

  void validate() const
  {
    if (!(accel_max > 0.0 && steer_max > 0.0 && speed_max > 0.0 && wheelbase > 0.0)) {
      throw std::invalid_argument("VehicleLimits: all bounds must be positive");
    }
  }
};

/// Kinematic bicycle state. theta is wrapped to [-pi, pi); v stays in
/// [0, speed_max] under step_bicycle.
struct DynamicVehicle
{
  double x = 0.0;         // [m]
  double y = 0.0;         // [m]
  double theta = 0.0;     // [rad]
  double v = 0.0;         // [m/s]
  double wheelbase = 2.5; // [m]
};

struct ControlCommand
{
  double accel = 0.0;  // [m/s^2]
  double steer = 0.0;  // [rad]
};

inline ControlCommand clamp_command(const ControlCommand & u, const VehicleLimits & limits)
{
  return {clamp(u.accel, -limits.accel_max, limits.accel_max),
          clamp(u.steer, -limits.steer_max, limits.steer_max)};
}

/// One explicit-Euler step of the bicycle kinematics:
///   x += v cos(theta) dt,  y += v sin(theta) dt,
///   v += a dt (clamped),   theta += v tan(delta)/L dt (pre-update v).
inline DynamicVehicle step_bicycle(const DynamicVehicle & s, const ControlCommand & u, double dt,
                                   double speed_max = 15.0)
{
  if (!(dt > 0.0)) throw std::invalid_argument("step_bicycle: dt must be positive");
  DynamicVehicle next = s;
  next.x = s.x + s.v * std::cos(s.theta) * dt;
  next.y = s.y + s.v * std::sin(s.theta) * dt;
  next.v = clamp(s.v + u.accel * dt, 0.0, speed_max);
  next.theta = wrap_angle(s.theta + s.v * std::tan(u.steer) / s.wheelbase * dt);
  return next;
}

}  // namespace mtp
