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

#include <array>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtp/common.hpp"

namespace mtp {

/// Maneuver declared for the upcoming intersection. The one-hot ordering
/// (Left, Straight, Right) is frozen for checkpoint portability.
enum class Intention : int { Left = 0, Straight = 1, Right = 2 };

inline const char * to_string(Intention i)
{
  switch (i) {
    case Intention::Left: return "Left";
    case Intention::Straight: return "Straight";
    case Intention::Right: return "Right";
  }
  throw std::invalid_argument("invalid intention value");
}

inline Intention intention_from_string(const std::string & s)
{
  if (s == "Left" || s == "left") return Intention::Left;
  if (s == "Straight" || s == "straight") return Intention::Straight;
  if (s == "Right" || s == "right") return Intention::Right;
  throw std::invalid_argument("unknown intention: \"" + s + "\"");
}

/// One vehicle's pose and intention at an instant. Positions are meters in
/// the intersection-centered frame (+x east, +y north); heading is radians
/// CCW from +x, always wrapped to [-pi, pi).
struct VehicleSnapshot
{
  std::int64_t id = 0;
  Vec2 position;
  double heading = 0.0;
  Intention intention = Intention::Straight;

  VehicleSnapshot() = default;
  VehicleSnapshot(std::int64_t id_, Vec2 pos, double heading_, Intention intent)
  : id(id_), position(pos), heading(wrap_angle(heading_)), intention(intent)
  {
  }
};

/// Ordered future positions, `dt` seconds apart, same frame as the snapshots.
/// Point 0 is the position at the sampling instant itself.
struct Trajectory
{
  std::vector<Vec2> points;
  double dt = 0.0;
};

/// All vehicles present at one instant, optionally paired with ground-truth
/// futures (futures[k] belongs to vehicles[k]).
struct Scene
{
  std::vector<VehicleSnapshot> vehicles;
  std::vector<Trajectory> futures;  // empty when unavailable (pure inference)

  bool has_futures() const { return !futures.empty(); }

  void validate() const
  {
    if (vehicles.empty()) throw std::invalid_argument("Scene: needs at least one vehicle");
    std::set<std::int64_t> ids;
    for (const auto & v : vehicles) {
      if (!ids.insert(v.id).second) {
        throw std::invalid_argument("Scene: duplicate vehicle id " + std::to_string(v.id));
      }
    }
    if (has_futures() && futures.size() != vehicles.size()) {
      throw std::invalid_argument("Scene: futures/vehicles length mismatch");
    }
  }
};

/// Network input vector X_k: [x/scale, y/scale, heading, one_hot(intention)].
inline std::array<double, 6> assemble_input(const VehicleSnapshot & v, double scale)
{
  if (!(scale > 0.0)) throw std::invalid_argument("assemble_input: scale must be positive");
  std::array<double, 6> x{};
  x[0] = v.position.x / scale;
  x[1] = v.position.y / scale;
  x[2] = v.heading;
  x[3 + static_cast<int>(v.intention)] = 1.0;
  return x;
}

}  // namespace mtp
