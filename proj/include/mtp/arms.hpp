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

#include <optional>
#include <stdexcept>
#include <string>

#include "mtp/common.hpp"
#include "mtp/scene.hpp"

namespace mtp {

/// The four approaches of the intersection, CCW starting north.
enum class Arm : int { North = 0, East = 1, South = 2, West = 3 };

inline const char * to_string(Arm a)
{
  switch (a) {
    case Arm::North: return "north";
    case Arm::East: return "east";
    case Arm::South: return "south";
    case Arm::West: return "west";
  }
  throw std::invalid_argument("invalid arm value");
}

inline Arm arm_from_string(const std::string & s)
{
  if (s == "north" || s == "North") return Arm::North;
  if (s == "east" || s == "East") return Arm::East;
  if (s == "south" || s == "South") return Arm::South;
  if (s == "west" || s == "West") return Arm::West;
  throw std::invalid_argument("unknown arm: \"" + s + "\"");
}

/// Heading of traffic entering from this arm (driving toward the center).
inline double entry_heading(Arm a)
{
  switch (a) {
    case Arm::North: return -kPi / 2.0;
    case Arm::East: return kPi;
    case Arm::South: return kPi / 2.0;
    case Arm::West: return 0.0;
  }
  throw std::invalid_argument("invalid arm value");
}

/// Arm whose half-plane contains p (dominant axis wins; ties go vertical).
inline Arm arm_of_position(const Vec2 & p)
{
  if (std::abs(p.y) >= std::abs(p.x)) return p.y > 0.0 ? Arm::North : Arm::South;
  return p.x > 0.0 ? Arm::East : Arm::West;
}

/// (entry, exit) -> maneuver under right-hand traffic. With arms indexed CCW,
/// a left turn exits one arm CCW of the entry, a right turn one arm CW.
/// U-turns (entry == exit) are unsupported and yield nullopt.
inline std::optional<Intention> intention_for_arms(Arm entry, Arm exit)
{
  const int diff = (static_cast<int>(exit) - static_cast<int>(entry) + 4) % 4;
  switch (diff) {
    case 1: return Intention::Left;
    case 2: return Intention::Straight;
    case 3: return Intention::Right;
    default: return std::nullopt;
  }
}

/// Exit arm implied by an entry arm and maneuver.
inline Arm exit_arm(Arm entry, Intention intention)
{
  int diff = 2;
  if (intention == Intention::Left) diff = 1;
  if (intention == Intention::Right) diff = 3;
  return static_cast<Arm>((static_cast<int>(entry) + diff) % 4);
}

}  // namespace mtp
