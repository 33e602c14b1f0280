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
#include <vector>

#include "mtp/arms.hpp"
#include "mtp/common.hpp"
#include "mtp/scene.hpp"

namespace mtp {

/// Four-way intersection, one lane per direction, right-hand traffic.
/// The central conflict box spans |x|,|y| <= lane_width (road half-width).
struct IntersectionMap
{
  enum class PriorityAxis { Vertical, Horizontal };

  double arm_half_length = 60.0;   // [m] from center to each arm end
  double lane_width = 3.5;         // [m]
  double stop_line_offset = 10.0;  // [m] from center
  PriorityAxis priority = PriorityAxis::Vertical;
  std::vector<std::vector<Vec2>> barriers;  // road-edge polylines

  double half_lane() const { return lane_width / 2.0; }
  double box_half() const { return lane_width; }

  bool is_priority(Arm a) const
  {
    const bool vertical = a == Arm::North || a == Arm::South;
    return priority == PriorityAxis::Vertical ? vertical : !vertical;
  }

  void validate() const
  {
    if (!(lane_width > 0.0)) throw std::invalid_argument("IntersectionMap: lane_width must be > 0");
    if (!(stop_line_offset < arm_half_length)) {
      throw std::invalid_argument("IntersectionMap: stop line must sit inside the arm");
    }
    if (!(stop_line_offset > box_half())) {
      throw std::invalid_argument("IntersectionMap: stop line must sit before the conflict box");
    }
  }
};

/// Default map with the four L-shaped corner barriers along the road edges.
inline IntersectionMap make_default_map()
{
  IntersectionMap map;
  const double b = map.box_half();
  const double l = map.arm_half_length;
  map.barriers = {
    {{b, -l}, {b, -b}, {l, -b}},      // south-east corner
    {{l, b}, {b, b}, {b, l}},         // north-east corner
    {{-b, l}, {-b, b}, {-l, b}},      // north-west corner
    {{-l, -b}, {-b, -b}, {-b, -l}},   // south-west corner
  };
  return map;
}

inline double distance_point_segment(const Vec2 & p, const Vec2 & a, const Vec2 & b)
{
  const Vec2 ab = b - a;
  const double len_sq = ab.squared_norm();
  if (len_sq == 0.0) return distance(p, a);
  const double t = clamp((p - a).dot(ab) / len_sq, 0.0, 1.0);
  return distance(p, {a.x + t * ab.x, a.y + t * ab.y});
}

inline double distance_to_barriers(const Vec2 & p, const IntersectionMap & map)
{
  double best = std::numeric_limits<double>::infinity();
  for (const auto & polyline : map.barriers) {
    for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
      best = std::min(best, distance_point_segment(p, polyline[i], polyline[i + 1]));
    }
  }
  return best;
}

/// Closest point on any barrier polyline.
inline Vec2 nearest_barrier_point(const Vec2 & p, const IntersectionMap & map)
{
  double best = std::numeric_limits<double>::infinity();
  Vec2 nearest = p;
  for (const auto & polyline : map.barriers) {
    for (std::size_t i = 0; i + 1 < polyline.size(); ++i) {
      const Vec2 & a = polyline[i];
      const Vec2 & b = polyline[i + 1];
      const Vec2 ab = b - a;
      const double len_sq = ab.squared_norm();
      const double t = len_sq == 0.0 ? 0.0 : clamp((p - a).dot(ab) / len_sq, 0.0, 1.0);
      const Vec2 q{a.x + t * ab.x, a.y + t * ab.y};
      const double d = distance(p, q);
      if (d < best) {
        best = d;
        nearest = q;
      }
    }
  }
  return nearest;
}

/// Straight or circular-arc route piece, parameterized by arclength.
struct RoutePiece
{
  enum class Kind { Line, Arc };

  Kind kind = Kind::Line;
  double length = 0.0;
  // Line
  Vec2 start;
  Vec2 dir;  // unit
  // Arc
  Vec2 center;
  double radius = 0.0;
  double start_angle = 0.0;
  double sweep_sign = 1.0;  // +1 CCW (left), -1 CW (right)
};

struct RoutePose
{
  Vec2 position;
  double heading = 0.0;
  double curvature = 0.0;  // signed, left positive
};

inline RoutePose piece_pose(const RoutePiece & piece, double s)
{
  RoutePose pose;
  if (piece.kind == RoutePiece::Kind::Line) {
    pose.position = {piece.start.x + piece.dir.x * s, piece.start.y + piece.dir.y * s};
    pose.heading = std::atan2(piece.dir.y, piece.dir.x);
    pose.curvature = 0.0;
  } else {
    const double angle = piece.start_angle + piece.sweep_sign * s / piece.radius;
    pose.position = {piece.center.x + piece.radius * std::cos(angle),
                     piece.center.y + piece.radius * std::sin(angle)};
    pose.heading = wrap_angle(angle + piece.sweep_sign * kPi / 2.0);
    pose.curvature = piece.sweep_sign / piece.radius;
  }
  return pose;
}

/// Geometric path from an arm end through the intersection to the exit arm
/// end: entry segment, optional turn arc, exit segment.
class Route
{
public:
  Arm entry = Arm::South;
  Intention intention = Intention::Straight;
  Arm exit = Arm::North;

  double length = 0.0;
  double s_stop = 0.0;       // stop-line arclength
  double s_box_entry = 0.0;  // conflict-box entry
  double s_box_exit = 0.0;   // conflict-box exit
  double turn_radius = 0.0;  // 0 for straight routes

  std::vector<RoutePiece> pieces;
  std::vector<double> piece_offset;  // cumulative arclength at piece start

  RoutePose pose_at(double s) const
  {
    const double sc = clamp(s, 0.0, length);
    std::size_t i = pieces.size() - 1;
    while (i > 0 && sc < piece_offset[i]) --i;
    return piece_pose(pieces[i], sc - piece_offset[i]);
  }

  /// pose_at, but extrapolating straight past the route end (controller
  /// lookahead stays well-defined while a vehicle despawns).
  RoutePose pose_at_extended(double s) const
  {
    if (s <= length) return pose_at(s);
    RoutePose end = pose_at(length);
    end.position += Vec2{std::cos(end.heading), std::sin(end.heading)} * (s - length);
    return end;
  }

  /// Monotone progress update: nearest sampled point to `pos` in a forward
  /// window from the previous progress. Never moves backward.
  double advance_progress(double s_prev, const Vec2 & pos, double window = 6.0) const
  {
    const double step = sample_step_;
    const std::size_t begin = static_cast<std::size_t>(std::max(0.0, s_prev / step));
    const std::size_t end =
      std::min(samples_.size(), static_cast<std::size_t>((s_prev + window) / step) + 2);
    double best_d = std::numeric_limits<double>::infinity();
    double best_s = s_prev;
    for (std::size_t i = begin; i < end; ++i) {
      const double d = distance(samples_[i], pos);
      if (d < best_d) {
        best_d = d;
        best_s = static_cast<double>(i) * step;
      }
    }
    return std::max(s_prev, std::min(best_s, length));
  }

  const std::vector<Vec2> & samples() const { return samples_; }
  double sample_step() const { return sample_step_; }

  void finalize(double sample_step)
  {
    sample_step_ = sample_step;
    piece_offset.clear();
    length = 0.0;
    for (const auto & p : pieces) {
      piece_offset.push_back(length);
      length += p.length;
    }
    samples_.clear();
    for (double s = 0.0; s < length; s += sample_step_) samples_.push_back(pose_at(s).position);
    samples_.push_back(pose_at(length).position);
  }

private:
  std::vector<Vec2> samples_;
  double sample_step_ = 0.25;
};

namespace detail {

/// Rotate by k quarter turns CCW.
inline Vec2 rot90(const Vec2 & v, int k)
{
  switch (((k % 4) + 4) % 4) {
    case 0: return v;
    case 1: return {-v.y, v.x};
    case 2: return {-v.x, -v.y};
    default: return {v.y, -v.x};
  }
}

/// Quarter turns that carry the south-entry template onto the given arm.
inline int quarter_turns(Arm entry)
{
  switch (entry) {
    case Arm::South: return 0;
    case Arm::East: return 1;
    case Arm::North: return 2;
    case Arm::West: return 3;
  }
  throw std::invalid_argument("invalid arm value");
}

}  // namespace detail

/// Build the route for (entry arm, maneuver): the south-entry template
/// rotated into place. Turn arcs are tangent to both lane centerlines and
/// start/end exactly on the conflict-box boundary.
inline Route build_route(const IntersectionMap & map, Arm entry, Intention intention)
{
  map.validate();
  const double hl = map.half_lane();
  const double box = map.box_half();
  const double arm = map.arm_half_length;
  const int k = detail::quarter_turns(entry);
  const double angle_shift = static_cast<double>(k) * kPi / 2.0;

  auto line = [&](Vec2 start, Vec2 dir, double len) {
    RoutePiece p;
    p.kind = RoutePiece::Kind::Line;
    p.start = detail::rot90(start, k);
    p.dir = detail::rot90(dir, k);
    p.length = len;
    return p;
  };
  auto arc = [&](Vec2 center, double radius, double start_angle, double sweep_sign) {
    RoutePiece p;
    p.kind = RoutePiece::Kind::Arc;
    p.center = detail::rot90(center, k);
    p.radius = radius;
    p.start_angle = start_angle + angle_shift;
    p.sweep_sign = sweep_sign;
    p.length = radius * kPi / 2.0;
    return p;
  };

  Route route;
  route.entry = entry;
  route.intention = intention;
  route.exit = exit_arm(entry, intention);

  const double approach = arm - box;
  route.pieces.push_back(line({hl, -arm}, {0, 1}, approach));
  switch (intention) {
    case Intention::Straight:
      route.pieces.push_back(line({hl, -box}, {0, 1}, 2.0 * box));
      route.pieces.push_back(line({hl, box}, {0, 1}, approach));
      route.turn_radius = 0.0;
      break;
    case Intention::Left:
      route.turn_radius = box + hl;
      route.pieces.push_back(arc({-box, -box}, route.turn_radius, 0.0, +1.0));
      route.pieces.push_back(line({-box, hl}, {-1, 0}, approach));
      break;
    case Intention::Right:
      route.turn_radius = box - hl;
      route.pieces.push_back(arc({box, -box}, route.turn_radius, kPi, -1.0));
      route.pieces.push_back(line({box, -hl}, {1, 0}, approach));
      break;
  }
  route.finalize(0.25);
  route.s_stop = arm - map.stop_line_offset;
  route.s_box_entry = approach;
  route.s_box_exit = approach + route.pieces[1].length;
  return route;
}

/// Conflict relation between two routes: the arclength interval on each
/// route where the paths come within the clearance of one another.
struct RouteConflict
{
  bool conflicts = false;
  double s_begin_a = 0.0;
  double s_end_a = 0.0;
  double s_begin_b = 0.0;
  double s_end_b = 0.0;
};

/**
 * All twelve (arm, intention) routes plus the pairwise conflict table.
 * Same-arm pairs are never marked conflicting: vehicles sharing an approach
 * interact through car-following, not the yield gate.
 */
class RouteTable
{
public:
  RouteTable() = default;

  RouteTable(const IntersectionMap & map, double conflict_clearance = 2.6,
             double merge_window = 12.0)
  : map_(map)
  {
    for (int a = 0; a < 4; ++a) {
      for (int i = 0; i < 3; ++i) {
        routes_.push_back(build_route(map, static_cast<Arm>(a), static_cast<Intention>(i)));
      }
    }
    conflicts_.resize(routes_.size() * routes_.size());
    for (std::size_t a = 0; a < routes_.size(); ++a) {
      for (std::size_t b = a + 1; b < routes_.size(); ++b) {
        const RouteConflict c = compute_conflict(routes_[a], routes_[b], conflict_clearance, merge_window);
        conflicts_[a * routes_.size() + b] = c;
        RouteConflict swapped = c;
        std::swap(swapped.s_begin_a, swapped.s_begin_b);
        std::swap(swapped.s_end_a, swapped.s_end_b);
        conflicts_[b * routes_.size() + a] = swapped;
      }
    }
  }

  static int index(Arm arm, Intention intention)
  {
    return static_cast<int>(arm) * 3 + static_cast<int>(intention);
  }

  const Route & route(int idx) const { return routes_.at(static_cast<std::size_t>(idx)); }
  const Route & route(Arm arm, Intention intention) const
  {
    return routes_.at(static_cast<std::size_t>(index(arm, intention)));
  }

  /// Conflict of route a (first interval) against route b (second interval).
  const RouteConflict & conflict(int a, int b) const
  {
    return conflicts_.at(static_cast<std::size_t>(a) * routes_.size() + static_cast<std::size_t>(b));
  }

  const IntersectionMap & map() const { return map_; }

private:
  static RouteConflict compute_conflict(const Route & a, const Route & b, double clearance,
                                        double merge_window)
  {
    RouteConflict out;
    if (a.entry == b.entry) return out;  // same approach: car-following territory

    const double step_a = a.sample_step();
    const double step_b = b.sample_step();
    const auto window = [&](const Route & r, double step) {
      const std::size_t lo =
        static_cast<std::size_t>(std::max(0.0, (r.s_box_entry - 2.0) / step));
      const std::size_t hi = std::min(r.samples().size() - 1,
                                      static_cast<std::size_t>((r.s_box_exit + merge_window) / step) + 1);
      return std::pair{lo, hi};
    };
    const auto [alo, ahi] = window(a, step_a);
    const auto [blo, bhi] = window(b, step_b);

    double a_begin = 1e18, a_end = -1e18, b_begin = 1e18, b_end = -1e18;
    for (std::size_t i = alo; i <= ahi; ++i) {
      for (std::size_t j = blo; j <= bhi; ++j) {
        if (distance(a.samples()[i], b.samples()[j]) < clearance) {
          const double sa = static_cast<double>(i) * step_a;
          const double sb = static_cast<double>(j) * step_b;
          out.conflicts = true;
          a_begin = std::min(a_begin, sa);
          a_end = std::max(a_end, sa);
          b_begin = std::min(b_begin, sb);
          b_end = std::max(b_end, sb);
        }
      }
    }
    if (out.conflicts) {
      out.s_begin_a = a_begin;
      out.s_end_a = a_end;
      out.s_begin_b = b_begin;
      out.s_end_b = b_end;
    }
    return out;
  }

  IntersectionMap map_;
  std::vector<Route> routes_;
  std::vector<RouteConflict> conflicts_;
};

}  // namespace mtp
