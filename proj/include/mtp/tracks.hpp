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

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mtp/arms.hpp"
#include "mtp/common.hpp"
#include "mtp/scene.hpp"

namespace mtp {

/// One row of a track file; extra columns are passed over.
struct TrackRecord
{
  std::int64_t track_id = 0;
  std::int64_t frame = 0;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians after ingestion
};

struct PoseSample
{
  Vec2 position;
  double heading = 0.0;  // radians, wrapped
};

/// Per-vehicle pose sequence over contiguous frames.
struct TrackSequence
{
  std::int64_t id = 0;
  std::int64_t first_frame = 0;
  std::vector<PoseSample> poses;

  std::int64_t last_frame() const
  {
    return first_frame + static_cast<std::int64_t>(poses.size()) - 1;
  }
};

/// Same, with the maneuver label attached.
struct LabeledSequence
{
  std::int64_t id = 0;
  std::int64_t first_frame = 0;
  std::vector<PoseSample> poses;
  Intention intention = Intention::Straight;

  std::int64_t last_frame() const
  {
    return first_frame + static_cast<std::int64_t>(poses.size()) - 1;
  }
};

/// Column-name mapping for track CSVs. Defaults follow the inD spelling;
/// heading defaults to degrees, matching that convention.
struct TrackCsvOptions
{
  std::string track_id_column = "trackId";
  std::string frame_column = "frame";
  std::string x_column = "xCenter";
  std::string y_column = "yCenter";
  std::string heading_column = "heading";
  bool heading_degrees = true;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string & line)
{
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline double parse_double(const std::string & s, int line_no, const std::string & col)
{
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception &) {
    throw std::runtime_error("track file line " + std::to_string(line_no) + ": cannot parse '" + s +
                             "' in column " + col);
  }
}

inline std::int64_t parse_int(const std::string & s, int line_no, const std::string & col)
{
  try {
    std::size_t used = 0;
    const std::int64_t v = std::stoll(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception &) {
    throw std::runtime_error("track file line " + std::to_string(line_no) + ": cannot parse '" + s +
                             "' in column " + col);
  }
}

}  // namespace detail

/// Parse a track CSV into per-vehicle pose sequences, grouped by track id and
/// sorted by frame. Headings are converted to radians and wrapped.
inline std::vector<TrackSequence> load_tracks(const std::string & path,
                                              const TrackCsvOptions & opts = {})
{
  const std::string data = read_file(path);
  std::istringstream in(data);
  std::string line;

  if (!std::getline(in, line)) throw std::runtime_error("track file is empty: " + path);
  const auto header = detail::split_csv_line(line);

  auto column_index = [&](const std::string & name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw std::runtime_error("track file missing required column '" + name + "': " + path);
    }
    return static_cast<std::size_t>(it - header.begin());
  };

  const std::size_t id_idx = column_index(opts.track_id_column);
  const std::size_t frame_idx = column_index(opts.frame_column);
  const std::size_t x_idx = column_index(opts.x_column);
  const std::size_t y_idx = column_index(opts.y_column);
  const std::size_t heading_idx = column_index(opts.heading_column);
  const std::size_t min_fields = std::max({id_idx, frame_idx, x_idx, y_idx, heading_idx}) + 1;

  std::map<std::int64_t, std::map<std::int64_t, PoseSample>> grouped;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() < min_fields) {
      throw std::runtime_error("track file line " + std::to_string(line_no) + ": expected at least " +
                               std::to_string(min_fields) + " fields, got " +
                               std::to_string(fields.size()));
    }
    TrackRecord rec;
    rec.track_id = detail::parse_int(fields[id_idx], line_no, opts.track_id_column);
    rec.frame = detail::parse_int(fields[frame_idx], line_no, opts.frame_column);
    rec.x = detail::parse_double(fields[x_idx], line_no, opts.x_column);
    rec.y = detail::parse_double(fields[y_idx], line_no, opts.y_column);
    rec.heading = detail::parse_double(fields[heading_idx], line_no, opts.heading_column);
    if (opts.heading_degrees) rec.heading *= kPi / 180.0;

    auto & track = grouped[rec.track_id];
    const bool inserted =
      track.emplace(rec.frame, PoseSample{{rec.x, rec.y}, wrap_angle(rec.heading)}).second;
    if (!inserted) {
      throw std::runtime_error("track file line " + std::to_string(line_no) +
                               ": duplicate record for track " + std::to_string(rec.track_id) +
                               " frame " + std::to_string(rec.frame));
    }
  }

  std::vector<TrackSequence> out;
  out.reserve(grouped.size());
  for (const auto & [id, frames] : grouped) {
    TrackSequence seq;
    seq.id = id;
    seq.first_frame = frames.begin()->first;
    std::int64_t expected = seq.first_frame;
    for (const auto & [frame, pose] : frames) {
      if (frame != expected) {
        throw std::runtime_error("track " + std::to_string(id) + ": frames not contiguous (gap before frame " +
                                 std::to_string(frame) + ")");
      }
      seq.poses.push_back(pose);
      ++expected;
    }
    out.push_back(std::move(seq));
  }
  return out;
}

/// Attach maneuver labels from the (entry arm, exit arm) pair. Tracks whose
/// endpoints sit closer than `min_radius` to the center (clipped recordings)
/// and U-turns are dropped.
inline std::vector<LabeledSequence> label_intentions(const std::vector<TrackSequence> & seqs,
                                                     double min_radius = 5.0)
{
  std::vector<LabeledSequence> out;
  for (const auto & seq : seqs) {
    if (seq.poses.empty()) continue;
    const Vec2 first = seq.poses.front().position;
    const Vec2 last = seq.poses.back().position;
    if (first.norm() < min_radius || last.norm() < min_radius) continue;
    const auto intent = intention_for_arms(arm_of_position(first), arm_of_position(last));
    if (!intent) continue;
    out.push_back({seq.id, seq.first_frame, seq.poses, *intent});
  }
  return out;
}

/**
 * Slice pose sequences into Scenes. At every `stride`-th frame (anchored at
 * the earliest frame present), every vehicle alive at that instant with at
 * least T frames of recorded life remaining — counting the instant itself —
 * contributes a snapshot plus the T-frame future window starting at the
 * instant. Vehicles with a shorter remainder are dropped; instants with no
 * qualifying vehicle produce no Scene.
 */
inline std::vector<Scene> slice_scenes(const std::vector<LabeledSequence> & seqs,
                                       std::int64_t stride, int horizon, double dt)
{
  if (horizon < 1) throw std::invalid_argument("slice_scenes: horizon must be >= 1");
  if (stride < 1) throw std::invalid_argument("slice_scenes: stride must be >= 1");
  if (!(dt > 0.0)) throw std::invalid_argument("slice_scenes: dt must be positive");

  std::vector<Scene> scenes;
  if (seqs.empty()) return scenes;

  std::int64_t anchor = seqs.front().first_frame;
  std::int64_t last = seqs.front().last_frame();
  for (const auto & s : seqs) {
    anchor = std::min(anchor, s.first_frame);
    last = std::max(last, s.last_frame());
  }

  for (std::int64_t f = anchor; f <= last; f += stride) {
    Scene scene;
    for (const auto & s : seqs) {
      if (f < s.first_frame) continue;
      if (f + horizon - 1 > s.last_frame()) continue;  // not enough future recorded
      const auto base = static_cast<std::size_t>(f - s.first_frame);
      const PoseSample & now = s.poses[base];
      scene.vehicles.emplace_back(s.id, now.position, now.heading, s.intention);
      Trajectory future;
      future.dt = dt;
      future.points.reserve(static_cast<std::size_t>(horizon));
      for (int t = 0; t < horizon; ++t) future.points.push_back(s.poses[base + t].position);
      scene.futures.push_back(std::move(future));
    }
    if (!scene.vehicles.empty()) scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace mtp
