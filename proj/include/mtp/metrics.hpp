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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtp/common.hpp"
#include "mtp/scene.hpp"

namespace mtp {

/// Offline prediction quality over a dataset: displacement errors plus the
/// per-vehicle miss and predicted-collision fractions.
struct OfflineReport
{
  double ade = 0.0;         // mean pointwise error [m]
  double fde = 0.0;         // mean final-point error [m]
  double mr = 0.0;          // fraction of vehicles with final error > threshold
  double cr = 0.0;          // fraction of vehicles in a predicted near-collision
  double mr_plus_cr = 0.0;
  std::int64_t n_vehicles = 0;

  nlohmann::json to_json() const
  {
    return {{"ade", ade},   {"fde", fde},           {"mr", mr},
            {"cr", cr},     {"mr_plus_cr", mr_plus_cr}, {"n_vehicles", n_vehicles}};
  }
};

/// Per-scene counts for one (predictions, ground truth) pair.
struct SceneMetrics
{
  double ade = 0.0;
  double fde = 0.0;
  double mr = 0.0;
  double cr = 0.0;
  std::int64_t n_vehicles = 0;
};

namespace detail {

/// Vehicles whose predicted trajectory comes within lambda of another
/// vehicle's prediction at the same timestep.
inline std::vector<bool> flag_predicted_collisions(const std::vector<Trajectory> & pred, double lambda)
{
  const std::size_t n = pred.size();
  std::vector<bool> flagged(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t horizon = std::min(pred[i].points.size(), pred[j].points.size());
      for (std::size_t t = 0; t < horizon; ++t) {
        if (distance(pred[i].points[t], pred[j].points[t]) < lambda) {
          flagged[i] = true;
          flagged[j] = true;
          break;
        }
      }
    }
  }
  return flagged;
}

}  // namespace detail

/// Accumulates offline metrics over many scenes; totals are pooled over
/// vehicles, not averaged per scene, so scene sizes weight naturally.
class OfflineAccumulator
{
public:
  OfflineAccumulator(double miss_threshold = 2.0, double lambda = 2.0)
  : miss_threshold_(miss_threshold), lambda_(lambda)
  {
  }

  SceneMetrics add_scene(const std::vector<Trajectory> & pred, const std::vector<Trajectory> & gt)
  {
    if (pred.size() != gt.size()) throw std::invalid_argument("offline_metrics: vehicle count mismatch");
    SceneMetrics m;
    m.n_vehicles = static_cast<std::int64_t>(pred.size());
    const auto flagged = detail::flag_predicted_collisions(pred, lambda_);
    double scene_point_err = 0.0;
    std::int64_t scene_points = 0;
    for (std::size_t k = 0; k < pred.size(); ++k) {
      if (pred[k].points.size() != gt[k].points.size() || pred[k].points.empty()) {
        throw std::invalid_argument("offline_metrics: horizon mismatch for vehicle " + std::to_string(k));
      }
      for (std::size_t t = 0; t < pred[k].points.size(); ++t) {
        scene_point_err += distance(pred[k].points[t], gt[k].points[t]);
        ++scene_points;
      }
      const double final_err = distance(pred[k].points.back(), gt[k].points.back());
      m.fde += final_err;
      if (final_err > miss_threshold_) m.mr += 1.0;
      if (flagged[k]) m.cr += 1.0;
    }
    point_err_sum_ += scene_point_err;
    point_count_ += scene_points;
    final_err_sum_ += m.fde;
    miss_count_ += static_cast<std::int64_t>(m.mr);
    collision_count_ += static_cast<std::int64_t>(m.cr);
    vehicle_count_ += m.n_vehicles;

    m.ade = scene_point_err / static_cast<double>(scene_points);
    m.fde /= static_cast<double>(m.n_vehicles);
    m.mr /= static_cast<double>(m.n_vehicles);
    m.cr /= static_cast<double>(m.n_vehicles);
    return m;
  }

  OfflineReport report() const
  {
    if (vehicle_count_ == 0) throw std::runtime_error("offline_metrics: no scenes accumulated");
    OfflineReport r;
    r.ade = point_err_sum_ / static_cast<double>(point_count_);
    r.fde = final_err_sum_ / static_cast<double>(vehicle_count_);
    r.mr = static_cast<double>(miss_count_) / static_cast<double>(vehicle_count_);
    r.cr = static_cast<double>(collision_count_) / static_cast<double>(vehicle_count_);
    r.mr_plus_cr = r.mr + r.cr;
    r.n_vehicles = vehicle_count_;
    return r;
  }

private:
  double miss_threshold_;
  double lambda_;
  double point_err_sum_ = 0.0;
  double final_err_sum_ = 0.0;
  std::int64_t point_count_ = 0;
  std::int64_t miss_count_ = 0;
  std::int64_t collision_count_ = 0;
  std::int64_t vehicle_count_ = 0;
};

/// One-shot helper for a single scene-sized evaluation.
inline OfflineReport offline_metrics(const std::vector<Trajectory> & pred,
                                     const std::vector<Trajectory> & gt, double miss_threshold = 2.0,
                                     double lambda = 2.0)
{
  OfflineAccumulator acc(miss_threshold, lambda);
  acc.add_scene(pred, gt);
  return acc.report();
}

/// Input to the DCR computation: what each episode drove and what it hit.
struct EpisodeSummary
{
  std::vector<std::vector<Vec2>> paths;  // per-vehicle time-ordered positions
  std::int64_t v2v_collisions = 0;
  std::int64_t v2b_collisions = 0;
};

/// Online driving-quality report: distance per collision, pooled over all
/// episodes (sum of distances over sum of counts, one division).
struct OnlineReport
{
  double total_distance = 0.0;  // [m]
  std::int64_t v2v_collisions = 0;
  std::int64_t v2b_collisions = 0;
  double dcr_v2v = 0.0;  // total_distance when collision-free
  double dcr_v2b = 0.0;
  bool v2v_collision_free = true;
  bool v2b_collision_free = true;
  std::vector<nlohmann::json> per_episode;

  nlohmann::json to_json() const
  {
    return {{"total_distance", total_distance},
            {"v2v_collisions", v2v_collisions},
            {"v2b_collisions", v2b_collisions},
            {"dcr_v2v", dcr_v2v},
            {"dcr_v2b", dcr_v2b},
            {"v2v_collision_free", v2v_collision_free},
            {"v2b_collision_free", v2b_collision_free},
            {"per_episode", per_episode}};
  }
};

inline double path_distance(const std::vector<Vec2> & path)
{
  double d = 0.0;
  for (std::size_t t = 0; t + 1 < path.size(); ++t) d += distance(path[t], path[t + 1]);
  return d;
}

inline OnlineReport dcr(const std::vector<EpisodeSummary> & episodes)
{
  OnlineReport r;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    double dist = 0.0;
    for (const auto & path : episodes[e].paths) dist += path_distance(path);
    r.total_distance += dist;
    r.v2v_collisions += episodes[e].v2v_collisions;
    r.v2b_collisions += episodes[e].v2b_collisions;
    r.per_episode.push_back({{"episode", e},
                             {"distance", dist},
                             {"v2v_collisions", episodes[e].v2v_collisions},
                             {"v2b_collisions", episodes[e].v2b_collisions}});
  }
  r.v2v_collision_free = r.v2v_collisions == 0;
  r.v2b_collision_free = r.v2b_collisions == 0;
  r.dcr_v2v = r.v2v_collision_free ? r.total_distance
                                   : r.total_distance / static_cast<double>(r.v2v_collisions);
  r.dcr_v2b = r.v2b_collision_free ? r.total_distance
                                   : r.total_distance / static_cast<double>(r.v2b_collisions);
  return r;
}

}  // namespace mtp
