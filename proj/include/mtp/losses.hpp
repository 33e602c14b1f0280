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

#include <stdexcept>
#include <vector>

#include "mtp/common.hpp"
#include "mtp/scene.hpp"

namespace mtp {

struct LossConfig
{
  double lambda = 2.0;            // safety distance [m]
  double collision_weight = 1.0;  // multiplier on the collision term
  bool normalize_by_t = false;    // divide the imitation term by T (off: literal sum over t)

  void validate() const
  {
    if (!(lambda > 0.0)) throw std::invalid_argument("LossConfig: lambda must be > 0");
    if (collision_weight < 0.0) throw std::invalid_argument("LossConfig: collision_weight must be >= 0");
  }
};

/// Gradient of a scalar loss with respect to every predicted point.
using TrajectoryGrad = std::vector<std::vector<Vec2>>;

inline TrajectoryGrad zero_grad_like(const std::vector<Trajectory> & pred)
{
  TrajectoryGrad g(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k) g[k].assign(pred[k].points.size(), Vec2{});
  return g;
}

struct LossValue
{
  double value = 0.0;
  TrajectoryGrad grad;  // d value / d pred
};

/// Mean over vehicles, sum over timesteps, of the pointwise L2 error.
/// The gradient is the exact subgradient (zero at coincident points).
inline LossValue imitation_loss(const std::vector<Trajectory> & pred,
                                const std::vector<Trajectory> & gt, bool normalize_by_t = false)
{
  if (pred.size() != gt.size()) throw std::invalid_argument("imitation_loss: vehicle count mismatch");
  const std::size_t n = pred.size();
  if (n == 0) throw std::invalid_argument("imitation_loss: empty prediction set");

  LossValue out;
  out.grad = zero_grad_like(pred);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) {
    if (pred[k].points.size() != gt[k].points.size()) {
      throw std::invalid_argument("imitation_loss: horizon mismatch for vehicle " + std::to_string(k));
    }
    const std::size_t horizon = pred[k].points.size();
    const double weight = normalize_by_t && horizon > 0 ? inv_n / static_cast<double>(horizon) : inv_n;
    for (std::size_t t = 0; t < horizon; ++t) {
      const Vec2 diff = pred[k].points[t] - gt[k].points[t];
      const double d = diff.norm();
      out.value += weight * d;
      if (d > 0.0) {
        out.grad[k][t] = diff * (weight / d);
      }
    }
  }
  return out;
}

/// Hinge penalty on the closest same-time approach of every vehicle pair:
/// sum over i<j of max(0, lambda - min_t |S_i^t - S_j^t|). The gradient flows
/// through the arg-min timestep only (ties broken toward the smallest t).
inline LossValue collision_loss(const std::vector<Trajectory> & pred, double lambda)
{
  LossValue out;
  out.grad = zero_grad_like(pred);
  const std::size_t n = pred.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const std::size_t horizon = std::min(pred[i].points.size(), pred[j].points.size());
      if (horizon == 0) continue;
      std::size_t t_min = 0;
      double d_min = distance(pred[i].points[0], pred[j].points[0]);
      for (std::size_t t = 1; t < horizon; ++t) {
        const double d = distance(pred[i].points[t], pred[j].points[t]);
        if (d < d_min) {
          d_min = d;
          t_min = t;
        }
      }
      if (d_min < lambda) {
        out.value += lambda - d_min;
        if (d_min > 0.0) {
          const Vec2 diff = pred[i].points[t_min] - pred[j].points[t_min];
          const Vec2 g = diff * (-1.0 / d_min);
          out.grad[i][t_min] += g;
          out.grad[j][t_min] += g * -1.0;
        }
      }
    }
  }
  return out;
}

/// L_imitation + collision_weight * L_collision, with the combined gradient.
inline LossValue total_loss(const std::vector<Trajectory> & pred, const std::vector<Trajectory> & gt,
                            const LossConfig & cfg)
{
  LossValue imit = imitation_loss(pred, gt, cfg.normalize_by_t);
  if (cfg.collision_weight == 0.0) return imit;
  const LossValue coll = collision_loss(pred, cfg.lambda);
  imit.value += cfg.collision_weight * coll.value;
  for (std::size_t k = 0; k < imit.grad.size(); ++k) {
    for (std::size_t t = 0; t < imit.grad[k].size(); ++t) {
      imit.grad[k][t] += coll.grad[k][t] * cfg.collision_weight;
    }
  }
  return imit;
}

}  // namespace mtp
