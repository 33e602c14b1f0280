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
#include <string>
#include <vector>

#include "mtp/bicycle.hpp"
#include "mtp/common.hpp"
#include "mtp/linalg.hpp"

namespace mtp {

/// Reference pose for one MPC step.
struct Waypoint
{
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
};

/// Track J reference poses from an initial state: the state after i control
/// intervals of `dt` is costed against reference[i-1]. Each interval holds
/// its command over `substeps` Euler steps of dt/substeps, so the internal
/// integration can match the simulator's finer stepping.
struct MpcProblem
{
  DynamicVehicle initial;
  std::vector<Waypoint> reference;
  double dt = 0.2;
  int substeps = 1;
  VehicleLimits limits;
  bool terminal_only = false;  // cost only the final step (augmentation relabeling)

  int horizon() const { return static_cast<int>(reference.size()); }

  void validate() const
  {
    if (reference.empty()) throw std::invalid_argument("MpcProblem: need at least one waypoint");
    if (!(dt > 0.0)) throw std::invalid_argument("MpcProblem: dt must be positive");
    if (substeps < 1) throw std::invalid_argument("MpcProblem: substeps must be >= 1");
    limits.validate();
    for (const auto & w : reference) {
      if (!std::isfinite(w.x) || !std::isfinite(w.y) || !std::isfinite(w.theta)) {
        throw std::invalid_argument("MpcProblem: non-finite waypoint");
      }
    }
  }
};

struct MpcOptions
{
  int max_iters = 200;
  double fd_epsilon = 1e-6;   // central-difference probe on the control vector
  double step_tol = 1e-12;    // stop when the projected step is this small
  double cost_tol = 1e-14;    // stop when the cost is essentially zero
  double stall_tol = 1e-6;    // stop when relative improvement stalls
};

struct MpcSolution
{
  std::vector<ControlCommand> commands;
  std::vector<DynamicVehicle> rollout;  // J+1 states, rollout[0] == initial
  double cost = 0.0;
  int iterations = 0;
};

namespace detail {

inline std::vector<DynamicVehicle> roll(const MpcProblem & p, const Vecd & u)
{
  const int j = p.horizon();
  const double fine_dt = p.dt / p.substeps;
  std::vector<DynamicVehicle> states(static_cast<std::size_t>(j) + 1);
  states[0] = p.initial;
  for (int i = 0; i < j; ++i) {
    const ControlCommand cmd{u[2 * static_cast<std::size_t>(i)], u[2 * static_cast<std::size_t>(i) + 1]};
    DynamicVehicle s = states[static_cast<std::size_t>(i)];
    for (int sub = 0; sub < p.substeps; ++sub) s = step_bicycle(s, cmd, fine_dt, p.limits.speed_max);
    states[static_cast<std::size_t>(i) + 1] = s;
  }
  return states;
}

inline double rollout_cost(const MpcProblem & p, const Vecd & u)
{
  const auto states = roll(p, u);
  const int j = p.horizon();
  double cost = 0.0;
  for (int i = 1; i <= j; ++i) {
    if (p.terminal_only && i != j) continue;
    const auto & s = states[static_cast<std::size_t>(i)];
    const auto & w = p.reference[static_cast<std::size_t>(i) - 1];
    const double dth = wrap_angle(s.theta - w.theta);
    cost += (s.x - w.x) * (s.x - w.x) + (s.y - w.y) * (s.y - w.y) + dth * dth;
  }
  return cost;
}

inline void project_controls(Vecd & u, const VehicleLimits & limits)
{
  for (std::size_t i = 0; i + 1 < u.size(); i += 2) {
    u[i] = clamp(u[i], -limits.accel_max, limits.accel_max);
    u[i + 1] = clamp(u[i + 1], -limits.steer_max, limits.steer_max);
  }
}

}  // namespace detail

/**
 * Direct-shooting solve of the tracking problem: projected gradient descent
 * over the flattened (a, delta) sequence with a central-difference gradient
 * and a backtracking line search. The probe pair of each coordinate also
 * yields its diagonal curvature, which preconditions the step — steering
 * curvature dwarfs acceleration curvature, and an unscaled step direction
 * stalls the line search at tiny alphas. The returned cost never exceeds
 * the cost of the zero-control sequence.
 */
inline MpcSolution solve_mpc(const MpcProblem & p, const MpcOptions & opts = {},
                             const std::vector<ControlCommand> * warm_start = nullptr)
{
  p.validate();
  const int j = p.horizon();
  const std::size_t dim = 2 * static_cast<std::size_t>(j);

  // Multi-start: zero control, the warm start, and constant full accel /
  // full brake. The clamp v >= 0 creates a zero-gradient plateau around any
  // parked rollout; the accelerating candidate sees past it.
  std::vector<Vecd> candidates;
  candidates.emplace_back(dim, 0.0);
  if (warm_start != nullptr && !warm_start->empty()) {
    Vecd w(dim, 0.0);
    const std::size_t copy = std::min(warm_start->size(), static_cast<std::size_t>(j));
    for (std::size_t i = 0; i < copy; ++i) {
      w[2 * i] = (*warm_start)[i].accel;
      w[2 * i + 1] = (*warm_start)[i].steer;
    }
    // hold the last warm command over any uncovered tail
    for (std::size_t i = copy; i < static_cast<std::size_t>(j); ++i) {
      w[2 * i] = w[2 * (copy - 1)];
      w[2 * i + 1] = w[2 * (copy - 1) + 1];
    }
    detail::project_controls(w, p.limits);
    candidates.push_back(std::move(w));
  }
  for (const double a : {p.limits.accel_max, -p.limits.accel_max}) {
    Vecd c(dim, 0.0);
    for (std::size_t i = 0; i < dim; i += 2) c[i] = a;
    candidates.push_back(std::move(c));
  }

  Vecd u = candidates.front();
  double cost = detail::rollout_cost(p, u);
  for (std::size_t c = 1; c < candidates.size(); ++c) {
    const double candidate_cost = detail::rollout_cost(p, candidates[c]);
    if (candidate_cost < cost) {
      u = candidates[c];
      cost = candidate_cost;
    }
  }
  if (!std::isfinite(cost)) {
    throw std::runtime_error("solve_mpc: non-finite cost at initialization");
  }

  Vecd grad(dim, 0.0);
  Vecd direction(dim, 0.0);
  double alpha = 1.0;  // line-search warm start, adapted across iterations
  int iter = 0;
  for (; iter < opts.max_iters; ++iter) {
    if (cost < opts.cost_tol) break;

    double curv_max = 0.0;
    Vecd curv(dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
      Vecd probe = u;
      probe[i] = u[i] + opts.fd_epsilon;
      const double hi = detail::rollout_cost(p, probe);
      probe[i] = u[i] - opts.fd_epsilon;
      const double lo = detail::rollout_cost(p, probe);
      grad[i] = (hi - lo) / (2.0 * opts.fd_epsilon);
      curv[i] = std::abs(hi - 2.0 * cost + lo) / (opts.fd_epsilon * opts.fd_epsilon);
      curv_max = std::max(curv_max, curv[i]);
      if (!std::isfinite(grad[i])) {
        throw std::runtime_error("solve_mpc: non-finite gradient at iteration " + std::to_string(iter));
      }
    }
    const double curv_floor = std::max(curv_max * 1e-4, 1e-12);
    for (std::size_t i = 0; i < dim; ++i) direction[i] = grad[i] / std::max(curv[i], curv_floor);

    // Backtracking with re-expansion: keep halving until the projected step
    // improves the cost, let alpha grow again on success.
    bool accepted = false;
    double trial_alpha = std::min(alpha * 2.0, 4.0);
    for (int back = 0; back < 60; ++back) {
      Vecd trial = u;
      for (std::size_t i = 0; i < dim; ++i) trial[i] -= trial_alpha * direction[i];
      detail::project_controls(trial, p.limits);
      const double trial_cost = detail::rollout_cost(p, trial);
      if (!std::isfinite(trial_cost)) {
        throw std::runtime_error("solve_mpc: non-finite cost in line search at iteration " +
                                 std::to_string(iter));
      }
      if (trial_cost < cost) {
        double step = 0.0;
        for (std::size_t i = 0; i < dim; ++i) step = std::max(step, std::abs(trial[i] - u[i]));
        const double improvement = cost - trial_cost;
        u = std::move(trial);
        cost = trial_cost;
        alpha = trial_alpha;
        accepted = step > opts.step_tol && improvement > opts.stall_tol * std::max(1.0, cost);
        break;
      }
      trial_alpha *= 0.5;
    }
    if (!accepted) break;  // converged (or line search exhausted)
  }

  MpcSolution sol;
  sol.cost = cost;
  sol.iterations = iter;
  sol.rollout = detail::roll(p, u);
  sol.commands.resize(static_cast<std::size_t>(j));
  for (int i = 0; i < j; ++i) {
    sol.commands[static_cast<std::size_t>(i)] = {u[2 * static_cast<std::size_t>(i)],
                                                 u[2 * static_cast<std::size_t>(i) + 1]};
  }
  return sol;
}

/// Same solver with the cost applied only at the final step; used to relabel
/// augmented samples toward the original trajectory's final pose.
inline MpcSolution solve_mpc_to_point(const DynamicVehicle & initial, const Waypoint & endpoint, int j,
                                      double dt, const VehicleLimits & limits,
                                      const MpcOptions & opts = {}, int substeps = 1)
{
  if (j < 1) throw std::invalid_argument("solve_mpc_to_point: horizon must be >= 1");
  MpcProblem p;
  p.initial = initial;
  p.reference.assign(static_cast<std::size_t>(j), endpoint);
  p.dt = dt;
  p.substeps = substeps;
  p.limits = limits;
  p.terminal_only = true;
  return solve_mpc(p, opts);
}

}  // namespace mtp
