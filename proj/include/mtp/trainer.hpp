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
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtp/bicycle.hpp"
#include "mtp/common.hpp"
#include "mtp/losses.hpp"
#include "mtp/metrics.hpp"
#include "mtp/mpc.hpp"
#include "mtp/network.hpp"
#include "mtp/scene.hpp"

namespace mtp {

/// Noise-and-relabel augmentation: perturb selected vehicles' poses and let
/// the endpoint-only MPC regenerate a dynamically consistent future back to
/// the original final pose.
struct AugmentParams
{
  double sigma = 0.5;             // position noise per axis [m]
  double sigma_theta = 0.1;       // heading noise [rad]
  double fraction = 0.5;          // per-vehicle selection probability
  double min_path_length = 1.0;   // skip near-stationary vehicles [m]
  double endpoint_tolerance = 3.0;  // relabel must land this close [m]
  int substeps = 2;               // relabel integration steps per point
  MpcOptions mpc;
};

struct AugmentOutcome
{
  std::optional<Scene> augmented;  // nullopt when no vehicle was perturbed
  int relabel_failures = 0;
};

inline AugmentOutcome augment_scene(const Scene & scene, const AugmentParams & params, Rng & rng,
                                    const VehicleLimits & limits)
{
  if (!scene.has_futures()) throw std::invalid_argument("augment_scene: scene has no futures");
  AugmentOutcome outcome;
  Scene out = scene;
  bool any = false;

  for (std::size_t k = 0; k < scene.vehicles.size(); ++k) {
    const Trajectory & future = scene.futures[k];
    const int horizon = static_cast<int>(future.points.size());
    // draw selection/noise for every vehicle so the stream is stable
    const bool selected = rng.uniform01() < params.fraction;
    const double dx = rng.normal(0.0, params.sigma);
    const double dy = rng.normal(0.0, params.sigma);
    const double dtheta = rng.normal(0.0, params.sigma_theta);
    if (!selected || horizon < 2) continue;
    if (path_distance(future.points) < params.min_path_length) continue;

    const double v0 =
      clamp(distance(future.points[1], future.points[0]) / future.dt, 0.0, limits.speed_max);
    VehicleSnapshot snap = scene.vehicles[k];
    snap = VehicleSnapshot(snap.id, snap.position + Vec2{dx, dy}, snap.heading + dtheta, snap.intention);

    Waypoint endpoint;
    endpoint.x = future.points.back().x;
    endpoint.y = future.points.back().y;
    const Vec2 last_step = future.points[future.points.size() - 1] - future.points[future.points.size() - 2];
    endpoint.theta = last_step.norm() > 1e-6 ? std::atan2(last_step.y, last_step.x) : snap.heading;

    const DynamicVehicle start{snap.position.x, snap.position.y, snap.heading, v0, limits.wheelbase};
    MpcSolution sol;
    try {
      sol = solve_mpc_to_point(start, endpoint, horizon - 1, future.dt, limits, params.mpc,
                               params.substeps);
    } catch (const std::runtime_error &) {
      ++outcome.relabel_failures;
      continue;
    }
    const auto & final_state = sol.rollout.back();
    if (std::hypot(final_state.x - endpoint.x, final_state.y - endpoint.y) > params.endpoint_tolerance) {
      ++outcome.relabel_failures;
      continue;
    }

    Trajectory relabeled;
    relabeled.dt = future.dt;
    relabeled.points.reserve(static_cast<std::size_t>(horizon));
    for (const auto & state : sol.rollout) relabeled.points.push_back({state.x, state.y});
    out.vehicles[k] = snap;
    out.futures[k] = std::move(relabeled);
    any = true;
  }
  if (any) outcome.augmented = std::move(out);
  return outcome;
}

struct TrainConfig
{
  NetConfig arch;
  int epochs = 300;
  int batch_size = 32;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_decay_factor = 0.1;    // one-step decay late in training
  double lr_decay_fraction = 0.8;  // applied from this fraction of epochs on
  LossConfig loss;
  bool augment = true;
  AugmentParams aug;
  VehicleLimits limits;
  double miss_threshold = 2.0;
  std::uint64_t seed = 1;
  int workers = 1;

  void validate() const
  {
    arch.validate();
    loss.validate();
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
    if (!(aug.fraction >= 0.0 && aug.fraction <= 1.0)) {
      throw std::invalid_argument("TrainConfig: augmentation fraction must be in [0, 1]");
    }
  }
};

struct EpochRow
{
  int epoch = 0;
  double train_loss = 0.0;
  double val_ade = 0.0;
  double val_fde = 0.0;
  double val_mr = 0.0;
  double val_cr = 0.0;
};

struct TrainResult
{
  MtpNetwork net;
  std::vector<EpochRow> log;
  int augmented_scenes = 0;
  int relabel_failures = 0;
};

class Adam
{
public:
  explicit Adam(std::size_t size) : m_(size, 0.0), v_(size, 0.0) {}

  void step(MtpNetwork & net, const ParameterGradients & grads, double lr, double beta1, double beta2,
            double eps)
  {
    Vecd params = flatten_parameters(net);
    const Vecd g = flatten_gradients(grads);
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1 * m_[i] + (1.0 - beta1) * g[i];
      v_[i] = beta2 * v_[i] + (1.0 - beta2) * g[i] * g[i];
      params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps);
    }
    unflatten_parameters(net, params);
  }

private:
  Vecd m_;
  Vecd v_;
  long t_ = 0;
};

/// Loss and parameter gradients for one scene.
inline std::pair<double, ParameterGradients> scene_loss_and_grads(const MtpNetwork & net,
                                                                  const Scene & scene,
                                                                  const LossConfig & loss_cfg)
{
  const auto res = forward(net, scene);
  const auto loss = total_loss(res.predictions, scene.futures, loss_cfg);
  return {loss.value, backward(net, res.acts, loss.grad)};
}

/**
 * Mini-batch trainer over whole scenes. Batches are shuffled per epoch from a
 * seeded stream, per-scene gradients are averaged in batch order, and the
 * parameter update is a single serialized Adam step, so identical
 * (dataset, config) pairs give bit-identical parameters at any worker count.
 */
class Trainer
{
public:
  Trainer(const TrainConfig & cfg, std::vector<Scene> train_scenes, std::vector<Scene> val_scenes)
  : cfg_(cfg),
    val_scenes_(std::move(val_scenes)),
    net_(init_network(cfg.arch, split_seed(cfg.seed, 0))),
    adam_(parameter_count(net_)),
    shuffle_rng_(split_seed(cfg.seed, 1))
  {
    cfg_.validate();
    if (train_scenes.empty()) throw std::invalid_argument("train: dataset is empty");
    for (std::size_t i = 0; i < train_scenes.size(); ++i) {
      check_scene(train_scenes[i], "training scene " + std::to_string(i));
    }
    for (std::size_t i = 0; i < val_scenes_.size(); ++i) {
      check_scene(val_scenes_[i], "validation scene " + std::to_string(i));
    }
    pool_ = std::move(train_scenes);
    if (cfg_.augment && cfg_.aug.fraction > 0.0) {
      Rng aug_rng(split_seed(cfg_.seed, 2));
      const std::size_t originals = pool_.size();
      for (std::size_t i = 0; i < originals; ++i) {
        auto outcome = augment_scene(pool_[i], cfg_.aug, aug_rng, cfg_.limits);
        relabel_failures_ += outcome.relabel_failures;
        if (outcome.augmented) {
          pool_.push_back(std::move(*outcome.augmented));
          ++augmented_scenes_;
        }
      }
    }
  }

  /// Learning rate at an epoch: flat, then a geometric ramp down to
  /// lr * lr_decay_factor over the tail of training. The imitation loss has
  /// constant-magnitude gradients near its minimum, so the late-phase rate
  /// sets the accuracy floor.
  double learning_rate(int epoch) const
  {
    const double start = cfg_.lr_decay_fraction * cfg_.epochs;
    if (epoch < start || cfg_.epochs <= start) return cfg_.lr;
    const double progress = (epoch - start) / (cfg_.epochs - start);
    return cfg_.lr * std::pow(cfg_.lr_decay_factor, progress);
  }

  /// One pass over the pool; returns the mean scene loss.
  double run_epoch(int epoch)
  {
    std::vector<std::size_t> order(pool_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    shuffle_rng_.shuffle(order);

    const double lr = learning_rate(epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(cfg_.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(cfg_.batch_size));
      std::vector<const Scene *> batch;
      for (std::size_t i = begin; i < end; ++i) batch.push_back(&pool_[order[i]]);
      loss_sum += step_batch(batch, lr) * static_cast<double>(batch.size());
      seen += batch.size();
    }
    return loss_sum / static_cast<double>(seen);
  }

  /// Gradient step on one batch; returns the mean scene loss. Exposed so the
  /// descent property can be tested on a pinned batch.
  double step_batch(const std::vector<const Scene *> & batch, double lr)
  {
    std::vector<double> losses(batch.size());
    std::vector<ParameterGradients> grads(batch.size());
    parallel_for(batch.size(), cfg_.workers, [&](std::size_t i) {
      auto [value, g] = scene_loss_and_grads(net_, *batch[i], cfg_.loss);
      losses[i] = value;
      grads[i] = std::move(g);
    });

    ParameterGradients total = zero_gradients(net_);
    double loss_sum = 0.0;
    const double weight = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!std::isfinite(losses[i])) {
        throw std::runtime_error("train: non-finite loss on scene with first vehicle id " +
                                 std::to_string(batch[i]->vehicles.front().id));
      }
      loss_sum += losses[i];
      accumulate_gradients(total, grads[i], weight);
    }
    adam_.step(net_, total, lr, cfg_.beta1, cfg_.beta2, cfg_.adam_eps);
    return loss_sum * weight;
  }

  EpochRow evaluate(int epoch, double train_loss) const
  {
    EpochRow row;
    row.epoch = epoch;
    row.train_loss = train_loss;
    if (val_scenes_.empty()) return row;
    OfflineAccumulator acc(cfg_.miss_threshold, cfg_.loss.lambda);
    std::vector<std::vector<Trajectory>> preds(val_scenes_.size());
    parallel_for(val_scenes_.size(), cfg_.workers,
                 [&](std::size_t i) { preds[i] = forward(net_, val_scenes_[i]).predictions; });
    for (std::size_t i = 0; i < val_scenes_.size(); ++i) acc.add_scene(preds[i], val_scenes_[i].futures);
    const auto report = acc.report();
    row.val_ade = report.ade;
    row.val_fde = report.fde;
    row.val_mr = report.mr;
    row.val_cr = report.cr;
    return row;
  }

  const MtpNetwork & net() const { return net_; }
  MtpNetwork & net() { return net_; }
  int augmented_scenes() const { return augmented_scenes_; }
  int relabel_failures() const { return relabel_failures_; }
  std::size_t pool_size() const { return pool_.size(); }

private:
  void check_scene(const Scene & scene, const std::string & what) const
  {
    scene.validate();
    if (!scene.has_futures()) throw std::invalid_argument(what + ": missing ground-truth futures");
    for (const auto & f : scene.futures) {
      if (static_cast<int>(f.points.size()) != cfg_.arch.horizon) {
        throw std::invalid_argument(what + ": future length " + std::to_string(f.points.size()) +
                                    " does not match horizon T=" + std::to_string(cfg_.arch.horizon));
      }
    }
  }

  TrainConfig cfg_;
  std::vector<Scene> pool_;
  std::vector<Scene> val_scenes_;
  MtpNetwork net_;
  Adam adam_;
  Rng shuffle_rng_;
  int augmented_scenes_ = 0;
  int relabel_failures_ = 0;
};

using EpochCallback = std::function<void(int epoch, const MtpNetwork &, const EpochRow &)>;

inline TrainResult train(std::vector<Scene> train_scenes, std::vector<Scene> val_scenes,
                         const TrainConfig & cfg, const EpochCallback & on_epoch = {})
{
  Trainer trainer(cfg, std::move(train_scenes), std::move(val_scenes));
  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double train_loss = trainer.run_epoch(epoch);
    EpochRow row = trainer.evaluate(epoch, train_loss);
    if (on_epoch) on_epoch(epoch, trainer.net(), row);
    result.log.push_back(row);
  }
  result.net = trainer.net();
  result.augmented_scenes = trainer.augmented_scenes();
  result.relabel_failures = trainer.relabel_failures();
  return result;
}

}  // namespace mtp
