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
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtp/common.hpp"
#include "mtp/linalg.hpp"
#include "mtp/losses.hpp"
#include "mtp/scene.hpp"

namespace mtp {

/// Architecture and input/output conventions of an MtpNetwork. Everything
/// here is embedded in checkpoints; two networks with equal configs are
/// structurally interchangeable.
struct NetConfig
{
  int input_dim = 6;
  std::vector<int> encoder_widths = {64, 64};      // L dense layers, ReLU after each
  std::vector<int> aggregation_widths = {64, 64};  // hidden aggregation layers; a final
                                                   // linear layer to 2*horizon is implied
  int horizon = 30;           // T, predicted points per vehicle
  double scale = 50.0;        // position normalization [m]
  double prediction_dt = 0.2; // spacing of predicted points [s]
  bool disable_aggregation = false;  // ablation: force the neighbor sum to zero

  int output_dim() const { return 2 * horizon; }

  void validate() const
  {
    if (input_dim < 1) throw std::invalid_argument("NetConfig: input_dim must be >= 1");
    if (horizon < 1) throw std::invalid_argument("NetConfig: horizon must be >= 1");
    if (!(scale > 0.0)) throw std::invalid_argument("NetConfig: scale must be > 0");
    if (!(prediction_dt > 0.0)) throw std::invalid_argument("NetConfig: prediction_dt must be > 0");
    if (encoder_widths.empty()) throw std::invalid_argument("NetConfig: need at least one encoder layer");
    for (int w : encoder_widths) {
      if (w < 1) throw std::invalid_argument("NetConfig: encoder widths must be >= 1");
    }
    for (int w : aggregation_widths) {
      if (w < 1) throw std::invalid_argument("NetConfig: aggregation widths must be >= 1");
    }
  }

  bool operator==(const NetConfig &) const = default;
};

/// Dense layer: out = W * in + b.
struct DenseLayer
{
  Mat W;
  Vecd b;
};

/// Aggregation layer: out_k = W_s * in_k + W_o * sum_{p != k} in_p. No bias.
struct AggLayer
{
  Mat W_s;
  Mat W_o;
};

struct MtpNetwork
{
  NetConfig cfg;
  std::vector<DenseLayer> encoder;
  std::vector<AggLayer> aggregator;  // last layer applies no nonlinearity
};

/// Per-layer activations of one forward pass, kept for backpropagation.
struct SceneActivations
{
  // enc[l][k]: l = 0 holds the input vector X_k, l = 1..L the ReLU outputs.
  std::vector<std::vector<Vecd>> enc;
  // agg[m][k]: m = 0 aliases enc[L], m = 1..A the aggregation-layer outputs.
  std::vector<std::vector<Vecd>> agg;
  // neighbor_sum[m][k]: sum over p != k of agg[m][p], id-ascending order.
  std::vector<std::vector<Vecd>> neighbor_sum;
  // Vehicle indices sorted by ascending id (canonical summation order).
  std::vector<std::size_t> id_order;
};

struct ForwardResult
{
  std::vector<Trajectory> predictions;  // absolute positions, meters
  SceneActivations acts;
};

/// Gradients with the same shapes as the network parameters.
struct ParameterGradients
{
  std::vector<DenseLayer> encoder;
  std::vector<AggLayer> aggregator;
};

namespace detail {

inline Vecd relu(Vecd v)
{
  for (double & x : v) x = std::max(0.0, x);
  return v;
}

/// delta *= 1[out > 0], the ReLU subgradient mask.
inline void apply_relu_mask(Vecd & delta, const Vecd & out)
{
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (out[i] <= 0.0) delta[i] = 0.0;
  }
}

inline std::vector<std::size_t> sorted_by_id(const Scene & scene)
{
  std::vector<std::size_t> order(scene.vehicles.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scene.vehicles[a].id < scene.vehicles[b].id;
  });
  return order;
}

/// Per-vehicle sums over all other vehicles, accumulated in ascending-id
/// order so the result is independent of the storage order of the scene.
inline std::vector<Vecd> neighbor_sums(const std::vector<Vecd> & acts,
                                       const std::vector<std::size_t> & id_order)
{
  const std::size_t n = acts.size();
  const std::size_t dim = acts.empty() ? 0 : acts[0].size();
  std::vector<Vecd> sums(n, Vecd(dim, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    Vecd & s = sums[k];
    for (const std::size_t p : id_order) {
      if (p == k) continue;
      add_in_place(s, acts[p]);
    }
  }
  return sums;
}

}  // namespace detail

/// All layer dimensions in declared order: encoder in/out pairs, then
/// aggregation in/out pairs ending at 2T.
inline std::vector<std::pair<int, int>> layer_dims(const NetConfig & cfg)
{
  std::vector<std::pair<int, int>> dims;
  int prev = cfg.input_dim;
  for (int w : cfg.encoder_widths) {
    dims.emplace_back(prev, w);
    prev = w;
  }
  for (int w : cfg.aggregation_widths) {
    dims.emplace_back(prev, w);
    prev = w;
  }
  dims.emplace_back(prev, cfg.output_dim());
  return dims;
}

/// Fan-in-scaled uniform init, biases zero. Identical (config, seed) pairs
/// produce bit-identical parameters.
inline MtpNetwork init_network(const NetConfig & cfg, std::uint64_t seed)
{
  cfg.validate();
  MtpNetwork net;
  net.cfg = cfg;
  Rng rng(split_seed(seed, 0));

  auto init_mat = [&](int out_dim, int in_dim) {
    Mat m(out_dim, in_dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double & w : m.a) w = rng.uniform(-bound, bound);
    return m;
  };

  const auto dims = layer_dims(cfg);
  const std::size_t num_enc = cfg.encoder_widths.size();
  for (std::size_t l = 0; l < num_enc; ++l) {
    DenseLayer layer;
    layer.W = init_mat(dims[l].second, dims[l].first);
    layer.b.assign(static_cast<std::size_t>(dims[l].second), 0.0);
    net.encoder.push_back(std::move(layer));
  }
  for (std::size_t m = num_enc; m < dims.size(); ++m) {
    AggLayer layer;
    layer.W_s = init_mat(dims[m].second, dims[m].first);
    layer.W_o = init_mat(dims[m].second, dims[m].first);
    net.aggregator.push_back(std::move(layer));
  }
  return net;
}

/**
 * Run the network on a scene. Every vehicle passes through the shared
 * encoder, then through the aggregation layers, where each layer mixes the
 * vehicle's own latent with the sum of all other vehicles' latents. The final
 * layer is linear; its 2T outputs are reshaped row-major into T points and
 * de-normalized by the configured scale.
 */
inline ForwardResult forward(const MtpNetwork & net, const Scene & scene)
{
  scene.validate();
  const std::size_t n = scene.vehicles.size();
  const std::size_t num_enc = net.encoder.size();
  const std::size_t num_agg = net.aggregator.size();
  const bool aggregate = !net.cfg.disable_aggregation && n > 1;

  ForwardResult res;
  SceneActivations & acts = res.acts;
  acts.id_order = detail::sorted_by_id(scene);

  acts.enc.assign(num_enc + 1, std::vector<Vecd>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const auto x = assemble_input(scene.vehicles[k], net.cfg.scale);
    if (static_cast<int>(x.size()) != net.cfg.input_dim) {
      throw std::invalid_argument("forward: input dimension mismatch");
    }
    acts.enc[0][k].assign(x.begin(), x.end());
  }
  for (std::size_t l = 0; l < num_enc; ++l) {
    const DenseLayer & layer = net.encoder[l];
    for (std::size_t k = 0; k < n; ++k) {
      Vecd z = matvec(layer.W, acts.enc[l][k]);
      add_in_place(z, layer.b);
      acts.enc[l + 1][k] = detail::relu(std::move(z));
    }
  }

  acts.agg.assign(num_agg + 1, std::vector<Vecd>(n));
  acts.agg[0] = acts.enc[num_enc];
  acts.neighbor_sum.assign(num_agg, {});
  for (std::size_t m = 0; m < num_agg; ++m) {
    const AggLayer & layer = net.aggregator[m];
    if (aggregate) acts.neighbor_sum[m] = detail::neighbor_sums(acts.agg[m], acts.id_order);
    const bool last = m + 1 == num_agg;
    for (std::size_t k = 0; k < n; ++k) {
      Vecd z = matvec(layer.W_s, acts.agg[m][k]);
      if (aggregate) add_in_place(z, matvec(layer.W_o, acts.neighbor_sum[m][k]));
      acts.agg[m + 1][k] = last ? std::move(z) : detail::relu(std::move(z));
    }
  }

  res.predictions.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Vecd & out = acts.agg[num_agg][k];
    Trajectory & traj = res.predictions[k];
    traj.dt = net.cfg.prediction_dt;
    traj.points.resize(static_cast<std::size_t>(net.cfg.horizon));
    for (int t = 0; t < net.cfg.horizon; ++t) {
      traj.points[static_cast<std::size_t>(t)] = {out[2 * static_cast<std::size_t>(t)] * net.cfg.scale,
                                                  out[2 * static_cast<std::size_t>(t) + 1] * net.cfg.scale};
    }
  }
  return res;
}

inline ParameterGradients zero_gradients(const MtpNetwork & net)
{
  ParameterGradients g;
  for (const auto & layer : net.encoder) {
    DenseLayer zero;
    zero.W = Mat(layer.W.rows, layer.W.cols);
    zero.b.assign(layer.b.size(), 0.0);
    g.encoder.push_back(std::move(zero));
  }
  for (const auto & layer : net.aggregator) {
    AggLayer zero;
    zero.W_s = Mat(layer.W_s.rows, layer.W_s.cols);
    zero.W_o = Mat(layer.W_o.rows, layer.W_o.cols);
    g.aggregator.push_back(std::move(zero));
  }
  return g;
}

/**
 * Exact reverse-mode gradients of a scalar loss through the forward pass.
 * `grad_predictions` holds dLoss/dPoint in meters for every predicted point.
 * The neighbor-sum term routes gradient from each vehicle's output into
 * every other vehicle's latent.
 */
inline ParameterGradients backward(const MtpNetwork & net, const SceneActivations & acts,
                                   const TrajectoryGrad & grad_predictions)
{
  const std::size_t n = acts.enc.empty() ? 0 : acts.enc[0].size();
  const std::size_t num_enc = net.encoder.size();
  const std::size_t num_agg = net.aggregator.size();
  if (acts.enc.size() != num_enc + 1 || acts.agg.size() != num_agg + 1) {
    throw std::invalid_argument("backward: activations do not match network shape");
  }
  if (grad_predictions.size() != n) {
    throw std::invalid_argument("backward: prediction gradient count mismatch");
  }
  const bool aggregate = !net.cfg.disable_aggregation && n > 1;

  ParameterGradients grads = zero_gradients(net);

  // Seed: un-reshape and undo the de-normalization (out_m = scale * out_norm).
  std::vector<Vecd> delta(n, Vecd(static_cast<std::size_t>(net.cfg.output_dim()), 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    if (static_cast<int>(grad_predictions[k].size()) != net.cfg.horizon) {
      throw std::invalid_argument("backward: prediction gradient horizon mismatch");
    }
    for (int t = 0; t < net.cfg.horizon; ++t) {
      delta[k][2 * static_cast<std::size_t>(t)] = grad_predictions[k][static_cast<std::size_t>(t)].x * net.cfg.scale;
      delta[k][2 * static_cast<std::size_t>(t) + 1] = grad_predictions[k][static_cast<std::size_t>(t)].y * net.cfg.scale;
    }
  }

  for (std::size_t m = num_agg; m-- > 0;) {
    const AggLayer & layer = net.aggregator[m];
    AggLayer & grad = grads.aggregator[m];
    const bool last = m + 1 == num_agg;
    if (!last) {
      for (std::size_t k = 0; k < n; ++k) detail::apply_relu_mask(delta[k], acts.agg[m + 1][k]);
    }
    for (const std::size_t k : acts.id_order) {
      add_outer(grad.W_s, delta[k], acts.agg[m][k]);
      if (aggregate) add_outer(grad.W_o, delta[k], acts.neighbor_sum[m][k]);
    }
    std::vector<Vecd> delta_in(n);
    if (aggregate) {
      const auto delta_sums = detail::neighbor_sums(delta, acts.id_order);
      for (std::size_t k = 0; k < n; ++k) {
        delta_in[k] = matvec_t(layer.W_s, delta[k]);
        add_in_place(delta_in[k], matvec_t(layer.W_o, delta_sums[k]));
      }
    } else {
      for (std::size_t k = 0; k < n; ++k) delta_in[k] = matvec_t(layer.W_s, delta[k]);
    }
    delta = std::move(delta_in);
  }

  for (std::size_t l = num_enc; l-- > 0;) {
    const DenseLayer & layer = net.encoder[l];
    DenseLayer & grad = grads.encoder[l];
    for (std::size_t k = 0; k < n; ++k) detail::apply_relu_mask(delta[k], acts.enc[l + 1][k]);
    for (const std::size_t k : acts.id_order) {
      add_outer(grad.W, delta[k], acts.enc[l][k]);
      add_in_place(grad.b, delta[k]);
    }
    if (l > 0) {
      std::vector<Vecd> delta_in(n);
      for (std::size_t k = 0; k < n; ++k) delta_in[k] = matvec_t(layer.W, delta[k]);
      delta = std::move(delta_in);
    }
  }
  return grads;
}

// ---- flat parameter access (optimizer + checkpoint share this order) ----

inline std::size_t parameter_count(const MtpNetwork & net)
{
  std::size_t count = 0;
  for (const auto & l : net.encoder) count += l.W.a.size() + l.b.size();
  for (const auto & l : net.aggregator) count += l.W_s.a.size() + l.W_o.a.size();
  return count;
}

template <typename NetLike, typename Fn>
inline void visit_parameter_blocks(NetLike & net, Fn && fn)
{
  for (auto & l : net.encoder) {
    fn(l.W.a);
    fn(l.b);
  }
  for (auto & l : net.aggregator) {
    fn(l.W_s.a);
    fn(l.W_o.a);
  }
}

inline Vecd flatten_parameters(const MtpNetwork & net)
{
  Vecd flat;
  flat.reserve(parameter_count(net));
  visit_parameter_blocks(net, [&](const Vecd & block) { flat.insert(flat.end(), block.begin(), block.end()); });
  return flat;
}

inline void unflatten_parameters(MtpNetwork & net, const Vecd & flat)
{
  if (flat.size() != parameter_count(net)) {
    throw std::invalid_argument("unflatten_parameters: size mismatch");
  }
  std::size_t pos = 0;
  visit_parameter_blocks(net, [&](Vecd & block) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos + block.size()), block.begin());
    pos += block.size();
  });
}

inline Vecd flatten_gradients(const ParameterGradients & grads)
{
  Vecd flat;
  visit_parameter_blocks(grads, [&](const Vecd & block) { flat.insert(flat.end(), block.begin(), block.end()); });
  return flat;
}

inline void accumulate_gradients(ParameterGradients & into, const ParameterGradients & from, double weight)
{
  for (std::size_t l = 0; l < into.encoder.size(); ++l) {
    for (std::size_t i = 0; i < into.encoder[l].W.a.size(); ++i) {
      into.encoder[l].W.a[i] += weight * from.encoder[l].W.a[i];
    }
    for (std::size_t i = 0; i < into.encoder[l].b.size(); ++i) {
      into.encoder[l].b[i] += weight * from.encoder[l].b[i];
    }
  }
  for (std::size_t m = 0; m < into.aggregator.size(); ++m) {
    for (std::size_t i = 0; i < into.aggregator[m].W_s.a.size(); ++i) {
      into.aggregator[m].W_s.a[i] += weight * from.aggregator[m].W_s.a[i];
    }
    for (std::size_t i = 0; i < into.aggregator[m].W_o.a.size(); ++i) {
      into.aggregator[m].W_o.a[i] += weight * from.aggregator[m].W_o.a[i];
    }
  }
}

}  // namespace mtp
