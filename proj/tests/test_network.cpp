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

#include <cmath>
#include <vector>

#include <doctest.h>

#include "mtp/checkpoint.hpp"
#include "mtp/losses.hpp"
#include "mtp/network.hpp"
#include "test_util.hpp"

using namespace mtp;

TEST_SUITE_BEGIN("network");

namespace {

NetConfig small_config(int horizon = 3)
{
  NetConfig cfg;
  cfg.encoder_widths = {8, 8};
  cfg.aggregation_widths = {8, 8};
  cfg.horizon = horizon;
  cfg.scale = 50.0;
  return cfg;
}

Scene random_scene(Rng & rng, std::size_t n, int horizon, bool with_futures = true)
{
  Scene scene;
  for (std::size_t k = 0; k < n; ++k) {
    scene.vehicles.emplace_back(static_cast<std::int64_t>(k * 7 + 1),
                                Vec2{rng.uniform(-55, 55), rng.uniform(-55, 55)},
                                rng.uniform(-kPi, kPi), static_cast<Intention>(rng.uniform_index(3)));
  }
  if (with_futures) {
    for (std::size_t k = 0; k < n; ++k) {
      Trajectory f;
      f.dt = 0.2;
      Vec2 p = scene.vehicles[k].position;
      for (int t = 0; t < horizon; ++t) {
        f.points.push_back(p);
        p += {rng.uniform(-2, 2), rng.uniform(-2, 2)};
      }
      scene.futures.push_back(std::move(f));
    }
  }
  return scene;
}

/// Central-difference gradient of the total loss over every parameter: the
/// oracle for backward(). Independent of the analytic path (forward + loss
/// evaluation only).
Vecd numeric_parameter_gradient(const MtpNetwork & net, const Scene & scene, const LossConfig & cfg,
                                double eps = 1e-5)
{
  MtpNetwork probe = net;
  Vecd flat = flatten_parameters(probe);
  Vecd grad(flat.size(), 0.0);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const double saved = flat[i];
    flat[i] = saved + eps;
    unflatten_parameters(probe, flat);
    const double hi = total_loss(forward(probe, scene).predictions, scene.futures, cfg).value;
    flat[i] = saved - eps;
    unflatten_parameters(probe, flat);
    const double lo = total_loss(forward(probe, scene).predictions, scene.futures, cfg).value;
    flat[i] = saved;
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  unflatten_parameters(probe, flat);
  return grad;
}

Vecd analytic_parameter_gradient(const MtpNetwork & net, const Scene & scene, const LossConfig & cfg)
{
  const auto res = forward(net, scene);
  const auto loss = total_loss(res.predictions, scene.futures, cfg);
  return flatten_gradients(backward(net, res.acts, loss.grad));
}

}  // namespace

TEST_CASE("init is deterministic in the seed")
{
  const auto cfg = small_config();
  const auto a = init_network(cfg, 42);
  const auto b = init_network(cfg, 42);
  CHECK(flatten_parameters(a) == flatten_parameters(b));
  const auto c = init_network(cfg, 43);
  CHECK(flatten_parameters(a) != flatten_parameters(c));
}

TEST_CASE("default architecture shapes")
{
  NetConfig cfg;  // 64,64 encoder; 64,64 hidden agg; T=30
  const auto net = init_network(cfg, 1);
  REQUIRE(net.encoder.size() == 2);
  CHECK(net.encoder[0].W.rows == 64);
  CHECK(net.encoder[0].W.cols == 6);
  CHECK(net.encoder[1].W.rows == 64);
  CHECK(net.encoder[1].W.cols == 64);
  REQUIRE(net.aggregator.size() == 3);
  CHECK(net.aggregator[2].W_s.rows == 60);
  CHECK(net.aggregator[2].W_s.cols == 64);
  CHECK(net.aggregator[2].W_o.rows == 60);
  CHECK(net.aggregator[2].W_o.cols == 64);
  for (const auto & l : net.encoder) {
    for (double b : l.b) CHECK(b == 0.0);
  }
}

TEST_CASE("invalid configs are rejected")
{
  NetConfig cfg = small_config();
  cfg.encoder_widths = {};
  CHECK_THROWS_AS(init_network(cfg, 1), std::invalid_argument);
  cfg = small_config();
  cfg.horizon = 0;
  CHECK_THROWS_AS(init_network(cfg, 1), std::invalid_argument);
}

TEST_CASE("N=1 predictions ignore W_o entirely")
{
  Rng rng(5);
  auto net = init_network(small_config(), 9);
  const auto scene = random_scene(rng, 1, 3, false);
  const auto before = forward(net, scene).predictions;
  for (auto & layer : net.aggregator) {
    for (double & w : layer.W_o.a) w = rng.uniform(-100.0, 100.0);
  }
  const auto after = forward(net, scene).predictions;
  REQUIRE(before.size() == 1);
  for (std::size_t t = 0; t < before[0].points.size(); ++t) {
    CHECK(before[0].points[t].x == after[0].points[t].x);  // bitwise
    CHECK(before[0].points[t].y == after[0].points[t].y);
  }
}

TEST_CASE("permutation equivariance is exact")
{
  Rng rng(17);
  const auto net = init_network(small_config(), 3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + rng.uniform_index(4);
    Scene scene = random_scene(rng, n, 3, false);
    const auto base = forward(net, scene).predictions;

    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    rng.shuffle(perm);
    Scene permuted;
    for (std::size_t i = 0; i < n; ++i) permuted.vehicles.push_back(scene.vehicles[perm[i]]);
    const auto shuffled = forward(net, permuted).predictions;

    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < base[perm[i]].points.size(); ++t) {
        CHECK(shuffled[i].points[t].x == base[perm[i]].points[t].x);  // bitwise
        CHECK(shuffled[i].points[t].y == base[perm[i]].points[t].y);
      }
    }
  }
}

TEST_CASE("all-zero weights predict the intersection center")
{
  Rng rng(23);
  auto net = init_network(small_config(), 4);
  visit_parameter_blocks(net, [](Vecd & block) { std::fill(block.begin(), block.end(), 0.0); });
  const auto scene = random_scene(rng, 3, 3, false);
  for (const auto & traj : forward(net, scene).predictions) {
    for (const auto & p : traj.points) {
      CHECK(p.x == 0.0);
      CHECK(p.y == 0.0);
    }
  }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients")
{
  Rng rng(29);
  const auto net = init_network(small_config(), 6);
  const auto scene = random_scene(rng, 2, 3, false);
  const auto res = forward(net, scene);
  const auto grads = backward(net, res.acts, zero_grad_like(res.predictions));
  for (double g : flatten_gradients(grads)) CHECK(g == 0.0);
}

TEST_CASE("analytic gradients match finite differences")
{
  Rng rng(41);
  LossConfig cfg;
  cfg.lambda = 6.0;  // wide enough to exercise the collision term at init scale
  cfg.collision_weight = 1.0;
  for (std::size_t n = 1; n <= 3; ++n) {
    for (int trial = 0; trial < 3; ++trial) {
      const auto net = init_network(small_config(), rng.next_u64());
      const auto scene = random_scene(rng, n, 3, true);
      const auto analytic = analytic_parameter_gradient(net, scene, cfg);
      const auto numeric = numeric_parameter_gradient(net, scene, cfg);
      REQUIRE(analytic.size() == numeric.size());
      double worst = 0.0;
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        const double scale = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / scale);
      }
      CHECK(worst < 1e-4);
    }
  }
}

TEST_CASE("cross-vehicle gradient flows iff W_o is nonzero")
{
  Rng rng(47);
  auto net = init_network(small_config(), 8);
  Scene scene = random_scene(rng, 2, 3, false);

  auto vehicle0_prediction = [&](const MtpNetwork & n, const Scene & s) {
    return forward(n, s).predictions[0];
  };

  const auto base = vehicle0_prediction(net, scene);
  Scene nudged = scene;
  nudged.vehicles[1].position.x += 1.0;
  const auto moved = vehicle0_prediction(net, nudged);
  bool changed = false;
  for (std::size_t t = 0; t < base.points.size(); ++t) {
    if (base.points[t].x != moved.points[t].x || base.points[t].y != moved.points[t].y) changed = true;
  }
  CHECK(changed);  // W_o != 0 couples the vehicles

  for (auto & layer : net.aggregator) std::fill(layer.W_o.a.begin(), layer.W_o.a.end(), 0.0);
  const auto base0 = vehicle0_prediction(net, scene);
  const auto moved0 = vehicle0_prediction(net, nudged);
  for (std::size_t t = 0; t < base0.points.size(); ++t) {
    CHECK(base0.points[t].x == moved0.points[t].x);  // decoupled, bitwise
    CHECK(base0.points[t].y == moved0.points[t].y);
  }
}

TEST_CASE("checkpoint round trip is bit exact")
{
  mtp_test::TempDir tmp("ckpt");
  Rng rng(53);
  const auto net = init_network(small_config(), 99);
  const auto scene = random_scene(rng, 2, 3, false);
  const auto path = tmp.file("model.ckpt");
  save_params(net, path, "digest123");
  const auto loaded = load_params(path);
  CHECK(flatten_parameters(net) == flatten_parameters(loaded));
  CHECK(loaded.cfg == net.cfg);
  CHECK(checkpoint_config_digest(path) == "digest123");

  const auto a = forward(net, scene).predictions;
  const auto b = forward(loaded, scene).predictions;
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t t = 0; t < a[k].points.size(); ++t) {
      CHECK(a[k].points[t].x == b[k].points[t].x);
      CHECK(a[k].points[t].y == b[k].points[t].y);
    }
  }
}

TEST_CASE("checkpoint error paths")
{
  mtp_test::TempDir tmp("ckpt_err");
  const auto net = init_network(small_config(), 1);
  const auto path = tmp.file("model.ckpt");
  save_params(net, path);

  SUBCASE("wrong magic names the format")
  {
    auto bytes = mtp_test::read_text(path);
    bytes[0] = 'X';
    mtp_test::write_text(path, bytes);
    CHECK_THROWS_WITH_AS(load_params(path), doctest::Contains("MTPNET01"), std::runtime_error);
  }
  SUBCASE("truncated file")
  {
    auto bytes = mtp_test::read_text(path);
    bytes.resize(bytes.size() / 2);
    mtp_test::write_text(path, bytes);
    CHECK_THROWS_WITH_AS(load_params(path), doctest::Contains("truncated"), std::runtime_error);
  }
  SUBCASE("horizon mismatch is refused, not truncated")
  {
    const auto loaded = load_params(path);
    CHECK_THROWS_WITH_AS(require_horizon(loaded, 40, "eval"), doctest::Contains("T=40"),
                         std::runtime_error);
    CHECK_NOTHROW(require_horizon(loaded, 3, "eval"));
  }
}

TEST_SUITE_END();
