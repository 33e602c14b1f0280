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
#include <set>
#include <string>
#include <vector>

#include <doctest.h>

#include "mtp/arms.hpp"
#include "mtp/common.hpp"
#include "mtp/dataset.hpp"
#include "mtp/scene.hpp"
#include "mtp/tracks.hpp"
#include "test_util.hpp"

using namespace mtp;

TEST_SUITE_BEGIN("scene");

TEST_CASE("wrap_angle stays in range and preserves sin/cos")
{
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const double h = rng.uniform(-50.0, 50.0);
    const double w = wrap_angle(h);
    CHECK(w >= -kPi);
    CHECK(w < kPi);
    CHECK(std::abs(std::sin(w) - std::sin(h)) < 1e-12);
    CHECK(std::abs(std::cos(w) - std::cos(h)) < 1e-12);
  }
  CHECK(wrap_angle(kPi) == doctest::Approx(-kPi));
  CHECK(wrap_angle(-kPi) == -kPi);
}

TEST_CASE("assemble_input fixed examples")
{
  const double scale = 50.0;
  {
    VehicleSnapshot v(1, {0.0, 0.0}, 0.0, Intention::Straight);
    const auto x = assemble_input(v, scale);
    CHECK(x == std::array<double, 6>{0.0, 0.0, 0.0, 0.0, 1.0, 0.0});
  }
  {
    VehicleSnapshot v(2, {25.0, -50.0}, kPi / 2.0, Intention::Left);
    const auto x = assemble_input(v, scale);
    CHECK(x[0] == doctest::Approx(0.5));
    CHECK(x[1] == doctest::Approx(-1.0));
    CHECK(x[2] == doctest::Approx(1.5707963).epsilon(1e-7));
    CHECK(x[3] == 1.0);
    CHECK(x[4] == 0.0);
    CHECK(x[5] == 0.0);
  }
  {
    // -pi is in range: stays put, no wrap to +pi
    VehicleSnapshot v(3, {10.0, 0.0}, -kPi, Intention::Right);
    const auto x = assemble_input(v, scale);
    CHECK(x[0] == doctest::Approx(0.2));
    CHECK(x[1] == 0.0);
    CHECK(x[2] == doctest::Approx(-3.1415927).epsilon(1e-7));
    CHECK(x[5] == 1.0);
  }
}

TEST_CASE("assemble_input distinguishes distinct snapshots")
{
  Rng rng(3);
  std::vector<VehicleSnapshot> snaps;
  for (int i = 0; i < 200; ++i) {
    snaps.emplace_back(i, Vec2{rng.uniform(-60, 60), rng.uniform(-60, 60)}, rng.uniform(-kPi, kPi),
                       static_cast<Intention>(rng.uniform_index(3)));
  }
  std::set<std::array<double, 6>> seen;
  for (const auto & s : snaps) seen.insert(assemble_input(s, 50.0));
  CHECK(seen.size() == snaps.size());
}

static std::string tracks_csv_header()
{
  return "trackId,frame,xCenter,yCenter,heading,width\n";
}

TEST_CASE("load_tracks groups and sorts")
{
  mtp_test::TempDir tmp("tracks");
  SUBCASE("single track")
  {
    const auto path = tmp.file("a.csv");
    mtp_test::write_text(path, tracks_csv_header() +
                                 "1,0,0.0,-50.0,90.0,2\n"
                                 "1,1,0.0,-49.0,90.0,2\n"
                                 "1,2,0.0,-48.0,90.0,2\n");
    const auto seqs = load_tracks(path);
    REQUIRE(seqs.size() == 1);
    CHECK(seqs[0].poses.size() == 3);
    CHECK(seqs[0].first_frame == 0);
    CHECK(seqs[0].poses[1].position.y == doctest::Approx(-49.0));
    CHECK(seqs[0].poses[0].heading == doctest::Approx(kPi / 2.0));  // degrees in
  }
  SUBCASE("interleaved tracks are grouped and frame-sorted")
  {
    const auto path = tmp.file("b.csv");
    mtp_test::write_text(path, tracks_csv_header() +
                                 "2,11,5.0,1.0,0.0,2\n"
                                 "1,0,0.0,-50.0,90.0,2\n"
                                 "2,10,4.0,1.0,0.0,2\n"
                                 "1,1,0.0,-49.0,90.0,2\n");
    const auto seqs = load_tracks(path);
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[0].id == 1);
    CHECK(seqs[1].id == 2);
    CHECK(seqs[1].first_frame == 10);
    CHECK(seqs[1].poses[0].position.x == doctest::Approx(4.0));
    CHECK(seqs[1].poses[1].position.x == doctest::Approx(5.0));
  }
  SUBCASE("duplicate (track, frame) names the key")
  {
    const auto path = tmp.file("c.csv");
    mtp_test::write_text(path, tracks_csv_header() +
                                 "7,12,0,0,0,2\n"
                                 "7,12,1,1,0,2\n");
    CHECK_THROWS_WITH_AS(load_tracks(path),
                         doctest::Contains("duplicate record for track 7 frame 12"), std::runtime_error);
  }
  SUBCASE("malformed row names the line")
  {
    const auto path = tmp.file("d.csv");
    mtp_test::write_text(path, tracks_csv_header() + "1,0,0,0,0,2\n1,1,zzz,0,0,2\n");
    CHECK_THROWS_WITH_AS(load_tracks(path), doctest::Contains("line 3"), std::runtime_error);
  }
  SUBCASE("missing required column")
  {
    const auto path = tmp.file("e.csv");
    mtp_test::write_text(path, "trackId,frame,xCenter,yCenter\n1,0,0,0\n");
    CHECK_THROWS_WITH_AS(load_tracks(path), doctest::Contains("heading"), std::runtime_error);
  }
  SUBCASE("radians flag skips the degree conversion")
  {
    const auto path = tmp.file("f.csv");
    mtp_test::write_text(path, tracks_csv_header() + "1,0,0,-50,1.5,2\n");
    TrackCsvOptions opts;
    opts.heading_degrees = false;
    const auto seqs = load_tracks(path, opts);
    CHECK(seqs[0].poses[0].heading == doctest::Approx(1.5));
  }
}

// Straight pass through the intersection along a given route shape, for
// intention labeling.
static LabeledSequence make_label_input(std::int64_t id, Vec2 from, Vec2 to, int n)
{
  LabeledSequence seq;
  seq.id = id;
  seq.first_frame = 0;
  for (int i = 0; i < n; ++i) {
    const double a = static_cast<double>(i) / (n - 1);
    seq.poses.push_back({{from.x + a * (to.x - from.x), from.y + a * (to.y - from.y)}, 0.0});
  }
  return seq;
}

TEST_CASE("intention labels from entry/exit arms (right-hand traffic)")
{
  CHECK(intention_for_arms(Arm::South, Arm::West) == Intention::Left);
  CHECK(intention_for_arms(Arm::South, Arm::North) == Intention::Straight);
  CHECK(intention_for_arms(Arm::South, Arm::East) == Intention::Right);
  CHECK(intention_for_arms(Arm::North, Arm::East) == Intention::Left);
  CHECK(intention_for_arms(Arm::East, Arm::South) == Intention::Left);
  CHECK(intention_for_arms(Arm::West, Arm::North) == Intention::Left);
  CHECK(intention_for_arms(Arm::West, Arm::West) == std::nullopt);  // U-turn excluded

  // via label_intentions on a south->west pass
  TrackSequence seq;
  seq.id = 4;
  seq.first_frame = 0;
  for (int i = 0; i <= 50; ++i) {
    // crude L-shaped path: south arm up, then west arm out
    if (i <= 25) {
      seq.poses.push_back({{1.75, -50.0 + 2.0 * i}, kPi / 2});
    } else {
      seq.poses.push_back({{1.75 - 2.0 * (i - 25), 1.75}, kPi});
    }
  }
  const auto labeled = label_intentions({seq});
  REQUIRE(labeled.size() == 1);
  CHECK(labeled[0].intention == Intention::Left);
}

TEST_CASE("slice_scenes frozen examples")
{
  SUBCASE("one 100-frame track, T=30, stride=10")
  {
    auto seq = make_label_input(1, {1.75, -50}, {1.75, 49}, 100);
    const auto scenes = slice_scenes({seq}, 10, 30, 0.2);
    REQUIRE(scenes.size() == 8);  // frames 0,10,...,70
    for (const auto & s : scenes) {
      CHECK(s.vehicles.size() == 1);
      CHECK(s.futures.size() == 1);
      CHECK(s.futures[0].points.size() == 30);
      // future window starts at the instant
      CHECK(s.futures[0].points[0].x == s.vehicles[0].position.x);
      CHECK(s.futures[0].points[0].y == s.vehicles[0].position.y);
    }
  }
  SUBCASE("two fully overlapping tracks")
  {
    auto a = make_label_input(1, {1.75, -50}, {1.75, 49}, 100);
    auto b = make_label_input(2, {-1.75, 50}, {-1.75, -49}, 100);
    const auto scenes = slice_scenes({a, b}, 10, 30, 0.2);
    REQUIRE(scenes.size() == 8);
    for (const auto & s : scenes) CHECK(s.vehicles.size() == 2);
  }
  SUBCASE("short remainder drops the vehicle, not the scene")
  {
    auto a = make_label_input(1, {1.75, -50}, {1.75, 49}, 100);
    auto b = make_label_input(2, {-1.75, 50}, {-1.75, -30}, 40);  // dies at frame 39
    const auto scenes = slice_scenes({a, b}, 10, 30, 0.2);
    REQUIRE(scenes.size() == 8);
    CHECK(scenes[0].vehicles.size() == 2);  // frame 0: 39-0+1 >= 30 qualifies
    CHECK(scenes[1].vehicles.size() == 2);  // frame 10: exactly 30 remaining
    CHECK(scenes[2].vehicles.size() == 1);  // frame 20: only 20 remaining
  }
}

TEST_CASE("slice_scenes aligns futures with vehicles by id")
{
  Rng rng(11);
  std::vector<LabeledSequence> seqs;
  for (int id = 0; id < 6; ++id) {
    const double x0 = rng.uniform(-50, 50);
    auto seq = make_label_input(id, {x0, -40}, {x0, 40}, 80);
    seq.first_frame = static_cast<std::int64_t>(rng.uniform_index(20));
    seqs.push_back(seq);
  }
  const auto scenes = slice_scenes(seqs, 7, 12, 0.2);
  REQUIRE(!scenes.empty());
  for (const auto & scene : scenes) {
    scene.validate();
    for (std::size_t k = 0; k < scene.vehicles.size(); ++k) {
      // future[0] equals the snapshot position: id round-trip holds
      CHECK(scene.futures[k].points[0].x == scene.vehicles[k].position.x);
      CHECK(scene.futures[k].points[0].y == scene.vehicles[k].position.y);
    }
  }
}

TEST_CASE("scene JSONL round trip")
{
  mtp_test::TempDir tmp("jsonl");
  Scene scene;
  scene.vehicles.emplace_back(3, Vec2{1.25, -42.0}, 0.7253, Intention::Right);
  scene.vehicles.emplace_back(9, Vec2{-3.5, 17.2}, -2.1, Intention::Left);
  for (int k = 0; k < 2; ++k) {
    Trajectory f;
    f.dt = 0.2;
    for (int t = 0; t < 5; ++t) f.points.push_back({0.1 * t + k, -0.37 * t});
    scene.futures.push_back(f);
  }
  const auto path = tmp.file("scenes.jsonl");
  write_scenes(path, {scene, scene});
  const auto back = read_scenes(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].vehicles[0].id == 3);
  CHECK(back[0].vehicles[1].heading == scene.vehicles[1].heading);  // exact round trip
  CHECK(back[0].futures[1].points[4].y == scene.futures[1].points[4].y);
  CHECK(back[0].futures[0].dt == 0.2);

  SUBCASE("parse failure names the line")
  {
    mtp_test::write_text(path, scene_to_json_line(scene) + "\n{broken\n");
    CHECK_THROWS_WITH_AS(read_scenes(path), doctest::Contains("line 2"), std::runtime_error);
  }
}

TEST_SUITE_END();
