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

#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtp/scene.hpp"

namespace mtp {

/// One Scene as a single JSON line:
/// {"vehicles":[{"id","x","y","heading","intention"},...],"futures":[[[x,y],...],...],"dt":...}
inline std::string scene_to_json_line(const Scene & scene)
{
  nlohmann::json j;
  j["vehicles"] = nlohmann::json::array();
  for (const auto & v : scene.vehicles) {
    j["vehicles"].push_back({{"id", v.id},
                             {"x", v.position.x},
                             {"y", v.position.y},
                             {"heading", v.heading},
                             {"intention", to_string(v.intention)}});
  }
  if (scene.has_futures()) {
    nlohmann::json futures = nlohmann::json::array();
    for (const auto & f : scene.futures) {
      nlohmann::json traj = nlohmann::json::array();
      for (const auto & p : f.points) traj.push_back({p.x, p.y});
      futures.push_back(std::move(traj));
    }
    j["futures"] = std::move(futures);
    j["dt"] = scene.futures.front().dt;
  }
  return j.dump();
}

inline Scene scene_from_json(const nlohmann::json & j)
{
  Scene scene;
  for (const auto & v : j.at("vehicles")) {
    scene.vehicles.emplace_back(v.at("id").get<std::int64_t>(),
                                Vec2{v.at("x").get<double>(), v.at("y").get<double>()},
                                v.at("heading").get<double>(),
                                intention_from_string(v.at("intention").get<std::string>()));
  }
  if (j.contains("futures")) {
    const double dt = j.at("dt").get<double>();
    for (const auto & traj : j.at("futures")) {
      Trajectory f;
      f.dt = dt;
      for (const auto & p : traj) f.points.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
      scene.futures.push_back(std::move(f));
    }
  }
  scene.validate();
  return scene;
}

inline void write_scenes(const std::string & path, const std::vector<Scene> & scenes)
{
  std::string out;
  for (const auto & s : scenes) {
    out += scene_to_json_line(s);
    out += '\n';
  }
  write_file_atomic(path, out);
}

inline std::vector<Scene> read_scenes(const std::string & path)
{
  const std::string data = read_file(path);
  std::istringstream in(data);
  std::vector<Scene> scenes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      scenes.push_back(scene_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception & e) {
      throw std::runtime_error("scene dataset " + path + " line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return scenes;
}

}  // namespace mtp
