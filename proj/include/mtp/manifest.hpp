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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mtp/common.hpp"

namespace mtp {

inline constexpr char kToolVersion[] = "0.1.0";

/// Reproducibility record written next to every command's outputs. Holds the
/// exact command line, config digest, and seed — and nothing volatile, so
/// identical runs produce identical manifests.
struct RunManifest
{
  std::string subcommand;
  std::vector<std::string> command;
  std::string config_path;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    j["tool"] = "mtpsim";
    j["version"] = kToolVersion;
    j["subcommand"] = subcommand;
    j["command"] = command;
    if (!config_path.empty()) {
      j["config"] = {{"path", config_path}, {"digest", config_digest}};
    }
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    return j;
  }
};

/// Atomic write of <dir>/manifest.json.
inline void write_manifest(const std::string & out_dir, const RunManifest & manifest)
{
  std::filesystem::create_directories(out_dir);
  const auto path = std::filesystem::path(out_dir) / "manifest.json";
  write_file_atomic(path.string(), manifest.to_json().dump(2) + "\n");
}

}  // namespace mtp
