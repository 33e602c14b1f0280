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

#include <string>

#include <json.hpp>

#include "mtp/common.hpp"
#include "mtp/network.hpp"

namespace mtp {

// Checkpoint layout (all integers little-endian):
//   bytes 0..7   magic "MTPNET01"
//   u32          JSON header length
//   bytes        JSON header: arch, horizon, scale, one-hot order, version
//   u64          parameter count
//   f64[count]   raw parameters in declared layer order
inline constexpr char kCheckpointMagic[] = "MTPNET01";
inline constexpr int kCheckpointVersion = 1;

inline void save_params(const MtpNetwork & net, const std::string & path,
                        const std::string & config_digest = "")
{
  nlohmann::json header;
  header["version"] = kCheckpointVersion;
  header["arch"] = {{"input_dim", net.cfg.input_dim},
                    {"encoder", net.cfg.encoder_widths},
                    {"aggregation", net.cfg.aggregation_widths},
                    {"disable_aggregation", net.cfg.disable_aggregation}};
  header["horizon"] = net.cfg.horizon;
  header["scale"] = net.cfg.scale;
  header["prediction_dt"] = net.cfg.prediction_dt;
  header["one_hot_order"] = {"Left", "Straight", "Right"};
  if (!config_digest.empty()) header["config_digest"] = config_digest;
  const std::string header_bytes = header.dump();

  std::string out;
  out.append(kCheckpointMagic, 8);
  put_u32_le(out, static_cast<std::uint32_t>(header_bytes.size()));
  out += header_bytes;
  put_u64_le(out, parameter_count(net));
  visit_parameter_blocks(net, [&](const Vecd & block) {
    for (double v : block) put_f64_le(out, v);
  });
  write_file_atomic(path, out);
}

inline MtpNetwork load_params(const std::string & path)
{
  const std::string data = read_file(path);
  ByteReader reader(data, "checkpoint " + path);

  if (reader.bytes(8) != std::string(kCheckpointMagic, 8)) {
    throw std::runtime_error("checkpoint " + path + ": bad magic, not an MTPNET01 file");
  }
  const std::uint32_t header_len = reader.u32_le();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(reader.bytes(header_len));
  } catch (const nlohmann::json::exception & e) {
    throw std::runtime_error("checkpoint " + path + ": corrupt header: " + e.what());
  }
  const int version = header.at("version").get<int>();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint " + path + ": format version " + std::to_string(version) +
                             " unsupported (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto order = header.at("one_hot_order").get<std::vector<std::string>>();
  if (order != std::vector<std::string>{"Left", "Straight", "Right"}) {
    throw std::runtime_error("checkpoint " + path + ": unexpected one-hot ordering");
  }

  NetConfig cfg;
  cfg.input_dim = header.at("arch").at("input_dim").get<int>();
  cfg.encoder_widths = header.at("arch").at("encoder").get<std::vector<int>>();
  cfg.aggregation_widths = header.at("arch").at("aggregation").get<std::vector<int>>();
  cfg.disable_aggregation = header.at("arch").at("disable_aggregation").get<bool>();
  cfg.horizon = header.at("horizon").get<int>();
  cfg.scale = header.at("scale").get<double>();
  cfg.prediction_dt = header.at("prediction_dt").get<double>();

  MtpNetwork net = init_network(cfg, 0);
  const std::uint64_t declared = reader.u64_le();
  if (declared != parameter_count(net)) {
    throw std::runtime_error("checkpoint " + path + ": parameter count " + std::to_string(declared) +
                             " does not match architecture (" + std::to_string(parameter_count(net)) + ")");
  }
  visit_parameter_blocks(net, [&](Vecd & block) {
    for (double & v : block) v = reader.f64_le();
  });
  if (!reader.exhausted()) {
    throw std::runtime_error("checkpoint " + path + ": trailing bytes after parameters");
  }
  return net;
}

/// Guard for evaluations that need a specific horizon; refuses silent truncation.
inline void require_horizon(const MtpNetwork & net, int horizon, const std::string & context)
{
  if (net.cfg.horizon != horizon) {
    throw std::runtime_error(context + ": checkpoint horizon T=" + std::to_string(net.cfg.horizon) +
                             " does not match requested T=" + std::to_string(horizon));
  }
}

inline std::string checkpoint_config_digest(const std::string & path)
{
  const std::string data = read_file(path);
  ByteReader reader(data, "checkpoint " + path);
  reader.bytes(8);
  const auto header = nlohmann::json::parse(reader.bytes(reader.u32_le()));
  return header.value("config_digest", std::string{});
}

}  // namespace mtp
