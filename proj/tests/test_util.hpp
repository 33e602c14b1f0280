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
#include <fstream>
#include <string>

namespace mtp_test {

/// Unique scratch directory removed on destruction.
class TempDir
{
public:
  explicit TempDir(const std::string & tag)
  {
    path_ = std::filesystem::temp_directory_path() / ("mtpsim_" + tag + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path_);
  }

  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }

  std::string file(const std::string & name) const { return (path_ / name).string(); }
  std::string dir() const { return path_.string(); }

private:
  static int & counter()
  {
    static int c = 0;
    return c;
  }

  std::filesystem::path path_;
};

inline void write_text(const std::string & path, const std::string & content)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << content;
}

inline std::string read_text(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace mtp_test
