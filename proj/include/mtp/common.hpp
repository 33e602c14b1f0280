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
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mtp {

inline constexpr double kPi = 3.14159265358979323846;

/// Wrap an angle into [-pi, pi). Preserves sin/cos to machine precision.
inline double wrap_angle(double a)
{
  double w = std::remainder(a, 2.0 * kPi);  // [-pi, pi], exactly rounded
  if (w >= kPi) w -= 2.0 * kPi;
  return w;
}

inline double clamp(double v, double lo, double hi)
{
  return std::max(lo, std::min(hi, v));
}

// 2D point/vector, meters unless stated otherwise.
struct Vec2
{
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2 & o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2 & o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 & operator+=(const Vec2 & o) { x += o.x; y += o.y; return *this; }
  double dot(const Vec2 & o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
};

inline double distance(const Vec2 & a, const Vec2 & b) { return (a - b).norm(); }

/**
 * Deterministic random source. Wraps the (fully specified) mt19937_64 engine
 * and hand-rolls the real-valued transforms, so identical seeds give
 * identical streams on every platform and standard library.
 */
class Rng
{
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n)
  {
    // modulo-rejection to keep the distribution exact
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  /// Standard normal via Box-Muller (pairs cached).
  double normal()
  {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    cached_ = r * std::sin(2.0 * kPi * u2);
    has_cached_ = true;
    return r * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// In-place Fisher-Yates shuffle with a specified draw order.
  template <typename T>
  void shuffle(std::vector<T> & v)
  {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

/// splitmix64 step; used to derive independent seed streams from one seed.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t stream)
{
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// FNV-1a 64-bit digest, hex encoded. Used as a cheap config fingerprint.
inline std::string fnv1a_hex(const std::string & bytes)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

// ---- little-endian byte packing (checkpoint format is LE on every host) ----

inline void put_u32_le(std::string & out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64_le(std::string & out, std::uint64_t v)
{
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f64_le(std::string & out, double d)
{
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64_le(out, bits);
}

class ByteReader
{
public:
  ByteReader(const std::string & data, std::string what) : data_(data), what_(std::move(what)) {}

  std::uint32_t u32_le() { return static_cast<std::uint32_t>(take(4, 0)); }
  std::uint64_t u64_le() { return take(8, 0); }

  double f64_le()
  {
    const std::uint64_t bits = take(8, 0);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }

  std::string bytes(std::size_t n)
  {
    require(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool exhausted() const { return pos_ == data_.size(); }

private:
  void require(std::size_t n) const
  {
    if (pos_ + n > data_.size()) {
      throw std::runtime_error(what_ + ": truncated (needed " + std::to_string(n) +
                               " bytes at offset " + std::to_string(pos_) + ")");
    }
  }

  std::uint64_t take(int n, std::uint64_t acc)
  {
    require(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      acc |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += n;
    return acc;
  }

  const std::string & data_;
  std::string what_;
  std::size_t pos_ = 0;
};

// ---- small file helpers ----

inline std::string read_file(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

/// Write via a temp file + rename so readers never observe partial content.
inline void write_file_atomic(const std::string & path, const std::string & data)
{
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + tmp);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw std::runtime_error("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

/**
 * Run fn(i) for i in [0, n) on `workers` threads. Work is handed out by an
 * atomic counter; callers get determinism by writing results into slot i,
 * independent of scheduling.
 */
template <typename Fn>
inline void parallel_for(std::size_t n, int workers, Fn && fn)
{
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
  };
  std::vector<std::thread> pool;
  const int count = std::min<int>(workers, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) pool.emplace_back(worker);
  for (auto & t : pool) t.join();
}

}  // namespace mtp
