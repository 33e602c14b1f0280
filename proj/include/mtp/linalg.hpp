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
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtp {

// Dense row-major matrix of doubles. Deliberately minimal: the network layers
// are small (<= 64x64) and every reduction must have a fixed summation order.
struct Mat
{
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double & operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  void set_zero() { std::fill(a.begin(), a.end(), 0.0); }
};

using Vecd = std::vector<double>;

inline void check_dim(bool ok, const std::string & what)
{
  if (!ok) throw std::invalid_argument("dimension mismatch: " + what);
}

/// y = M x
inline Vecd matvec(const Mat & m, const Vecd & x)
{
  check_dim(static_cast<int>(x.size()) == m.cols, "matvec");
  Vecd y(static_cast<std::size_t>(m.rows), 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double * row = &m.a[static_cast<std::size_t>(r) * m.cols];
    double acc = 0.0;
    for (int c = 0; c < m.cols; ++c) acc += row[c] * x[static_cast<std::size_t>(c)];
    y[static_cast<std::size_t>(r)] = acc;
  }
  return y;
}

/// y = M^T x
inline Vecd matvec_t(const Mat & m, const Vecd & x)
{
  check_dim(static_cast<int>(x.size()) == m.rows, "matvec_t");
  Vecd y(static_cast<std::size_t>(m.cols), 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const double * row = &m.a[static_cast<std::size_t>(r) * m.cols];
    const double xr = x[static_cast<std::size_t>(r)];
    for (int c = 0; c < m.cols; ++c) y[static_cast<std::size_t>(c)] += xr * row[c];
  }
  return y;
}

/// M += u v^T
inline void add_outer(Mat & m, const Vecd & u, const Vecd & v)
{
  check_dim(static_cast<int>(u.size()) == m.rows && static_cast<int>(v.size()) == m.cols, "add_outer");
  for (int r = 0; r < m.rows; ++r) {
    double * row = &m.a[static_cast<std::size_t>(r) * m.cols];
    const double ur = u[static_cast<std::size_t>(r)];
    for (int c = 0; c < m.cols; ++c) row[c] += ur * v[static_cast<std::size_t>(c)];
  }
}

inline void add_in_place(Vecd & y, const Vecd & x)
{
  check_dim(x.size() == y.size(), "add_in_place");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

}  // namespace mtp
