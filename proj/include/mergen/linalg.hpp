//
// Copyright 2026 The Mergen Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "mergen/rng.hpp"

namespace mergen {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Small models only; everything here is
// plain loops so results are bit-reproducible run to run.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& at(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }

  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (double& x : a) x = rng.uniform(lo, hi);
  }
};

inline void fill_uniform(Vec& v, Rng& rng, double lo, double hi) {
  for (double& x : v) x = rng.uniform(lo, hi);
}

inline double dot(const double* x, const double* y, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

inline double dot(const Vec& x, const Vec& y) {
  assert(x.size() == y.size());
  return dot(x.data(), y.data(), static_cast<int>(x.size()));
}

// y = M x
inline void matvec(const Mat& m, const Vec& x, Vec& y) {
  assert(static_cast<int>(x.size()) == m.cols);
  y.assign(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) y[r] = dot(m.row(r), x.data(), m.cols);
}

// y += M x
inline void matvec_add(const Mat& m, const Vec& x, Vec& y) {
  assert(static_cast<int>(x.size()) == m.cols);
  assert(static_cast<int>(y.size()) == m.rows);
  for (int r = 0; r < m.rows; ++r) y[r] += dot(m.row(r), x.data(), m.cols);
}

// y += M^T x
inline void matvec_t_add(const Mat& m, const Vec& x, Vec& y) {
  assert(static_cast<int>(x.size()) == m.rows);
  assert(static_cast<int>(y.size()) == m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const double xr = x[r];
    if (xr == 0.0) continue;
    const double* mr = m.row(r);
    for (int c = 0; c < m.cols; ++c) y[c] += xr * mr[c];
  }
}

// M += u v^T
inline void add_outer(Mat& m, const Vec& u, const Vec& v) {
  assert(static_cast<int>(u.size()) == m.rows);
  assert(static_cast<int>(v.size()) == m.cols);
  for (int r = 0; r < m.rows; ++r) {
    const double ur = u[r];
    if (ur == 0.0) continue;
    double* mr = m.row(r);
    for (int c = 0; c < m.cols; ++c) mr[c] += ur * v[c];
  }
}

// y += a * x
inline void axpy(double a, const Vec& x, Vec& y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void sigmoid_inplace(Vec& v) {
  for (double& x : v) x = sigmoid(x);
}

inline void tanh_inplace(Vec& v) {
  for (double& x : v) x = std::tanh(x);
}

inline double l2_norm(const Vec& v) { return std::sqrt(dot(v, v)); }

inline bool all_finite(const Vec& v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

}  // namespace mergen
