// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures and independent reference implementations for the tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "depthlab/error.hpp"
#include "depthlab/raster.hpp"
#include "depthlab/rng.hpp"

namespace testing {

using depthlab::DepthMap;

// Code of the depthlab::Error thrown by fn, or Ok.
inline depthlab::ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const depthlab::Error& e) {
    return e.code();
  }
  return depthlab::ErrorCode::Ok;
}

inline DepthMap random_depth(int h, int w, std::uint64_t seed, double lo = 1.0, double hi = 10.0) {
  depthlab::Rng rng(seed);
  DepthMap d(h, w);
  for (auto& v : d.values) v = static_cast<float>(rng.uniform(lo, hi));
  return d;
}

inline DepthMap ramp(int h, int w, double lo, double hi) {
  DepthMap d(h, w);
  const double n = static_cast<double>(d.size() - 1);
  for (std::size_t i = 0; i < d.size(); ++i) d.values[i] = static_cast<float>(lo + (hi - lo) * i / n);
  return d;
}

inline DepthMap from_values(int h, int w, const std::vector<float>& v) {
  DepthMap d(h, w);
  d.values = v;
  return d;
}

// Percentile by full sort and linear interpolation between order statistics.
inline double sorted_percentile(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  const double rank = pct / 100.0 * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(rank));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double affine_sse(const DepthMap& src, const DepthMap& dst, double s, double b) {
  double e = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (!src.valid(i) || !dst.valid(i)) continue;
    const double r = s * src.values[i] + b - dst.values[i];
    e += r * r;
  }
  return e;
}

// Coarse-to-fine grid search over (s, b): evaluate a 21x21 grid, recenter on
// the best cell, shrink the window and repeat.
inline std::pair<double, double> grid_search_affine(const DepthMap& src, const DepthMap& dst) {
  double cs = 0.0, cb = 0.0, rs = 64.0, rb = 64.0;
  for (int round = 0; round < 80; ++round) {
    double best = HUGE_VAL, bs = cs, bb = cb;
    for (int i = -10; i <= 10; ++i)
      for (int j = -10; j <= 10; ++j) {
        const double s = cs + rs * i / 10.0, b = cb + rb * j / 10.0;
        const double e = affine_sse(src, dst, s, b);
        if (e < best) best = e, bs = s, bb = b;
      }
    cs = bs;
    cb = bb;
    rs *= 0.5;
    rb *= 0.5;
  }
  return {cs, cb};
}

inline double rms_diff(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

// Fresh scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("depthlab_test_" + name)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

}  // namespace testing
