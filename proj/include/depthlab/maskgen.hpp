// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "depthlab/raster.hpp"

namespace depthlab {

enum class PoolMode { max, min };

struct MaskConfig {
  int patch_size = 8;      // w
  double threshold = 0.1;  // eta, per-pixel tolerance in normalized depth units
  int codec_factor = 1;    // f
  PoolMode pool = PoolMode::max;

  void validate() const;
  void check_raster(int height, int width) const;
};

/// Per-patch distance raster, (height/w) x (width/w), row-major.
struct PatchDistances {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
};

/// Frobenius norm of the difference of each non-overlapping w x w patch.
PatchDistances patch_distance(const DepthMap& a, const DepthMap& b, int patch_size);

/// M_n = 1 iff Dist(a_n, b_n) <= w * eta, broadcast over the patch.
PatchMask build_pixel_mask(const DepthMap& a, const DepthMap& b, const MaskConfig& cfg);

/// Pools each f x f window (window = stride = f); max by default.
LatentMask downscale_mask(const PatchMask& mask, int factor, PoolMode pool = PoolMode::max);

}  // namespace depthlab
