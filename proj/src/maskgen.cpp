// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace depthlab {

void MaskConfig::validate() const {
  if (patch_size <= 0) fail(ErrorCode::Config, "patch size must be positive");
  if (codec_factor <= 0) fail(ErrorCode::Config, "codec factor must be positive");
  if (!(threshold > 0.0)) fail(ErrorCode::Config, "masking threshold must be > 0");
}

void MaskConfig::check_raster(int height, int width) const {
  validate();
  if (height % patch_size != 0 || width % patch_size != 0)
    fail(ErrorCode::Shape, "raster " + std::to_string(height) + "x" + std::to_string(width) +
                               " not divisible by patch size " + std::to_string(patch_size));
  if (height % codec_factor != 0 || width % codec_factor != 0)
    fail(ErrorCode::Shape, "raster not divisible by codec factor " + std::to_string(codec_factor));
}

PatchDistances patch_distance(const DepthMap& a, const DepthMap& b, int w) {
  if (!a.same_shape(b)) fail(ErrorCode::Shape, "patch_distance: shape mismatch");
  if (w <= 0 || a.height % w != 0 || a.width % w != 0)
    fail(ErrorCode::Shape, "patch_distance: raster not divisible by patch size");
  PatchDistances out;
  out.rows = a.height / w;
  out.cols = a.width / w;
  out.values.assign(static_cast<std::size_t>(out.rows) * out.cols, 0.0);
  for (int y = 0; y < a.height; ++y) {
    for (int x = 0; x < a.width; ++x) {
      const double d = static_cast<double>(a.at(y, x)) - static_cast<double>(b.at(y, x));
      out.values[static_cast<std::size_t>(y / w) * out.cols + x / w] += d * d;
    }
  }
  for (auto& v : out.values) v = std::sqrt(v);
  return out;
}

PatchMask build_pixel_mask(const DepthMap& a, const DepthMap& b, const MaskConfig& cfg) {
  cfg.validate();
  const int w = cfg.patch_size;
  const PatchDistances dist = patch_distance(a, b, w);
  const double limit = static_cast<double>(w) * cfg.threshold;
  PatchMask m(a.height, a.width);
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      m.at(y, x) = dist.values[static_cast<std::size_t>(y / w) * dist.cols + x / w] <= limit;
  return m;
}

LatentMask downscale_mask(const PatchMask& mask, int f, PoolMode pool) {
  if (f <= 0 || mask.height % f != 0 || mask.width % f != 0)
    fail(ErrorCode::Shape, "downscale_mask: mask not divisible by factor");
  LatentMask out(mask.height / f, mask.width / f, pool == PoolMode::max ? 0 : 1);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      auto& cell = out.at(y / f, x / f);
      const std::uint8_t v = mask.at(y, x) ? 1 : 0;
      cell = pool == PoolMode::max ? std::max(cell, v) : std::min(cell, v);
    }
  }
  return out;
}

}  // namespace depthlab
