// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "depthlab/error.hpp"

namespace depthlab {

enum class DepthUnits : std::uint8_t { metric, inverse, normalized };

const char* units_name(DepthUnits units) noexcept;

/// Dense single-channel depth raster, row-major, with a per-pixel validity
/// flag. Values at invalid pixels carry no meaning.
struct DepthMap {
  int height = 0;
  int width = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> validity;  // 0 or 1
  DepthUnits units = DepthUnits::metric;

  DepthMap() = default;
  DepthMap(int h, int w, float fill = 0.0f, DepthUnits u = DepthUnits::metric);

  std::size_t size() const noexcept { return values.size(); }
  float& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool valid(std::size_t i) const { return validity[i] != 0; }
  std::size_t count_valid() const noexcept;
  bool same_shape(const DepthMap& other) const noexcept {
    return height == other.height && width == other.width;
  }
};

/// Interleaved (HWC) float image with values in [0, 1].
struct ImageMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;

  ImageMap() = default;
  ImageMap(int h, int w, int c, float fill = 0.0f);

  float& at(int y, int x, int c) {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return values[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Binary raster (0/1) used for pixel and latent masks.
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> values;

  BinaryMask() = default;
  BinaryMask(int h, int w, std::uint8_t fill = 0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

  std::uint8_t& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count_ones() const noexcept;
  double mean() const noexcept;
};

using PatchMask = BinaryMask;
using LatentMask = BinaryMask;

}  // namespace depthlab
