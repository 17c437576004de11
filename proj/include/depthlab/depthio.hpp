// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <utility>

#include "depthlab/raster.hpp"

namespace depthlab {

/// Affine endpoints of a depth normalization: `lo` maps to -1, `hi` to +1.
struct NormalizationRecord {
  double lo = 0.0;
  double hi = 1.0;
  bool percentile_based = true;
};

/// Linear-interpolated percentile (0..100) of the valid values of `d`.
double valid_percentile(const DepthMap& d, double pct);

/// Maps the `lo_pct` / `hi_pct` percentiles of the valid values to -1 / +1
/// and clamps the result to [-1, 1]. Invalid pixels become 0.
///
/// Throws EmptyDepth when nothing is valid and DegenerateDepth when all
/// valid values coincide (or the two percentiles do).
std::pair<DepthMap, NormalizationRecord> normalize_depth(const DepthMap& d,
                                                         double lo_pct = 2.0,
                                                         double hi_pct = 98.0);

DepthMap denormalize_depth(const DepthMap& d, const NormalizationRecord& rec);

// PFM files store rows bottom-to-top; the scale line's sign selects the byte
// order (negative = little-endian). Validity lives in a "<path>.valid.pgm"
// sidecar (P5, 0 = invalid, 255 = valid) next to depth rasters.

DepthMap read_depth_pfm(const std::filesystem::path& path);
void write_depth_pfm(const std::filesystem::path& path, const DepthMap& d);

ImageMap read_image_pfm(const std::filesystem::path& path);
void write_image_pfm(const std::filesystem::path& path, const ImageMap& img);

std::filesystem::path validity_sidecar(const std::filesystem::path& pfm_path);

BinaryMask read_pgm_mask(const std::filesystem::path& path);
void write_pgm_mask(const std::filesystem::path& path, const BinaryMask& mask);

/// 8-bit grayscale PGM (P5) of arbitrary bytes, row-major.
void write_pgm(const std::filesystem::path& path, int height, int width,
               const std::vector<std::uint8_t>& pixels);

}  // namespace depthlab
