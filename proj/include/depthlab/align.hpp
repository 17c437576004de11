// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>

#include "depthlab/raster.hpp"

namespace depthlab {

/// Least-squares scale/shift mapping a source raster onto a target.
struct AffineFit {
  double s = 1.0;
  double b = 0.0;
  double residual_rms = 0.0;
  std::size_t n_valid = 0;
};

/// Closed-form minimizer of sum (s*source + b - target)^2 over jointly valid
/// pixels. Throws InsufficientOverlap (< 2 joint pixels) or DegenerateSource
/// (zero source variance).
AffineFit fit_affine(const DepthMap& source, const DepthMap& target);

DepthMap apply_affine(const DepthMap& d, const AffineFit& fit);

/// Aligns the coarse conditioning onto the label and clamps to [-1, 1].
/// The result carries normalized units.
DepthMap prealign_conditioning(const DepthMap& coarse, const DepthMap& label);

}  // namespace depthlab
