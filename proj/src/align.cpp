// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/align.hpp"

#include <algorithm>
#include <cmath>

namespace depthlab {

AffineFit fit_affine(const DepthMap& source, const DepthMap& target) {
  if (!source.same_shape(target)) fail(ErrorCode::Shape, "fit_affine: shape mismatch");

  std::size_t n = 0;
  double mean_s = 0.0, mean_t = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (!source.valid(i) || !target.valid(i)) continue;
    ++n;
    mean_s += source.values[i];
    mean_t += target.values[i];
  }
  if (n < 2) fail(ErrorCode::InsufficientOverlap, "fit_affine: fewer than 2 jointly valid pixels");
  mean_s /= static_cast<double>(n);
  mean_t /= static_cast<double>(n);

  double var = 0.0, cov = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (!source.valid(i) || !target.valid(i)) continue;
    const double ds = source.values[i] - mean_s;
    const double dt = target.values[i] - mean_t;
    var += ds * ds;
    cov += ds * dt;
  }
  if (!(var > 0.0)) fail(ErrorCode::DegenerateSource, "fit_affine: source has zero variance");

  AffineFit fit;
  fit.s = cov / var;
  fit.b = mean_t - fit.s * mean_s;
  fit.n_valid = n;

  double sse = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (!source.valid(i) || !target.valid(i)) continue;
    const double r = fit.s * source.values[i] + fit.b - target.values[i];
    sse += r * r;
  }
  fit.residual_rms = std::sqrt(sse / static_cast<double>(n));
  return fit;
}

DepthMap apply_affine(const DepthMap& d, const AffineFit& fit) {
  DepthMap out = d;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d.valid(i)) continue;
    out.values[i] = static_cast<float>(fit.s * d.values[i] + fit.b);
  }
  return out;
}

DepthMap prealign_conditioning(const DepthMap& coarse, const DepthMap& label) {
  DepthMap out = apply_affine(coarse, fit_affine(coarse, label));
  for (std::size_t i = 0; i < out.size(); ++i)
    out.values[i] = out.valid(i) ? std::clamp(out.values[i], -1.0f, 1.0f) : 0.0f;
  out.units = DepthUnits::normalized;
  return out;
}

}  // namespace depthlab
