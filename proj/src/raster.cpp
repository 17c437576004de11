// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/raster.hpp"

#include <algorithm>

namespace depthlab {

const char* error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Ok: return "Ok";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::Format: return "FormatError";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Shape: return "ShapeError";
    case ErrorCode::Range: return "RangeError";
    case ErrorCode::DegenerateDepth: return "DegenerateDepth";
    case ErrorCode::EmptyDepth: return "EmptyDepth";
    case ErrorCode::UnitMismatch: return "UnitMismatch";
    case ErrorCode::DegenerateSource: return "DegenerateSource";
    case ErrorCode::InsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::Internal: return "InternalError";
  }
  return "UnknownError";
}

const char* units_name(DepthUnits units) noexcept {
  switch (units) {
    case DepthUnits::metric: return "metric";
    case DepthUnits::inverse: return "inverse";
    case DepthUnits::normalized: return "normalized";
  }
  return "unknown";
}

DepthMap::DepthMap(int h, int w, float fill, DepthUnits u)
    : height(h),
      width(w),
      values(static_cast<std::size_t>(h) * w, fill),
      validity(static_cast<std::size_t>(h) * w, 1),
      units(u) {
  if (h <= 0 || w <= 0) fail(ErrorCode::Shape, "depth map dimensions must be positive");
}

std::size_t DepthMap::count_valid() const noexcept {
  return static_cast<std::size_t>(std::count(validity.begin(), validity.end(), std::uint8_t{1}));
}

ImageMap::ImageMap(int h, int w, int c, float fill)
    : height(h), width(w), channels(c), values(static_cast<std::size_t>(h) * w * c, fill) {
  if (h <= 0 || w <= 0) fail(ErrorCode::Shape, "image dimensions must be positive");
  if (c != 1 && c != 3) fail(ErrorCode::Shape, "image must have 1 or 3 channels");
}

std::size_t BinaryMask::count_ones() const noexcept {
  std::size_t n = 0;
  for (auto v : values) n += (v != 0);
  return n;
}

double BinaryMask::mean() const noexcept {
  if (values.empty()) return 0.0;
  return static_cast<double>(count_ones()) / static_cast<double>(values.size());
}

}  // namespace depthlab
