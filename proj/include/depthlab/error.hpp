// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace depthlab {

// Stable numeric values: the C API returns these unchanged.
enum class ErrorCode : int {
  Ok = 0,
  Io = 1,
  Format = 2,
  Config = 3,
  Shape = 4,
  Range = 5,
  DegenerateDepth = 6,
  EmptyDepth = 7,
  UnitMismatch = 8,
  DegenerateSource = 9,
  InsufficientOverlap = 10,
  EmptyMask = 11,
  MissingGroundTruth = 12,
  MissingCheckpoint = 13,
  Internal = 99,
};

const char* error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace depthlab
