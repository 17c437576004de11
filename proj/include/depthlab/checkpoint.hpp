// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "depthlab/config.hpp"
#include "depthlab/nn.hpp"

namespace depthlab {

/// Binary parameter container shared by the coarse regressor and the
/// refiner. All integers are little-endian u32:
///
///   "DEPTHLAB"  (8 bytes)
///   version     (= 1)
///   kind        (u32 length + bytes)
///   config      (u32 length + key=value text, sorted keys)
///   blob count
///   per blob:   u32 name length + name, 4 x u32 shape (n, c, h, w),
///               n*c*h*w float32 values
struct Blob {
  std::string name;
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<float> data;
};

struct CheckpointFile {
  std::string kind;
  KeyValues config;
  std::vector<Blob> blobs;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const CheckpointFile& file);
CheckpointFile load_checkpoint(const std::filesystem::path& path);

std::vector<Blob> export_parameters(const std::vector<nn::Parameter<float>>& params);
/// Copies blobs into matching parameters by name; shapes must agree.
void import_parameters(const std::vector<Blob>& blobs, std::vector<nn::Parameter<float>>& params);

}  // namespace depthlab
