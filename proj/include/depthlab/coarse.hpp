// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "depthlab/config.hpp"
#include "depthlab/nn.hpp"
#include "depthlab/raster.hpp"
#include "depthlab/scenegen.hpp"

namespace depthlab {

/// Degradation applied by the oracle coarse model, in this order:
/// box-downscale, Gaussian blur, bilinear upscale, a*d + b, quantization.
struct DegradeParams {
  double blur_sigma = 0.0;
  int downscale_factor = 1;
  double affine_scale = 1.0;
  double affine_shift = 0.0;
  int quantize_levels = 0;  // 0 = off
  // When set, (a, b) are drawn per input instead: a ~ U[scale_lo, scale_hi],
  // b ~ U[shift_lo, shift_hi] times half the input's depth range.
  bool random_affine = false;
  double scale_lo = 0.5, scale_hi = 2.0;
  double shift_lo = -0.25, shift_hi = 0.25;
  std::uint64_t seed = 0;

  void validate() const;
};

DepthMap degrade_depth(const DepthMap& gt, const DegradeParams& params);

struct RegressorConfig {
  int base_channels = 8;
  int levels = 3;
  double lr = 1e-3;
  int batch_size = 8;
  int iterations = 2000;
  std::uint64_t seed = 7;

  nn::UNetConfig network() const;
  void validate() const;
};

enum class CoarseKind { degrade_oracle, tiny_regressor };

/// Stand-in for a pretrained feed-forward depth model.
class CoarseModel {
 public:
  static CoarseModel degrade_oracle(const DegradeParams& params, std::string id = "degrade_oracle");
  static CoarseModel tiny_regressor(const RegressorConfig& config);

  CoarseKind kind() const noexcept { return kind_; }
  const std::string& id() const noexcept { return id_; }
  const DegradeParams& degrade_params() const noexcept { return degrade_; }
  const RegressorConfig& regressor_config() const noexcept { return regressor_cfg_; }
  nn::UNet<float>& network();
  const nn::UNet<float>& network() const;

  /// Affine-ambiguous coarse depth with the input's raster shape. The
  /// oracle needs `gt` (MissingGroundTruth otherwise).
  DepthMap predict(const ImageMap& image, const DepthMap* gt = nullptr) const;

  void save(const std::filesystem::path& path, const KeyValues& run_config = {}) const;
  static CoarseModel load(const std::filesystem::path& path);

 private:
  CoarseKind kind_ = CoarseKind::degrade_oracle;
  std::string id_;
  DegradeParams degrade_;
  RegressorConfig regressor_cfg_;
  std::shared_ptr<nn::UNet<float>> net_;
};

DepthMap predict_coarse(const CoarseModel& model, const ImageMap& image, const DepthMap* gt = nullptr);

/// MSE after least-squares alignment of pred onto label over valid pixels.
double ssi_loss(const DepthMap& pred, const DepthMap& label);

/// Image as a (1, 3, H, W) tensor in [-1, 1]; grayscale is replicated.
nn::Tensor<float> image_tensor(const ImageMap& image);

struct TrainLogRow {
  int iteration = 0;
  double loss = 0.0;
  double wall_time_s = 0.0;
};

/// Trains the encoder-decoder regressor on (image, depth) pairs with the
/// scale-shift-invariant loss. Throws ConfigError on empty data.
CoarseModel train_tiny_regressor(std::span<const LoadedPair> train, const RegressorConfig& config,
                                 std::vector<TrainLogRow>* log = nullptr);

DegradeParams degrade_params_from(const RunConfig& cfg);
RegressorConfig regressor_config_from(const RunConfig& cfg);

}  // namespace depthlab
