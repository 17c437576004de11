// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "depthlab/coarse.hpp"
#include "depthlab/config.hpp"
#include "depthlab/maskgen.hpp"
#include "depthlab/nn.hpp"
#include "depthlab/raster.hpp"
#include "depthlab/scenegen.hpp"

namespace depthlab {

// ------------------------------------------------------------ schedule

enum class ScheduleKind { scaled_linear, linear };

/// Index t runs 1..T; alpha_bar(t) = prod_{j <= t} (1 - beta_j) and
/// alpha_bar(0) = 1 by convention.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> betas;
  std::vector<double> alpha_bars;

  double alpha_bar(int t) const;
};

NoiseSchedule make_schedule(ScheduleKind kind, int T, double beta_start, double beta_end);
ScheduleKind parse_schedule_kind(const std::string& s);

// -------------------------------------------------------------- latents

enum class LatentTag : std::uint8_t { image_cond, depth_cond, depth_state, raw };

/// channels x height x width, planar.
struct LatentTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;
  LatentTag tag = LatentTag::raw;

  LatentTensor() = default;
  LatentTensor(int c, int h, int w, LatentTag t = LatentTag::raw, float fill = 0.0f)
      : channels(c), height(h), width(w), values(static_cast<std::size_t>(c) * h * w, fill), tag(t) {}
  std::size_t size() const noexcept { return values.size(); }
  bool same_shape(const LatentTensor& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

LatentTensor planar_from_depth(const DepthMap& d);
/// Image rescaled from [0, 1] to [-1, 1]; grayscale stays one channel.
LatentTensor planar_from_image(const ImageMap& img);

/// Space-to-depth: each f x f block becomes f^2 channels, channel index
/// c * f^2 + dy * f + dx. Lossless; f = 1 is the identity.
LatentTensor encode(const LatentTensor& pixels, int f);
LatentTensor decode(const LatentTensor& latent, int f);

// ------------------------------------------------------------- v algebra

LatentTensor add_noise(const LatentTensor& z0, const LatentTensor& eps, int t, const NoiseSchedule& sched);
/// v = sqrt(abar) eps - sqrt(1 - abar) z0
LatentTensor v_target(const LatentTensor& z0, const LatentTensor& eps, int t, const NoiseSchedule& sched);
/// z0 = sqrt(abar) z_t - sqrt(1 - abar) v
LatentTensor z0_from_v(const LatentTensor& zt, const LatentTensor& v, int t, const NoiseSchedule& sched);
/// eps = sqrt(1 - abar) z_t + sqrt(abar) v
LatentTensor eps_from_v(const LatentTensor& zt, const LatentTensor& v, int t, const NoiseSchedule& sched);

/// (1/gamma) * || (v_hat - v_true) . m ||^2 with gamma = ones(m) * channels.
/// The mask is shared across channels. Throws EmptyMask when gamma = 0.
double masked_v_loss(const LatentTensor& v_hat, const LatentTensor& v_true, const LatentMask& m);

// -------------------------------------------------------------- refiner

struct Variant {
  bool conditioning = true;
  bool prealign = true;
  bool masking = true;
};

/// Ablation rows: no-cond (#1), no-align (#2: conditioning only),
/// no-mask (#3: conditioning + pre-alignment), full (#4).
Variant parse_variant(const std::string& name);

struct RefinerConfig {
  int height = 64;
  int width = 64;
  int codec_factor = 1;
  MaskConfig mask;
  ScheduleKind schedule = ScheduleKind::scaled_linear;
  int timesteps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  int base_channels = 16;
  int levels = 3;
  int time_dim = 32;
  double lr = 3e-5;
  int batch_size = 8;
  int iterations = 2000;
  std::uint64_t seed = 7;
  std::string variant_name = "full";
  Variant variant;
  double norm_lo_pct = 2.0;
  double norm_hi_pct = 98.0;

  int image_channels() const { return 3 * codec_factor * codec_factor; }
  int depth_channels() const { return codec_factor * codec_factor; }
  nn::UNetConfig network() const;
  void validate() const;
};

RefinerConfig refiner_config_from(const RunConfig& cfg);

struct TrainStats {
  int iterations = 0;
  int skipped_samples = 0;  // DegenerateSource or empty masks
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Trained (or freshly initialised) velocity-prediction denoiser plus the
/// configuration that produced it.
class DenoiserCheckpoint {
 public:
  explicit DenoiserCheckpoint(const RefinerConfig& config);

  const RefinerConfig& config() const noexcept { return config_; }
  const NoiseSchedule& schedule() const noexcept { return schedule_; }
  nn::UNet<float>& network() noexcept { return *net_; }
  const nn::UNet<float>& network() const noexcept { return *net_; }
  TrainStats& stats() noexcept { return stats_; }
  const TrainStats& stats() const noexcept { return stats_; }
  KeyValues& run_config() noexcept { return run_config_; }
  const KeyValues& run_config() const noexcept { return run_config_; }

  void save(const std::filesystem::path& path) const;
  static DenoiserCheckpoint load(const std::filesystem::path& path);

 private:
  RefinerConfig config_;
  NoiseSchedule schedule_;
  std::shared_ptr<nn::UNet<float>> net_;
  TrainStats stats_;
  KeyValues run_config_;
};

/// v_hat for a batch: input is (N, image + cond + state channels, h, w).
using VelocityFn = std::function<nn::Tensor<float>(const nn::Tensor<float>& input, std::span<const int> t)>;

nn::Tensor<float> denoiser_forward(const DenoiserCheckpoint& ckpt, const nn::Tensor<float>& input,
                                   std::span<const int> t);
LatentTensor denoiser_forward(const DenoiserCheckpoint& ckpt, const LatentTensor& z, int t);

/// One training example after the conditioning pipeline.
struct PreparedSample {
  LatentTensor z_image;
  LatentTensor z_cond;   // zeros when conditioning is ablated
  LatentTensor z_depth;  // clean target latent
  LatentMask mask;       // latent resolution
};

/// Coarse prediction, normalization, optional pre-alignment, masks and
/// encoding for one (image, depth) pair.
PreparedSample prepare_sample(const RefinerConfig& cfg, const CoarseModel& coarse, const LoadedPair& pair);

struct RefinerLogRow {
  int iteration = 0;
  double loss = 0.0;
  double wall_time_s = 0.0;
};

/// Masked v-prediction training. Samples whose alignment is degenerate or
/// whose mask is empty are skipped and counted.
DenoiserCheckpoint train_refiner(std::span<const LoadedPair> train, const CoarseModel& coarse,
                                 const RefinerConfig& config, std::vector<RefinerLogRow>* log = nullptr);

/// Deterministic DDIM over `steps` evenly spaced timesteps (T down to T/steps),
/// one ensemble member per seed. Member k starts from noise keyed by seeds[k].
/// Returns the final clean-latent estimate per member.
std::vector<LatentTensor> ddim_sample(const VelocityFn& model, const NoiseSchedule& sched,
                                      const LatentTensor& z_image, const LatentTensor& z_cond,
                                      int state_channels, int steps, std::span<const std::uint64_t> seeds);

LatentTensor ddim_sample(const DenoiserCheckpoint& ckpt, const LatentTensor& z_image, const LatentTensor& z_cond,
                         int steps, std::uint64_t seed);

std::vector<int> ddim_timesteps(int T, int steps);

/// Seed of ensemble member k (member 0 keeps the base seed).
std::uint64_t member_seed(std::uint64_t base, int k);

struct Refinement {
  DepthMap coarse;           // raw coarse prediction
  DepthMap conditioning;     // normalized coarse fed to the denoiser
  std::vector<DepthMap> members;  // normalized refined maps
};

/// Runs the coarse model, normalizes its output, and refines it with
/// `n_members` independent DDIM chains. Any coarse model works here.
Refinement refine_members(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse, const ImageMap& image,
                          const DepthMap* gt, int steps, int n_members, std::uint64_t seed);

DepthMap refine_depth(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse, const ImageMap& image,
                      const DepthMap* gt, int steps, std::uint64_t seed);

}  // namespace depthlab
