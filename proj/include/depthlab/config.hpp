// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace depthlab {

/// Flat key=value text; keys sort lexicographically so the serialized form
/// is canonical.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text);
  static KeyValues load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string to_string() const;

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  void merge(const KeyValues& other);
  const std::map<std::string, std::string>& items() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

/// Every tunable of every module. Defaults are desk-scale: 64x64 scenes,
/// 2000 iterations at batch 8 and Adam at 3e-5. The full-scale reference
/// settings were batch 32 on 74K pairs; inference uses 50 DDIM steps and
/// 10 ensemble members either way.
struct RunConfig {
  // scenes
  std::uint64_t seed = 7;
  int height = 64;
  int width = 64;
  int n_primitives = 5;

  // normalization percentiles
  double norm_lo_pct = 2.0;
  double norm_hi_pct = 98.0;

  // masking
  int patch_size = 8;
  double threshold = 0.1;
  int codec_factor = 1;
  std::string pool = "max";

  // diffusion
  std::string schedule = "scaled_linear";
  int timesteps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  int base_channels = 16;
  int levels = 3;
  int time_dim = 32;
  double lr = 3e-5;
  int batch_size = 8;
  int iterations = 2000;
  std::string variant = "full";
  std::string coarse = "oracle";

  // inference
  int ddim_steps = 50;
  int ensemble = 10;

  // degradation oracle
  double blur_sigma = 1.0;
  int downscale_factor = 4;
  int quantize_levels = 16;
  bool random_affine = true;
  double affine_scale_lo = 0.5;
  double affine_scale_hi = 2.0;
  double affine_shift_lo = -0.25;
  double affine_shift_hi = 0.25;

  // tiny regressor
  int coarse_base_channels = 8;
  int coarse_levels = 3;
  double coarse_lr = 1e-3;
  int coarse_batch_size = 8;
  int coarse_iterations = 2000;

  KeyValues to_kv() const;
  static RunConfig from_kv(const KeyValues& kv);
  std::string to_string() const { return to_kv().to_string(); }
  /// Throws ConfigError on any out-of-range value.
  void validate() const;
};

}  // namespace depthlab
