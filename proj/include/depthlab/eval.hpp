// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "depthlab/align.hpp"
#include "depthlab/coarse.hpp"
#include "depthlab/config.hpp"
#include "depthlab/diffusion.hpp"
#include "depthlab/raster.hpp"
#include "depthlab/scenegen.hpp"

namespace depthlab {

struct MetricReport {
  double absrel = 0.0;
  double delta1 = 0.0;  // fraction of pixels with max ratio strictly < 1.25
  std::size_t n_pixels = 0;
  AffineFit fit;
};

/// Aligns pred onto gt by least squares over jointly valid pixels, floors
/// the aligned values at 1e-6 and scores them against gt.
MetricReport compute_metrics(const DepthMap& pred, const DepthMap& gt);

/// Scores values that are already aligned onto gt (no fit, no floor).
MetricReport score_aligned(const DepthMap& aligned, const DepthMap& gt);

/// Aligns members 2..n onto the first and takes the pixelwise median
/// (mean of the two middle values for even n).
DepthMap ensemble_median(std::span<const DepthMap> members);

DepthMap ensemble_refine(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse, const ImageMap& image,
                         const DepthMap* gt, int n_members, int steps, std::uint64_t seed);

/// Seed used for test sample `index` under a run seed.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);

struct SampleResult {
  std::size_t index = 0;
  MetricReport coarse;
  MetricReport refined;
  double runtime_s = 0.0;
};

struct SplitResult {
  std::vector<SampleResult> samples;
  double mean_absrel = 0.0;
  double mean_delta1 = 0.0;
  double mean_coarse_absrel = 0.0;
  double mean_coarse_delta1 = 0.0;
};

/// Refines (ensemble median of `ensemble` members) and scores every pair.
/// `on_sample` sees each refinement before it is dropped.
using SampleHook = std::function<void(std::size_t index, const Refinement& r, const DepthMap& refined)>;

SplitResult evaluate_split(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse,
                           std::span<const LoadedPair> test, int steps, int ensemble, std::uint64_t seed,
                           const SampleHook& on_sample = {});

enum class SweepAxis { patch_size, threshold, ensemble, ddim_steps, variant, repeat };

std::string axis_name(SweepAxis a);
SweepAxis parse_axis(const std::string& s);

struct SweepRow {
  std::string value;
  int repeat = 0;
  double absrel = 0.0;
  double delta1 = 0.0;
  double runtime_s = 0.0;
};

struct SweepPoint {
  std::string value;
  double absrel_mean = 0.0;
  double absrel_std = 0.0;
  double delta1_mean = 0.0;
  double delta1_std = 0.0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::variant;
  std::vector<SweepRow> rows;
  std::vector<SweepPoint> points;  // one per axis value, in order
};

/// Groups rows by value (first-seen order) into mean / sample std.
void summarize(SweepResult& r);

struct NamedCheckpoint {
  std::string name;
  const DenoiserCheckpoint* checkpoint = nullptr;
};

SweepResult run_ablation(std::span<const NamedCheckpoint> variants, const CoarseModel& coarse,
                         std::span<const LoadedPair> test, int steps, int ensemble, std::uint64_t seed);

/// Loads each checkpoint (MissingCheckpoint if absent) and evaluates it.
SweepResult run_ablation(std::span<const std::filesystem::path> checkpoints, const CoarseModel& coarse,
                         std::span<const LoadedPair> test, int steps, int ensemble, std::uint64_t seed);

struct SweepInputs {
  std::span<const LoadedPair> train;
  std::span<const LoadedPair> test;
  const CoarseModel* coarse = nullptr;
  // Needed for the inference axes (ensemble, ddim_steps); the training axes
  // train a fresh refiner per value from `config`.
  const DenoiserCheckpoint* checkpoint = nullptr;
  int repeats = 1;
};

/// Numeric values must be strictly increasing. Patch sizes must divide the
/// raster (ConfigError otherwise).
SweepResult run_sweep(SweepAxis axis, std::span<const double> values, const RunConfig& config,
                      const SweepInputs& inputs);

/// `n_repeats` single refinements per input; one row per repeat with the
/// split means. Repeat r uses the seed of ensemble member r, so an
/// n_repeats ensemble is the median of exactly these refinements.
SweepResult error_bars(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse, std::span<const LoadedPair> test,
                       int n_repeats, int steps, std::uint64_t seed);

// ------------------------------------------------------------ artifacts

/// "# key=value" echo lines, then axis,value,repeat,absrel,delta1,runtime_s.
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& r, const KeyValues& config);
void write_split_csv(const std::filesystem::path& path, const SplitResult& r, const KeyValues& config);

/// Plain-text table of a CSV written by this module; per-value mean / std
/// for sweep files, per-sample rows plus means for split files.
std::string render_csv_table(const std::filesystem::path& csv);

/// Side-by-side grayscale PGM: input luminance, coarse, refined, gt. Depth
/// panels are aligned onto gt and share its display range.
void write_strip(const std::filesystem::path& path, const ImageMap& image, const DepthMap& coarse,
                 const DepthMap& refined, const DepthMap& gt);

}  // namespace depthlab
