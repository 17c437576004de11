// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/diffusion.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "depthlab/align.hpp"
#include "depthlab/checkpoint.hpp"
#include "depthlab/depthio.hpp"
#include "depthlab/rng.hpp"

namespace depthlab {
namespace {

void check_pair(const LatentTensor& a, const LatentTensor& b, const char* what) {
  if (!a.same_shape(b)) fail(ErrorCode::Shape, std::string(what) + ": latent shapes differ");
}

// out = ca * a + cb * b
LatentTensor lincomb(double ca, const LatentTensor& a, double cb, const LatentTensor& b, LatentTag tag) {
  LatentTensor out(a.channels, a.height, a.width, tag);
  for (std::size_t i = 0; i < a.size(); ++i)
    out.values[i] = static_cast<float>(ca * a.values[i] + cb * b.values[i]);
  return out;
}

void copy_into(const LatentTensor& src, nn::Tensor<float>& dst, int n, int channel_offset) {
  std::copy(src.values.begin(), src.values.end(), dst.at(n, channel_offset));
}

LatentTensor slice(const nn::Tensor<float>& src, int n, int channel_offset, int channels, LatentTag tag) {
  LatentTensor out(channels, src.h, src.w, tag);
  const float* p = src.at(n, channel_offset);
  std::copy(p, p + out.size(), out.values.begin());
  return out;
}

DepthMap depth_from_latent(const LatentTensor& z, int f, int height, int width) {
  const LatentTensor px = decode(z, f);
  if (px.channels != 1 || px.height != height || px.width != width)
    fail(ErrorCode::Shape, "decoded depth has an unexpected shape");
  DepthMap d(height, width, 0.0f, DepthUnits::normalized);
  for (std::size_t i = 0; i < d.size(); ++i) d.values[i] = std::clamp(px.values[i], -1.0f, 1.0f);
  return d;
}

std::string key(const char* name) { return std::string("meta.refiner.") + name; }

}  // namespace

// ------------------------------------------------------------ schedule

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  if (t < 1 || t > T) fail(ErrorCode::Range, "timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  return alpha_bars[static_cast<std::size_t>(t - 1)];
}

NoiseSchedule make_schedule(ScheduleKind kind, int T, double beta_start, double beta_end) {
  if (T < 1) fail(ErrorCode::Config, "schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    fail(ErrorCode::Config, "schedule needs 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(static_cast<std::size_t>(T));
  for (int j = 0; j < T; ++j) {
    const double frac = T == 1 ? 0.0 : static_cast<double>(j) / (T - 1);
    if (kind == ScheduleKind::scaled_linear) {
      const double r = std::sqrt(beta_start) + frac * (std::sqrt(beta_end) - std::sqrt(beta_start));
      s.betas[static_cast<std::size_t>(j)] = r * r;
    } else {
      s.betas[static_cast<std::size_t>(j)] = beta_start + frac * (beta_end - beta_start);
    }
  }
  s.alpha_bars.resize(static_cast<std::size_t>(T));
  double prod = 1.0;
  for (int j = 0; j < T; ++j) {
    prod *= 1.0 - s.betas[static_cast<std::size_t>(j)];
    s.alpha_bars[static_cast<std::size_t>(j)] = prod;
  }
  return s;
}

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "scaled_linear") return ScheduleKind::scaled_linear;
  if (s == "linear") return ScheduleKind::linear;
  fail(ErrorCode::Config, "unknown schedule '" + s + "'");
}

// -------------------------------------------------------------- latents

LatentTensor planar_from_depth(const DepthMap& d) {
  LatentTensor t(1, d.height, d.width, LatentTag::raw);
  t.values = d.values;
  return t;
}

LatentTensor planar_from_image(const ImageMap& img) {
  LatentTensor t(img.channels, img.height, img.width, LatentTag::raw);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.values[(static_cast<std::size_t>(c) * img.height + y) * img.width + x] = 2.0f * img.at(y, x, c) - 1.0f;
  return t;
}

LatentTensor encode(const LatentTensor& px, int f) {
  if (f <= 0 || px.height % f != 0 || px.width % f != 0)
    fail(ErrorCode::Shape, "encode: raster not divisible by codec factor " + std::to_string(f));
  const int h = px.height / f, w = px.width / f;
  LatentTensor z(px.channels * f * f, h, w, px.tag);
  for (int c = 0; c < px.channels; ++c)
    for (int y = 0; y < px.height; ++y)
      for (int x = 0; x < px.width; ++x) {
        const int zc = c * f * f + (y % f) * f + (x % f);
        z.values[(static_cast<std::size_t>(zc) * h + y / f) * w + x / f] =
            px.values[(static_cast<std::size_t>(c) * px.height + y) * px.width + x];
      }
  return z;
}

LatentTensor decode(const LatentTensor& z, int f) {
  if (f <= 0 || z.channels % (f * f) != 0) fail(ErrorCode::Shape, "decode: channels not divisible by f^2");
  const int ch = z.channels / (f * f);
  const int H = z.height * f, W = z.width * f;
  LatentTensor px(ch, H, W, z.tag);
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        const int zc = c * f * f + (y % f) * f + (x % f);
        px.values[(static_cast<std::size_t>(c) * H + y) * W + x] =
            z.values[(static_cast<std::size_t>(zc) * z.height + y / f) * z.width + x / f];
      }
  return px;
}

// ------------------------------------------------------------- v algebra

LatentTensor add_noise(const LatentTensor& z0, const LatentTensor& eps, int t, const NoiseSchedule& sched) {
  check_pair(z0, eps, "add_noise");
  if (t < 1) fail(ErrorCode::Range, "add_noise: t must be >= 1");
  const double ab = sched.alpha_bar(t);
  return lincomb(std::sqrt(ab), z0, std::sqrt(1.0 - ab), eps, LatentTag::depth_state);
}

LatentTensor v_target(const LatentTensor& z0, const LatentTensor& eps, int t, const NoiseSchedule& sched) {
  check_pair(z0, eps, "v_target");
  if (t < 1) fail(ErrorCode::Range, "v_target: t must be >= 1");
  const double ab = sched.alpha_bar(t);
  return lincomb(std::sqrt(ab), eps, -std::sqrt(1.0 - ab), z0, LatentTag::depth_state);
}

LatentTensor z0_from_v(const LatentTensor& zt, const LatentTensor& v, int t, const NoiseSchedule& sched) {
  check_pair(zt, v, "z0_from_v");
  const double ab = sched.alpha_bar(t);
  return lincomb(std::sqrt(ab), zt, -std::sqrt(1.0 - ab), v, LatentTag::depth_state);
}

LatentTensor eps_from_v(const LatentTensor& zt, const LatentTensor& v, int t, const NoiseSchedule& sched) {
  check_pair(zt, v, "eps_from_v");
  const double ab = sched.alpha_bar(t);
  return lincomb(std::sqrt(1.0 - ab), zt, std::sqrt(ab), v, LatentTag::raw);
}

double masked_v_loss(const LatentTensor& v_hat, const LatentTensor& v_true, const LatentMask& m) {
  check_pair(v_hat, v_true, "masked_v_loss");
  if (m.height != v_hat.height || m.width != v_hat.width) fail(ErrorCode::Shape, "masked_v_loss: mask shape");
  const std::size_t ones = m.count_ones();
  if (ones == 0) fail(ErrorCode::EmptyMask, "masked_v_loss: mask has no valid element");
  const std::size_t plane = static_cast<std::size_t>(m.height) * m.width;
  double sum = 0.0;
  for (int c = 0; c < v_hat.channels; ++c)
    for (std::size_t i = 0; i < plane; ++i) {
      if (!m.values[i]) continue;
      const double r = static_cast<double>(v_hat.values[c * plane + i]) - v_true.values[c * plane + i];
      sum += r * r;
    }
  return sum / (static_cast<double>(ones) * v_hat.channels);
}

// -------------------------------------------------------------- refiner

Variant parse_variant(const std::string& name) {
  if (name == "full") return {true, true, true};
  if (name == "no-mask") return {true, true, false};
  if (name == "no-align") return {true, false, false};
  if (name == "no-cond") return {false, false, false};
  fail(ErrorCode::Config, "unknown variant '" + name + "' (full, no-cond, no-align, no-mask)");
}

nn::UNetConfig RefinerConfig::network() const {
  nn::UNetConfig c;
  c.in_channels = image_channels() + 2 * depth_channels();
  c.out_channels = depth_channels();
  c.base_channels = base_channels;
  c.levels = levels;
  c.time_embedding = true;
  c.time_dim = time_dim;
  c.zero_init_output = true;
  return c;
}

void RefinerConfig::validate() const {
  mask.check_raster(height, width);
  if (mask.codec_factor != codec_factor) fail(ErrorCode::Config, "mask codec factor differs from the codec");
  const int scale = 1 << (levels - 1);
  if ((height / codec_factor) % scale != 0 || (width / codec_factor) % scale != 0)
    fail(ErrorCode::Config, "latent size must be divisible by 2^(levels-1)");
  make_schedule(schedule, timesteps, beta_start, beta_end);
  if (!(lr > 0.0) || batch_size < 1 || iterations < 0) fail(ErrorCode::Config, "bad optimizer settings");
  if (!(norm_lo_pct >= 0 && norm_lo_pct < norm_hi_pct && norm_hi_pct <= 100))
    fail(ErrorCode::Config, "bad normalization percentiles");
}

RefinerConfig refiner_config_from(const RunConfig& cfg) {
  cfg.validate();
  RefinerConfig r;
  r.height = cfg.height;
  r.width = cfg.width;
  r.codec_factor = cfg.codec_factor;
  r.mask.patch_size = cfg.patch_size;
  r.mask.threshold = cfg.threshold;
  r.mask.codec_factor = cfg.codec_factor;
  r.mask.pool = cfg.pool == "min" ? PoolMode::min : PoolMode::max;
  r.schedule = parse_schedule_kind(cfg.schedule);
  r.timesteps = cfg.timesteps;
  r.beta_start = cfg.beta_start;
  r.beta_end = cfg.beta_end;
  r.base_channels = cfg.base_channels;
  r.levels = cfg.levels;
  r.time_dim = cfg.time_dim;
  r.lr = cfg.lr;
  r.batch_size = cfg.batch_size;
  r.iterations = cfg.iterations;
  r.seed = cfg.seed;
  r.variant_name = cfg.variant;
  r.variant = parse_variant(cfg.variant);
  r.norm_lo_pct = cfg.norm_lo_pct;
  r.norm_hi_pct = cfg.norm_hi_pct;
  return r;
}

DenoiserCheckpoint::DenoiserCheckpoint(const RefinerConfig& config)
    : config_(config),
      schedule_(make_schedule(config.schedule, config.timesteps, config.beta_start, config.beta_end)),
      net_(std::make_shared<nn::UNet<float>>(config.network(), derive_key(config.seed, 0xD1FF05E))) {
  config_.validate();
}

void DenoiserCheckpoint::save(const std::filesystem::path& path) const {
  CheckpointFile f;
  f.kind = "refiner";
  f.config = run_config_;
  const RefinerConfig& c = config_;
  f.config.set(key("height"), std::to_string(c.height));
  f.config.set(key("width"), std::to_string(c.width));
  f.config.set(key("codec_factor"), std::to_string(c.codec_factor));
  f.config.set(key("patch_size"), std::to_string(c.mask.patch_size));
  f.config.set(key("threshold"), format_double(c.mask.threshold));
  f.config.set(key("pool"), c.mask.pool == PoolMode::max ? "max" : "min");
  f.config.set(key("schedule"), c.schedule == ScheduleKind::scaled_linear ? "scaled_linear" : "linear");
  f.config.set(key("timesteps"), std::to_string(c.timesteps));
  f.config.set(key("beta_start"), format_double(c.beta_start));
  f.config.set(key("beta_end"), format_double(c.beta_end));
  f.config.set(key("base_channels"), std::to_string(c.base_channels));
  f.config.set(key("levels"), std::to_string(c.levels));
  f.config.set(key("time_dim"), std::to_string(c.time_dim));
  f.config.set(key("lr"), format_double(c.lr));
  f.config.set(key("batch_size"), std::to_string(c.batch_size));
  f.config.set(key("iterations"), std::to_string(c.iterations));
  f.config.set(key("seed"), std::to_string(c.seed));
  f.config.set(key("variant"), c.variant_name);
  f.config.set(key("conditioning"), c.variant.conditioning ? "true" : "false");
  f.config.set(key("prealign"), c.variant.prealign ? "true" : "false");
  f.config.set(key("masking"), c.variant.masking ? "true" : "false");
  f.config.set(key("norm_lo_pct"), format_double(c.norm_lo_pct));
  f.config.set(key("norm_hi_pct"), format_double(c.norm_hi_pct));
  f.config.set(key("trained_iterations"), std::to_string(stats_.iterations));
  f.config.set(key("skipped_samples"), std::to_string(stats_.skipped_samples));
  f.config.set(key("initial_loss"), format_double(stats_.initial_loss));
  f.config.set(key("final_loss"), format_double(stats_.final_loss));
  f.blobs = export_parameters(net_->parameters());
  save_checkpoint(path, f);
}

DenoiserCheckpoint DenoiserCheckpoint::load(const std::filesystem::path& path) {
  CheckpointFile f = load_checkpoint(path);
  if (f.kind != "refiner") fail(ErrorCode::Format, "not a refiner checkpoint: " + path.string());
  const KeyValues& kv = f.config;
  RefinerConfig c;
  c.height = static_cast<int>(kv.get_int(key("height"), c.height));
  c.width = static_cast<int>(kv.get_int(key("width"), c.width));
  c.codec_factor = static_cast<int>(kv.get_int(key("codec_factor"), c.codec_factor));
  c.mask.patch_size = static_cast<int>(kv.get_int(key("patch_size"), c.mask.patch_size));
  c.mask.threshold = kv.get_double(key("threshold"), c.mask.threshold);
  c.mask.codec_factor = c.codec_factor;
  c.mask.pool = kv.get_or(key("pool"), "max") == "min" ? PoolMode::min : PoolMode::max;
  c.schedule = parse_schedule_kind(kv.get_or(key("schedule"), "scaled_linear"));
  c.timesteps = static_cast<int>(kv.get_int(key("timesteps"), c.timesteps));
  c.beta_start = kv.get_double(key("beta_start"), c.beta_start);
  c.beta_end = kv.get_double(key("beta_end"), c.beta_end);
  c.base_channels = static_cast<int>(kv.get_int(key("base_channels"), c.base_channels));
  c.levels = static_cast<int>(kv.get_int(key("levels"), c.levels));
  c.time_dim = static_cast<int>(kv.get_int(key("time_dim"), c.time_dim));
  c.lr = kv.get_double(key("lr"), c.lr);
  c.batch_size = static_cast<int>(kv.get_int(key("batch_size"), c.batch_size));
  c.iterations = static_cast<int>(kv.get_int(key("iterations"), c.iterations));
  c.seed = std::stoull(kv.get_or(key("seed"), "7"));
  c.variant_name = kv.get_or(key("variant"), "full");
  c.variant.conditioning = kv.get_bool(key("conditioning"), true);
  c.variant.prealign = kv.get_bool(key("prealign"), true);
  c.variant.masking = kv.get_bool(key("masking"), true);
  c.norm_lo_pct = kv.get_double(key("norm_lo_pct"), c.norm_lo_pct);
  c.norm_hi_pct = kv.get_double(key("norm_hi_pct"), c.norm_hi_pct);
  DenoiserCheckpoint ck(c);
  import_parameters(f.blobs, ck.net_->parameters());
  ck.stats_.iterations = static_cast<int>(kv.get_int(key("trained_iterations"), 0));
  ck.stats_.skipped_samples = static_cast<int>(kv.get_int(key("skipped_samples"), 0));
  ck.stats_.initial_loss = kv.get_double(key("initial_loss"), 0.0);
  ck.stats_.final_loss = kv.get_double(key("final_loss"), 0.0);
  for (const auto& [k, v] : kv.items())
    if (k.rfind("meta.refiner.", 0) != 0) ck.run_config_.set(k, v);
  return ck;
}

nn::Tensor<float> denoiser_forward(const DenoiserCheckpoint& ckpt, const nn::Tensor<float>& input,
                                   std::span<const int> t) {
  return ckpt.network().forward(nullptr, input, t)->value;
}

LatentTensor denoiser_forward(const DenoiserCheckpoint& ckpt, const LatentTensor& z, int t) {
  nn::Tensor<float> in(1, z.channels, z.height, z.width);
  in.data = z.values;
  const int ts[1] = {t};
  const nn::Tensor<float> out = denoiser_forward(ckpt, in, ts);
  return slice(out, 0, 0, out.c, LatentTag::depth_state);
}

PreparedSample prepare_sample(const RefinerConfig& cfg, const CoarseModel& coarse, const LoadedPair& pair) {
  const int f = cfg.codec_factor;
  const DepthMap label = normalize_depth(pair.depth, cfg.norm_lo_pct, cfg.norm_hi_pct).first;
  DepthMap cond(label.height, label.width, 0.0f, DepthUnits::normalized);
  if (cfg.variant.conditioning) {
    const DepthMap raw = coarse.predict(pair.image, &pair.depth);
    cond = cfg.variant.prealign ? prealign_conditioning(raw, label)
                                : normalize_depth(raw, cfg.norm_lo_pct, cfg.norm_hi_pct).first;
  }
  PreparedSample s;
  if (cfg.variant.masking && cfg.variant.conditioning) {
    s.mask = downscale_mask(build_pixel_mask(cond, label, cfg.mask), f, cfg.mask.pool);
  } else {
    s.mask = LatentMask(label.height / f, label.width / f, 1);
  }
  s.z_image = encode(planar_from_image(pair.image), f);
  s.z_image.tag = LatentTag::image_cond;
  s.z_cond = encode(planar_from_depth(cond), f);
  s.z_cond.tag = LatentTag::depth_cond;
  s.z_depth = encode(planar_from_depth(label), f);
  s.z_depth.tag = LatentTag::depth_state;
  return s;
}

DenoiserCheckpoint train_refiner(std::span<const LoadedPair> train, const CoarseModel& coarse,
                                 const RefinerConfig& config, std::vector<RefinerLogRow>* log) {
  config.validate();
  if (train.empty()) fail(ErrorCode::Config, "train_refiner: empty training set");
  DenoiserCheckpoint ckpt(config);
  TrainStats& stats = ckpt.stats();

  std::vector<PreparedSample> samples;
  samples.reserve(train.size());
  for (const LoadedPair& pair : train) {
    if (pair.image.height != config.height || pair.image.width != config.width)
      fail(ErrorCode::Shape, "training raster size differs from the configured size");
    try {
      PreparedSample s = prepare_sample(config, coarse, pair);
      if (s.mask.count_ones() == 0) {
        ++stats.skipped_samples;
        continue;
      }
      samples.push_back(std::move(s));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateSource && e.code() != ErrorCode::DegenerateDepth) throw;
      ++stats.skipped_samples;
    }
  }
  if (samples.empty()) fail(ErrorCode::Config, "train_refiner: every training sample was skipped");

  nn::UNet<float>& net = ckpt.network();
  nn::Adam<float> adam(config.lr);
  const NoiseSchedule& sched = ckpt.schedule();
  const PreparedSample& first = samples.front();
  const int ci = first.z_image.channels, cc = first.z_cond.channels, cd = first.z_depth.channels;
  const int h = first.z_depth.height, w = first.z_depth.width;
  const int b = config.batch_size;
  const auto start = std::chrono::steady_clock::now();
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(config.iterations));

  for (int it = 0; it < config.iterations; ++it) {
    Rng rng(derive_key(config.seed, 0x7A1400000000ULL + static_cast<std::uint64_t>(it)));
    nn::Tensor<float> input(b, ci + cc + cd, h, w), target(b, cd, h, w), mask(b, 1, h, w);
    std::vector<int> ts(static_cast<std::size_t>(b));
    for (int k = 0; k < b; ++k) {
      const PreparedSample& s = samples[rng.below(samples.size())];
      const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(sched.T)));
      ts[static_cast<std::size_t>(k)] = t;
      LatentTensor eps(cd, h, w);
      for (auto& v : eps.values) v = static_cast<float>(rng.normal());
      const LatentTensor zt = add_noise(s.z_depth, eps, t, sched);
      const LatentTensor v = v_target(s.z_depth, eps, t, sched);
      copy_into(s.z_image, input, k, 0);
      copy_into(s.z_cond, input, k, ci);
      copy_into(zt, input, k, ci + cc);
      copy_into(v, target, k, 0);
      for (std::size_t i = 0; i < s.mask.values.size(); ++i) mask.at(k, 0)[i] = s.mask.values[i];
    }
    nn::Tape<float> tape;
    const nn::Var<float> pred = net.forward(&tape, input, ts);
    const nn::Var<float> loss = nn::masked_mse(&tape, pred, target, mask);
    tape.backward(loss);
    adam.step(net.parameters());
    net.zero_grad();
    losses.push_back(loss->value.data[0]);
    if (log) {
      const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log->push_back({it, losses.back(), t});
    }
  }
  stats.iterations = config.iterations;
  if (!losses.empty()) {
    stats.initial_loss = losses.front();
    const std::size_t tail = std::max<std::size_t>(1, losses.size() / 10);
    double s = 0.0;
    for (std::size_t i = losses.size() - tail; i < losses.size(); ++i) s += losses[i];
    stats.final_loss = s / static_cast<double>(tail);
  }
  return ckpt;
}

std::vector<int> ddim_timesteps(int T, int steps) {
  if (steps < 1 || steps > T) fail(ErrorCode::Config, "DDIM steps must lie in [1, T]");
  std::vector<int> ts(static_cast<std::size_t>(steps));
  for (int k = 0; k < steps; ++k)
    ts[static_cast<std::size_t>(k)] = T - static_cast<int>((static_cast<long long>(k) * T) / steps);
  return ts;
}

std::uint64_t member_seed(std::uint64_t base, int k) {
  return k == 0 ? base : derive_key(base, static_cast<std::uint64_t>(k));
}

std::vector<LatentTensor> ddim_sample(const VelocityFn& model, const NoiseSchedule& sched,
                                      const LatentTensor& z_image, const LatentTensor& z_cond,
                                      int state_channels, int steps, std::span<const std::uint64_t> seeds) {
  const std::vector<int> ts = ddim_timesteps(sched.T, steps);
  if (seeds.empty()) fail(ErrorCode::Config, "ddim_sample needs at least one seed");
  if (z_image.height != z_cond.height || z_image.width != z_cond.width)
    fail(ErrorCode::Shape, "ddim_sample: conditioning latents differ in size");
  const int n = static_cast<int>(seeds.size());
  const int h = z_image.height, w = z_image.width;
  const int ci = z_image.channels, cc = z_cond.channels, cd = state_channels;

  nn::Tensor<float> input(n, ci + cc + cd, h, w);
  for (int k = 0; k < n; ++k) {
    copy_into(z_image, input, k, 0);
    copy_into(z_cond, input, k, ci);
    Rng rng(seeds[static_cast<std::size_t>(k)]);
    float* state = input.at(k, ci + cc);
    for (std::size_t i = 0; i < static_cast<std::size_t>(cd) * h * w; ++i) state[i] = static_cast<float>(rng.normal());
  }

  std::vector<LatentTensor> z0(static_cast<std::size_t>(n));
  for (std::size_t s = 0; s < ts.size(); ++s) {
    const int t = ts[s];
    const int t_prev = s + 1 < ts.size() ? ts[s + 1] : 0;
    const std::vector<int> tvec(static_cast<std::size_t>(n), t);
    const nn::Tensor<float> v = model(input, tvec);
    if (v.n != n || v.c != cd || v.h != h || v.w != w) fail(ErrorCode::Shape, "velocity model returned " + v.shape_string());
    const double ab_prev = sched.alpha_bar(t_prev);
    for (int k = 0; k < n; ++k) {
      const LatentTensor zt = slice(input, k, ci + cc, cd, LatentTag::depth_state);
      const LatentTensor vk = slice(v, k, 0, cd, LatentTag::depth_state);
      LatentTensor x0 = z0_from_v(zt, vk, t, sched);
      const LatentTensor eps = eps_from_v(zt, vk, t, sched);
      const LatentTensor next = lincomb(std::sqrt(ab_prev), x0, std::sqrt(1.0 - ab_prev), eps, LatentTag::depth_state);
      copy_into(next, input, k, ci + cc);
      z0[static_cast<std::size_t>(k)] = std::move(x0);
    }
  }
  return z0;
}

LatentTensor ddim_sample(const DenoiserCheckpoint& ckpt, const LatentTensor& z_image, const LatentTensor& z_cond,
                         int steps, std::uint64_t seed) {
  const VelocityFn model = [&ckpt](const nn::Tensor<float>& in, std::span<const int> t) {
    return denoiser_forward(ckpt, in, t);
  };
  const std::uint64_t seeds[1] = {seed};
  return ddim_sample(model, ckpt.schedule(), z_image, z_cond, ckpt.config().depth_channels(), steps, seeds).front();
}

Refinement refine_members(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse, const ImageMap& image,
                          const DepthMap* gt, int steps, int n_members, std::uint64_t seed) {
  const RefinerConfig& cfg = ckpt.config();
  if (n_members < 1) fail(ErrorCode::Config, "need at least one ensemble member");
  if (image.height % cfg.codec_factor != 0 || image.width % cfg.codec_factor != 0 ||
      image.height % cfg.mask.patch_size != 0 || image.width % cfg.mask.patch_size != 0)
    fail(ErrorCode::Shape, "image size not divisible by the codec factor and patch size");
  Refinement r;
  r.coarse = coarse.predict(image, gt);
  r.conditioning = cfg.variant.conditioning
                       ? normalize_depth(r.coarse, cfg.norm_lo_pct, cfg.norm_hi_pct).first
                       : DepthMap(image.height, image.width, 0.0f, DepthUnits::normalized);
  const LatentTensor z_image = encode(planar_from_image(image), cfg.codec_factor);
  const LatentTensor z_cond = encode(planar_from_depth(r.conditioning), cfg.codec_factor);
  const VelocityFn model = [&ckpt](const nn::Tensor<float>& in, std::span<const int> t) {
    return denoiser_forward(ckpt, in, t);
  };
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(n_members));
  for (int k = 0; k < n_members; ++k) seeds[static_cast<std::size_t>(k)] = member_seed(seed, k);
  const auto z0 = ddim_sample(model, ckpt.schedule(), z_image, z_cond, cfg.depth_channels(), steps, seeds);
  for (const LatentTensor& z : z0) r.members.push_back(depth_from_latent(z, cfg.codec_factor, image.height, image.width));
  return r;
}

DepthMap refine_depth(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse, const ImageMap& image,
                      const DepthMap* gt, int steps, std::uint64_t seed) {
  return std::move(refine_members(ckpt, coarse, image, gt, steps, 1, seed).members.front());
}

}  // namespace depthlab
