// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/coarse.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>

#include "depthlab/align.hpp"
#include "depthlab/checkpoint.hpp"
#include "depthlab/rng.hpp"

namespace depthlab {
namespace {

using Plane = std::vector<double>;

Plane box_downscale(const DepthMap& d, int f, int& oh, int& ow) {
  oh = (d.height + f - 1) / f;
  ow = (d.width + f - 1) / f;
  Plane out(static_cast<std::size_t>(oh) * ow, 0.0);
  std::vector<int> count(out.size(), 0);
  for (int y = 0; y < d.height; ++y)
    for (int x = 0; x < d.width; ++x) {
      const std::size_t k = static_cast<std::size_t>(y / f) * ow + x / f;
      out[k] += d.at(y, x);
      ++count[k];
    }
  for (std::size_t k = 0; k < out.size(); ++k) out[k] /= count[k];
  return out;
}

Plane gaussian_blur(const Plane& in, int h, int w, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (auto& k : kernel) k /= sum;
  Plane tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * in[static_cast<std::size_t>(y) * w + std::clamp(x + i, 0, w - 1)];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += kernel[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

double bilinear(const Plane& in, int h, int w, double sy, double sx) {
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = sy - y0, fx = sx - x0;
  const auto at = [&](int yy, int xx) { return in[static_cast<std::size_t>(yy) * w + xx]; };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

std::uint64_t content_hash(const DepthMap& d) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(d.height) << 32 | static_cast<std::uint32_t>(d.width));
  for (float v : d.values) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    h = mix64(h ^ u);
  }
  return h;
}

}  // namespace

void DegradeParams::validate() const {
  if (blur_sigma < 0.0) fail(ErrorCode::Config, "blur_sigma must be >= 0");
  if (downscale_factor < 1) fail(ErrorCode::Config, "downscale_factor must be >= 1");
  if (!(affine_scale > 0.0)) fail(ErrorCode::Config, "affine_scale must be > 0");
  if (quantize_levels != 0 && quantize_levels < 2) fail(ErrorCode::Config, "quantize_levels must be 0 or >= 2");
  if (random_affine && !(scale_lo > 0.0 && scale_lo <= scale_hi && shift_lo <= shift_hi))
    fail(ErrorCode::Config, "bad random affine ranges");
}

DepthMap degrade_depth(const DepthMap& gt, const DegradeParams& p) {
  p.validate();
  const int f = p.downscale_factor;
  Plane full(gt.size());
  if (f == 1 && p.blur_sigma == 0.0) {
    for (std::size_t i = 0; i < gt.size(); ++i) full[i] = gt.values[i];
  } else {
    int lh = 0, lw = 0;
    const Plane small = box_downscale(gt, f, lh, lw);
    const Plane low = gaussian_blur(small, lh, lw, p.blur_sigma);
    for (int y = 0; y < gt.height; ++y)
      for (int x = 0; x < gt.width; ++x)
        full[static_cast<std::size_t>(y) * gt.width + x] =
            f == 1 ? low[static_cast<std::size_t>(y) * gt.width + x]
                   : bilinear(low, lh, lw, (y + 0.5) / f - 0.5, (x + 0.5) / f - 0.5);
  }

  double a = p.affine_scale, b = p.affine_shift;
  if (p.random_affine) {
    const auto [mn, mx] = std::minmax_element(gt.values.begin(), gt.values.end());
    Rng rng(derive_key(p.seed, content_hash(gt)));
    a = rng.uniform(p.scale_lo, p.scale_hi);
    b = rng.uniform(p.shift_lo, p.shift_hi) * 0.5 * (static_cast<double>(*mx) - *mn);
  }
  for (auto& v : full) v = a * v + b;

  if (p.quantize_levels >= 2) {
    const auto [mn, mx] = std::minmax_element(full.begin(), full.end());
    const double lo = *mn, span = *mx - *mn;
    if (span > 0.0) {
      const double steps = p.quantize_levels - 1;
      for (auto& v : full) v = lo + std::round((v - lo) / span * steps) / steps * span;
    }
  }

  DepthMap out(gt.height, gt.width, 0.0f, gt.units);
  out.validity = gt.validity;
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = static_cast<float>(full[i]);
  return out;
}

nn::UNetConfig RegressorConfig::network() const {
  nn::UNetConfig c;
  c.in_channels = 3;
  c.out_channels = 1;
  c.base_channels = base_channels;
  c.levels = levels;
  c.time_embedding = false;
  // A constant initial output has zero aligned gradient, so no zero init.
  c.zero_init_output = false;
  return c;
}

void RegressorConfig::validate() const {
  if (base_channels <= 0 || levels <= 0) fail(ErrorCode::Config, "regressor size must be positive");
  if (!(lr > 0.0)) fail(ErrorCode::Config, "regressor lr must be > 0");
  if (batch_size < 1) fail(ErrorCode::Config, "regressor batch size must be >= 1");
  if (iterations < 0) fail(ErrorCode::Config, "regressor iterations must be >= 0");
}

CoarseModel CoarseModel::degrade_oracle(const DegradeParams& params, std::string id) {
  params.validate();
  CoarseModel m;
  m.kind_ = CoarseKind::degrade_oracle;
  m.id_ = std::move(id);
  m.degrade_ = params;
  return m;
}

CoarseModel CoarseModel::tiny_regressor(const RegressorConfig& config) {
  config.validate();
  CoarseModel m;
  m.kind_ = CoarseKind::tiny_regressor;
  m.id_ = "tiny_regressor:" + std::to_string(config.seed);
  m.regressor_cfg_ = config;
  m.net_ = std::make_shared<nn::UNet<float>>(config.network(), derive_key(config.seed, 0xC0A25E));
  return m;
}

nn::UNet<float>& CoarseModel::network() {
  if (!net_) fail(ErrorCode::Config, "coarse model '" + id_ + "' has no network");
  return *net_;
}

const nn::UNet<float>& CoarseModel::network() const {
  if (!net_) fail(ErrorCode::Config, "coarse model '" + id_ + "' has no network");
  return *net_;
}

nn::Tensor<float> image_tensor(const ImageMap& image) {
  nn::Tensor<float> t(1, 3, image.height, image.width);
  for (int c = 0; c < 3; ++c) {
    const int src = image.channels == 1 ? 0 : c;
    float* dst = t.at(0, c);
    for (int y = 0; y < image.height; ++y)
      for (int x = 0; x < image.width; ++x)
        dst[static_cast<std::size_t>(y) * image.width + x] = 2.0f * image.at(y, x, src) - 1.0f;
  }
  return t;
}

DepthMap CoarseModel::predict(const ImageMap& image, const DepthMap* gt) const {
  if (kind_ == CoarseKind::degrade_oracle) {
    if (gt == nullptr) fail(ErrorCode::MissingGroundTruth, "degrade_oracle needs the ground-truth depth");
    if (gt->height != image.height || gt->width != image.width)
      fail(ErrorCode::Shape, "degrade_oracle: image and depth shapes differ");
    return degrade_depth(*gt, degrade_);
  }
  const nn::Var<float> out = network().forward(nullptr, image_tensor(image), {});
  DepthMap d(image.height, image.width);
  d.values = out->value.data;
  return d;
}

DepthMap predict_coarse(const CoarseModel& model, const ImageMap& image, const DepthMap* gt) {
  return model.predict(image, gt);
}

void CoarseModel::save(const std::filesystem::path& path, const KeyValues& run_config) const {
  CheckpointFile f;
  f.kind = "coarse";
  f.config = run_config;
  f.config.set("meta.model.id", id_);
  if (kind_ == CoarseKind::degrade_oracle) {
    f.config.set("meta.model.kind", "degrade_oracle");
    f.config.set("meta.model.blur_sigma", format_double(degrade_.blur_sigma));
    f.config.set("meta.model.downscale_factor", std::to_string(degrade_.downscale_factor));
    f.config.set("meta.model.affine_scale", format_double(degrade_.affine_scale));
    f.config.set("meta.model.affine_shift", format_double(degrade_.affine_shift));
    f.config.set("meta.model.quantize_levels", std::to_string(degrade_.quantize_levels));
    f.config.set("meta.model.random_affine", degrade_.random_affine ? "true" : "false");
    f.config.set("meta.model.scale_lo", format_double(degrade_.scale_lo));
    f.config.set("meta.model.scale_hi", format_double(degrade_.scale_hi));
    f.config.set("meta.model.shift_lo", format_double(degrade_.shift_lo));
    f.config.set("meta.model.shift_hi", format_double(degrade_.shift_hi));
    f.config.set("meta.model.seed", std::to_string(degrade_.seed));
  } else {
    f.config.set("meta.model.kind", "tiny_regressor");
    f.config.set("meta.model.base_channels", std::to_string(regressor_cfg_.base_channels));
    f.config.set("meta.model.levels", std::to_string(regressor_cfg_.levels));
    f.config.set("meta.model.seed", std::to_string(regressor_cfg_.seed));
    f.blobs = export_parameters(network().parameters());
  }
  save_checkpoint(path, f);
}

CoarseModel CoarseModel::load(const std::filesystem::path& path) {
  const CheckpointFile f = load_checkpoint(path);
  if (f.kind != "coarse") fail(ErrorCode::Format, "not a coarse-model checkpoint: " + path.string());
  const KeyValues& kv = f.config;
  const std::string kind = kv.get("meta.model.kind");
  if (kind == "degrade_oracle") {
    DegradeParams p;
    p.blur_sigma = kv.get_double("meta.model.blur_sigma", 0.0);
    p.downscale_factor = static_cast<int>(kv.get_int("meta.model.downscale_factor", 1));
    p.affine_scale = kv.get_double("meta.model.affine_scale", 1.0);
    p.affine_shift = kv.get_double("meta.model.affine_shift", 0.0);
    p.quantize_levels = static_cast<int>(kv.get_int("meta.model.quantize_levels", 0));
    p.random_affine = kv.get_bool("meta.model.random_affine", false);
    p.scale_lo = kv.get_double("meta.model.scale_lo", 0.5);
    p.scale_hi = kv.get_double("meta.model.scale_hi", 2.0);
    p.shift_lo = kv.get_double("meta.model.shift_lo", -0.25);
    p.shift_hi = kv.get_double("meta.model.shift_hi", 0.25);
    p.seed = std::stoull(kv.get_or("meta.model.seed", "0"));
    return degrade_oracle(p, kv.get_or("meta.model.id", "degrade_oracle"));
  }
  if (kind != "tiny_regressor") fail(ErrorCode::Format, "unknown coarse model kind '" + kind + "'");
  RegressorConfig rc;
  rc.base_channels = static_cast<int>(kv.get_int("meta.model.base_channels", rc.base_channels));
  rc.levels = static_cast<int>(kv.get_int("meta.model.levels", rc.levels));
  rc.seed = std::stoull(kv.get_or("meta.model.seed", "0"));
  CoarseModel m = tiny_regressor(rc);
  m.id_ = kv.get_or("meta.model.id", m.id_);
  import_parameters(f.blobs, m.network().parameters());
  return m;
}

double ssi_loss(const DepthMap& pred, const DepthMap& label) {
  if (!pred.same_shape(label)) fail(ErrorCode::Shape, "ssi_loss: shape mismatch");
  bool seen = false, distinct = false;
  float first = 0.0f;
  for (std::size_t i = 0; i < label.size() && !distinct; ++i) {
    if (!label.valid(i)) continue;
    if (!seen) {
      first = label.values[i];
      seen = true;
    } else if (label.values[i] != first) {
      distinct = true;
    }
  }
  if (!distinct) fail(ErrorCode::DegenerateDepth, "ssi_loss: label needs two distinct valid values");
  const AffineFit fit = fit_affine(pred, label);
  return fit.residual_rms * fit.residual_rms;
}

CoarseModel train_tiny_regressor(std::span<const LoadedPair> train, const RegressorConfig& config,
                                 std::vector<TrainLogRow>* log) {
  config.validate();
  if (train.empty()) fail(ErrorCode::Config, "train_tiny_regressor: empty training set");
  CoarseModel model = CoarseModel::tiny_regressor(config);
  nn::UNet<float>& net = model.network();
  nn::Adam<float> adam(config.lr);
  const int h = train.front().image.height, w = train.front().image.width;
  const auto start = std::chrono::steady_clock::now();
  for (int it = 0; it < config.iterations; ++it) {
    Rng rng(derive_key(config.seed, 0x7E6A000000ULL + static_cast<std::uint64_t>(it)));
    const int b = config.batch_size;
    nn::Tensor<float> input(b, 3, h, w), target(b, 1, h, w), mask(b, 1, h, w);
    for (int k = 0; k < b; ++k) {
      const LoadedPair& s = train[rng.below(train.size())];
      if (s.image.height != h || s.image.width != w) fail(ErrorCode::Shape, "training rasters differ in size");
      const nn::Tensor<float> img = image_tensor(s.image);
      std::copy(img.data.begin(), img.data.end(), input.at(k, 0));
      for (std::size_t i = 0; i < s.depth.size(); ++i) {
        target.at(k, 0)[i] = s.depth.values[i];
        mask.at(k, 0)[i] = s.depth.valid(i) ? 1.0f : 0.0f;
      }
    }
    nn::Tape<float> tape;
    const nn::Var<float> pred = net.forward(&tape, input, {});
    const nn::Var<float> loss = nn::ssi_mse(&tape, pred, target, mask);
    tape.backward(loss);
    adam.step(net.parameters());
    net.zero_grad();
    if (log) {
      const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      log->push_back({it, loss->value.data[0], t});
    }
  }
  return model;
}

DegradeParams degrade_params_from(const RunConfig& cfg) {
  DegradeParams p;
  p.blur_sigma = cfg.blur_sigma;
  p.downscale_factor = cfg.downscale_factor;
  p.quantize_levels = cfg.quantize_levels;
  p.random_affine = cfg.random_affine;
  p.scale_lo = cfg.affine_scale_lo;
  p.scale_hi = cfg.affine_scale_hi;
  p.shift_lo = cfg.affine_shift_lo;
  p.shift_hi = cfg.affine_shift_hi;
  p.seed = cfg.seed;
  return p;
}

RegressorConfig regressor_config_from(const RunConfig& cfg) {
  RegressorConfig r;
  r.base_channels = cfg.coarse_base_channels;
  r.levels = cfg.coarse_levels;
  r.lr = cfg.coarse_lr;
  r.batch_size = cfg.coarse_batch_size;
  r.iterations = cfg.coarse_iterations;
  r.seed = cfg.seed;
  return r;
}

}  // namespace depthlab
