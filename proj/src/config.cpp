// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "depthlab/error.hpp"

namespace depthlab {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

KeyValues KeyValues::parse(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      fail(ErrorCode::Config, "config line " + std::to_string(lineno) + ": expected key=value");
    kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KeyValues::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << to_string();
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

std::string KeyValues::to_string() const {
  std::string s;
  for (const auto& [k, v] : values_) s += k + "=" + v + "\n";
  return s;
}

const std::string& KeyValues::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) fail(ErrorCode::Config, "missing config key '" + key + "'");
  return it->second;
}

std::string KeyValues::get_or(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KeyValues::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (it->second.empty() || *end != '\0' || !std::isfinite(v))
    fail(ErrorCode::Config, "config key '" + key + "': not a number: " + it->second);
  return v;
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long v = 0;
  const auto& s = it->second;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    fail(ErrorCode::Config, "config key '" + key + "': not an integer: " + s);
  return v;
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  fail(ErrorCode::Config, "config key '" + key + "': not a boolean: " + it->second);
}

void KeyValues::merge(const KeyValues& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

// One table drives serialization, parsing and the unknown-key check.
#define DEPTHLAB_RUNCONFIG_FIELDS(X)                                                   \
  X(seed, uint) X(height, int) X(width, int) X(n_primitives, int)                      \
  X(norm_lo_pct, dbl) X(norm_hi_pct, dbl)                                              \
  X(patch_size, int) X(threshold, dbl) X(codec_factor, int) X(pool, str)               \
  X(schedule, str) X(timesteps, int) X(beta_start, dbl) X(beta_end, dbl)               \
  X(base_channels, int) X(levels, int) X(time_dim, int) X(lr, dbl)                     \
  X(batch_size, int) X(iterations, int) X(variant, str) X(coarse, str)                 \
  X(ddim_steps, int) X(ensemble, int)                                                  \
  X(blur_sigma, dbl) X(downscale_factor, int) X(quantize_levels, int)                  \
  X(random_affine, boolean) X(affine_scale_lo, dbl) X(affine_scale_hi, dbl)            \
  X(affine_shift_lo, dbl) X(affine_shift_hi, dbl)                                      \
  X(coarse_base_channels, int) X(coarse_levels, int) X(coarse_lr, dbl)                 \
  X(coarse_batch_size, int) X(coarse_iterations, int)

namespace {
std::string to_text(std::uint64_t v) { return std::to_string(v); }
std::string to_text(int v) { return std::to_string(v); }
std::string to_text(double v) { return format_double(v); }
std::string to_text(bool v) { return v ? "true" : "false"; }
std::string to_text(const std::string& v) { return v; }
}  // namespace

KeyValues RunConfig::to_kv() const {
  KeyValues kv;
#define X(name, kind) kv.set(#name, to_text(name));
  DEPTHLAB_RUNCONFIG_FIELDS(X)
#undef X
  return kv;
}

RunConfig RunConfig::from_kv(const KeyValues& kv) {
  static const std::set<std::string> known = {
#define X(name, kind) #name,
      DEPTHLAB_RUNCONFIG_FIELDS(X)
#undef X
  };
  for (const auto& [k, v] : kv.items())
    if (!known.count(k) && k.rfind("meta.", 0) != 0) fail(ErrorCode::Config, "unknown config key '" + k + "'");

  RunConfig c;
  const auto read_uint = [&](const char* key, std::uint64_t fb) {
    if (!kv.has(key)) return fb;
    const std::string& s = kv.get(key);
    std::uint64_t v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
      fail(ErrorCode::Config, std::string("config key '") + key + "': not an unsigned integer: " + s);
    return v;
  };
  const auto read_int = [&](const char* key, int fb) {
    const long long v = kv.get_int(key, fb);
    if (v < -2147483647LL || v > 2147483647LL) fail(ErrorCode::Config, std::string("config key '") + key + "' out of range");
    return static_cast<int>(v);
  };
#define X(name, kind) c.name = read_##kind(#name, c.name);
  const auto read_dbl = [&](const char* key, double fb) { return kv.get_double(key, fb); };
  const auto read_str = [&](const char* key, const std::string& fb) { return kv.get_or(key, fb); };
  const auto read_boolean = [&](const char* key, bool fb) { return kv.get_bool(key, fb); };
  DEPTHLAB_RUNCONFIG_FIELDS(X)
#undef X
  return c;
}

void RunConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) fail(ErrorCode::Config, what);
  };
  require(height > 0 && width > 0, "height and width must be positive");
  require(n_primitives >= 0, "n_primitives must be >= 0");
  require(norm_lo_pct >= 0 && norm_lo_pct < norm_hi_pct && norm_hi_pct <= 100, "need 0 <= norm_lo_pct < norm_hi_pct <= 100");
  require(patch_size > 0 && height % patch_size == 0 && width % patch_size == 0,
          "patch_size " + std::to_string(patch_size) + " must divide the raster size");
  require(threshold > 0, "threshold must be > 0");
  require(codec_factor > 0 && height % codec_factor == 0 && width % codec_factor == 0,
          "codec_factor must divide the raster size");
  require(pool == "max" || pool == "min", "pool must be max or min");
  require(schedule == "scaled_linear" || schedule == "linear", "schedule must be scaled_linear or linear");
  require(timesteps >= 1, "timesteps must be >= 1");
  require(beta_start > 0 && beta_start <= beta_end && beta_end < 1, "need 0 < beta_start <= beta_end < 1");
  require(base_channels > 0 && levels > 0 && time_dim >= 2 && time_dim % 2 == 0, "bad network size");
  require(((height / codec_factor) % (1 << (levels - 1))) == 0 && ((width / codec_factor) % (1 << (levels - 1))) == 0,
          "latent size must be divisible by 2^(levels-1)");
  require(lr > 0 && coarse_lr > 0, "learning rates must be > 0");
  require(batch_size >= 1 && coarse_batch_size >= 1, "batch sizes must be >= 1");
  require(iterations >= 0 && coarse_iterations >= 0, "iterations must be >= 0");
  require(variant == "full" || variant == "no-cond" || variant == "no-align" || variant == "no-mask",
          "variant must be one of full, no-cond, no-align, no-mask");
  require(ddim_steps >= 1 && ddim_steps <= timesteps, "ddim_steps must be in [1, timesteps]");
  require(ensemble >= 1, "ensemble must be >= 1");
  require(blur_sigma >= 0 && downscale_factor >= 1, "bad degradation parameters");
  require(quantize_levels == 0 || quantize_levels >= 2, "quantize_levels must be 0 (off) or >= 2");
  require(affine_scale_lo > 0 && affine_scale_lo <= affine_scale_hi, "affine scale range must be positive");
  require(affine_shift_lo <= affine_shift_hi, "affine shift range inverted");
  require(coarse_base_channels > 0 && coarse_levels > 0, "bad regressor size");
}

}  // namespace depthlab
