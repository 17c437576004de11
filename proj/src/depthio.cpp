// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/depthio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace depthlab {
namespace {

std::vector<double> valid_values(const DepthMap& d) {
  std::vector<double> out;
  out.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.valid(i)) out.push_back(d.values[i]);
  return out;
}

double percentile_inplace(std::vector<double>& v, double pct) {
  const double pos = pct / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo_idx = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi_idx = std::min(lo_idx + 1, v.size() - 1);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo_idx), v.end());
  const double lo = v[lo_idx];
  // The upper neighbour is the minimum of the partition right of lo_idx.
  double hi = lo;
  if (hi_idx != lo_idx)
    hi = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(hi_idx), v.end());
  return lo + (hi - lo) * (pos - static_cast<double>(lo_idx));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) fail(ErrorCode::Io, "read failed: " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot create " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "write failed: " + path.string());
}

// Netpbm-style header tokenizer: whitespace separated, '#' comments.
class HeaderReader {
 public:
  HeaderReader(const std::string& bytes, const std::filesystem::path& path)
      : bytes_(bytes), path_(path) {}

  std::string token() {
    skip_space_and_comments();
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) ++pos_;
    if (start == pos_) fail(ErrorCode::Format, "truncated header in " + path_.string());
    return bytes_.substr(start, pos_ - start);
  }

  long integer() {
    const std::string t = token();
    char* end = nullptr;
    const long v = std::strtol(t.c_str(), &end, 10);
    if (*end != '\0' || v <= 0) fail(ErrorCode::Format, "bad dimension '" + t + "' in " + path_.string());
    return v;
  }

  double real() {
    const std::string t = token();
    char* end = nullptr;
    const double v = std::strtod(t.c_str(), &end);
    if (*end != '\0' || !std::isfinite(v) || v == 0.0)
      fail(ErrorCode::Format, "bad scale '" + t + "' in " + path_.string());
    return v;
  }

  // Exactly one whitespace byte separates the header from the payload.
  std::size_t payload_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_])))
      fail(ErrorCode::Format, "missing header terminator in " + path_.string());
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  const std::filesystem::path& path_;
  std::size_t pos_ = 0;
};

struct PfmRaster {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;  // top-to-bottom, interleaved
};

PfmRaster read_pfm(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  HeaderReader header(bytes, path);
  const std::string magic = header.token();
  PfmRaster r;
  if (magic == "Pf") {
    r.channels = 1;
  } else if (magic == "PF") {
    r.channels = 3;
  } else {
    fail(ErrorCode::Format, "not a PFM file (magic '" + magic + "'): " + path.string());
  }
  const long w = header.integer();
  const long h = header.integer();
  if (w > (1 << 16) || h > (1 << 16)) fail(ErrorCode::Format, "PFM dimensions too large: " + path.string());
  const bool little = header.real() < 0.0;
  const std::size_t offset = header.payload_offset();
  r.width = static_cast<int>(w);
  r.height = static_cast<int>(h);
  const std::size_t row_floats = static_cast<std::size_t>(w) * r.channels;
  const std::size_t count = row_floats * static_cast<std::size_t>(h);
  if (bytes.size() - offset < count * 4) fail(ErrorCode::Format, "truncated PFM payload: " + path.string());

  r.values.resize(count);
  const auto* src = reinterpret_cast<const unsigned char*>(bytes.data() + offset);
  for (long y = 0; y < h; ++y) {
    // File rows run bottom-to-top.
    const std::size_t dst_row = static_cast<std::size_t>(h - 1 - y) * row_floats;
    for (std::size_t k = 0; k < row_floats; ++k) {
      const unsigned char* b = src + (static_cast<std::size_t>(y) * row_floats + k) * 4;
      std::uint32_t u = little ? (std::uint32_t{b[0]} | std::uint32_t{b[1]} << 8 |
                                  std::uint32_t{b[2]} << 16 | std::uint32_t{b[3]} << 24)
                               : (std::uint32_t{b[3]} | std::uint32_t{b[2]} << 8 |
                                  std::uint32_t{b[1]} << 16 | std::uint32_t{b[0]} << 24);
      float f;
      std::memcpy(&f, &u, 4);
      r.values[dst_row + k] = f;
    }
  }
  return r;
}

void write_pfm(const std::filesystem::path& path, int height, int width, int channels,
               const std::vector<float>& values) {
  std::string out = (channels == 1 ? "Pf\n" : "PF\n") + std::to_string(width) + " " +
                    std::to_string(height) + "\n-1.0\n";
  const std::size_t row_floats = static_cast<std::size_t>(width) * channels;
  const std::size_t header = out.size();
  out.resize(header + row_floats * height * 4);
  auto* dst = reinterpret_cast<unsigned char*>(out.data() + header);
  for (int y = 0; y < height; ++y) {
    const std::size_t src_row = static_cast<std::size_t>(height - 1 - y) * row_floats;
    for (std::size_t k = 0; k < row_floats; ++k) {
      std::uint32_t u;
      std::memcpy(&u, &values[src_row + k], 4);
      unsigned char* b = dst + (static_cast<std::size_t>(y) * row_floats + k) * 4;
      b[0] = static_cast<unsigned char>(u);
      b[1] = static_cast<unsigned char>(u >> 8);
      b[2] = static_cast<unsigned char>(u >> 16);
      b[3] = static_cast<unsigned char>(u >> 24);
    }
  }
  write_file(path, out);
}

}  // namespace

double valid_percentile(const DepthMap& d, double pct) {
  std::vector<double> v = valid_values(d);
  if (v.empty()) fail(ErrorCode::EmptyDepth, "depth map has no valid pixel");
  return percentile_inplace(v, pct);
}

std::pair<DepthMap, NormalizationRecord> normalize_depth(const DepthMap& d, double lo_pct,
                                                         double hi_pct) {
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 100.0))
    fail(ErrorCode::Config, "normalize_depth needs 0 <= lo_pct < hi_pct <= 100");
  std::vector<double> v = valid_values(d);
  if (v.empty()) fail(ErrorCode::EmptyDepth, "depth map has no valid pixel");
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  if (*mn == *mx) fail(ErrorCode::DegenerateDepth, "all valid depth values are equal");

  NormalizationRecord rec;
  rec.percentile_based = !(lo_pct == 0.0 && hi_pct == 100.0);
  rec.lo = percentile_inplace(v, lo_pct);
  rec.hi = percentile_inplace(v, hi_pct);
  if (!(rec.hi > rec.lo)) fail(ErrorCode::DegenerateDepth, "normalization percentiles coincide");

  DepthMap out(d.height, d.width, 0.0f, DepthUnits::normalized);
  out.validity = d.validity;
  const double scale = 2.0 / (rec.hi - rec.lo);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d.valid(i)) continue;
    const double y = (static_cast<double>(d.values[i]) - rec.lo) * scale - 1.0;
    out.values[i] = static_cast<float>(std::clamp(y, -1.0, 1.0));
  }
  return {std::move(out), rec};
}

DepthMap denormalize_depth(const DepthMap& d, const NormalizationRecord& rec) {
  if (d.units != DepthUnits::normalized)
    fail(ErrorCode::UnitMismatch, std::string("expected normalized depth, got ") + units_name(d.units));
  if (!(rec.hi > rec.lo)) fail(ErrorCode::Config, "normalization record needs hi > lo");
  DepthMap out = d;
  out.units = DepthUnits::metric;
  const double half = 0.5 * (rec.hi - rec.lo);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!d.valid(i)) continue;
    out.values[i] = static_cast<float>((static_cast<double>(d.values[i]) + 1.0) * half + rec.lo);
  }
  return out;
}

std::filesystem::path validity_sidecar(const std::filesystem::path& pfm_path) {
  std::filesystem::path p = pfm_path;
  p.replace_extension(".valid.pgm");
  return p;
}

DepthMap read_depth_pfm(const std::filesystem::path& path) {
  PfmRaster r = read_pfm(path);
  if (r.channels != 1) fail(ErrorCode::Format, "depth PFM must be grayscale (Pf): " + path.string());
  DepthMap d(r.height, r.width);
  d.values = std::move(r.values);
  const auto sidecar = validity_sidecar(path);
  if (std::filesystem::exists(sidecar)) {
    BinaryMask m = read_pgm_mask(sidecar);
    if (m.height != d.height || m.width != d.width)
      fail(ErrorCode::Format, "validity sidecar shape mismatch: " + sidecar.string());
    d.validity = std::move(m.values);
  }
  return d;
}

void write_depth_pfm(const std::filesystem::path& path, const DepthMap& d) {
  write_pfm(path, d.height, d.width, 1, d.values);
  BinaryMask m(d.height, d.width);
  m.values = d.validity;
  write_pgm_mask(validity_sidecar(path), m);
}

ImageMap read_image_pfm(const std::filesystem::path& path) {
  PfmRaster r = read_pfm(path);
  ImageMap img(r.height, r.width, r.channels);
  img.values = std::move(r.values);
  return img;
}

void write_image_pfm(const std::filesystem::path& path, const ImageMap& img) {
  write_pfm(path, img.height, img.width, img.channels, img.values);
}

BinaryMask read_pgm_mask(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  HeaderReader header(bytes, path);
  if (header.token() != "P5") fail(ErrorCode::Format, "not a binary PGM: " + path.string());
  const long w = header.integer();
  const long h = header.integer();
  const long maxval = header.integer();
  if (maxval > 255) fail(ErrorCode::Format, "16-bit PGM not supported: " + path.string());
  const std::size_t offset = header.payload_offset();
  const std::size_t count = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() - offset < count) fail(ErrorCode::Format, "truncated PGM payload: " + path.string());
  BinaryMask m(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t i = 0; i < count; ++i) m.values[i] = bytes[offset + i] != 0 ? 1 : 0;
  return m;
}

void write_pgm(const std::filesystem::path& path, int height, int width,
               const std::vector<std::uint8_t>& pixels) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  write_file(path, out);
}

void write_pgm_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  std::vector<std::uint8_t> px(mask.values.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = mask.values[i] ? 255 : 0;
  write_pgm(path, mask.height, mask.width, px);
}

}  // namespace depthlab
