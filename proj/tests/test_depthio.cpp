// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <fstream>

#include "depthlab/depthio.hpp"
#include "support.hpp"

using namespace depthlab;
using testing::code_of;
using testing::ramp;

namespace {

void write_bytes(const std::filesystem::path& p, const std::string& header, const std::vector<float>& payload) {
  std::ofstream os(p, std::ios::binary);
  os << header;
  os.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * 4));
}

}  // namespace

TEST_CASE("normalize: full-range ramp maps to [-1, 1] with exact endpoints") {
  const DepthMap d = ramp(11, 1, 0.0, 10.0);
  const auto [n, rec] = normalize_depth(d, 0.0, 100.0);
  CHECK(rec.lo == 0.0);
  CHECK(rec.hi == 10.0);
  CHECK(n.units == DepthUnits::normalized);
  for (std::size_t i = 0; i < n.size(); ++i) CHECK(n.values[i] == doctest::Approx(-1.0 + 0.2 * i).epsilon(1e-6));
}

TEST_CASE("normalize: 2/98 percentiles agree with a sort-based oracle") {
  const DepthMap d = ramp(8, 8, 0.0, 10.0);
  const std::vector<double> v(d.values.begin(), d.values.end());
  const double lo = testing::sorted_percentile(v, 2.0), hi = testing::sorted_percentile(v, 98.0);
  const auto [n, rec] = normalize_depth(d, 2.0, 98.0);
  CHECK(rec.lo == doctest::Approx(lo).epsilon(1e-12));
  CHECK(rec.hi == doctest::Approx(hi).epsilon(1e-12));
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double want = std::clamp(2.0 * (d.values[i] - lo) / (hi - lo) - 1.0, -1.0, 1.0);
    CHECK(n.values[i] == doctest::Approx(want).epsilon(1e-6));
  }
}

TEST_CASE("normalize: degenerate and empty inputs") {
  CHECK(code_of([] { normalize_depth(DepthMap(4, 4, 5.0f)); }) == ErrorCode::DegenerateDepth);
  DepthMap none(4, 4, 1.0f);
  std::fill(none.validity.begin(), none.validity.end(), 0);
  CHECK(code_of([&] { normalize_depth(none); }) == ErrorCode::EmptyDepth);
  CHECK(code_of([] { normalize_depth(ramp(4, 4, 0, 1), 50.0, 10.0); }) == ErrorCode::Config);
}

TEST_CASE("normalize: invalid pixels become zero and stay invalid") {
  DepthMap d = ramp(4, 4, 1.0, 4.0);
  d.validity[3] = 0;
  d.values[3] = 1e9f;
  const auto [n, rec] = normalize_depth(d, 0.0, 100.0);
  CHECK(n.values[3] == 0.0f);
  CHECK(n.validity[3] == 0);
  CHECK(rec.hi == 4.0);
}

TEST_CASE("normalize: output stays within [-1, 1] for arbitrary inputs") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    DepthMap d = testing::random_depth(8, 8, seed, -50.0, 50.0);
    d.values[seed % 64] = 1e6f;  // outlier
    Rng rng(seed);
    const double lo = rng.uniform(0.0, 40.0), hi = lo + rng.uniform(1.0, 60.0);
    const auto n = normalize_depth(d, lo, std::min(hi, 100.0)).first;
    for (float v : n.values) REQUIRE((v >= -1.0f && v <= 1.0f));
  }
}

TEST_CASE("denormalize: examples and round trip") {
  DepthMap z(1, 2, 0.0f, DepthUnits::normalized);
  z.values = {0.0f, 1.0f};
  const DepthMap a = denormalize_depth(z, {2.0, 6.0, true});
  CHECK(a.values[0] == doctest::Approx(4.0));
  const DepthMap b = denormalize_depth(z, {-3.0, 3.0, true});
  CHECK(b.values[1] == doctest::Approx(3.0));
  CHECK(a.units == DepthUnits::metric);

  const DepthMap d = ramp(8, 8, 0.5, 9.5);
  const auto [n, rec] = normalize_depth(d, 0.0, 100.0);
  const DepthMap back = denormalize_depth(n, rec);
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(std::abs(back.values[i] - d.values[i]) <= 1e-6 * 10);

  CHECK(code_of([&] { denormalize_depth(d, rec); }) == ErrorCode::UnitMismatch);
}

TEST_CASE("pfm: random raster round trip is bit-identical, validity included") {
  testing::TempDir dir("pfm_roundtrip");
  DepthMap d = testing::random_depth(4, 4, 3, -1e3, 1e3);
  d.values[5] = std::numeric_limits<float>::denorm_min();
  d.validity[7] = 0;
  write_depth_pfm(dir.path / "d.pfm", d);
  CHECK(std::filesystem::exists(validity_sidecar(dir.path / "d.pfm")));
  const DepthMap r = read_depth_pfm(dir.path / "d.pfm");
  REQUIRE(r.same_shape(d));
  CHECK(std::memcmp(r.values.data(), d.values.data(), d.size() * 4) == 0);
  CHECK(r.validity == d.validity);
}

TEST_CASE("pfm: hand-written little-endian header decodes, rows bottom-to-top") {
  testing::TempDir dir("pfm_header");
  std::vector<float> payload(16);
  for (int i = 0; i < 16; ++i) payload[static_cast<std::size_t>(i)] = static_cast<float>(i);
  write_bytes(dir.path / "h.pfm", "Pf\n4 4\n-1.0\n", payload);
  const DepthMap d = read_depth_pfm(dir.path / "h.pfm");
  REQUIRE(d.height == 4);
  REQUIRE(d.width == 4);
  // The first stored row is the bottom image row.
  CHECK(d.at(3, 0) == 0.0f);
  CHECK(d.at(0, 3) == 15.0f);
  CHECK(d.count_valid() == 16);
}

TEST_CASE("pfm: big-endian scale sign is honoured") {
  testing::TempDir dir("pfm_be");
  std::vector<float> payload(4);
  for (int i = 0; i < 4; ++i) {
    const float v = 1.5f * static_cast<float>(i + 1);
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    u = __builtin_bswap32(u);
    std::memcpy(&payload[static_cast<std::size_t>(i)], &u, 4);
  }
  write_bytes(dir.path / "be.pfm", "Pf\n2 2\n1.0\n", payload);
  const DepthMap d = read_depth_pfm(dir.path / "be.pfm");
  CHECK(d.at(1, 0) == 1.5f);
  CHECK(d.at(0, 1) == 6.0f);
}

TEST_CASE("pfm: malformed files") {
  testing::TempDir dir("pfm_bad");
  write_bytes(dir.path / "short.pfm", "Pf\n4 4\n-1.0\n", std::vector<float>(15));
  CHECK(code_of([&] { read_depth_pfm(dir.path / "short.pfm"); }) == ErrorCode::Format);
  write_bytes(dir.path / "magic.pfm", "P7\n4 4\n-1.0\n", std::vector<float>(16));
  CHECK(code_of([&] { read_depth_pfm(dir.path / "magic.pfm"); }) == ErrorCode::Format);
  write_bytes(dir.path / "scale.pfm", "Pf\n4 4\n0\n", std::vector<float>(16));
  CHECK(code_of([&] { read_depth_pfm(dir.path / "scale.pfm"); }) == ErrorCode::Format);
  write_bytes(dir.path / "color.pfm", "PF\n2 2\n-1.0\n", std::vector<float>(12));
  CHECK(code_of([&] { read_depth_pfm(dir.path / "color.pfm"); }) == ErrorCode::Format);
  CHECK(code_of([&] { read_depth_pfm(dir.path / "missing.pfm"); }) == ErrorCode::Io);
}

TEST_CASE("pfm: color image round trip") {
  testing::TempDir dir("pfm_color");
  ImageMap img(3, 5, 3);
  Rng rng(9);
  for (auto& v : img.values) v = static_cast<float>(rng.uniform());
  write_image_pfm(dir.path / "c.pfm", img);
  const ImageMap r = read_image_pfm(dir.path / "c.pfm");
  CHECK(r.channels == 3);
  CHECK(std::memcmp(r.values.data(), img.values.data(), img.values.size() * 4) == 0);
}

TEST_CASE("pgm mask round trip") {
  testing::TempDir dir("pgm");
  BinaryMask m(3, 4, 0);
  m.values[2] = m.values[11] = 1;
  write_pgm_mask(dir.path / "m.pgm", m);
  const BinaryMask r = read_pgm_mask(dir.path / "m.pgm");
  CHECK(r.values == m.values);
}
