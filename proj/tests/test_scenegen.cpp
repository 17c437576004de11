// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>

#include "depthlab/scenegen.hpp"
#include "support.hpp"

using namespace depthlab;
using testing::code_of;

namespace {

bool bit_equal(const SceneSample& a, const SceneSample& b) {
  return a.depth.values.size() == b.depth.values.size() &&
         std::memcmp(a.depth.values.data(), b.depth.values.data(), a.depth.values.size() * 4) == 0 &&
         std::memcmp(a.image.values.data(), b.image.values.data(), a.image.values.size() * 4) == 0;
}

}  // namespace

TEST_CASE("empty scene renders the background plane") {
  SceneSpec spec;
  spec.seed = 11;
  spec.n_primitives = 0;
  const Scene scene = sample_scene(spec, 4);
  const SceneSample s = render_scene(scene);
  for (float v : s.depth.values) CHECK(v == static_cast<float>(scene.background_depth));
}

TEST_CASE("single sphere matches the closed-form ray intersection") {
  Scene scene;
  scene.height = scene.width = 64;
  scene.camera = SceneSpec{}.resolved_camera();
  scene.background_depth = 20.0;
  Primitive sphere;
  sphere.kind = PrimitiveKind::sphere;
  sphere.center = {0.0, 0.0, 6.0};
  sphere.radius = 1.5;
  scene.primitives = {sphere};
  const SceneSample s = render_scene(scene);

  const double f = scene.camera.focal, z = sphere.center[2], r = sphere.radius;
  double min_depth = HUGE_VAL;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const double u = (x + 0.5 - scene.camera.cx) / f, v = (y + 0.5 - scene.camera.cy) / f;
      // |t (u, v, 1) - (0, 0, z)|^2 = r^2, nearest root.
      const double a = u * u + v * v + 1.0, b = -2.0 * z, c = z * z - r * r;
      const double disc = b * b - 4.0 * a * c;
      const double want = disc >= 0.0 ? (-b - std::sqrt(disc)) / (2.0 * a) : scene.background_depth;
      CHECK(s.depth.at(y, x) == doctest::Approx(want).epsilon(1e-6));
      min_depth = std::min(min_depth, static_cast<double>(s.depth.at(y, x)));
    }
  // Nearest pixel centre sits half a pixel off the axis in both directions.
  const double off = std::hypot(0.5, 0.5) / f;
  CHECK(min_depth >= z - r - 1e-6);
  CHECK(min_depth <= z - std::sqrt(r * r - (z * off) * (z * off)) + 1e-6);
}

TEST_CASE("generation is deterministic in (spec, index)") {
  SceneSpec spec;
  spec.seed = 42;
  CHECK(bit_equal(generate_sample(spec, 3), generate_sample(spec, 3)));
  CHECK_FALSE(bit_equal(generate_sample(spec, 3), generate_sample(spec, 4)));
  SceneSpec other = spec;
  other.seed = 43;
  CHECK_FALSE(bit_equal(generate_sample(spec, 3), generate_sample(other, 3)));
}

TEST_CASE("depth is positive and finite, images lie in [0, 1]") {
  SceneSpec spec;
  spec.seed = 5;
  for (std::uint64_t i = 0; i < 40; ++i) {
    const SceneSample s = generate_sample(spec, i);
    CHECK(s.depth.count_valid() == s.depth.size());
    CHECK(s.depth.units == DepthUnits::metric);
    for (float v : s.depth.values) REQUIRE((std::isfinite(v) && v > 0.0f));
    for (float v : s.image.values) REQUIRE((v >= 0.0f && v <= 1.0f));
  }
}

TEST_CASE("scenes contain depth structure from primitives") {
  SceneSpec spec;
  spec.seed = 8;
  int varied = 0;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const SceneSample s = generate_sample(spec, i);
    const auto [lo, hi] = std::minmax_element(s.depth.values.begin(), s.depth.values.end());
    varied += *hi - *lo > 1.0f;
  }
  CHECK(varied >= 18);
}

TEST_CASE("generate_split writes pairs, a manifest, and refuses to clobber") {
  testing::TempDir dir("split");
  SceneSpec spec;
  spec.seed = 2;
  spec.height = spec.width = 16;
  const Manifest m = generate_split(spec, 1, dir.path / "one");
  CHECK(m.entries.size() == 1);
  const std::string text = testing::slurp(dir.path / "one" / "manifest.txt");
  CHECK(text.rfind("# spec: ", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
  CHECK(text.find("000000_image.pfm\t000000_depth.pfm") != std::string::npos);

  CHECK(code_of([&] { generate_split(spec, 1, dir.path / "one"); }) == ErrorCode::Io);
  CHECK(code_of([&] { generate_split(spec, 0, dir.path / "zero"); }) == ErrorCode::Config);

  const Manifest three = generate_split(spec, 3, dir.path / "three");
  const std::string before = testing::slurp(dir.path / "three" / "000002_depth.pfm");
  generate_split(spec, 3, dir.path / "three", true);
  CHECK(testing::slurp(dir.path / "three" / "000002_depth.pfm") == before);

  const auto pairs = load_pairs(read_manifest(dir.path / "three"));
  REQUIRE(pairs.size() == 3);
  const SceneSample s = generate_sample(spec, 2);
  CHECK(std::memcmp(pairs[2].depth.values.data(), s.depth.values.data(), s.depth.values.size() * 4) == 0);
  CHECK(std::memcmp(pairs[2].image.values.data(), s.image.values.data(), s.image.values.size() * 4) == 0);
}
