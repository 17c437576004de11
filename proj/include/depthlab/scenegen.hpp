// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "depthlab/raster.hpp"

namespace depthlab {

enum class PrimitiveKind : std::uint8_t { plane, sphere, box };

struct PinholeCamera {
  double focal = 0.0;  // pixels; <= 0 means "use the raster width"
  double cx = -1.0;    // < 0 means "raster centre"
  double cy = -1.0;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int n_primitives = 5;
  bool use_plane = true;
  bool use_sphere = true;
  bool use_box = true;
  PinholeCamera camera;

  /// Camera with defaults resolved for this raster size.
  PinholeCamera resolved_camera() const;
  std::string describe() const;
};

using Vec3 = std::array<double, 3>;

/// One analytic object. Field use depends on `kind`:
///   sphere: center, radius
///   box:    center, half_extent, (cos_yaw, sin_yaw) rotation about the y axis
///   plane:  center, normal, tangent_u/tangent_v, half_extent[0..1] along them
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::sphere;
  Vec3 center{0.0, 0.0, 5.0};
  double radius = 1.0;
  Vec3 half_extent{0.5, 0.5, 0.5};
  double cos_yaw = 1.0;
  double sin_yaw = 0.0;
  Vec3 normal{0.0, 0.0, -1.0};
  Vec3 tangent_u{1.0, 0.0, 0.0};
  Vec3 tangent_v{0.0, 1.0, 0.0};
  Vec3 albedo{0.8, 0.8, 0.8};
};

/// Fully explicit scene: a fronto-parallel background plane plus primitives.
struct Scene {
  int height = 64;
  int width = 64;
  PinholeCamera camera;  // resolved
  double background_depth = 10.0;
  Vec3 background_albedo{0.5, 0.5, 0.5};
  Vec3 light_dir{-0.38, -0.56, -0.74};  // unit vector toward the light
  double ambient = 0.25;
  std::vector<Primitive> primitives;
};

struct SceneSample {
  ImageMap image;
  DepthMap depth;  // metric, z-depth along the optical axis, all valid
};

Scene sample_scene(const SceneSpec& spec, std::uint64_t index);
SceneSample render_scene(const Scene& scene);
SceneSample generate_sample(const SceneSpec& spec, std::uint64_t index);

struct ManifestEntry {
  std::string image;  // relative to the manifest directory
  std::string depth;
};

struct Manifest {
  std::filesystem::path root;  // directory holding the manifest
  std::string header;          // "# spec: ..." line
  std::vector<ManifestEntry> entries;
};

/// Renders `count` samples into `out_dir` with a "manifest.txt" index.
/// Throws IoError if `out_dir` is non-empty and `force` is false.
Manifest generate_split(const SceneSpec& spec, int count, const std::filesystem::path& out_dir,
                        bool force = false);

/// Accepts either the manifest file or the directory containing "manifest.txt".
Manifest read_manifest(const std::filesystem::path& path);

struct LoadedPair {
  ImageMap image;
  DepthMap depth;
};

std::vector<LoadedPair> load_pairs(const Manifest& manifest);

}  // namespace depthlab
