// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

// Built with -ffp-contract=off: rendering must stay byte-identical across
// compilers, so only IEEE-754 +, -, *, / and sqrt appear here.

#include "depthlab/scenegen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "depthlab/depthio.hpp"
#include "depthlab/rng.hpp"

namespace depthlab {
namespace {

constexpr double kNearClip = 0.1;
constexpr double kNoHit = std::numeric_limits<double>::infinity();

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

Vec3 scale(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}

Vec3 normalized(const Vec3& a) { return scale(a, 1.0 / std::sqrt(dot(a, a))); }

struct Hit {
  double t = kNoHit;
  Vec3 normal{0.0, 0.0, -1.0};
  Vec3 albedo{0.0, 0.0, 0.0};
};

// Rays leave the origin along d = (u, v, 1), so the ray parameter t is the
// optical-axis depth of the hit point.
double intersect_sphere(const Primitive& p, const Vec3& d, Vec3& normal) {
  const double a = dot(d, d);
  const double half_b = dot(d, p.center);
  const double c = dot(p.center, p.center) - p.radius * p.radius;
  const double disc = half_b * half_b - a * c;
  if (disc < 0.0) return kNoHit;
  const double root = std::sqrt(disc);
  double t = (half_b - root) / a;
  if (t < kNearClip) t = (half_b + root) / a;
  if (t < kNearClip) return kNoHit;
  normal = scale(sub(scale(d, t), p.center), 1.0 / p.radius);
  return t;
}

// Box axes in camera coordinates: yaw rotates x/z about the y axis.
void box_axes(const Primitive& p, Vec3& ax, Vec3& ay, Vec3& az) {
  ax = {p.cos_yaw, 0.0, -p.sin_yaw};
  ay = {0.0, 1.0, 0.0};
  az = {p.sin_yaw, 0.0, p.cos_yaw};
}

double intersect_box(const Primitive& p, const Vec3& d, Vec3& normal) {
  Vec3 axes[3];
  box_axes(p, axes[0], axes[1], axes[2]);
  const Vec3 o = scale(p.center, -1.0);  // origin relative to the box centre
  double t_enter = -kNoHit, t_exit = kNoHit;
  int enter_axis = 0;
  double enter_sign = 1.0;
  for (int k = 0; k < 3; ++k) {
    const double ok = dot(o, axes[k]);
    const double dk = dot(d, axes[k]);
    const double h = p.half_extent[static_cast<std::size_t>(k)];
    if (dk == 0.0) {
      if (ok < -h || ok > h) return kNoHit;
      continue;
    }
    double t0 = (-h - ok) / dk;
    double t1 = (h - ok) / dk;
    double sign = -1.0;  // entering through the -h face
    if (t0 > t1) {
      std::swap(t0, t1);
      sign = 1.0;
    }
    if (t0 > t_enter) {
      t_enter = t0;
      enter_axis = k;
      enter_sign = sign;
    }
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || t_enter < kNearClip) return kNoHit;
  normal = scale(axes[enter_axis], enter_sign);
  return t_enter;
}

double intersect_quad(const Primitive& p, const Vec3& d, Vec3& normal) {
  const double denom = dot(p.normal, d);
  if (denom == 0.0) return kNoHit;
  const double t = dot(p.normal, p.center) / denom;
  if (t < kNearClip) return kNoHit;
  const Vec3 rel = sub(scale(d, t), p.center);
  if (std::fabs(dot(rel, p.tangent_u)) > p.half_extent[0]) return kNoHit;
  if (std::fabs(dot(rel, p.tangent_v)) > p.half_extent[1]) return kNoHit;
  normal = p.normal;
  return t;
}

Vec3 random_albedo(Rng& rng, double lo, double hi) {
  const double r = rng.uniform(lo, hi);
  const double g = rng.uniform(lo, hi);
  const double b = rng.uniform(lo, hi);
  return {r, g, b};
}

}  // namespace

PinholeCamera SceneSpec::resolved_camera() const {
  PinholeCamera c = camera;
  if (c.focal <= 0.0) c.focal = static_cast<double>(width);
  if (c.cx < 0.0) c.cx = 0.5 * width;
  if (c.cy < 0.0) c.cy = 0.5 * height;
  return c;
}

std::string SceneSpec::describe() const {
  const PinholeCamera c = resolved_camera();
  std::ostringstream os;
  os << "seed=" << seed << " height=" << height << " width=" << width
     << " n_primitives=" << n_primitives << " kinds=";
  std::string kinds;
  if (use_plane) kinds += "plane,";
  if (use_sphere) kinds += "sphere,";
  if (use_box) kinds += "box,";
  if (!kinds.empty()) kinds.pop_back();
  os << (kinds.empty() ? "none" : kinds) << " focal=" << c.focal << " cx=" << c.cx << " cy=" << c.cy;
  return os.str();
}

Scene sample_scene(const SceneSpec& spec, std::uint64_t index) {
  if (spec.height <= 0 || spec.width <= 0) fail(ErrorCode::Config, "scene raster must be positive");
  Rng rng(derive_key(spec.seed, index));
  Scene scene;
  scene.height = spec.height;
  scene.width = spec.width;
  scene.camera = spec.resolved_camera();
  scene.background_depth = rng.uniform(8.0, 12.0);
  const double grey = rng.uniform(0.35, 0.75);
  scene.background_albedo = {grey, grey, grey};

  std::vector<PrimitiveKind> kinds;
  if (spec.use_plane) kinds.push_back(PrimitiveKind::plane);
  if (spec.use_sphere) kinds.push_back(PrimitiveKind::sphere);
  if (spec.use_box) kinds.push_back(PrimitiveKind::box);
  if (kinds.empty()) return scene;

  // Half-width of the view frustum per unit depth.
  const double span_x = 0.5 * spec.width / scene.camera.focal;
  const double span_y = 0.5 * spec.height / scene.camera.focal;
  for (int k = 0; k < spec.n_primitives; ++k) {
    Primitive p;
    p.kind = kinds[rng.below(kinds.size())];
    const double z = rng.uniform(3.0, scene.background_depth - 2.0);
    p.center = {rng.uniform(-0.8, 0.8) * span_x * z, rng.uniform(-0.8, 0.8) * span_y * z, z};
    const double size = z * rng.uniform(0.08, 0.2);
    p.albedo = random_albedo(rng, 0.2, 1.0);
    switch (p.kind) {
      case PrimitiveKind::sphere:
        p.radius = size;
        break;
      case PrimitiveKind::box: {
        p.half_extent = {size * rng.uniform(0.6, 1.2), size * rng.uniform(0.6, 1.2),
                         size * rng.uniform(0.6, 1.2)};
        const double u = rng.uniform(-1.0, 1.0);
        const double v = rng.uniform(0.2, 1.0);
        const double n = std::sqrt(u * u + v * v);
        p.cos_yaw = v / n;
        p.sin_yaw = u / n;
        break;
      }
      case PrimitiveKind::plane: {
        p.normal = normalized({rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), -1.0});
        p.tangent_u = normalized(cross({0.0, 1.0, 0.0}, p.normal));
        p.tangent_v = cross(p.normal, p.tangent_u);
        p.half_extent = {size * rng.uniform(1.0, 2.0), size * rng.uniform(1.0, 2.0), 0.0};
        break;
      }
    }
    scene.primitives.push_back(p);
  }
  return scene;
}

SceneSample render_scene(const Scene& scene) {
  SceneSample out{ImageMap(scene.height, scene.width, 3), DepthMap(scene.height, scene.width)};
  const PinholeCamera& cam = scene.camera;
  for (int y = 0; y < scene.height; ++y) {
    for (int x = 0; x < scene.width; ++x) {
      const Vec3 d{(x + 0.5 - cam.cx) / cam.focal, (y + 0.5 - cam.cy) / cam.focal, 1.0};
      Hit best;
      best.t = scene.background_depth;
      best.normal = {0.0, 0.0, -1.0};
      best.albedo = scene.background_albedo;
      for (const Primitive& p : scene.primitives) {
        Vec3 n;
        double t = kNoHit;
        switch (p.kind) {
          case PrimitiveKind::sphere: t = intersect_sphere(p, d, n); break;
          case PrimitiveKind::box: t = intersect_box(p, d, n); break;
          case PrimitiveKind::plane: t = intersect_quad(p, d, n); break;
        }
        if (t < best.t) {
          best.t = t;
          best.normal = n;
          best.albedo = p.albedo;
        }
      }
      // Two-sided surfaces: shade the side facing the camera.
      Vec3 n = best.normal;
      if (dot(n, d) > 0.0) n = scale(n, -1.0);
      const double lambert = std::max(0.0, dot(n, scene.light_dir));
      const double shade = scene.ambient + (1.0 - scene.ambient) * lambert;
      for (int c = 0; c < 3; ++c)
        out.image.at(y, x, c) =
            static_cast<float>(std::clamp(best.albedo[static_cast<std::size_t>(c)] * shade, 0.0, 1.0));
      out.depth.at(y, x) = static_cast<float>(best.t);
    }
  }
  return out;
}

SceneSample generate_sample(const SceneSpec& spec, std::uint64_t index) {
  return render_scene(sample_scene(spec, index));
}

Manifest generate_split(const SceneSpec& spec, int count, const std::filesystem::path& out_dir,
                        bool force) {
  namespace fs = std::filesystem;
  if (count < 1) fail(ErrorCode::Config, "generate_split: count must be >= 1");
  std::error_code ec;
  if (fs::exists(out_dir, ec)) {
    if (!fs::is_directory(out_dir, ec)) fail(ErrorCode::Io, "not a directory: " + out_dir.string());
    if (!fs::is_empty(out_dir, ec) && !force)
      fail(ErrorCode::Io, "output directory not empty (use --force): " + out_dir.string());
  }
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create " + out_dir.string() + ": " + ec.message());

  Manifest m;
  m.root = out_dir;
  m.header = "# spec: " + spec.describe() + " count=" + std::to_string(count);
  std::ofstream manifest(out_dir / "manifest.txt", std::ios::binary | std::ios::trunc);
  if (!manifest) fail(ErrorCode::Io, "cannot write manifest in " + out_dir.string());
  manifest << m.header << "\n";
  for (int i = 0; i < count; ++i) {
    char stem[32];
    std::snprintf(stem, sizeof(stem), "%06d", i);
    ManifestEntry e{std::string(stem) + "_image.pfm", std::string(stem) + "_depth.pfm"};
    const SceneSample s = generate_sample(spec, static_cast<std::uint64_t>(i));
    write_image_pfm(out_dir / e.image, s.image);
    write_depth_pfm(out_dir / e.depth, s.depth);
    manifest << e.image << "\t" << e.depth << "\n";
    m.entries.push_back(std::move(e));
  }
  if (!manifest) fail(ErrorCode::Io, "manifest write failed in " + out_dir.string());
  return m;
}

Manifest read_manifest(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  const fs::path file = fs::is_directory(path) ? path / "manifest.txt" : path;
  std::ifstream in(file);
  if (!in) fail(ErrorCode::Io, "cannot open manifest " + file.string());
  Manifest m;
  m.root = file.parent_path();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (m.header.empty()) m.header = line;
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorCode::Format, "bad manifest line: " + line);
    m.entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  return m;
}

std::vector<LoadedPair> load_pairs(const Manifest& manifest) {
  std::vector<LoadedPair> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries)
    out.push_back({read_image_pfm(manifest.root / e.image), read_depth_pfm(manifest.root / e.depth)});
  return out;
}

}  // namespace depthlab
