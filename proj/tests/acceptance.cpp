// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.
//
//   depthlab_acceptance [--reuse DIR] [--quick]
//
// --quick skips the training criteria (7-10). --reuse keeps trained checkpoints in DIR and reloads them on later runs
// when their recorded configuration matches; without it everything is
// trained from scratch in a temporary directory.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <map>
#include <optional>
#include <string>

#include "cli_support.hpp"
#include "depthlab/align.hpp"
#include "depthlab/checkpoint.hpp"
#include "depthlab/depthio.hpp"
#include "depthlab/diffusion.hpp"
#include "depthlab/eval.hpp"
#include "depthlab/maskgen.hpp"
#include "support.hpp"

using namespace depthlab;
namespace fs = std::filesystem;

namespace {

// Desk-scale ablation protocol.
constexpr int kTrainPairs = 400;
constexpr int kTestPairs = 32;
constexpr int kIterations = 2000;
constexpr std::uint64_t kTrainSceneSeed = 1;
constexpr std::uint64_t kTestSceneSeed = 2;

int g_failures = 0;

void report(int id, const char* name, bool pass, const std::string& detail) {
  std::printf("criterion %2d [%s]: %s  %s\n", id, name, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<LoadedPair> scenes(std::uint64_t seed, int count, int size) {
  SceneSpec spec;
  spec.seed = seed;
  spec.height = spec.width = size;
  std::vector<LoadedPair> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    auto s = generate_sample(spec, static_cast<std::uint64_t>(i));
    out.push_back({std::move(s.image), std::move(s.depth)});
  }
  return out;
}

// ------------------------------------------------------------------ 1

void alignment_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst_param = 0.0, worst_normal = 0.0;
  for (int k = 0; k < 100; ++k) {
    const DepthMap src = testing::random_depth(16, 16, derive_key(11, k), -3.0, 3.0);
    DepthMap dst = src;
    Rng rng(derive_key(12, k));
    const double s = rng.uniform(-4.0, 4.0), b = rng.uniform(-10.0, 10.0), noise = rng.uniform(0.0, 2.0);
    for (auto& v : dst.values) v = static_cast<float>(s * v + b + noise * rng.normal());
    const AffineFit fit = fit_affine(src, dst);
    const auto [gs, gb] = testing::grid_search_affine(src, dst);
    worst_param = std::max({worst_param, std::abs(fit.s - gs), std::abs(fit.b - gb)});
    // Normal equations: residual orthogonal to the source and to the constant.
    double rx = 0.0, r1 = 0.0, sx = 0.0, s1 = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      const double x = src.values[i], r = fit.s * x + fit.b - dst.values[i];
      rx += r * x;
      r1 += r;
      sx += std::abs(x * dst.values[i]) + std::abs(fit.s * x * x) + std::abs(fit.b * x);
      s1 += std::abs(dst.values[i]) + std::abs(fit.s * x) + std::abs(fit.b);
    }
    worst_normal = std::max({worst_normal, std::abs(rx) / sx, std::abs(r1) / s1});
  }
  const double secs = seconds_since(t0);
  report(1, "alignment oracle", worst_param <= 1e-4 && worst_normal <= 1e-6 && secs < 10.0,
         "max |param - grid| " + fmt("%.2e", worst_param) + ", max normal-equation residual " +
             fmt("%.2e", worst_normal) + " (relative), " + fmt("%.2f", secs) + " s");
}

// ------------------------------------------------------------------ 2

void velocity_algebra() {
  const NoiseSchedule sched = make_schedule(ScheduleKind::scaled_linear, 1000, 0.00085, 0.012);
  double worst_z0 = 0.0, worst_eps = 0.0;
  Rng pick(21);
  for (int k = 0; k < 1000; ++k) {
    LatentTensor z0(1, 8, 8), eps(1, 8, 8);
    Rng rng(derive_key(22, k));
    for (auto& v : z0.values) v = static_cast<float>(rng.normal());
    for (auto& v : eps.values) v = static_cast<float>(rng.normal());
    const int t = 1 + static_cast<int>(pick.uniform() * 1000.0) % 1000;
    const LatentTensor zt = add_noise(z0, eps, t, sched);
    const LatentTensor v = v_target(z0, eps, t, sched);
    worst_z0 = std::max(worst_z0, testing::rms_diff(z0_from_v(zt, v, t, sched).values, z0.values));
    worst_eps = std::max(worst_eps, testing::rms_diff(eps_from_v(zt, v, t, sched).values, eps.values));
  }
  report(2, "v-prediction algebra", worst_z0 <= 1e-6 && worst_eps <= 1e-6,
         "max RMS z0 " + fmt("%.2e", worst_z0) + ", eps " + fmt("%.2e", worst_eps) + " over 1000 triples");
}

// ------------------------------------------------------------------ 3

bool masks_equal(const BinaryMask& a, const BinaryMask& b) { return a.values == b.values; }

void masking_semantics() {
  int monotone = 0, symmetric = 0, reflexive = 0, latent = 0;
  const int patch_sizes[3] = {2, 4, 8};
  for (int k = 0; k < 1000; ++k) {
    Rng rng(derive_key(31, k));
    const int w = patch_sizes[k % 3];
    DepthMap a(16, 16, 0.0f, DepthUnits::normalized), b = a;
    const double spread = rng.uniform(0.0, 0.4);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.values[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
      b.values[i] = static_cast<float>(a.values[i] + spread * rng.normal());
    }
    const double eta1 = rng.uniform(0.01, 0.3), eta2 = eta1 + rng.uniform(0.0, 0.3);
    MaskConfig c1{w, eta1, 1, PoolMode::max}, c2{w, eta2, 1, PoolMode::max};
    const PatchMask m1 = build_pixel_mask(a, b, c1), m2 = build_pixel_mask(a, b, c2);
    bool mono = true;
    for (std::size_t i = 0; i < m1.values.size(); ++i) mono &= m1.values[i] <= m2.values[i];
    monotone += mono;
    symmetric += masks_equal(m1, build_pixel_mask(b, a, c1));
    reflexive += build_pixel_mask(a, a, c1).count_ones() == a.size();

    // With f = w each patch is one latent cell: the latent mask is the
    // per-patch test itself.
    MaskConfig cf{w, eta1, w, PoolMode::max};
    const LatentMask lm = downscale_mask(build_pixel_mask(a, b, cf), w, PoolMode::max);
    bool same = lm.height == 16 / w && lm.width == 16 / w;
    for (int py = 0; same && py < 16 / w; ++py)
      for (int px = 0; px < 16 / w; ++px) {
        double d2 = 0.0;
        for (int y = 0; y < w; ++y)
          for (int x = 0; x < w; ++x) {
            const double r = static_cast<double>(a.at(py * w + y, px * w + x)) - b.at(py * w + y, px * w + x);
            d2 += r * r;
          }
        same &= lm.at(py, px) == (std::sqrt(d2) <= w * eta1 ? 1 : 0);
      }
    latent += same;
  }
  // Exact boundary: w = 8, eta = 0.25, one pixel off by 2 gives Dist = 2 = w * eta.
  DepthMap a(8, 8, 0.0f, DepthUnits::normalized), b = a, c = a;
  b.values[9] = 2.0f;
  c.values[9] = 2.0009765625f;
  const MaskConfig edge{8, 0.25, 1, PoolMode::max};
  const bool kept = build_pixel_mask(a, b, edge).count_ones() == 64;
  const bool dropped = build_pixel_mask(a, c, edge).count_ones() == 0;
  report(3, "masking semantics",
         monotone == 1000 && symmetric == 1000 && reflexive == 1000 && latent == 1000 && kept && dropped,
         "monotone " + std::to_string(monotone) + "/1000, symmetric " + std::to_string(symmetric) +
             ", reflexive " + std::to_string(reflexive) + ", w=f latent " + std::to_string(latent) +
             ", boundary kept " + (kept ? "yes" : "no") + ", just-above dropped " + (dropped ? "yes" : "no"));
}

// ------------------------------------------------------------------ 4

void gradient_check() {
  nn::UNetConfig cfg;
  cfg.in_channels = 3;
  cfg.out_channels = 1;
  cfg.base_channels = 4;
  cfg.levels = 2;
  cfg.time_dim = 8;
  cfg.max_groups = 2;
  cfg.zero_init_output = false;
  nn::UNet<double> net(cfg, 41);
  nn::Tensor<double> input(2, 3, 8, 8), target(2, 1, 8, 8), mask(2, 1, 8, 8);
  Rng rng(42);
  for (auto& v : input.data) v = rng.normal();
  for (auto& v : target.data) v = rng.normal();
  for (auto& v : mask.data) v = rng.uniform() < 0.6 ? 1.0 : 0.0;
  const int ts[2] = {5, 700};
  const auto loss_of = [&](nn::Tape<double>* tape) { return nn::masked_mse(tape, net.forward(tape, input, ts), target, mask); };

  // The tape loss is the masked velocity loss: check the forward value.
  const nn::Tensor<double> pred = net.forward(nullptr, input, ts)->value;
  double mean_of_samples = 0.0;
  for (int n = 0; n < 2; ++n) {
    LatentTensor vh(1, 8, 8), vt(1, 8, 8);
    LatentMask m(8, 8);
    for (int i = 0; i < 64; ++i) {
      vh.values[i] = static_cast<float>(pred.at(n, 0)[i]);
      vt.values[i] = static_cast<float>(target.at(n, 0)[i]);
      m.values[i] = mask.at(n, 0)[i] != 0.0;
    }
    mean_of_samples += masked_v_loss(vh, vt, m) / 2.0;
  }
  const double tape_loss = loss_of(nullptr)->value.data[0];
  const bool forward_ok = std::abs(tape_loss - mean_of_samples) <= 1e-5 * std::abs(tape_loss);

  nn::Tape<double> tape;
  tape.backward(loss_of(&tape));
  double worst = 0.0;
  std::size_t checked = 0;
  const double h = 1e-4;
  for (auto& p : net.parameters()) {
    auto& value = p.var->value.data;
    const std::vector<double> grad = p.var->grad.data;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + h;
      const double up = loss_of(nullptr)->value.data[0];
      value[i] = orig - h;
      const double down = loss_of(nullptr)->value.data[0];
      value[i] = orig;
      const double numeric = (up - down) / (2.0 * h), analytic = grad.empty() ? 0.0 : grad[i];
      const double scale = std::max(std::abs(numeric), std::abs(analytic));
      if (scale > 1e-8) worst = std::max(worst, std::abs(numeric - analytic) / scale);
      ++checked;
    }
  }
  report(4, "gradient correctness", forward_ok && worst <= 1e-3 && checked == net.parameter_count(),
         std::to_string(checked) + " parameters, max relative error " + fmt("%.2e", worst) +
             ", tape loss matches masked_v_loss: " + (forward_ok ? "yes" : "no"));
}

// ------------------------------------------------------------------ 5

void oracle_ddim() {
  const NoiseSchedule sched = make_schedule(ScheduleKind::scaled_linear, 1000, 0.00085, 0.012);
  LatentTensor z_image(3, 16, 16), z_cond(1, 16, 16), z0(1, 16, 16);
  Rng rng(51);
  for (auto* z : {&z_image, &z_cond, &z0})
    for (auto& v : z->values) v = static_cast<float>(rng.normal());
  const VelocityFn exact = [&](const nn::Tensor<float>& in, std::span<const int> t) {
    nn::Tensor<float> v(in.n, 1, in.h, in.w);
    for (int k = 0; k < in.n; ++k) {
      const double ab = sched.alpha_bar(t[static_cast<std::size_t>(k)]);
      const float* zt = in.at(k, 4);
      for (std::size_t i = 0; i < z0.size(); ++i) {
        const double eps = (zt[i] - std::sqrt(ab) * z0.values[i]) / std::sqrt(1.0 - ab);
        v.at(k, 0)[i] = static_cast<float>(std::sqrt(ab) * eps - std::sqrt(1.0 - ab) * z0.values[i]);
      }
    }
    return v;
  };
  const std::uint64_t seeds[2] = {1, 2};
  std::string detail;
  bool pass = true;
  for (int steps : {1, 10, 50}) {
    double worst = 0.0;
    for (const auto& z : ddim_sample(exact, sched, z_image, z_cond, 1, steps, seeds))
      worst = std::max(worst, testing::rms_diff(z.values, z0.values));
    pass &= worst <= 1e-5;
    detail += (detail.empty() ? "" : ", ") + std::string("steps ") + std::to_string(steps) + " RMS " + fmt("%.2e", worst);
  }
  report(5, "oracle DDIM reconstruction", pass, detail);
}

// ------------------------------------------------------------------ 6

void metric_protocol() {
  const DepthMap gt = testing::random_depth(32, 32, 61);
  const MetricReport self = compute_metrics(gt, gt);
  const bool identity = self.absrel == 0.0 && self.delta1 == 1.0;

  double worst = 0.0;
  Rng rng(62);
  for (int k = 0; k < 100; ++k) {
    const DepthMap pred = testing::random_depth(32, 32, derive_key(63, k));
    const MetricReport base = compute_metrics(pred, gt);
    const double a = rng.uniform(0.05, 20.0), b = rng.uniform(-10.0, 10.0);
    DepthMap moved = pred;
    for (auto& v : moved.values) v = static_cast<float>(a * v + b);
    const MetricReport m = compute_metrics(moved, gt);
    worst = std::max({worst, std::abs(m.absrel - base.absrel), std::abs(m.delta1 - base.delta1)});
  }

  // A map whose least-squares alignment onto gt is the identity while every
  // pixel sits exactly at ratio 1.25. pred takes {5, 10}; 10 pixels have gt
  // = pred / 1.25 and 8 have gt = 1.25 pred, so the residual is orthogonal
  // to pred and to the constant.
  std::vector<float> g, p;
  for (int i = 0; i < 5; ++i)
    for (float v : {5.0f, 10.0f}) p.push_back(v), g.push_back(0.8f * v);
  for (int i = 0; i < 4; ++i)
    for (float v : {5.0f, 10.0f}) p.push_back(v), g.push_back(1.25f * v);
  const DepthMap bg = testing::from_values(3, 6, g), bp = testing::from_values(3, 6, p);
  const MetricReport edge = compute_metrics(bp, bg);
  // Integer depths keep 1.25 * gt exact in float.
  DepthMap ints(16, 16), scaled(16, 16);
  for (std::size_t i = 0; i < ints.size(); ++i) {
    ints.values[i] = static_cast<float>(1 + i % 97);
    scaled.values[i] = 1.25f * ints.values[i];
  }
  const double aligned_edge = score_aligned(scaled, ints).delta1;
  report(6, "metric protocol", identity && worst <= 1e-8 && edge.delta1 == 0.0 && aligned_edge == 0.0,
         "self (" + fmt("%g", self.absrel) + ", " + fmt("%g", self.delta1) + "), affine drift " + fmt("%.2e", worst) +
             ", boundary delta1 " + fmt("%g", edge.delta1) + " (fit s=" + fmt("%.17g", edge.fit.s) +
             ", b=" + fmt("%.3g", edge.fit.b) + "), pre-aligned 1.25*gt delta1 " + fmt("%g", aligned_edge));
}

// --------------------------------------------------------------- 7-10

struct Lab {
  RunConfig config;
  std::vector<LoadedPair> train, test;
  CoarseModel oracle = CoarseModel::degrade_oracle({});
  std::optional<fs::path> reuse;
};

DenoiserCheckpoint trained_refiner(const Lab& lab, const RunConfig& rc) {
  const KeyValues echo = rc.to_kv();
  const fs::path cache = lab.reuse ? *lab.reuse / ("refiner_" + rc.variant + ".ckpt") : fs::path();
  if (!cache.empty() && fs::exists(cache)) {
    DenoiserCheckpoint ck = DenoiserCheckpoint::load(cache);
    if (ck.run_config().to_string() == echo.to_string()) return ck;
  }
  DenoiserCheckpoint ck = train_refiner(lab.train, lab.oracle, refiner_config_from(rc));
  ck.run_config() = echo;
  if (!cache.empty()) ck.save(cache);
  return ck;
}

CoarseModel trained_regressor(const Lab& lab) {
  const KeyValues echo = lab.config.to_kv();
  const fs::path cache = lab.reuse ? *lab.reuse / "coarse.ckpt" : fs::path();
  if (!cache.empty() && fs::exists(cache)) {
    const CheckpointFile f = load_checkpoint(cache);
    KeyValues stored;
    for (const auto& [k, v] : f.config.items())
      if (k.rfind("meta.", 0) != 0) stored.set(k, v);
    if (stored.to_string() == echo.to_string()) return CoarseModel::load(cache);
  }
  CoarseModel m = train_tiny_regressor(lab.train, regressor_config_from(lab.config));
  if (!cache.empty()) m.save(cache, echo);
  return m;
}

void ablation_and_protocols(Lab& lab) {
  const std::clock_t cpu0 = std::clock();
  const char* variants[4] = {"no-cond", "no-align", "no-mask", "full"};
  std::map<std::string, SplitResult> results;
  std::optional<DenoiserCheckpoint> full;
  for (const char* v : variants) {
    RunConfig rc = lab.config;
    rc.variant = v;
    const auto t0 = std::chrono::steady_clock::now();
    DenoiserCheckpoint ck = trained_refiner(lab, rc);
    const double train_s = seconds_since(t0);
    const auto t1 = std::chrono::steady_clock::now();
    results[v] = evaluate_split(ck, lab.oracle, lab.test, rc.ddim_steps, rc.ensemble, rc.seed);
    std::printf("  variant %-8s absrel %.4f delta1 %.4f  (coarse %.4f / %.4f)  skipped %d, loss %.4f -> %.4f, "
                "train %.0f s, eval %.0f s\n",
                v, results[v].mean_absrel, results[v].mean_delta1, results[v].mean_coarse_absrel,
                results[v].mean_coarse_delta1, ck.stats().skipped_samples, ck.stats().initial_loss,
                ck.stats().final_loss, train_s, seconds_since(t1));
    std::fflush(stdout);
    if (std::string(v) == "full") full.emplace(std::move(ck));
  }
  const double cpu_h = static_cast<double>(std::clock() - cpu0) / CLOCKS_PER_SEC / 3600.0;

  const SplitResult& r1 = results["no-cond"];
  const SplitResult& r4 = results["full"];
  bool d1_ok = true;
  for (const char* v : {"no-align", "no-mask", "full"}) d1_ok &= results[v].mean_delta1 > r1.mean_delta1;
  report(7, "ablation direction", r4.mean_absrel < r1.mean_absrel && d1_ok && cpu_h < 4.0,
         "absrel #1 " + fmt("%.4f", r1.mean_absrel) + " -> #4 " + fmt("%.4f", r4.mean_absrel) + "; delta1 #1 " +
             fmt("%.4f", r1.mean_delta1) + ", #2 " + fmt("%.4f", results["no-align"].mean_delta1) + ", #3 " +
             fmt("%.4f", results["no-mask"].mean_delta1) + ", #4 " + fmt("%.4f", r4.mean_delta1) + "; " +
             fmt("%.2f", cpu_h) + " CPU-h");

  int faithful = 0;
  for (const auto& s : r4.samples) faithful += s.refined.absrel <= 1.1 * s.coarse.absrel;
  const double share = static_cast<double>(faithful) / static_cast<double>(r4.samples.size());
  report(8, "faithfulness to conditioning", share >= 0.9,
         std::to_string(faithful) + "/" + std::to_string(r4.samples.size()) +
             " samples within 1.1x of the coarse AbsRel (mean coarse " + fmt("%.4f", r4.mean_coarse_absrel) +
             ", refined " + fmt("%.4f", r4.mean_absrel) + ")");

  const CoarseModel regressor = trained_regressor(lab);
  const SplitResult plug =
      evaluate_split(*full, regressor, lab.test, lab.config.ddim_steps, lab.config.ensemble, lab.config.seed);
  report(9, "plug-and-play", plug.mean_absrel < plug.mean_coarse_absrel,
         "tiny regressor absrel " + fmt("%.4f", plug.mean_coarse_absrel) + " -> refined " +
             fmt("%.4f", plug.mean_absrel) + " (delta1 " + fmt("%.4f", plug.mean_coarse_delta1) + " -> " +
             fmt("%.4f", plug.mean_delta1) + ")");

  const SweepResult bars = error_bars(*full, lab.oracle, lab.test, 10, lab.config.ddim_steps, lab.config.seed);
  const SweepPoint& pt = bars.points.front();
  const bool finite = std::isfinite(pt.absrel_mean) && std::isfinite(pt.absrel_std) && std::isfinite(pt.delta1_mean) &&
                      std::isfinite(pt.delta1_std) && pt.absrel_std >= 0.0 && pt.delta1_std >= 0.0;
  report(10, "error-bar protocol", finite && r4.mean_delta1 >= pt.delta1_mean - pt.delta1_std,
         "single absrel " + fmt("%.4f", pt.absrel_mean) + " +- " + fmt("%.4f", pt.absrel_std) + ", delta1 " +
             fmt("%.4f", pt.delta1_mean) + " +- " + fmt("%.4f", pt.delta1_std) + "; ensemble-of-10 delta1 " +
             fmt("%.4f", r4.mean_delta1));
}

// ----------------------------------------------------------------- 11

void reproducibility(const fs::path& scratch) {
  const fs::path root = scratch / "repro";
  fs::remove_all(root);
  fs::create_directories(root);
  clitest::write_small_config(root / "small.txt");
  const int a = clitest::run_pipeline(root / "a", root / "small.txt");
  const int b = clitest::run_pipeline(root / "b", root / "small.txt");
  std::size_t compared = 0;
  std::vector<std::string> diffs;
  if (a == 0 && b == 0) {
    diffs = clitest::diff_trees(root / "a", root / "b", &compared);
  }
  std::string detail = std::to_string(compared) + " artifacts compared (CSV timing columns excluded)";
  if (a || b) detail = "pipeline failed with exit " + std::to_string(a ? a : b);
  for (const auto& d : diffs) detail += "; differs: " + d;
  report(11, "reproducibility", a == 0 && b == 0 && diffs.empty() && compared > 0, detail);
  fs::remove_all(root);
}

}  // namespace

int main(int argc, char** argv) {
  std::optional<fs::path> reuse;
  bool quick = false;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--reuse" && i + 1 < argc) {
      reuse = fs::path(argv[++i]);
      fs::create_directories(*reuse);
    } else if (arg == "--quick") {
      quick = true;
    } else {
      std::fprintf(stderr, "usage: %s [--reuse DIR] [--quick]\n", argv[0]);
      return 2;
    }
  }
  const fs::path scratch = fs::temp_directory_path() / "depthlab_acceptance";
  fs::create_directories(scratch);

  try {
    alignment_oracle();
    velocity_algebra();
    masking_semantics();
    gradient_check();
    oracle_ddim();
    metric_protocol();

    if (!quick) {
    Lab lab;
    lab.reuse = reuse;
    lab.config.iterations = kIterations;
    lab.config.lr = ACCEPTANCE_LR;
    lab.train = scenes(kTrainSceneSeed, kTrainPairs, lab.config.height);
    lab.test = scenes(kTestSceneSeed, kTestPairs, lab.config.height);
    lab.oracle = CoarseModel::degrade_oracle(degrade_params_from(lab.config));
    std::printf("  ablation: %d train / %d test scenes at %dx%d, %d iterations, lr %g, %d DDIM steps, ensemble %d\n",
                kTrainPairs, kTestPairs, lab.config.height, lab.config.width, kIterations, lab.config.lr,
                lab.config.ddim_steps, lab.config.ensemble);
    std::fflush(stdout);
    ablation_and_protocols(lab);
    }

    reproducibility(scratch);
  } catch (const std::exception& e) {
    std::printf("aborted: %s\n", e.what());
    return 1;
  }
  fs::remove_all(scratch);
  std::printf("%s: %d criteria failed\n", g_failures ? "FAIL" : "PASS", g_failures);
  return g_failures ? 1 : 0;
}
