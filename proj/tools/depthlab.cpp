// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end. Talks to the library only through depthlab.h.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "depthlab.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int exit_code;
};

void check(dl_status s) {
  if (s == DL_OK) return;
  std::fprintf(stderr, "depthlab: %s: %s\n", dl_status_name(s), dl_last_error());
  throw Failure{s == DL_ERR_CONFIG || s == DL_ERR_INVALID_ARGUMENT ? kExitUsage : kExitRuntime};
}

template <class T, void (*Destroy)(T*)>
struct Deleter {
  void operator()(T* p) const { Destroy(p); }
};
using Config = std::unique_ptr<dl_config, Deleter<dl_config, dl_config_destroy>>;
using Split = std::unique_ptr<dl_split, Deleter<dl_split, dl_split_destroy>>;
using Depth = std::unique_ptr<dl_depth, Deleter<dl_depth, dl_depth_destroy>>;
using Image = std::unique_ptr<dl_image, Deleter<dl_image, dl_image_destroy>>;
using Coarse = std::unique_ptr<dl_coarse, Deleter<dl_coarse, dl_coarse_destroy>>;
using Refiner = std::unique_ptr<dl_refiner, Deleter<dl_refiner, dl_refiner_destroy>>;

// Flags shared by every subcommand. Precedence: defaults < --config file <
// DEPTHLAB_SEED < explicit flags and --set pairs.
struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::vector<std::pair<std::string, std::string>> flags;  // filled by typed options
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "key=value config file")->check(CLI::ExistingFile);
  app->add_option("--set", c.sets, "override one key (key=value), repeatable");
}

// Registers a typed flag that maps onto a config key.
template <class T>
void add_key(CLI::App* app, Common& c, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<T>(
      flag,
      [&c, key](const T& v) {
        std::ostringstream os;
        os << v;
        c.flags.emplace_back(key, os.str());
      },
      help);
}

Config build_config(const Common& c) {
  dl_config* raw = nullptr;
  if (c.config_file.empty()) check(dl_config_create(&raw));
  else check(dl_config_load(c.config_file.c_str(), &raw));
  Config cfg(raw);
  if (const char* env = std::getenv("DEPTHLAB_SEED")) check(dl_config_set(cfg.get(), "seed", env));
  for (const auto& [k, v] : c.flags) check(dl_config_set(cfg.get(), k.c_str(), v.c_str()));
  for (const std::string& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "depthlab: --set expects key=value, got '%s'\n", kv.c_str());
      throw Failure{kExitUsage};
    }
    check(dl_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  return cfg;
}

std::string config_value(const dl_config* cfg, const char* key) {
  size_t n = 0;
  check(dl_config_get(cfg, key, nullptr, 0, &n));
  std::string s(n + 1, '\0');
  check(dl_config_get(cfg, key, s.data(), s.size(), &n));
  s.resize(n);
  return s;
}

// Creates the run-directory skeleton and echoes the config into it.
void prepare_run_dir(const fs::path& out, const dl_config* cfg) {
  for (const char* sub : {"checkpoints", "logs", "preds", "reports"}) fs::create_directories(out / sub);
  check(dl_config_save(cfg, (out / "config.txt").string().c_str()));
}

Split load_split(const std::string& path) {
  dl_split* s = nullptr;
  check(dl_split_load(path.c_str(), &s));
  return Split(s);
}

// "oracle" or "regressor:PATH".
Coarse load_coarse(const std::string& spec, const dl_config* cfg) {
  dl_coarse* c = nullptr;
  if (spec == "oracle") {
    check(dl_coarse_oracle(cfg, &c));
  } else if (spec.rfind("regressor:", 0) == 0) {
    check(dl_coarse_load(spec.substr(10).c_str(), &c));
  } else {
    std::fprintf(stderr, "depthlab: --coarse must be 'oracle' or 'regressor:PATH', got '%s'\n", spec.c_str());
    throw Failure{kExitUsage};
  }
  return Coarse(c);
}

Refiner load_refiner(const std::string& path) {
  dl_refiner* r = nullptr;
  check(dl_refiner_load(path.c_str(), &r));
  return Refiner(r);
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      std::fprintf(stderr, "depthlab: bad value '%s' in --values\n", item.c_str());
      throw Failure{kExitUsage};
    }
  }
  return out;
}

const char* kReference =
    "Settings (desk-scale default | full-scale reference):\n"
    "  raster            64x64            | 768x768 (latent 96x96)\n"
    "  training pairs    400 synthetic    | 74K real and synthetic\n"
    "  iterations        2000             | 5K\n"
    "  batch size        8                | 32\n"
    "  learning rate     3e-5             | 3e-5\n"
    "  timesteps T       1000             | 1000\n"
    "  patch size w      8                | 8\n"
    "  threshold eta     0.1              | 0.1\n"
    "  DDIM steps        50               | 50\n"
    "  ensemble size     10               | 10\n"
    "  codec             space-to-depth   | frozen VAE\n";

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"depthlab: diffusion refinement of coarse monocular depth"};
  app.footer(kReference);
  app.require_subcommand(1);

  // generate
  Common gen_c;
  std::string gen_out;
  int gen_count = 0;
  bool gen_force = false;
  auto* gen = app.add_subcommand("generate", "render a synthetic split with a manifest");
  add_common(gen, gen_c);
  gen->add_option("--count", gen_count, "number of pairs")->required();
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_flag("--force", gen_force, "overwrite a non-empty directory");
  add_key<int>(gen, gen_c, "--size", "height", "square raster size");
  add_key<unsigned long long>(gen, gen_c, "--seed", "seed", "scene seed");
  add_key<int>(gen, gen_c, "--primitives", "n_primitives", "primitives per scene");

  // train-coarse
  Common tc_c;
  std::string tc_train, tc_out;
  auto* tc = app.add_subcommand("train-coarse", "train the tiny regressor coarse model");
  add_common(tc, tc_c);
  tc->add_option("--train", tc_train, "training split (directory or manifest)")->required();
  tc->add_option("--out", tc_out, "run directory")->required();
  add_key<int>(tc, tc_c, "--iters", "coarse_iterations", "training iterations");
  add_key<double>(tc, tc_c, "--lr", "coarse_lr", "learning rate");
  add_key<int>(tc, tc_c, "--batch", "coarse_batch_size", "batch size");
  add_key<unsigned long long>(tc, tc_c, "--seed", "seed", "seed");

  // train-refiner
  Common tr_c;
  std::string tr_train, tr_out, tr_coarse = "oracle";
  auto* tr = app.add_subcommand("train-refiner", "train the diffusion refiner");
  add_common(tr, tr_c);
  tr->add_option("--train", tr_train, "training split (directory or manifest)")->required();
  tr->add_option("--out", tr_out, "run directory")->required();
  tr->add_option("--coarse", tr_coarse, "coarse model: oracle or regressor:PATH");
  add_key<std::string>(tr, tr_c, "--variant", "variant", "full, no-cond, no-align or no-mask");
  add_key<int>(tr, tr_c, "--iters", "iterations", "training iterations");
  add_key<double>(tr, tr_c, "--lr", "lr", "learning rate");
  add_key<int>(tr, tr_c, "--batch", "batch_size", "batch size");
  add_key<int>(tr, tr_c, "--patch-size", "patch_size", "mask patch size w");
  add_key<double>(tr, tr_c, "--threshold", "threshold", "mask threshold eta");
  add_key<unsigned long long>(tr, tr_c, "--seed", "seed", "seed");

  // infer
  Common inf_c;
  std::string inf_ckpt, inf_image, inf_gt, inf_out, inf_coarse = "oracle";
  auto* inf = app.add_subcommand("infer", "refine one image");
  add_common(inf, inf_c);
  inf->add_option("--checkpoint", inf_ckpt, "refiner checkpoint")->required();
  inf->add_option("--image", inf_image, "input image (PFM)")->required();
  inf->add_option("--gt", inf_gt, "ground-truth depth (PFM); the oracle coarse model needs it");
  inf->add_option("--coarse", inf_coarse, "coarse model: oracle or regressor:PATH");
  inf->add_option("--out", inf_out, "run directory")->required();
  add_key<int>(inf, inf_c, "--steps", "ddim_steps", "DDIM steps");
  add_key<int>(inf, inf_c, "--ensemble", "ensemble", "ensemble members");
  add_key<unsigned long long>(inf, inf_c, "--seed", "seed", "sampling seed");

  // eval
  Common ev_c;
  std::string ev_pred, ev_gt, ev_test, ev_out, ev_coarse = "oracle";
  std::vector<std::string> ev_ckpts;
  int ev_strips = 4;
  auto* ev = app.add_subcommand("eval", "score a prediction, a checkpoint, or several (ablation table)");
  add_common(ev, ev_c);
  ev->add_option("--pred", ev_pred, "predicted depth (PFM)");
  ev->add_option("--gt", ev_gt, "ground-truth depth (PFM)");
  ev->add_option("--checkpoint", ev_ckpts, "refiner checkpoint; repeat for an ablation table");
  ev->add_option("--test", ev_test, "test split (directory or manifest)");
  ev->add_option("--coarse", ev_coarse, "coarse model: oracle or regressor:PATH");
  ev->add_option("--out", ev_out, "run directory");
  ev->add_option("--strips", ev_strips, "PGM strips to write");
  add_key<int>(ev, ev_c, "--steps", "ddim_steps", "DDIM steps");
  add_key<int>(ev, ev_c, "--ensemble", "ensemble", "ensemble members");
  add_key<unsigned long long>(ev, ev_c, "--seed", "seed", "sampling seed");

  // sweep
  Common sw_c;
  std::string sw_axis, sw_values, sw_train, sw_test, sw_ckpt, sw_out, sw_coarse = "oracle";
  int sw_repeats = 1;
  auto* sw = app.add_subcommand("sweep", "sweep patch_size, threshold, ensemble or ddim_steps");
  add_common(sw, sw_c);
  sw->add_option("--axis", sw_axis, "patch_size, threshold, ensemble or ddim_steps")->required();
  sw->add_option("--values", sw_values, "comma-separated, strictly increasing")->required();
  sw->add_option("--train", sw_train, "training split (training axes)");
  sw->add_option("--test", sw_test, "test split")->required();
  sw->add_option("--checkpoint", sw_ckpt, "refiner checkpoint (inference axes)");
  sw->add_option("--coarse", sw_coarse, "coarse model: oracle or regressor:PATH");
  sw->add_option("--repeats", sw_repeats, "evaluation repeats per value");
  sw->add_option("--out", sw_out, "run directory")->required();
  add_key<int>(sw, sw_c, "--iters", "iterations", "training iterations per value");
  add_key<int>(sw, sw_c, "--steps", "ddim_steps", "DDIM steps");
  add_key<int>(sw, sw_c, "--ensemble", "ensemble", "ensemble members");
  add_key<unsigned long long>(sw, sw_c, "--seed", "seed", "seed");

  // error-bars
  Common eb_c;
  std::string eb_ckpt, eb_test, eb_out, eb_coarse = "oracle";
  int eb_repeats = 10;
  auto* eb = app.add_subcommand("error-bars", "repeated single refinements: mean and std");
  add_common(eb, eb_c);
  eb->add_option("--checkpoint", eb_ckpt, "refiner checkpoint")->required();
  eb->add_option("--test", eb_test, "test split")->required();
  eb->add_option("--coarse", eb_coarse, "coarse model: oracle or regressor:PATH");
  eb->add_option("--repeats", eb_repeats, "single refinements per input");
  eb->add_option("--out", eb_out, "run directory")->required();
  add_key<int>(eb, eb_c, "--steps", "ddim_steps", "DDIM steps");
  add_key<unsigned long long>(eb, eb_c, "--seed", "seed", "sampling seed");

  // report
  std::string rep_out;
  auto* rep = app.add_subcommand("report", "render a run's CSV reports as text tables");
  rep->add_option("--out", rep_out, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) {
      // --size sets both dimensions.
      std::vector<std::pair<std::string, std::string>> widths;
      for (const auto& [k, v] : gen_c.flags)
        if (k == "height") widths.emplace_back("width", v);
      gen_c.flags.insert(gen_c.flags.end(), widths.begin(), widths.end());
      Config cfg = build_config(gen_c);
      check(dl_generate(cfg.get(), gen_count, gen_out.c_str(), gen_force ? 1 : 0));
      std::printf("wrote %d pairs to %s\n", gen_count, gen_out.c_str());
    } else if (*tc) {
      Config cfg = build_config(tc_c);
      Split train = load_split(tc_train);
      const fs::path out(tc_out);
      prepare_run_dir(out, cfg.get());
      dl_coarse* raw = nullptr;
      check(dl_coarse_train(cfg.get(), train.get(), (out / "logs" / "coarse_loss.csv").string().c_str(), &raw));
      Coarse model(raw);
      const fs::path ckpt = out / "checkpoints" / "coarse.ckpt";
      check(dl_coarse_save(model.get(), cfg.get(), ckpt.string().c_str()));
      size_t params = 0;
      check(dl_coarse_parameter_count(model.get(), &params));
      std::printf("coarse regressor (%zu parameters) -> %s\n", params, ckpt.string().c_str());
    } else if (*tr) {
      Config cfg = build_config(tr_c);
      Split train = load_split(tr_train);
      Coarse coarse = load_coarse(tr_coarse, cfg.get());
      const fs::path out(tr_out);
      prepare_run_dir(out, cfg.get());
      const std::string variant = config_value(cfg.get(), "variant");
      dl_refiner* raw = nullptr;
      const fs::path log = out / "logs" / ("refiner_" + variant + "_loss.csv");
      check(dl_refiner_train(cfg.get(), train.get(), coarse.get(), log.string().c_str(), &raw));
      Refiner refiner(raw);
      const fs::path ckpt = out / "checkpoints" / ("refiner_" + variant + ".ckpt");
      check(dl_refiner_save(refiner.get(), ckpt.string().c_str()));
      int iters = 0, skipped = 0;
      double l0 = 0, l1 = 0;
      check(dl_refiner_stats(refiner.get(), &iters, &skipped, &l0, &l1));
      std::printf("refiner %s: %d iterations, %d skipped samples, loss %.4f -> %.4f -> %s\n", variant.c_str(), iters,
                  skipped, l0, l1, ckpt.string().c_str());
    } else if (*inf) {
      Config cfg = build_config(inf_c);
      Refiner refiner = load_refiner(inf_ckpt);
      Coarse coarse = load_coarse(inf_coarse, cfg.get());
      dl_image* img_raw = nullptr;
      check(dl_image_read(inf_image.c_str(), &img_raw));
      Image image(img_raw);
      Depth gt;
      if (!inf_gt.empty()) {
        dl_depth* g = nullptr;
        check(dl_depth_read(inf_gt.c_str(), &g));
        gt.reset(g);
      }
      const fs::path out(inf_out);
      prepare_run_dir(out, cfg.get());
      const int steps = std::stoi(config_value(cfg.get(), "ddim_steps"));
      const int ensemble = std::stoi(config_value(cfg.get(), "ensemble"));
      const unsigned long long seed = std::stoull(config_value(cfg.get(), "seed"));
      dl_depth *refined_raw = nullptr, *coarse_raw = nullptr;
      check(dl_refine(refiner.get(), coarse.get(), image.get(), gt.get(), steps, ensemble, seed, &refined_raw,
                      &coarse_raw));
      Depth refined(refined_raw), coarse_out(coarse_raw);
      const std::string stem = fs::path(inf_image).stem().string();
      const fs::path rp = out / "preds" / (stem + "_refined.pfm");
      const fs::path cp = out / "preds" / (stem + "_coarse.pfm");
      check(dl_depth_write(refined.get(), rp.string().c_str()));
      check(dl_depth_write(coarse_out.get(), cp.string().c_str()));
      std::printf("refined -> %s\ncoarse  -> %s\n", rp.string().c_str(), cp.string().c_str());
      if (gt) {
        double a = 0, d = 0, ca = 0, cd = 0;
        check(dl_metrics(refined.get(), gt.get(), &a, &d));
        check(dl_metrics(coarse_out.get(), gt.get(), &ca, &cd));
        std::printf("coarse  absrel %.6f delta1 %.6f\nrefined absrel %.6f delta1 %.6f\n", ca, cd, a, d);
      }
    } else if (*ev) {
      Config cfg = build_config(ev_c);
      if (!ev_pred.empty() || !ev_gt.empty()) {
        if (ev_pred.empty() || ev_gt.empty()) {
          std::fprintf(stderr, "depthlab: eval needs both --pred and --gt\n");
          return kExitUsage;
        }
        dl_depth *p = nullptr, *g = nullptr;
        check(dl_depth_read(ev_pred.c_str(), &p));
        Depth pred(p);
        check(dl_depth_read(ev_gt.c_str(), &g));
        Depth gt(g);
        double a = 0, d = 0;
        check(dl_metrics(pred.get(), gt.get(), &a, &d));
        std::printf("absrel %.6f\ndelta1 %.6f\n", a, d);
        return 0;
      }
      if (ev_ckpts.empty() || ev_test.empty() || ev_out.empty()) {
        std::fprintf(stderr, "depthlab: eval needs --pred/--gt or --checkpoint, --test and --out\n");
        return kExitUsage;
      }
      Split test = load_split(ev_test);
      Coarse coarse = load_coarse(ev_coarse, cfg.get());
      const fs::path out(ev_out);
      prepare_run_dir(out, cfg.get());
      if (ev_ckpts.size() == 1) {
        Refiner refiner = load_refiner(ev_ckpts.front());
        dl_summary s{};
        const fs::path csv = out / "reports" / "eval.csv";
        check(dl_evaluate(refiner.get(), coarse.get(), test.get(), cfg.get(), csv.string().c_str(),
                          (out / "reports").string().c_str(), ev_strips, &s));
        std::printf("coarse  absrel %.6f delta1 %.6f\nrefined absrel %.6f delta1 %.6f\n-> %s\n", s.coarse_absrel,
                    s.coarse_delta1, s.absrel, s.delta1, csv.string().c_str());
      } else {
        std::vector<const char*> paths;
        for (const auto& p : ev_ckpts) paths.push_back(p.c_str());
        const fs::path csv = out / "reports" / "ablation.csv";
        check(dl_ablation(paths.data(), paths.size(), coarse.get(), test.get(), cfg.get(), csv.string().c_str()));
        std::printf("-> %s\n", csv.string().c_str());
      }
    } else if (*sw) {
      Config cfg = build_config(sw_c);
      const std::vector<double> values = parse_values(sw_values);
      Split test = load_split(sw_test);
      Split train = sw_train.empty() ? Split() : load_split(sw_train);
      Refiner refiner = sw_ckpt.empty() ? Refiner() : load_refiner(sw_ckpt);
      Coarse coarse = load_coarse(sw_coarse, cfg.get());
      const fs::path out(sw_out);
      prepare_run_dir(out, cfg.get());
      const fs::path csv = out / "reports" / ("sweep_" + sw_axis + ".csv");
      check(dl_sweep(cfg.get(), sw_axis.c_str(), values.data(), values.size(), sw_repeats, train.get(), test.get(),
                     coarse.get(), refiner.get(), csv.string().c_str()));
      std::printf("-> %s\n", csv.string().c_str());
    } else if (*eb) {
      Config cfg = build_config(eb_c);
      Refiner refiner = load_refiner(eb_ckpt);
      Split test = load_split(eb_test);
      Coarse coarse = load_coarse(eb_coarse, cfg.get());
      const fs::path out(eb_out);
      prepare_run_dir(out, cfg.get());
      const fs::path csv = out / "reports" / "error_bars.csv";
      double am = 0, as = 0, dm = 0, ds = 0;
      check(dl_error_bars(refiner.get(), coarse.get(), test.get(), cfg.get(), eb_repeats, csv.string().c_str(), &am,
                          &as, &dm, &ds));
      std::printf("absrel %.6f +- %.6f\ndelta1 %.6f +- %.6f\n-> %s\n", am, as, dm, ds, csv.string().c_str());
    } else if (*rep) {
      const fs::path reports = fs::path(rep_out) / "reports";
      std::vector<fs::path> csvs;
      if (fs::is_directory(reports))
        for (const auto& e : fs::directory_iterator(reports))
          if (e.path().extension() == ".csv") csvs.push_back(e.path());
      if (csvs.empty()) {
        std::fprintf(stderr, "depthlab: no CSV reports under %s\n", reports.string().c_str());
        return kExitRuntime;
      }
      std::sort(csvs.begin(), csvs.end());
      std::string all;
      for (const auto& p : csvs) {
        size_t n = 0;
        check(dl_render_table(p.string().c_str(), nullptr, 0, &n));
        std::string text(n + 1, '\0');
        check(dl_render_table(p.string().c_str(), text.data(), text.size(), &n));
        text.resize(n);
        all += text + "\n";
      }
      std::ofstream os(reports / "summary.txt", std::ios::binary);
      os << all;
      std::fputs(all.c_str(), stdout);
    }
  } catch (const Failure& f) {
    return f.exit_code;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "depthlab: %s\n", e.what());
    return kExitRuntime;
  }
  return 0;
}
