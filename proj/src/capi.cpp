// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "depthlab/coarse.hpp"
#include "depthlab/depthio.hpp"
#include "depthlab/diffusion.hpp"
#include "depthlab/eval.hpp"
#include "depthlab/scenegen.hpp"

struct dl_config {
  depthlab::RunConfig run;
};
struct dl_split {
  std::vector<depthlab::LoadedPair> pairs;
};
struct dl_depth {
  depthlab::DepthMap map;
};
struct dl_image {
  depthlab::ImageMap map;
};
struct dl_coarse {
  depthlab::CoarseModel model;
};
struct dl_refiner {
  std::optional<depthlab::DenoiserCheckpoint> ckpt;
};

namespace {

using depthlab::ErrorCode;

thread_local std::string g_last_error;

struct InvalidArgument {
  const char* what;
};

template <class F>
dl_status guarded(F&& fn) noexcept {
  try {
    fn();
    g_last_error.clear();
    return DL_OK;
  } catch (const depthlab::Error& e) {
    g_last_error = e.what();
    return static_cast<dl_status>(static_cast<int>(e.code()));
  } catch (const InvalidArgument& e) {
    g_last_error = e.what;
    return DL_ERR_INVALID_ARGUMENT;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return DL_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return DL_ERR_INTERNAL;
  }
}

template <class T>
const T& need(const T* p, const char* what) {
  if (!p) throw InvalidArgument{what};
  return *p;
}

void need_out(const void* p) {
  if (!p) throw InvalidArgument{"output pointer is NULL"};
}

std::string need_str(const char* s, const char* what) {
  if (!s) throw InvalidArgument{what};
  return s;
}

void copy_text(const std::string& text, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = text.size();
  if (buf && cap > 0) {
    const size_t n = std::min(cap - 1, text.size());
    std::memcpy(buf, text.data(), n);
    buf[n] = '\0';
  }
}

depthlab::KeyValues echo_of(const dl_config& cfg) { return cfg.run.to_kv(); }

template <class Row>
void write_loss_csv(const char* path, const std::vector<Row>& rows, const depthlab::KeyValues& echo) {
  if (!path) return;
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary);
  if (!os) depthlab::fail(ErrorCode::Io, "cannot write " + p.string());
  for (const auto& [k, v] : echo.items()) os << "# " << k << '=' << v << '\n';
  os << "iteration,loss,wall_time_s\n";
  for (const Row& r : rows)
    os << r.iteration << ',' << depthlab::format_double(r.loss) << ',' << depthlab::format_double(r.wall_time_s)
       << '\n';
  if (!os) depthlab::fail(ErrorCode::Io, "failed writing " + p.string());
}

}  // namespace

extern "C" {

const char* dl_version(void) { return "0.1.0"; }

const char* dl_last_error(void) { return g_last_error.c_str(); }

const char* dl_status_name(dl_status status) {
  if (status == DL_ERR_INVALID_ARGUMENT) return "InvalidArgument";
  return depthlab::error_code_name(static_cast<ErrorCode>(status));
}

// ------------------------------------------------------------- config

dl_status dl_config_create(dl_config** out) {
  return guarded([&] {
    need_out(out);
    *out = new dl_config{};
  });
}

dl_status dl_config_load(const char* path, dl_config** out) {
  return guarded([&] {
    need_out(out);
    auto cfg = std::make_unique<dl_config>();
    cfg->run = depthlab::RunConfig::from_kv(depthlab::KeyValues::load(need_str(path, "path is NULL")));
    *out = cfg.release();
  });
}

dl_status dl_config_set(dl_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    dl_config& c = const_cast<dl_config&>(need(cfg, "config is NULL"));
    depthlab::KeyValues kv = c.run.to_kv();
    kv.set(need_str(key, "key is NULL"), need_str(value, "value is NULL"));
    c.run = depthlab::RunConfig::from_kv(kv);
  });
}

dl_status dl_config_get(const dl_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    const depthlab::KeyValues kv = need(cfg, "config is NULL").run.to_kv();
    const std::string k = need_str(key, "key is NULL");
    if (!kv.has(k)) depthlab::fail(ErrorCode::Config, "unknown config key '" + k + "'");
    copy_text(kv.get(k), buf, cap, needed);
  });
}

dl_status dl_config_to_string(const dl_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] { copy_text(need(cfg, "config is NULL").run.to_string(), buf, cap, needed); });
}

dl_status dl_config_save(const dl_config* cfg, const char* path) {
  return guarded([&] { need(cfg, "config is NULL").run.to_kv().save(need_str(path, "path is NULL")); });
}

void dl_config_destroy(dl_config* cfg) { delete cfg; }

// --------------------------------------------------------------- data

dl_status dl_generate(const dl_config* cfg, int count, const char* out_dir, int force) {
  return guarded([&] {
    const depthlab::RunConfig& rc = need(cfg, "config is NULL").run;
    rc.validate();
    depthlab::SceneSpec spec;
    spec.seed = rc.seed;
    spec.height = rc.height;
    spec.width = rc.width;
    spec.n_primitives = rc.n_primitives;
    depthlab::generate_split(spec, count, need_str(out_dir, "out_dir is NULL"), force != 0);
  });
}

dl_status dl_split_load(const char* manifest_or_dir, dl_split** out) {
  return guarded([&] {
    need_out(out);
    auto s = std::make_unique<dl_split>();
    s->pairs = depthlab::load_pairs(depthlab::read_manifest(need_str(manifest_or_dir, "path is NULL")));
    *out = s.release();
  });
}

size_t dl_split_size(const dl_split* split) { return split ? split->pairs.size() : 0; }

dl_status dl_split_image(const dl_split* split, size_t index, dl_image** out) {
  return guarded([&] {
    need_out(out);
    const auto& pairs = need(split, "split is NULL").pairs;
    if (index >= pairs.size()) depthlab::fail(ErrorCode::Range, "split index out of range");
    *out = new dl_image{pairs[index].image};
  });
}

dl_status dl_split_depth(const dl_split* split, size_t index, dl_depth** out) {
  return guarded([&] {
    need_out(out);
    const auto& pairs = need(split, "split is NULL").pairs;
    if (index >= pairs.size()) depthlab::fail(ErrorCode::Range, "split index out of range");
    *out = new dl_depth{pairs[index].depth};
  });
}

void dl_split_destroy(dl_split* split) { delete split; }

// ------------------------------------------------------------ rasters

dl_status dl_depth_read(const char* path, dl_depth** out) {
  return guarded([&] {
    need_out(out);
    *out = new dl_depth{depthlab::read_depth_pfm(need_str(path, "path is NULL"))};
  });
}

dl_status dl_depth_write(const dl_depth* d, const char* path) {
  return guarded([&] { depthlab::write_depth_pfm(need_str(path, "path is NULL"), need(d, "depth is NULL").map); });
}

dl_status dl_depth_create(int height, int width, const float* values, const uint8_t* validity, dl_depth** out) {
  return guarded([&] {
    need_out(out);
    if (!values) throw InvalidArgument{"values is NULL"};
    depthlab::DepthMap m(height, width);
    std::memcpy(m.values.data(), values, m.size() * sizeof(float));
    if (validity)
      for (std::size_t i = 0; i < m.size(); ++i) m.validity[i] = validity[i] ? 1 : 0;
    *out = new dl_depth{std::move(m)};
  });
}

dl_status dl_depth_shape(const dl_depth* d, int* height, int* width) {
  return guarded([&] {
    const auto& m = need(d, "depth is NULL").map;
    if (height) *height = m.height;
    if (width) *width = m.width;
  });
}

const float* dl_depth_values(const dl_depth* d) { return d ? d->map.values.data() : nullptr; }

void dl_depth_destroy(dl_depth* d) { delete d; }

dl_status dl_image_read(const char* path, dl_image** out) {
  return guarded([&] {
    need_out(out);
    *out = new dl_image{depthlab::read_image_pfm(need_str(path, "path is NULL"))};
  });
}

dl_status dl_image_shape(const dl_image* img, int* height, int* width, int* channels) {
  return guarded([&] {
    const auto& m = need(img, "image is NULL").map;
    if (height) *height = m.height;
    if (width) *width = m.width;
    if (channels) *channels = m.channels;
  });
}

void dl_image_destroy(dl_image* img) { delete img; }

// ------------------------------------------------------------- coarse

dl_status dl_coarse_oracle(const dl_config* cfg, dl_coarse** out) {
  return guarded([&] {
    need_out(out);
    const depthlab::RunConfig& rc = need(cfg, "config is NULL").run;
    *out = new dl_coarse{depthlab::CoarseModel::degrade_oracle(depthlab::degrade_params_from(rc))};
  });
}

dl_status dl_coarse_load(const char* path, dl_coarse** out) {
  return guarded([&] {
    need_out(out);
    *out = new dl_coarse{depthlab::CoarseModel::load(need_str(path, "path is NULL"))};
  });
}

dl_status dl_coarse_train(const dl_config* cfg, const dl_split* train, const char* log_csv, dl_coarse** out) {
  return guarded([&] {
    need_out(out);
    const dl_config& c = need(cfg, "config is NULL");
    c.run.validate();
    std::vector<depthlab::TrainLogRow> log;
    depthlab::CoarseModel m = depthlab::train_tiny_regressor(need(train, "split is NULL").pairs,
                                                             depthlab::regressor_config_from(c.run), &log);
    write_loss_csv(log_csv, log, echo_of(c));
    *out = new dl_coarse{std::move(m)};
  });
}

dl_status dl_coarse_save(const dl_coarse* model, const dl_config* echo, const char* path) {
  return guarded([&] {
    const depthlab::KeyValues kv = echo ? echo_of(*echo) : depthlab::KeyValues{};
    need(model, "model is NULL").model.save(need_str(path, "path is NULL"), kv);
  });
}

dl_status dl_coarse_parameter_count(const dl_coarse* model, size_t* count) {
  return guarded([&] {
    need_out(count);
    const auto& m = need(model, "model is NULL").model;
    *count = m.kind() == depthlab::CoarseKind::tiny_regressor ? m.network().parameter_count() : 0;
  });
}

dl_status dl_coarse_predict(const dl_coarse* model, const dl_image* image, const dl_depth* gt, dl_depth** out) {
  return guarded([&] {
    need_out(out);
    const depthlab::DepthMap* g = gt ? &gt->map : nullptr;
    *out = new dl_depth{need(model, "model is NULL").model.predict(need(image, "image is NULL").map, g)};
  });
}

void dl_coarse_destroy(dl_coarse* model) { delete model; }

// ------------------------------------------------------------ refiner

dl_status dl_refiner_train(const dl_config* cfg, const dl_split* train, const dl_coarse* coarse, const char* log_csv,
                           dl_refiner** out) {
  return guarded([&] {
    need_out(out);
    const dl_config& c = need(cfg, "config is NULL");
    std::vector<depthlab::RefinerLogRow> log;
    auto r = std::make_unique<dl_refiner>();
    r->ckpt.emplace(depthlab::train_refiner(need(train, "split is NULL").pairs,
                                            need(coarse, "coarse model is NULL").model,
                                            depthlab::refiner_config_from(c.run), &log));
    r->ckpt->run_config() = echo_of(c);
    write_loss_csv(log_csv, log, echo_of(c));
    *out = r.release();
  });
}

dl_status dl_refiner_load(const char* path, dl_refiner** out) {
  return guarded([&] {
    need_out(out);
    auto r = std::make_unique<dl_refiner>();
    r->ckpt.emplace(depthlab::DenoiserCheckpoint::load(need_str(path, "path is NULL")));
    *out = r.release();
  });
}

dl_status dl_refiner_save(const dl_refiner* r, const char* path) {
  return guarded([&] { need(r, "refiner is NULL").ckpt->save(need_str(path, "path is NULL")); });
}

dl_status dl_refiner_stats(const dl_refiner* r, int* iterations, int* skipped, double* initial_loss,
                           double* final_loss) {
  return guarded([&] {
    const depthlab::TrainStats& s = need(r, "refiner is NULL").ckpt->stats();
    if (iterations) *iterations = s.iterations;
    if (skipped) *skipped = s.skipped_samples;
    if (initial_loss) *initial_loss = s.initial_loss;
    if (final_loss) *final_loss = s.final_loss;
  });
}

dl_status dl_refine(const dl_refiner* r, const dl_coarse* coarse, const dl_image* image, const dl_depth* gt,
                    int steps, int ensemble, uint64_t seed, dl_depth** refined, dl_depth** coarse_out) {
  return guarded([&] {
    need_out(refined);
    const depthlab::DepthMap* g = gt ? &gt->map : nullptr;
    const depthlab::Refinement res =
        depthlab::refine_members(*need(r, "refiner is NULL").ckpt, need(coarse, "coarse model is NULL").model,
                                 need(image, "image is NULL").map, g, steps, ensemble, seed);
    auto out = std::make_unique<dl_depth>(dl_depth{depthlab::ensemble_median(res.members)});
    if (coarse_out) *coarse_out = new dl_depth{res.coarse};
    *refined = out.release();
  });
}

void dl_refiner_destroy(dl_refiner* r) { delete r; }

// ---------------------------------------------------------- evaluation

dl_status dl_metrics(const dl_depth* pred, const dl_depth* gt, double* absrel, double* delta1) {
  return guarded([&] {
    const depthlab::MetricReport m =
        depthlab::compute_metrics(need(pred, "pred is NULL").map, need(gt, "gt is NULL").map);
    if (absrel) *absrel = m.absrel;
    if (delta1) *delta1 = m.delta1;
  });
}

dl_status dl_evaluate(const dl_refiner* r, const dl_coarse* coarse, const dl_split* test, const dl_config* cfg,
                      const char* csv_path, const char* strip_dir, int n_strips, dl_summary* summary) {
  return guarded([&] {
    const dl_config& c = need(cfg, "config is NULL");
    const auto& pairs = need(test, "split is NULL").pairs;
    depthlab::SampleHook hook;
    if (strip_dir && n_strips > 0) {
      const std::filesystem::path dir(strip_dir);
      std::filesystem::create_directories(dir);
      hook = [&, dir](std::size_t i, const depthlab::Refinement& res, const depthlab::DepthMap& refined) {
        if (i >= static_cast<std::size_t>(n_strips)) return;
        char name[32];
        std::snprintf(name, sizeof name, "strip_%06zu.pgm", i);
        depthlab::write_strip(dir / name, pairs[i].image, res.coarse, refined, pairs[i].depth);
      };
    }
    const depthlab::SplitResult s =
        depthlab::evaluate_split(*need(r, "refiner is NULL").ckpt, need(coarse, "coarse model is NULL").model, pairs,
                                 c.run.ddim_steps, c.run.ensemble, c.run.seed, hook);
    if (csv_path) depthlab::write_split_csv(csv_path, s, echo_of(c));
    if (summary) *summary = {s.mean_absrel, s.mean_delta1, s.mean_coarse_absrel, s.mean_coarse_delta1};
  });
}

dl_status dl_sweep(const dl_config* cfg, const char* axis, const double* values, size_t n_values, int repeats,
                   const dl_split* train, const dl_split* test, const dl_coarse* coarse, const dl_refiner* r,
                   const char* csv_path) {
  return guarded([&] {
    const dl_config& c = need(cfg, "config is NULL");
    if (!values && n_values > 0) throw InvalidArgument{"values is NULL"};
    depthlab::SweepInputs in;
    if (train) in.train = train->pairs;
    in.test = need(test, "test split is NULL").pairs;
    in.coarse = &need(coarse, "coarse model is NULL").model;
    in.checkpoint = r ? &*r->ckpt : nullptr;
    in.repeats = repeats;
    const depthlab::SweepResult res = depthlab::run_sweep(depthlab::parse_axis(need_str(axis, "axis is NULL")),
                                                          std::span<const double>(values, n_values), c.run, in);
    if (csv_path) depthlab::write_sweep_csv(csv_path, res, echo_of(c));
  });
}

dl_status dl_error_bars(const dl_refiner* r, const dl_coarse* coarse, const dl_split* test, const dl_config* cfg,
                        int repeats, const char* csv_path, double* absrel_mean, double* absrel_std,
                        double* delta1_mean, double* delta1_std) {
  return guarded([&] {
    const dl_config& c = need(cfg, "config is NULL");
    const depthlab::SweepResult res =
        depthlab::error_bars(*need(r, "refiner is NULL").ckpt, need(coarse, "coarse model is NULL").model,
                             need(test, "split is NULL").pairs, repeats, c.run.ddim_steps, c.run.seed);
    if (csv_path) depthlab::write_sweep_csv(csv_path, res, echo_of(c));
    const depthlab::SweepPoint& p = res.points.front();
    if (absrel_mean) *absrel_mean = p.absrel_mean;
    if (absrel_std) *absrel_std = p.absrel_std;
    if (delta1_mean) *delta1_mean = p.delta1_mean;
    if (delta1_std) *delta1_std = p.delta1_std;
  });
}

dl_status dl_ablation(const char* const* checkpoint_paths, size_t n, const dl_coarse* coarse, const dl_split* test,
                      const dl_config* cfg, const char* csv_path) {
  return guarded([&] {
    const dl_config& c = need(cfg, "config is NULL");
    if (!checkpoint_paths && n > 0) throw InvalidArgument{"checkpoint list is NULL"};
    std::vector<std::filesystem::path> paths;
    for (size_t i = 0; i < n; ++i) paths.emplace_back(need_str(checkpoint_paths[i], "checkpoint path is NULL"));
    const depthlab::SweepResult res =
        depthlab::run_ablation(paths, need(coarse, "coarse model is NULL").model, need(test, "split is NULL").pairs,
                               c.run.ddim_steps, c.run.ensemble, c.run.seed);
    if (csv_path) depthlab::write_sweep_csv(csv_path, res, echo_of(c));
  });
}

dl_status dl_render_table(const char* csv_path, char* buf, size_t cap, size_t* needed) {
  return guarded([&] { copy_text(depthlab::render_csv_table(need_str(csv_path, "path is NULL")), buf, cap, needed); });
}

}  // extern "C"
