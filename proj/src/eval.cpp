// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "depthlab/depthio.hpp"
#include "depthlab/rng.hpp"

namespace depthlab {
namespace {

constexpr double kFloor = 1e-6;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void check_metric_inputs(const DepthMap& pred, const DepthMap& gt) {
  if (!pred.same_shape(gt)) fail(ErrorCode::Shape, "metrics: prediction and ground truth differ in shape");
  std::size_t n = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.valid(i) || !pred.valid(i)) continue;
    if (!(gt.values[i] > 0.0f)) fail(ErrorCode::Range, "metrics: ground truth must be positive on valid pixels");
    ++n;
  }
  if (n == 0) fail(ErrorCode::EmptyDepth, "metrics: no jointly valid pixels");
}

MetricReport score(const DepthMap& pred, const DepthMap& gt, double s, double b, double floor) {
  MetricReport r;
  double abs_sum = 0.0;
  std::size_t good = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!gt.valid(i) || !pred.valid(i)) continue;
    const double d = gt.values[i];
    double a = s * pred.values[i] + b;
    if (a < floor) a = floor;
    abs_sum += std::abs(a - d) / d;
    const double ratio = std::max(a / d, d / a);
    if (ratio < 1.25) ++good;
    ++r.n_pixels;
  }
  r.absrel = abs_sum / static_cast<double>(r.n_pixels);
  r.delta1 = static_cast<double>(good) / static_cast<double>(r.n_pixels);
  return r;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

bool numeric_axis(SweepAxis a) { return a != SweepAxis::variant && a != SweepAxis::repeat; }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

void write_config_echo(std::ostream& os, const KeyValues& config) {
  for (const auto& [k, v] : config.items()) os << "# " << k << '=' << v << '\n';
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write " + path.string());
  return os;
}

std::string pm(double mean, double sd) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << mean << " +- " << sd;
  return os.str();
}

}  // namespace

MetricReport score_aligned(const DepthMap& aligned, const DepthMap& gt) {
  check_metric_inputs(aligned, gt);
  return score(aligned, gt, 1.0, 0.0, -HUGE_VAL);
}

MetricReport compute_metrics(const DepthMap& pred, const DepthMap& gt) {
  check_metric_inputs(pred, gt);
  const AffineFit fit = fit_affine(pred, gt);
  MetricReport r = score(pred, gt, fit.s, fit.b, kFloor);
  r.fit = fit;
  return r;
}

DepthMap ensemble_median(std::span<const DepthMap> members) {
  if (members.empty()) fail(ErrorCode::Config, "ensemble needs at least one member");
  const DepthMap& ref = members.front();
  if (members.size() == 1) return ref;
  std::vector<std::vector<double>> aligned(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    const DepthMap& m = members[k];
    if (!m.same_shape(ref)) fail(ErrorCode::Shape, "ensemble members differ in shape");
    double s = 1.0, b = 0.0;
    if (k > 0) {
      try {
        const AffineFit fit = fit_affine(m, ref);
        s = fit.s;
        b = fit.b;
      } catch (const Error& e) {
        // A flat member cannot be aligned; it enters the median as is.
        if (e.code() != ErrorCode::DegenerateSource && e.code() != ErrorCode::InsufficientOverlap) throw;
      }
    }
    aligned[k].resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) aligned[k][i] = s * m.values[i] + b;
  }
  DepthMap out = ref;
  std::vector<double> column(members.size());
  const std::size_t mid = members.size() / 2;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t k = 0; k < members.size(); ++k) column[k] = aligned[k][i];
    std::sort(column.begin(), column.end());
    const double med = members.size() % 2 ? column[mid] : 0.5 * (column[mid - 1] + column[mid]);
    out.values[i] = static_cast<float>(med);
  }
  return out;
}

DepthMap ensemble_refine(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse, const ImageMap& image,
                         const DepthMap* gt, int n_members, int steps, std::uint64_t seed) {
  const Refinement r = refine_members(ckpt, coarse, image, gt, steps, n_members, seed);
  return ensemble_median(r.members);
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  return derive_key(seed, 0x5A3E000000000000ULL + index);
}

SplitResult evaluate_split(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse,
                           std::span<const LoadedPair> test, int steps, int ensemble, std::uint64_t seed,
                           const SampleHook& on_sample) {
  if (test.empty()) fail(ErrorCode::Config, "evaluation split is empty");
  SplitResult out;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Refinement r = refine_members(ckpt, coarse, test[i].image, &test[i].depth, steps, ensemble,
                                        sample_seed(seed, i));
    const DepthMap refined = ensemble_median(r.members);
    SampleResult s;
    s.index = i;
    s.refined = compute_metrics(refined, test[i].depth);
    s.coarse = compute_metrics(r.coarse, test[i].depth);
    s.runtime_s = seconds_since(t0);
    if (on_sample) on_sample(i, r, refined);
    out.mean_absrel += s.refined.absrel;
    out.mean_delta1 += s.refined.delta1;
    out.mean_coarse_absrel += s.coarse.absrel;
    out.mean_coarse_delta1 += s.coarse.delta1;
    out.samples.push_back(s);
  }
  const double n = static_cast<double>(test.size());
  out.mean_absrel /= n;
  out.mean_delta1 /= n;
  out.mean_coarse_absrel /= n;
  out.mean_coarse_delta1 /= n;
  return out;
}

std::string axis_name(SweepAxis a) {
  switch (a) {
    case SweepAxis::patch_size: return "patch_size";
    case SweepAxis::threshold: return "threshold";
    case SweepAxis::ensemble: return "ensemble";
    case SweepAxis::ddim_steps: return "ddim_steps";
    case SweepAxis::variant: return "variant";
    case SweepAxis::repeat: return "repeat";
  }
  return "?";
}

SweepAxis parse_axis(const std::string& s) {
  for (SweepAxis a : {SweepAxis::patch_size, SweepAxis::threshold, SweepAxis::ensemble, SweepAxis::ddim_steps})
    if (axis_name(a) == s) return a;
  fail(ErrorCode::Config, "unknown sweep axis '" + s + "' (patch_size, threshold, ensemble, ddim_steps)");
}

void summarize(SweepResult& r) {
  r.points.clear();
  std::vector<std::string> order;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const SweepRow& row : r.rows) {
    if (!groups.count(row.value)) order.push_back(row.value);
    groups[row.value].first.push_back(row.absrel);
    groups[row.value].second.push_back(row.delta1);
  }
  for (const std::string& v : order) {
    const auto& [a, d] = groups[v];
    r.points.push_back({v, mean_of(a), std_of(a), mean_of(d), std_of(d)});
  }
}

SweepResult run_ablation(std::span<const NamedCheckpoint> variants, const CoarseModel& coarse,
                         std::span<const LoadedPair> test, int steps, int ensemble, std::uint64_t seed) {
  if (variants.empty()) fail(ErrorCode::Config, "ablation needs at least one variant");
  SweepResult r;
  r.axis = SweepAxis::variant;
  for (const NamedCheckpoint& v : variants) {
    if (!v.checkpoint) fail(ErrorCode::MissingCheckpoint, "variant '" + v.name + "' has no checkpoint");
    const auto t0 = std::chrono::steady_clock::now();
    const SplitResult s = evaluate_split(*v.checkpoint, coarse, test, steps, ensemble, seed);
    r.rows.push_back({v.name, 0, s.mean_absrel, s.mean_delta1, seconds_since(t0)});
  }
  summarize(r);
  return r;
}

SweepResult run_ablation(std::span<const std::filesystem::path> checkpoints, const CoarseModel& coarse,
                         std::span<const LoadedPair> test, int steps, int ensemble, std::uint64_t seed) {
  std::vector<DenoiserCheckpoint> loaded;
  loaded.reserve(checkpoints.size());
  for (const auto& p : checkpoints) loaded.push_back(DenoiserCheckpoint::load(p));
  std::vector<NamedCheckpoint> named;
  for (const auto& c : loaded) named.push_back({c.config().variant_name, &c});
  return run_ablation(named, coarse, test, steps, ensemble, seed);
}

SweepResult run_sweep(SweepAxis axis, std::span<const double> values, const RunConfig& config,
                      const SweepInputs& in) {
  if (values.empty()) fail(ErrorCode::Config, "sweep needs at least one value");
  if (!numeric_axis(axis)) fail(ErrorCode::Config, "axis '" + axis_name(axis) + "' is not a sweep axis");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (!(values[i] > values[i - 1])) fail(ErrorCode::Config, "sweep values must be strictly increasing");
  if (!in.coarse) fail(ErrorCode::Config, "sweep needs a coarse model");
  if (in.repeats < 1) fail(ErrorCode::Config, "sweep repeats must be >= 1");

  const bool trains = axis == SweepAxis::patch_size || axis == SweepAxis::threshold;
  std::vector<RunConfig> configs;
  for (double v : values) {
    RunConfig c = config;
    const bool integral = std::floor(v) == v && v >= 1.0;
    switch (axis) {
      case SweepAxis::patch_size:
        if (!integral) fail(ErrorCode::Config, "patch sizes must be positive integers");
        c.patch_size = static_cast<int>(v);
        break;
      case SweepAxis::threshold: c.threshold = v; break;
      case SweepAxis::ensemble:
        if (!integral) fail(ErrorCode::Config, "ensemble sizes must be positive integers");
        c.ensemble = static_cast<int>(v);
        break;
      case SweepAxis::ddim_steps:
        if (!integral) fail(ErrorCode::Config, "step counts must be positive integers");
        c.ddim_steps = static_cast<int>(v);
        break;
      default: break;
    }
    c.validate();
    configs.push_back(c);
  }
  if (!trains && !in.checkpoint) fail(ErrorCode::Config, "inference sweeps need a trained checkpoint");

  SweepResult r;
  r.axis = axis;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const RunConfig& c = configs[k];
    std::optional<DenoiserCheckpoint> trained;
    if (trains) trained.emplace(train_refiner(in.train, *in.coarse, refiner_config_from(c)));
    const DenoiserCheckpoint& ckpt = trains ? *trained : *in.checkpoint;
    for (int rep = 0; rep < in.repeats; ++rep) {
      const auto t0 = std::chrono::steady_clock::now();
      const std::uint64_t seed = rep == 0 ? c.seed : derive_key(c.seed, static_cast<std::uint64_t>(rep));
      const SplitResult s = evaluate_split(ckpt, *in.coarse, in.test, c.ddim_steps, c.ensemble, seed);
      r.rows.push_back({format_double(values[k]), rep, s.mean_absrel, s.mean_delta1, seconds_since(t0)});
    }
  }
  summarize(r);
  return r;
}

SweepResult error_bars(const DenoiserCheckpoint& ckpt, const CoarseModel& coarse, std::span<const LoadedPair> test,
                       int n_repeats, int steps, std::uint64_t seed) {
  if (n_repeats < 2) fail(ErrorCode::Config, "error bars need at least two repeats");
  if (test.empty()) fail(ErrorCode::Config, "evaluation split is empty");
  const std::size_t n = static_cast<std::size_t>(n_repeats);
  std::vector<double> absrel(n, 0.0), delta1(n, 0.0), runtime(n, 0.0);
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const Refinement r = refine_members(ckpt, coarse, test[i].image, &test[i].depth, steps, n_repeats,
                                        sample_seed(seed, i));
    const double per_member = seconds_since(t0) / static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      const MetricReport m = compute_metrics(r.members[k], test[i].depth);
      absrel[k] += m.absrel;
      delta1[k] += m.delta1;
      runtime[k] += per_member;
    }
  }
  SweepResult out;
  out.axis = SweepAxis::repeat;
  const double count = static_cast<double>(test.size());
  for (std::size_t k = 0; k < n; ++k)
    out.rows.push_back({"single", static_cast<int>(k), absrel[k] / count, delta1[k] / count, runtime[k]});
  summarize(out);
  return out;
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& r, const KeyValues& config) {
  std::ofstream os = open_out(path);
  write_config_echo(os, config);
  os << "axis,value,repeat,absrel,delta1,runtime_s\n";
  const std::string axis = axis_name(r.axis);
  for (const SweepRow& row : r.rows)
    os << axis << ',' << row.value << ',' << row.repeat << ',' << format_double(row.absrel) << ','
       << format_double(row.delta1) << ',' << format_double(row.runtime_s) << '\n';
  if (!os) fail(ErrorCode::Io, "failed writing " + path.string());
}

void write_split_csv(const std::filesystem::path& path, const SplitResult& r, const KeyValues& config) {
  std::ofstream os = open_out(path);
  write_config_echo(os, config);
  os << "index,coarse_absrel,coarse_delta1,absrel,delta1,runtime_s\n";
  for (const SampleResult& s : r.samples)
    os << s.index << ',' << format_double(s.coarse.absrel) << ',' << format_double(s.coarse.delta1) << ','
       << format_double(s.refined.absrel) << ',' << format_double(s.refined.delta1) << ','
       << format_double(s.runtime_s) << '\n';
  if (!os) fail(ErrorCode::Io, "failed writing " + path.string());
}

std::string render_csv_table(const std::filesystem::path& csv) {
  std::ifstream is(csv);
  if (!is) fail(ErrorCode::Io, "cannot read " + csv.string());
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header.empty()) header = split_csv_line(line);
    else rows.push_back(split_csv_line(line));
  }
  if (header.empty()) fail(ErrorCode::Format, csv.string() + " has no header row");
  const auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorCode::Format, csv.string() + " lacks column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  std::ostringstream os;
  os << csv.filename().string() << '\n';
  if (header.front() == "axis") {
    const std::size_t cv = column("value"), ca = column("absrel"), cd = column("delta1");
    SweepResult r;
    for (const auto& row : rows) {
      if (row.size() != header.size()) fail(ErrorCode::Format, csv.string() + " has a ragged row");
      r.rows.push_back({row[cv], 0, std::stod(row[ca]), std::stod(row[cd]), 0.0});
    }
    summarize(r);
    os << std::left << std::setw(14) << (rows.empty() ? "value" : rows.front()[0]) << std::setw(6) << "n"
       << std::setw(22) << "absrel" << "delta1\n";
    for (const SweepPoint& p : r.points) {
      const auto n = std::count_if(r.rows.begin(), r.rows.end(), [&](const SweepRow& x) { return x.value == p.value; });
      os << std::left << std::setw(14) << p.value << std::setw(6) << n << std::setw(22)
         << pm(p.absrel_mean, p.absrel_std) << pm(p.delta1_mean, p.delta1_std) << '\n';
    }
  } else if (header.front() == "index") {
    const std::size_t c0 = column("coarse_absrel"), c1 = column("coarse_delta1"), c2 = column("absrel"),
                      c3 = column("delta1");
    os << std::left << std::setw(8) << "index" << std::setw(16) << "coarse_absrel" << std::setw(16)
       << "coarse_delta1" << std::setw(12) << "absrel" << "delta1\n";
    std::vector<double> sums(4, 0.0);
    for (const auto& row : rows) {
      if (row.size() != header.size()) fail(ErrorCode::Format, csv.string() + " has a ragged row");
      const double v[4] = {std::stod(row[c0]), std::stod(row[c1]), std::stod(row[c2]), std::stod(row[c3])};
      for (int k = 0; k < 4; ++k) sums[static_cast<std::size_t>(k)] += v[k];
      os << std::left << std::fixed << std::setprecision(4) << std::setw(8) << row[0] << std::setw(16) << v[0]
         << std::setw(16) << v[1] << std::setw(12) << v[2] << v[3] << '\n';
    }
    if (!rows.empty()) {
      const double n = static_cast<double>(rows.size());
      os << std::left << std::setw(8) << "mean" << std::setw(16) << sums[0] / n << std::setw(16) << sums[1] / n
         << std::setw(12) << sums[2] / n << sums[3] / n << '\n';
    }
  } else {
    for (const auto& h : header) os << std::left << std::setw(14) << h;
    os << '\n';
    for (const auto& row : rows) {
      for (const auto& c : row) os << std::left << std::setw(14) << c;
      os << '\n';
    }
  }
  return os.str();
}

void write_strip(const std::filesystem::path& path, const ImageMap& image, const DepthMap& coarse,
                 const DepthMap& refined, const DepthMap& gt) {
  const int h = gt.height, w = gt.width, gap = 2;
  if (image.height != h || image.width != w || !coarse.same_shape(gt) || !refined.same_shape(gt))
    fail(ErrorCode::Shape, "strip panels differ in shape");
  double lo = HUGE_VAL, hi = -HUGE_VAL;
  for (std::size_t i = 0; i < gt.size(); ++i)
    if (gt.valid(i)) {
      lo = std::min(lo, static_cast<double>(gt.values[i]));
      hi = std::max(hi, static_cast<double>(gt.values[i]));
    }
  if (!(hi > lo)) hi = lo + 1.0;
  const int out_w = 4 * w + 3 * gap;
  std::vector<std::uint8_t> px(static_cast<std::size_t>(h) * out_w, 0);
  const auto to_byte = [](double u) { return static_cast<std::uint8_t>(std::lround(std::clamp(u, 0.0, 1.0) * 255.0)); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double lum = 0.0;
      for (int c = 0; c < image.channels; ++c) lum += image.at(y, x, c);
      px[static_cast<std::size_t>(y) * out_w + x] = to_byte(lum / image.channels);
    }
  const DepthMap* panels[3] = {&coarse, &refined, &gt};
  for (int k = 0; k < 3; ++k) {
    const DepthMap& d = *panels[k];
    double s = 1.0, b = 0.0;
    if (k < 2) {
      try {
        const AffineFit fit = fit_affine(d, gt);
        s = fit.s;
        b = fit.b;
      } catch (const Error&) {
      }
    }
    const int x0 = (k + 1) * (w + gap);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        // Near is bright.
        px[static_cast<std::size_t>(y) * out_w + x0 + x] =
            d.valid(i) ? to_byte(1.0 - ((s * d.values[i] + b) - lo) / (hi - lo)) : 0;
      }
  }
  write_pgm(path, h, out_w, px);
}

}  // namespace depthlab
