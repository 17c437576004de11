// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <fstream>

#include "depthlab/checkpoint.hpp"
#include "depthlab/config.hpp"
#include "support.hpp"

using namespace depthlab;
using namespace testing;

TEST_CASE("key-value text parsing") {
  const auto kv = KeyValues::parse("# comment\n\n  seed = 12 \nname=a=b\nflag=true\n");
  CHECK(kv.get("seed") == "12");
  CHECK(kv.get("name") == "a=b");
  CHECK(kv.get_int("seed", 0) == 12);
  CHECK(kv.get_bool("flag", false));
  CHECK(kv.get_double("missing", 2.5) == 2.5);
  CHECK(kv.get_or("missing", "x") == "x");
  CHECK(code_of([&] { kv.get("missing"); }) == ErrorCode::Config);
  CHECK(code_of([&] { kv.get_int("name", 0); }) == ErrorCode::Config);
  CHECK(code_of([] { KeyValues::parse("novalue\n"); }) == ErrorCode::Config);
  CHECK(code_of([] { KeyValues::parse("=3\n"); }) == ErrorCode::Config);
  CHECK(KeyValues::parse(kv.to_string()).items() == kv.items());
}

TEST_CASE("doubles format to the shortest round-trip form") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(3e-5) == "3e-05");
  CHECK(format_double(8) == "8");
  for (double v : {1.0 / 3.0, 0.00085, 1e-300, -2.5e10}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("run configuration round-trips") {
  RunConfig c;
  c.seed = 99;
  c.lr = 1.25e-4;
  c.variant = "no-mask";
  c.random_affine = false;
  c.pool = "min";
  const RunConfig back = RunConfig::from_kv(c.to_kv());
  CHECK(back.to_string() == c.to_string());
  CHECK(back.seed == 99);
  CHECK(back.lr == 1.25e-4);
  CHECK(back.variant == "no-mask");
  CHECK_FALSE(back.random_affine);

  TempDir dir("config");
  c.to_kv().save(dir.path / "run.txt");
  CHECK(RunConfig::from_kv(KeyValues::load(dir.path / "run.txt")).to_string() == c.to_string());
  CHECK(code_of([&] { KeyValues::load(dir.path / "none.txt"); }) == ErrorCode::Io);
}

TEST_CASE("defaults") {
  const RunConfig c;
  c.validate();
  CHECK(c.lr == 3e-5);
  CHECK(c.patch_size == 8);
  CHECK(c.threshold == 0.1);
  CHECK(c.ddim_steps == 50);
  CHECK(c.ensemble == 10);
  CHECK(c.timesteps == 1000);
  CHECK(c.beta_start == 0.00085);
  CHECK(c.beta_end == 0.012);
  CHECK(c.height == 64);
}

TEST_CASE("unknown keys are rejected but meta keys pass through") {
  KeyValues kv;
  kv.set("meta.note", "x");
  CHECK_NOTHROW(RunConfig::from_kv(kv));
  kv.set("learning_rate", "1");
  CHECK(code_of([&] { RunConfig::from_kv(kv); }) == ErrorCode::Config);
  KeyValues bad;
  bad.set("seed", "-1");
  CHECK(code_of([&] { RunConfig::from_kv(bad); }) == ErrorCode::Config);
}

TEST_CASE("validation catches out-of-range values") {
  const auto rejects = [](auto mutate) {
    RunConfig c;
    mutate(c);
    return code_of([&] { c.validate(); }) == ErrorCode::Config;
  };
  CHECK(rejects([](RunConfig& c) { c.patch_size = 48; }));
  CHECK(rejects([](RunConfig& c) { c.threshold = 0.0; }));
  CHECK(rejects([](RunConfig& c) { c.beta_end = 1.0; }));
  CHECK(rejects([](RunConfig& c) { c.ddim_steps = 1001; }));
  CHECK(rejects([](RunConfig& c) { c.ddim_steps = 0; }));
  CHECK(rejects([](RunConfig& c) { c.variant = "none"; }));
  CHECK(rejects([](RunConfig& c) { c.pool = "mean"; }));
  CHECK(rejects([](RunConfig& c) { c.lr = 0.0; }));
  CHECK(rejects([](RunConfig& c) { c.ensemble = 0; }));
  CHECK(rejects([](RunConfig& c) { c.codec_factor = 3; }));
  CHECK(rejects([](RunConfig& c) { c.quantize_levels = 1; }));
  CHECK(rejects([](RunConfig& c) { c.norm_lo_pct = 99.0; }));
}

TEST_CASE("checkpoint container") {
  TempDir dir("container");
  CheckpointFile f;
  f.kind = "probe";
  f.config.set("seed", "3");
  f.blobs.push_back({"w", {1, 2, 1, 3}, {1, 2, 3, 4, 5, 6}});
  f.blobs.push_back({"b", {1, 1, 1, 1}, {-0.5f}});
  save_checkpoint(dir.path / "c.bin", f);
  const CheckpointFile back = load_checkpoint(dir.path / "c.bin");
  CHECK(back.kind == "probe");
  CHECK(back.config.get("seed") == "3");
  REQUIRE(back.blobs.size() == 2);
  CHECK(back.blobs[0].shape == f.blobs[0].shape);
  CHECK(back.blobs[0].data == f.blobs[0].data);
  CHECK(back.blobs[1].data == f.blobs[1].data);

  const std::string bytes = slurp(dir.path / "c.bin");
  CHECK(bytes.rfind("DEPTHLAB", 0) == 0);
  std::ofstream(dir.path / "short.bin", std::ios::binary) << bytes.substr(0, bytes.size() - 3);
  CHECK(code_of([&] { load_checkpoint(dir.path / "short.bin"); }) == ErrorCode::Format);
  std::string wrong = bytes;
  wrong[0] = 'X';
  std::ofstream(dir.path / "magic.bin", std::ios::binary) << wrong;
  CHECK(code_of([&] { load_checkpoint(dir.path / "magic.bin"); }) == ErrorCode::Format);
  std::string version = bytes;
  version[8] = 7;
  std::ofstream(dir.path / "version.bin", std::ios::binary) << version;
  CHECK(code_of([&] { load_checkpoint(dir.path / "version.bin"); }) == ErrorCode::Format);
  CHECK(code_of([&] { load_checkpoint(dir.path / "absent.bin"); }) == ErrorCode::MissingCheckpoint);
}

TEST_CASE("parameter import checks names and shapes") {
  std::vector<nn::Parameter<float>> params{{"w", nn::parameter(nn::Tensor<float>(1, 2, 1, 3))}};
  std::vector<Blob> blobs{{"w", {1, 2, 1, 3}, {1, 2, 3, 4, 5, 6}}};
  import_parameters(blobs, params);
  CHECK(params[0].var->value.data == blobs[0].data);
  CHECK(export_parameters(params)[0].data == blobs[0].data);
  blobs[0].shape = {1, 3, 1, 2};
  CHECK(code_of([&] { import_parameters(blobs, params); }) == ErrorCode::Format);
  blobs[0] = {"v", {1, 2, 1, 3}, {1, 2, 3, 4, 5, 6}};
  CHECK(code_of([&] { import_parameters(blobs, params); }) == ErrorCode::Format);
}
