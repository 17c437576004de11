// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstring>
#include <set>

#include "depthlab/nn.hpp"
#include "support.hpp"

using namespace depthlab;
using namespace depthlab::nn;

namespace {

Tensor<double> random_tensor(int n, int c, int h, int w, std::uint64_t seed, double scale = 1.0) {
  Tensor<double> t(n, c, h, w);
  Rng rng(seed);
  for (auto& v : t.data) v = scale * rng.normal();
  return t;
}

Tensor<double> random_mask(int n, int h, int w, std::uint64_t seed) {
  Tensor<double> m(n, 1, h, w);
  Rng rng(seed);
  for (auto& v : m.data) v = rng.uniform() < 0.6 ? 1.0 : 0.0;
  m.data[0] = 1.0;
  return m;
}

struct GradStats {
  double max_rel = 0.0;
  std::size_t checked = 0;
};

// Compares the tape gradient of every entry of every var in `vars` with a
// central difference of `loss_fn` (step h).
GradStats check_gradients(const std::function<Var<double>(Tape<double>*)>& loss_fn, std::vector<Var<double>> vars,
                          double h = 1e-4) {
  for (auto& v : vars) v->grad = Tensor<double>();
  Tape<double> tape;
  const Var<double> loss = loss_fn(&tape);
  tape.backward(loss);
  GradStats st;
  for (auto& v : vars) {
    const Tensor<double> analytic = v->grad.size() ? v->grad : Tensor<double>(v->value.n, v->value.c, v->value.h, v->value.w);
    for (std::size_t i = 0; i < v->value.size(); ++i) {
      const double orig = v->value.data[i];
      v->value.data[i] = orig + h;
      const double up = loss_fn(nullptr)->value.data[0];
      v->value.data[i] = orig - h;
      const double down = loss_fn(nullptr)->value.data[0];
      v->value.data[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.data[i];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      if (scale > 1e-8) st.max_rel = std::max(st.max_rel, std::abs(a - numeric) / scale);
      ++st.checked;
    }
  }
  return st;
}

}  // namespace

TEST_CASE("op gradients match central differences") {
  const auto x = parameter(random_tensor(2, 3, 6, 6, 1));
  const auto w3 = parameter(random_tensor(4, 3, 3, 3, 2, 0.3));
  const auto b3 = parameter(random_tensor(4, 1, 1, 1, 3));
  const auto target = random_tensor(2, 4, 3, 3, 4);
  const auto target_full = random_tensor(2, 4, 6, 6, 5);
  const auto mask = random_mask(2, 3, 3, 6);
  const auto mask_full = random_mask(2, 6, 6, 7);

  SUBCASE("strided conv") {
    const auto st = check_gradients([&](Tape<double>* t) { return masked_mse(t, conv2d(t, x, w3, b3, 2), target, mask); },
                                    {x, w3, b3});
    CHECK(st.max_rel < 1e-6);
  }
  SUBCASE("group norm and silu") {
    const auto g = parameter(random_tensor(1, 4, 1, 1, 8));
    const auto be = parameter(random_tensor(1, 4, 1, 1, 9));
    const auto st = check_gradients(
        [&](Tape<double>* t) {
          return masked_mse(t, silu(t, group_norm(t, conv2d(t, x, w3, b3, 1), g, be, 2)), target_full, mask_full);
        },
        {x, w3, g, be});
    CHECK(st.max_rel < 1e-5);
  }
  SUBCASE("upsample, concat and add") {
    const auto small = parameter(random_tensor(2, 2, 3, 3, 10));
    const auto other = parameter(random_tensor(2, 2, 6, 6, 11));
    const auto st = check_gradients(
        [&](Tape<double>* t) {
          const auto u = upsample2x(t, small);
          const auto cat = concat_channels(t, add(t, u, other), other);
          return masked_mse(t, cat, target_full, mask_full);
        },
        {small, other});
    CHECK(st.max_rel < 1e-6);
  }
  SUBCASE("linear and channel bias") {
    const auto feat = parameter(random_tensor(2, 5, 1, 1, 12));
    const auto wl = parameter(random_tensor(4, 5, 1, 1, 13));
    const auto bl = parameter(random_tensor(4, 1, 1, 1, 14));
    const auto st = check_gradients(
        [&](Tape<double>* t) {
          const auto e = linear(t, feat, wl, bl);
          return masked_mse(t, add_channel_bias(t, conv2d(t, x, w3, b3, 1), e), target_full, mask_full);
        },
        {feat, wl, bl, x});
    CHECK(st.max_rel < 1e-6);
  }
  SUBCASE("ssi loss") {
    const auto p = parameter(random_tensor(2, 1, 6, 6, 15));
    const auto lab = random_tensor(2, 1, 6, 6, 16);
    const auto st = check_gradients([&](Tape<double>* t) { return ssi_mse(t, p, lab, mask_full); }, {p});
    CHECK(st.max_rel < 1e-5);
  }
}

TEST_CASE("masked loss normalizes per valid element and skips empty samples") {
  Tensor<double> pred(2, 2, 2, 2, 2.0), target(2, 2, 2, 2, 0.0), mask(2, 1, 2, 2, 0.0);
  mask.data[0] = 1.0;  // sample 0 keeps one pixel; sample 1 keeps nothing
  const double loss = masked_mse<double>(nullptr, constant(pred), target, mask)->value.data[0];
  CHECK(loss == doctest::Approx(4.0));
}

TEST_CASE("micro denoiser: every parameter gradient matches central differences") {
  UNetConfig cfg;
  cfg.in_channels = 3;
  cfg.out_channels = 1;
  cfg.base_channels = 4;
  cfg.levels = 2;
  cfg.time_dim = 8;
  cfg.max_groups = 2;
  cfg.zero_init_output = false;
  UNet<double> net(cfg, 21);
  const auto input = random_tensor(2, 3, 8, 8, 22);
  const auto target = random_tensor(2, 1, 8, 8, 23);
  const auto mask = random_mask(2, 8, 8, 24);
  const int ts[2] = {17, 640};
  std::vector<Var<double>> vars;
  for (auto& p : net.parameters()) vars.push_back(p.var);
  const auto st = check_gradients([&](Tape<double>* t) { return masked_mse(t, net.forward(t, input, ts), target, mask); },
                                  vars);
  CHECK(st.checked == net.parameter_count());
  CHECK(st.max_rel < 1e-3);
}

TEST_CASE("forward is deterministic and batch independent") {
  UNetConfig cfg;
  cfg.in_channels = 5;
  cfg.base_channels = 8;
  cfg.levels = 3;
  cfg.zero_init_output = false;
  UNet<float> net(cfg, 5);
  Tensor<float> pair(2, 5, 16, 16);
  Rng rng(3);
  for (auto& v : pair.data) v = static_cast<float>(rng.normal());
  const int ts2[2] = {10, 900};
  const Tensor<float> out2 = net.forward(nullptr, pair, ts2)->value;
  CHECK(net.forward(nullptr, pair, ts2)->value.data == out2.data);

  Tensor<float> single(1, 5, 16, 16);
  std::copy(pair.at(1, 0), pair.at(1, 0) + single.size(), single.data.begin());
  const int ts1[1] = {900};
  const Tensor<float> out1 = net.forward(nullptr, single, ts1)->value;
  CHECK(std::memcmp(out1.data.data(), out2.at(1, 0), out1.size() * sizeof(float)) == 0);
}

TEST_CASE("zero-initialized output layer gives a zero prediction") {
  UNetConfig cfg;
  cfg.base_channels = 8;
  UNet<float> net(cfg, 1);
  Tensor<float> x(1, 5, 16, 16, 0.5f);
  const int t[1] = {100};
  const auto out = net.forward(nullptr, x, t);
  for (float v : out->value.data) CHECK(v == 0.0f);
}

TEST_CASE("adam minimizes a quadratic") {
  std::vector<Parameter<double>> params{{"p", parameter(Tensor<double>(1, 3, 1, 1, 5.0))}};
  const Tensor<double> target(1, 3, 1, 1, -1.0), mask(1, 1, 1, 1, 1.0);
  Adam<double> adam(0.1);
  for (int i = 0; i < 500; ++i) {
    Tape<double> tape;
    params[0].var->grad = Tensor<double>();
    const auto loss = masked_mse(&tape, params[0].var, target, mask);
    tape.backward(loss);
    adam.step(params);
  }
  for (double v : params[0].var->value.data) CHECK(v == doctest::Approx(-1.0).epsilon(1e-3));
}

TEST_CASE("timestep features are bounded sinusoids") {
  const int ts[3] = {0, 1, 1000};
  const Tensor<float> f = timestep_features<float>(ts, 16);
  CHECK(f.n == 3);
  CHECK(f.c == 16);
  for (float v : f.data) CHECK((v >= -1.0f && v <= 1.0f));
  CHECK(f.data[0 * 16 + 0] != f.data[2 * 16 + 0]);
}

TEST_CASE("parameter names are unique and shapes positive") {
  UNet<float> net(UNetConfig{}, 1);
  std::set<std::string> names;
  for (const auto& p : net.parameters()) {
    CHECK(names.insert(p.name).second);
    CHECK(p.var->value.size() > 0);
  }
  CHECK(net.parameter_count() > 150000);
  CHECK(net.parameter_count() < 400000);
}
