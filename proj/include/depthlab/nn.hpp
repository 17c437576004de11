// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

// Minimal reverse-mode autodiff over NCHW tensors, enough to train the small
// convolutional encoder-decoders used by the coarse regressor and the
// diffusion refiner. Instantiated for float (training, inference) and double
// (finite-difference gradient checks).

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "depthlab/error.hpp"

namespace depthlab::nn {

template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const noexcept { return static_cast<std::size_t>(c) * h * w; }
  T* at(int ni, int ci) { return data.data() + ni * sample() + ci * plane(); }
  const T* at(int ni, int ci) const { return data.data() + ni * sample() + ci * plane(); }
  bool same_shape(const Tensor& o) const noexcept {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  std::string shape_string() const;
};

template <class T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // allocated on first accumulation
  bool requires_grad = false;

  Tensor<T>& grad_buffer();
};

template <class T>
using Var = std::shared_ptr<Node<T>>;

template <class T>
Var<T> constant(Tensor<T> value);

template <class T>
Var<T> parameter(Tensor<T> value);

/// Records backward closures in execution order. Passing a null tape to an
/// op runs it in inference mode.
template <class T>
class Tape {
 public:
  void record(std::function<void()> fn) { fns_.push_back(std::move(fn)); }
  /// Seeds d(loss)/d(loss) = 1 and runs the closures in reverse.
  void backward(const Var<T>& scalar_loss);
  void clear() { fns_.clear(); }
  std::size_t size() const noexcept { return fns_.size(); }

 private:
  std::vector<std::function<void()>> fns_;
};

// Ops. `weight` for conv2d is (Cout, Cin, k, k); biases and norm affine
// parameters are (1, C, 1, 1); linear weights are (M, K, 1, 1).
template <class T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride);
template <class T>
Var<T> group_norm(Tape<T>* tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups);
template <class T>
Var<T> silu(Tape<T>* tape, const Var<T>& x);
template <class T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b);
/// x (N, C, H, W) + e (N, C, 1, 1) broadcast over space.
template <class T>
Var<T> add_channel_bias(Tape<T>* tape, const Var<T>& x, const Var<T>& e);
template <class T>
Var<T> concat_channels(Tape<T>* tape, const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> upsample2x(Tape<T>* tape, const Var<T>& x);
template <class T>
Var<T> linear(Tape<T>* tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias);

/// Mean over samples of (1/gamma_n) * sum of masked squared residuals, where
/// gamma_n = (ones in mask_n) * channels. mask is (N, 1, H, W) of 0/1;
/// samples with an empty mask are excluded from the mean.
template <class T>
Var<T> masked_mse(Tape<T>* tape, const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask);

/// Mean over samples of the least-squares aligned MSE of pred (N, 1, H, W)
/// against target on mask-valid pixels.
template <class T>
Var<T> ssi_mse(Tape<T>* tape, const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask);

template <class T>
struct Parameter {
  std::string name;
  Var<T> var;
};

struct UNetConfig {
  int in_channels = 5;
  int out_channels = 1;
  int base_channels = 16;
  int levels = 3;
  bool time_embedding = true;
  int time_dim = 32;
  int max_groups = 8;
  bool zero_init_output = true;
};

/// Encoder-decoder with residual blocks, strided-conv downsampling, nearest
/// upsampling and skip concatenation. Channel width doubles per level.
template <class T>
class UNet {
 public:
  UNet(const UNetConfig& config, std::uint64_t init_seed);

  /// `timesteps` must have one entry per sample when time embedding is on.
  Var<T> forward(Tape<T>* tape, const Tensor<T>& input, std::span<const int> timesteps) const;

  const UNetConfig& config() const noexcept { return config_; }
  std::vector<Parameter<T>>& parameters() noexcept { return params_; }
  const std::vector<Parameter<T>>& parameters() const noexcept { return params_; }
  std::size_t parameter_count() const noexcept;
  void zero_grad();

 private:
  struct ResBlock {
    int gn1_g, gn1_b, conv1_w, conv1_b, temb_w, temb_b, gn2_g, gn2_b, conv2_w, conv2_b;
    int groups;
  };
  struct Level {
    ResBlock enc;
    int down_w = -1, down_b = -1;   // to next level
    int merge_w = -1, merge_b = -1;  // decoder: concat(up(next), skip) -> channels
    ResBlock dec;
  };

  int add_param(const std::string& name, Tensor<T> value);
  int add_conv(const std::string& name, int cout, int cin, int k, bool zero, std::uint64_t& key);
  ResBlock make_block(const std::string& name, int channels, std::uint64_t& key);
  Var<T> run_block(Tape<T>* tape, const ResBlock& rb, const Var<T>& x, const Var<T>& temb) const;
  const Var<T>& p(int i) const { return params_[static_cast<std::size_t>(i)].var; }

  UNetConfig config_;
  std::vector<Parameter<T>> params_;
  std::vector<Level> levels_;
  ResBlock mid_{};
  int conv_in_w_ = -1, conv_in_b_ = -1;
  int out_g_ = -1, out_b_ = -1, conv_out_w_ = -1, conv_out_b_ = -1;
  int temb1_w_ = -1, temb1_b_ = -1, temb2_w_ = -1, temb2_b_ = -1;
  int temb_hidden_ = 0;
};

/// Adam with bias correction.
template <class T>
class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::vector<Parameter<T>>& params);
  long steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

/// Sinusoidal timestep features, (N, dim, 1, 1).
template <class T>
Tensor<T> timestep_features(std::span<const int> timesteps, int dim);

}  // namespace depthlab::nn
