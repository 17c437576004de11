// Copyright 2026 The depthlab Authors
// SPDX-License-Identifier: Apache-2.0

#include "depthlab/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "depthlab/rng.hpp"

namespace depthlab::nn {
namespace {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
bool wants_grad(const Tape<T>* tape, std::initializer_list<const Var<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const Var<T>* v : inputs)
    if (*v && (*v)->requires_grad) return true;
  return false;
}

template <class T>
Var<T> make_output(Tensor<T> value, bool grad) {
  auto out = std::make_shared<Node<T>>();
  out->value = std::move(value);
  out->requires_grad = grad;
  return out;
}

// cols is (Cin*k*k, Hout*Wout) for a single sample.
template <class T>
void im2col(const T* x, int cin, int h, int w, int k, int stride, int pad, int hout, int wout,
            T* cols) {
  const std::size_t p = static_cast<std::size_t>(hout) * wout;
  for (int ci = 0; ci < cin; ++ci) {
    const T* xc = x + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * p;
        for (int oy = 0; oy < hout; ++oy) {
          const int iy = oy * stride + ky - pad;
          T* dst = row + static_cast<std::size_t>(oy) * wout;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wout, T(0));
            continue;
          }
          const T* src = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wout; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <class T>
void col2im(const T* cols, int cin, int h, int w, int k, int stride, int pad, int hout, int wout,
            T* dx) {
  const std::size_t p = static_cast<std::size_t>(hout) * wout;
  for (int ci = 0; ci < cin; ++ci) {
    T* xc = dx + static_cast<std::size_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>(ci) * k * k + ky * k + kx) * p;
        for (int oy = 0; oy < hout; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wout;
          T* dst = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wout; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <class T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

int largest_group_count(int channels, int max_groups) {
  for (int g = std::min(channels, max_groups); g > 1; --g)
    if (channels % g == 0) return g;
  return 1;
}

}  // namespace

template <class T>
std::string Tensor<T>::shape_string() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

template <class T>
Tensor<T>& Node<T>::grad_buffer() {
  if (!grad.same_shape(value) || grad.size() != value.size()) grad = Tensor<T>(value.n, value.c, value.h, value.w);
  return grad;
}

template <class T>
Var<T> constant(Tensor<T> value) {
  return make_output(std::move(value), false);
}

template <class T>
Var<T> parameter(Tensor<T> value) {
  return make_output(std::move(value), true);
}

template <class T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss->value.size() != 1) fail(ErrorCode::Shape, "backward needs a scalar loss");
  loss->grad_buffer().data[0] = T(1);
  for (auto it = fns_.rbegin(); it != fns_.rend(); ++it) (*it)();
}

template <class T>
Var<T> conv2d(Tape<T>* tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride) {
  const Tensor<T>& X = x->value;
  const Tensor<T>& Wt = weight->value;
  const int cout = Wt.n, cin = Wt.c, k = Wt.h;
  if (X.c != cin) fail(ErrorCode::Shape, "conv2d: input channels " + std::to_string(X.c) + " != " + std::to_string(cin));
  const int pad = k / 2;
  const int hout = (X.h + 2 * pad - k) / stride + 1;
  const int wout = (X.w + 2 * pad - k) / stride + 1;
  const int kk = cin * k * k;
  const std::size_t p = static_cast<std::size_t>(hout) * wout;

  Tensor<T> Y(X.n, cout, hout, wout);
  std::vector<T> cols(static_cast<std::size_t>(kk) * p);
  CMapMat<T> Wm(Wt.data.data(), cout, kk);
  for (int ni = 0; ni < X.n; ++ni) {
    im2col(X.at(ni, 0), cin, X.h, X.w, k, stride, pad, hout, wout, cols.data());
    MapMat<T> out(Y.at(ni, 0), cout, static_cast<Eigen::Index>(p));
    out.noalias() = Wm * CMapMat<T>(cols.data(), kk, static_cast<Eigen::Index>(p));
    if (bias)
      for (int co = 0; co < cout; ++co) out.row(co).array() += bias->value.data[static_cast<std::size_t>(co)];
  }

  const bool grad = wants_grad(tape, {&x, &weight, &bias});
  Var<T> y = make_output(std::move(Y), grad);
  if (grad) {
    tape->record([x, weight, bias, y, stride, pad, hout, wout, kk, p, k, cin, cout]() {
      if (y->grad.size() == 0) return;
      const Tensor<T>& X = x->value;
      std::vector<T> cols(static_cast<std::size_t>(kk) * p);
      std::vector<T> dcols(static_cast<std::size_t>(kk) * p);
      CMapMat<T> Wm(weight->value.data.data(), cout, kk);
      for (int ni = 0; ni < X.n; ++ni) {
        CMapMat<T> dout(y->grad.at(ni, 0), cout, static_cast<Eigen::Index>(p));
        if (weight->requires_grad) {
          im2col(X.at(ni, 0), cin, X.h, X.w, k, stride, pad, hout, wout, cols.data());
          MapMat<T> dW(weight->grad_buffer().data.data(), cout, kk);
          dW.noalias() += dout * CMapMat<T>(cols.data(), kk, static_cast<Eigen::Index>(p)).transpose();
        }
        if (bias && bias->requires_grad) {
          T* db = bias->grad_buffer().data.data();
          for (int co = 0; co < cout; ++co) db[co] += dout.row(co).sum();
        }
        if (x->requires_grad) {
          MapMat<T>(dcols.data(), kk, static_cast<Eigen::Index>(p)).noalias() = Wm.transpose() * dout;
          col2im(dcols.data(), cin, X.h, X.w, k, stride, pad, hout, wout, x->grad_buffer().at(ni, 0));
        }
      }
    });
  }
  return y;
}

template <class T>
Var<T> group_norm(Tape<T>* tape, const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, int groups) {
  const Tensor<T>& X = x->value;
  if (X.c % groups != 0) fail(ErrorCode::Shape, "group_norm: channels not divisible by groups");
  constexpr double kEps = 1e-5;
  const int cpg = X.c / groups;
  const std::size_t group_size = static_cast<std::size_t>(cpg) * X.plane();
  Tensor<T> Y(X.n, X.c, X.h, X.w);
  auto xhat = std::make_shared<std::vector<T>>(X.size());
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(X.n) * groups);
  for (int ni = 0; ni < X.n; ++ni) {
    for (int g = 0; g < groups; ++g) {
      const std::size_t base = ni * X.sample() + static_cast<std::size_t>(g) * group_size;
      double mean = 0.0;
      for (std::size_t i = 0; i < group_size; ++i) mean += X.data[base + i];
      mean /= static_cast<double>(group_size);
      double var = 0.0;
      for (std::size_t i = 0; i < group_size; ++i) {
        const double d = X.data[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(group_size);
      const T istd = static_cast<T>(1.0 / std::sqrt(var + kEps));
      (*inv_std)[static_cast<std::size_t>(ni) * groups + g] = istd;
      for (int cc = 0; cc < cpg; ++cc) {
        const int ch = g * cpg + cc;
        const T ga = gamma->value.data[static_cast<std::size_t>(ch)];
        const T be = beta->value.data[static_cast<std::size_t>(ch)];
        const std::size_t off = base + static_cast<std::size_t>(cc) * X.plane();
        for (std::size_t i = 0; i < X.plane(); ++i) {
          const T xh = static_cast<T>((X.data[off + i] - mean)) * istd;
          (*xhat)[off + i] = xh;
          Y.data[off + i] = xh * ga + be;
        }
      }
    }
  }
  const bool grad = wants_grad(tape, {&x, &gamma, &beta});
  Var<T> y = make_output(std::move(Y), grad);
  if (grad) {
    tape->record([x, gamma, beta, y, xhat, inv_std, groups, cpg, group_size]() {
      if (y->grad.size() == 0) return;
      const Tensor<T>& X = x->value;
      const Tensor<T>& dY = y->grad;
      T* dg = gamma->requires_grad ? gamma->grad_buffer().data.data() : nullptr;
      T* dbeta = beta->requires_grad ? beta->grad_buffer().data.data() : nullptr;
      T* dx = x->requires_grad ? x->grad_buffer().data.data() : nullptr;
      for (int ni = 0; ni < X.n; ++ni) {
        for (int g = 0; g < groups; ++g) {
          const std::size_t base = ni * X.sample() + static_cast<std::size_t>(g) * group_size;
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            const T ga = gamma->value.data[static_cast<std::size_t>(ch)];
            const std::size_t off = base + static_cast<std::size_t>(cc) * X.plane();
            double sg = 0.0, sb = 0.0;
            for (std::size_t i = 0; i < X.plane(); ++i) {
              const double d = dY.data[off + i];
              const double xh = (*xhat)[off + i];
              sg += d * xh;
              sb += d;
              sum_dxh += d * ga;
              sum_dxh_xh += d * ga * xh;
            }
            if (dg) dg[ch] += static_cast<T>(sg);
            if (dbeta) dbeta[ch] += static_cast<T>(sb);
          }
          if (!dx) continue;
          const double m1 = sum_dxh / static_cast<double>(group_size);
          const double m2 = sum_dxh_xh / static_cast<double>(group_size);
          const double istd = (*inv_std)[static_cast<std::size_t>(ni) * groups + g];
          for (int cc = 0; cc < cpg; ++cc) {
            const int ch = g * cpg + cc;
            const double ga = gamma->value.data[static_cast<std::size_t>(ch)];
            const std::size_t off = base + static_cast<std::size_t>(cc) * X.plane();
            for (std::size_t i = 0; i < X.plane(); ++i) {
              const double dxh = dY.data[off + i] * ga;
              dx[off + i] += static_cast<T>(istd * (dxh - m1 - (*xhat)[off + i] * m2));
            }
          }
        }
      }
    });
  }
  return y;
}

template <class T>
Var<T> silu(Tape<T>* tape, const Var<T>& x) {
  Tensor<T> Y = x->value;
  for (auto& v : Y.data) v = v * sigmoid(v);
  const bool grad = wants_grad(tape, {&x});
  Var<T> y = make_output(std::move(Y), grad);
  if (grad) {
    tape->record([x, y]() {
      if (y->grad.size() == 0) return;
      auto& dx = x->grad_buffer().data;
      const auto& xv = x->value.data;
      for (std::size_t i = 0; i < xv.size(); ++i) {
        const T s = sigmoid(xv[i]);
        dx[i] += y->grad.data[i] * s * (T(1) + xv[i] * (T(1) - s));
      }
    });
  }
  return y;
}

template <class T>
Var<T> add(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  if (!a->value.same_shape(b->value)) fail(ErrorCode::Shape, "add: shape mismatch");
  Tensor<T> Y = a->value;
  for (std::size_t i = 0; i < Y.size(); ++i) Y.data[i] += b->value.data[i];
  const bool grad = wants_grad(tape, {&a, &b});
  Var<T> y = make_output(std::move(Y), grad);
  if (grad) {
    tape->record([a, b, y]() {
      if (y->grad.size() == 0) return;
      for (const Var<T>* in : {&a, &b}) {
        if (!(*in)->requires_grad) continue;
        auto& d = (*in)->grad_buffer().data;
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += y->grad.data[i];
      }
    });
  }
  return y;
}

template <class T>
Var<T> add_channel_bias(Tape<T>* tape, const Var<T>& x, const Var<T>& e) {
  const Tensor<T>& X = x->value;
  if (e->value.n != X.n || e->value.c != X.c || e->value.plane() != 1)
    fail(ErrorCode::Shape, "add_channel_bias: embedding shape " + e->value.shape_string());
  Tensor<T> Y = X;
  for (int ni = 0; ni < X.n; ++ni)
    for (int ci = 0; ci < X.c; ++ci) {
      const T v = e->value.data[static_cast<std::size_t>(ni) * X.c + ci];
      T* row = Y.at(ni, ci);
      for (std::size_t i = 0; i < X.plane(); ++i) row[i] += v;
    }
  const bool grad = wants_grad(tape, {&x, &e});
  Var<T> y = make_output(std::move(Y), grad);
  if (grad) {
    tape->record([x, e, y]() {
      if (y->grad.size() == 0) return;
      const Tensor<T>& dY = y->grad;
      if (x->requires_grad) {
        auto& dx = x->grad_buffer().data;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dY.data[i];
      }
      if (e->requires_grad) {
        auto& de = e->grad_buffer().data;
        for (int ni = 0; ni < dY.n; ++ni)
          for (int ci = 0; ci < dY.c; ++ci) {
            const T* row = dY.at(ni, ci);
            T s = 0;
            for (std::size_t i = 0; i < dY.plane(); ++i) s += row[i];
            de[static_cast<std::size_t>(ni) * dY.c + ci] += s;
          }
      }
    });
  }
  return y;
}

template <class T>
Var<T> concat_channels(Tape<T>* tape, const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& A = a->value;
  const Tensor<T>& B = b->value;
  if (A.n != B.n || A.h != B.h || A.w != B.w) fail(ErrorCode::Shape, "concat: spatial mismatch");
  Tensor<T> Y(A.n, A.c + B.c, A.h, A.w);
  for (int ni = 0; ni < A.n; ++ni) {
    std::copy(A.at(ni, 0), A.at(ni, 0) + A.sample(), Y.at(ni, 0));
    std::copy(B.at(ni, 0), B.at(ni, 0) + B.sample(), Y.at(ni, A.c));
  }
  const bool grad = wants_grad(tape, {&a, &b});
  Var<T> y = make_output(std::move(Y), grad);
  if (grad) {
    tape->record([a, b, y]() {
      if (y->grad.size() == 0) return;
      const int ca = a->value.c;
      for (int ni = 0; ni < y->value.n; ++ni) {
        if (a->requires_grad) {
          T* d = a->grad_buffer().at(ni, 0);
          const T* s = y->grad.at(ni, 0);
          for (std::size_t i = 0; i < a->value.sample(); ++i) d[i] += s[i];
        }
        if (b->requires_grad) {
          T* d = b->grad_buffer().at(ni, 0);
          const T* s = y->grad.at(ni, ca);
          for (std::size_t i = 0; i < b->value.sample(); ++i) d[i] += s[i];
        }
      }
    });
  }
  return y;
}

template <class T>
Var<T> upsample2x(Tape<T>* tape, const Var<T>& x) {
  const Tensor<T>& X = x->value;
  Tensor<T> Y(X.n, X.c, X.h * 2, X.w * 2);
  for (int ni = 0; ni < X.n; ++ni)
    for (int ci = 0; ci < X.c; ++ci) {
      const T* src = X.at(ni, ci);
      T* dst = Y.at(ni, ci);
      for (int yy = 0; yy < Y.h; ++yy)
        for (int xx = 0; xx < Y.w; ++xx)
          dst[static_cast<std::size_t>(yy) * Y.w + xx] = src[static_cast<std::size_t>(yy / 2) * X.w + xx / 2];
    }
  const bool grad = wants_grad(tape, {&x});
  Var<T> y = make_output(std::move(Y), grad);
  if (grad) {
    tape->record([x, y]() {
      if (y->grad.size() == 0) return;
      const Tensor<T>& dY = y->grad;
      Tensor<T>& dX = x->grad_buffer();
      for (int ni = 0; ni < dY.n; ++ni)
        for (int ci = 0; ci < dY.c; ++ci) {
          const T* src = dY.at(ni, ci);
          T* dst = dX.at(ni, ci);
          for (int yy = 0; yy < dY.h; ++yy)
            for (int xx = 0; xx < dY.w; ++xx)
              dst[static_cast<std::size_t>(yy / 2) * dX.w + xx / 2] += src[static_cast<std::size_t>(yy) * dY.w + xx];
        }
    });
  }
  return y;
}

template <class T>
Var<T> linear(Tape<T>* tape, const Var<T>& x, const Var<T>& weight, const Var<T>& bias) {
  const Tensor<T>& X = x->value;
  const int m = weight->value.n, k = weight->value.c;
  if (static_cast<int>(X.sample()) != k) fail(ErrorCode::Shape, "linear: input width mismatch");
  Tensor<T> Y(X.n, m, 1, 1);
  CMapMat<T> W(weight->value.data.data(), m, k);
  CMapMat<T> Xm(X.data.data(), X.n, k);
  MapMat<T> Ym(Y.data.data(), X.n, m);
  // Row-at-a-time keeps each sample's result independent of the batch size.
  for (int ni = 0; ni < X.n; ++ni) Ym.row(ni).noalias() = Xm.row(ni) * W.transpose();
  if (bias)
    for (int ni = 0; ni < X.n; ++ni)
      for (int j = 0; j < m; ++j) Ym(ni, j) += bias->value.data[static_cast<std::size_t>(j)];
  const bool grad = wants_grad(tape, {&x, &weight, &bias});
  Var<T> y = make_output(std::move(Y), grad);
  if (grad) {
    tape->record([x, weight, bias, y, m, k]() {
      if (y->grad.size() == 0) return;
      const int n = x->value.n;
      CMapMat<T> dY(y->grad.data.data(), n, m);
      if (weight->requires_grad)
        MapMat<T>(weight->grad_buffer().data.data(), m, k).noalias() +=
            dY.transpose() * CMapMat<T>(x->value.data.data(), n, k);
      if (bias && bias->requires_grad) {
        auto& db = bias->grad_buffer().data;
        for (int ni = 0; ni < n; ++ni)
          for (int j = 0; j < m; ++j) db[static_cast<std::size_t>(j)] += dY(ni, j);
      }
      if (x->requires_grad)
        MapMat<T>(x->grad_buffer().data.data(), n, k).noalias() +=
            dY * CMapMat<T>(weight->value.data.data(), m, k);
    });
  }
  return y;
}

template <class T>
Var<T> masked_mse(Tape<T>* tape, const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask) {
  const Tensor<T>& P = pred->value;
  if (!P.same_shape(target)) fail(ErrorCode::Shape, "masked_mse: target shape mismatch");
  if (mask.n != P.n || mask.c != 1 || mask.h != P.h || mask.w != P.w)
    fail(ErrorCode::Shape, "masked_mse: mask shape mismatch");
  std::vector<double> weight(static_cast<std::size_t>(P.n), 0.0);
  int used = 0;
  for (int ni = 0; ni < P.n; ++ni) {
    double ones = 0.0;
    const T* m = mask.at(ni, 0);
    for (std::size_t i = 0; i < mask.plane(); ++i) ones += m[i] != T(0);
    if (ones > 0.0) {
      weight[static_cast<std::size_t>(ni)] = 1.0 / (ones * P.c);
      ++used;
    }
  }
  if (used == 0) fail(ErrorCode::EmptyMask, "masked_mse: every mask is empty");
  for (auto& wv : weight) wv /= used;

  double loss = 0.0;
  for (int ni = 0; ni < P.n; ++ni) {
    const double wn = weight[static_cast<std::size_t>(ni)];
    if (wn == 0.0) continue;
    const T* m = mask.at(ni, 0);
    double s = 0.0;
    for (int ci = 0; ci < P.c; ++ci) {
      const T* p = P.at(ni, ci);
      const T* t = target.at(ni, ci);
      for (std::size_t i = 0; i < P.plane(); ++i) {
        if (m[i] == T(0)) continue;
        const double r = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        s += r * r;
      }
    }
    loss += wn * s;
  }
  Tensor<T> L(1, 1, 1, 1, static_cast<T>(loss));
  const bool grad = wants_grad(tape, {&pred});
  Var<T> y = make_output(std::move(L), grad);
  if (grad) {
    tape->record([pred, target, mask, weight, y]() {
      if (y->grad.size() == 0) return;
      const double g = y->grad.data[0];
      const Tensor<T>& P = pred->value;
      Tensor<T>& dP = pred->grad_buffer();
      for (int ni = 0; ni < P.n; ++ni) {
        const double wn = weight[static_cast<std::size_t>(ni)];
        if (wn == 0.0) continue;
        const T* m = mask.at(ni, 0);
        for (int ci = 0; ci < P.c; ++ci) {
          const T* p = P.at(ni, ci);
          const T* t = target.at(ni, ci);
          T* d = dP.at(ni, ci);
          for (std::size_t i = 0; i < P.plane(); ++i)
            if (m[i] != T(0)) d[i] += static_cast<T>(g * wn * 2.0 * (static_cast<double>(p[i]) - t[i]));
        }
      }
    });
  }
  return y;
}

template <class T>
Var<T> ssi_mse(Tape<T>* tape, const Var<T>& pred, const Tensor<T>& target, const Tensor<T>& mask) {
  const Tensor<T>& P = pred->value;
  if (P.c != 1 || !P.same_shape(target) || !mask.same_shape(target))
    fail(ErrorCode::Shape, "ssi_mse: shape mismatch");
  // Per sample: (s, b, 1/count). By the envelope theorem the gradient of the
  // minimised residual w.r.t. pred is 2 s r / count.
  struct Fit { double s, b, inv_n; };
  std::vector<Fit> fits(static_cast<std::size_t>(P.n));
  double loss = 0.0;
  for (int ni = 0; ni < P.n; ++ni) {
    const T* p = P.at(ni, 0);
    const T* t = target.at(ni, 0);
    const T* m = mask.at(ni, 0);
    double n = 0, mp = 0, mt = 0;
    for (std::size_t i = 0; i < P.plane(); ++i)
      if (m[i] != T(0)) { n += 1; mp += p[i]; mt += t[i]; }
    if (n < 2) fail(ErrorCode::InsufficientOverlap, "ssi_mse: fewer than 2 valid pixels");
    mp /= n;
    mt /= n;
    double var = 0, cov = 0, var_t = 0;
    for (std::size_t i = 0; i < P.plane(); ++i)
      if (m[i] != T(0)) {
        var += (p[i] - mp) * (p[i] - mp);
        cov += (p[i] - mp) * (t[i] - mt);
        var_t += (t[i] - mt) * (t[i] - mt);
      }
    if (!(var_t > 0)) fail(ErrorCode::DegenerateDepth, "ssi_mse: constant label");
    // A constant prediction is fitted by its mean alone (s = 0).
    const double s = var > 0 ? cov / var : 0.0;
    const double b = mt - s * mp;
    double sse = 0;
    for (std::size_t i = 0; i < P.plane(); ++i)
      if (m[i] != T(0)) {
        const double r = s * p[i] + b - t[i];
        sse += r * r;
      }
    fits[static_cast<std::size_t>(ni)] = {s, b, 1.0 / n};
    loss += sse / n;
  }
  loss /= P.n;
  Tensor<T> L(1, 1, 1, 1, static_cast<T>(loss));
  const bool grad = wants_grad(tape, {&pred});
  Var<T> y = make_output(std::move(L), grad);
  if (grad) {
    tape->record([pred, target, mask, fits, y]() {
      if (y->grad.size() == 0) return;
      const Tensor<T>& P = pred->value;
      const double g = y->grad.data[0] / P.n;
      Tensor<T>& dP = pred->grad_buffer();
      for (int ni = 0; ni < P.n; ++ni) {
        const Fit& f = fits[static_cast<std::size_t>(ni)];
        const T* p = P.at(ni, 0);
        const T* t = target.at(ni, 0);
        const T* m = mask.at(ni, 0);
        T* d = dP.at(ni, 0);
        for (std::size_t i = 0; i < P.plane(); ++i)
          if (m[i] != T(0)) d[i] += static_cast<T>(g * 2.0 * f.s * (f.s * p[i] + f.b - t[i]) * f.inv_n);
      }
    });
  }
  return y;
}

template <class T>
Tensor<T> timestep_features(std::span<const int> timesteps, int dim) {
  Tensor<T> f(static_cast<int>(timesteps.size()), dim, 1, 1);
  const int half = dim / 2;
  for (std::size_t ni = 0; ni < timesteps.size(); ++ni) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half));
      const double a = timesteps[ni] * freq;
      f.data[ni * dim + i] = static_cast<T>(std::sin(a));
      f.data[ni * dim + half + i] = static_cast<T>(std::cos(a));
    }
  }
  return f;
}

// ---------------------------------------------------------------- UNet

template <class T>
int UNet<T>::add_param(const std::string& name, Tensor<T> value) {
  params_.push_back({name, parameter(std::move(value))});
  return static_cast<int>(params_.size()) - 1;
}

template <class T>
int UNet<T>::add_conv(const std::string& name, int cout, int cin, int k, bool zero, std::uint64_t& key) {
  Tensor<T> w(cout, cin, k, k);
  if (!zero) {
    Rng rng(key = mix64(key));
    const double bound = std::sqrt(3.0 / (cin * k * k));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }
  const int wi = add_param(name + ".w", std::move(w));
  add_param(name + ".b", Tensor<T>(1, cout, 1, 1));
  return wi;
}

template <class T>
typename UNet<T>::ResBlock UNet<T>::make_block(const std::string& name, int ch, std::uint64_t& key) {
  ResBlock rb{};
  rb.groups = largest_group_count(ch, config_.max_groups);
  rb.gn1_g = add_param(name + ".gn1.g", Tensor<T>(1, ch, 1, 1, T(1)));
  rb.gn1_b = add_param(name + ".gn1.b", Tensor<T>(1, ch, 1, 1));
  rb.conv1_w = add_conv(name + ".conv1", ch, ch, 3, false, key);
  rb.conv1_b = rb.conv1_w + 1;
  if (config_.time_embedding) {
    Tensor<T> w(ch, temb_hidden_, 1, 1);
    Rng rng(key = mix64(key));
    const double bound = std::sqrt(3.0 / temb_hidden_);
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
    rb.temb_w = add_param(name + ".temb.w", std::move(w));
    rb.temb_b = add_param(name + ".temb.b", Tensor<T>(ch, 1, 1, 1));
  } else {
    rb.temb_w = rb.temb_b = -1;
  }
  rb.gn2_g = add_param(name + ".gn2.g", Tensor<T>(1, ch, 1, 1, T(1)));
  rb.gn2_b = add_param(name + ".gn2.b", Tensor<T>(1, ch, 1, 1));
  rb.conv2_w = add_conv(name + ".conv2", ch, ch, 3, false, key);
  rb.conv2_b = rb.conv2_w + 1;
  return rb;
}

template <class T>
UNet<T>::UNet(const UNetConfig& config, std::uint64_t init_seed) : config_(config) {
  if (config.in_channels <= 0 || config.out_channels <= 0 || config.base_channels <= 0 || config.levels <= 0)
    fail(ErrorCode::Config, "UNet: channel counts and levels must be positive");
  if (config.time_embedding && (config.time_dim < 2 || config.time_dim % 2 != 0))
    fail(ErrorCode::Config, "UNet: time_dim must be even and >= 2");
  std::uint64_t key = mix64(init_seed);
  const int c0 = config.base_channels;
  if (config.time_embedding) {
    temb_hidden_ = 2 * config.time_dim;
    Tensor<T> w1(temb_hidden_, config.time_dim, 1, 1), w2(temb_hidden_, temb_hidden_, 1, 1);
    Rng rng(key = mix64(key));
    for (auto& v : w1.data) v = static_cast<T>(rng.uniform(-1.0, 1.0) * std::sqrt(3.0 / config.time_dim));
    for (auto& v : w2.data) v = static_cast<T>(rng.uniform(-1.0, 1.0) * std::sqrt(3.0 / temb_hidden_));
    temb1_w_ = add_param("temb.fc1.w", std::move(w1));
    temb1_b_ = add_param("temb.fc1.b", Tensor<T>(temb_hidden_, 1, 1, 1));
    temb2_w_ = add_param("temb.fc2.w", std::move(w2));
    temb2_b_ = add_param("temb.fc2.b", Tensor<T>(temb_hidden_, 1, 1, 1));
  }
  conv_in_w_ = add_conv("conv_in", c0, config.in_channels, 3, false, key);
  conv_in_b_ = conv_in_w_ + 1;
  levels_.resize(static_cast<std::size_t>(config.levels));
  for (int l = 0; l < config.levels; ++l) {
    const int ch = c0 << l;
    Level& lv = levels_[static_cast<std::size_t>(l)];
    lv.enc = make_block("enc" + std::to_string(l), ch, key);
    if (l + 1 < config.levels) {
      lv.down_w = add_conv("down" + std::to_string(l), ch * 2, ch, 3, false, key);
      lv.down_b = lv.down_w + 1;
    }
  }
  mid_ = make_block("mid", c0 << (config.levels - 1), key);
  for (int l = config.levels - 2; l >= 0; --l) {
    const int ch = c0 << l;
    Level& lv = levels_[static_cast<std::size_t>(l)];
    lv.merge_w = add_conv("merge" + std::to_string(l), ch, ch * 3, 3, false, key);
    lv.merge_b = lv.merge_w + 1;
    lv.dec = make_block("dec" + std::to_string(l), ch, key);
  }
  out_g_ = add_param("out.gn.g", Tensor<T>(1, c0, 1, 1, T(1)));
  out_b_ = add_param("out.gn.b", Tensor<T>(1, c0, 1, 1));
  conv_out_w_ = add_conv("conv_out", config.out_channels, c0, 3, config.zero_init_output, key);
  conv_out_b_ = conv_out_w_ + 1;
}

template <class T>
Var<T> UNet<T>::run_block(Tape<T>* tape, const ResBlock& rb, const Var<T>& x, const Var<T>& temb) const {
  Var<T> h = silu(tape, group_norm(tape, x, p(rb.gn1_g), p(rb.gn1_b), rb.groups));
  h = conv2d(tape, h, p(rb.conv1_w), p(rb.conv1_b), 1);
  if (temb) {
    // temb_b is stored as (C, 1, 1, 1) so linear() sees it as a length-C bias.
    Var<T> e = linear(tape, temb, p(rb.temb_w), p(rb.temb_b));
    h = add_channel_bias(tape, h, e);
  }
  h = silu(tape, group_norm(tape, h, p(rb.gn2_g), p(rb.gn2_b), rb.groups));
  h = conv2d(tape, h, p(rb.conv2_w), p(rb.conv2_b), 1);
  return add(tape, x, h);
}

template <class T>
Var<T> UNet<T>::forward(Tape<T>* tape, const Tensor<T>& input, std::span<const int> timesteps) const {
  if (input.c != config_.in_channels)
    fail(ErrorCode::Shape, "UNet: expected " + std::to_string(config_.in_channels) + " input channels, got " +
                               input.shape_string());
  const int scale = 1 << (config_.levels - 1);
  if (input.h % scale != 0 || input.w % scale != 0)
    fail(ErrorCode::Shape, "UNet: spatial size must be divisible by " + std::to_string(scale));

  Var<T> temb;
  if (config_.time_embedding) {
    if (static_cast<int>(timesteps.size()) != input.n) fail(ErrorCode::Shape, "UNet: one timestep per sample");
    Var<T> f = constant(timestep_features<T>(timesteps, config_.time_dim));
    temb = silu(tape, linear(tape, f, p(temb1_w_), p(temb1_b_)));
    temb = silu(tape, linear(tape, temb, p(temb2_w_), p(temb2_b_)));
  }

  Var<T> h = conv2d(tape, constant(input), p(conv_in_w_), p(conv_in_b_), 1);
  std::vector<Var<T>> skips;
  for (int l = 0; l < config_.levels; ++l) {
    const Level& lv = levels_[static_cast<std::size_t>(l)];
    h = run_block(tape, lv.enc, h, temb);
    if (l + 1 < config_.levels) {
      skips.push_back(h);
      h = conv2d(tape, h, p(lv.down_w), p(lv.down_b), 2);
    }
  }
  h = run_block(tape, mid_, h, temb);
  for (int l = config_.levels - 2; l >= 0; --l) {
    const Level& lv = levels_[static_cast<std::size_t>(l)];
    h = concat_channels(tape, upsample2x(tape, h), skips[static_cast<std::size_t>(l)]);
    h = conv2d(tape, h, p(lv.merge_w), p(lv.merge_b), 1);
    h = run_block(tape, lv.dec, h, temb);
  }
  h = silu(tape, group_norm(tape, h, p(out_g_), p(out_b_), largest_group_count(config_.base_channels, config_.max_groups)));
  return conv2d(tape, h, p(conv_out_w_), p(conv_out_b_), 1);
}

template <class T>
std::size_t UNet<T>::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& prm : params_) n += prm.var->value.size();
  return n;
}

template <class T>
void UNet<T>::zero_grad() {
  for (auto& prm : params_) prm.var->grad = Tensor<T>();
}

template <class T>
void Adam<T>::step(std::vector<Parameter<T>>& params) {
  if (m_.empty()) {
    for (const auto& prm : params) {
      m_.emplace_back(prm.var->value.size(), 0.0);
      v_.emplace_back(prm.var->value.size(), 0.0);
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Node<T>& node = *params[k].var;
    if (node.grad.size() != node.value.size()) continue;  // untouched this step
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < node.value.size(); ++i) {
      const double g = node.grad.data[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      const double update = lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
      node.value.data[i] = static_cast<T>(node.value.data[i] - update);
    }
  }
}

#define DEPTHLAB_NN_INSTANTIATE(T)                                                                  \
  template struct Tensor<T>;                                                                        \
  template struct Node<T>;                                                                          \
  template class Tape<T>;                                                                           \
  template class UNet<T>;                                                                           \
  template class Adam<T>;                                                                           \
  template Var<T> constant(Tensor<T>);                                                              \
  template Var<T> parameter(Tensor<T>);                                                             \
  template Var<T> conv2d(Tape<T>*, const Var<T>&, const Var<T>&, const Var<T>&, int);               \
  template Var<T> group_norm(Tape<T>*, const Var<T>&, const Var<T>&, const Var<T>&, int);           \
  template Var<T> silu(Tape<T>*, const Var<T>&);                                                    \
  template Var<T> add(Tape<T>*, const Var<T>&, const Var<T>&);                                      \
  template Var<T> add_channel_bias(Tape<T>*, const Var<T>&, const Var<T>&);                         \
  template Var<T> concat_channels(Tape<T>*, const Var<T>&, const Var<T>&);                          \
  template Var<T> upsample2x(Tape<T>*, const Var<T>&);                                              \
  template Var<T> linear(Tape<T>*, const Var<T>&, const Var<T>&, const Var<T>&);                    \
  template Var<T> masked_mse(Tape<T>*, const Var<T>&, const Tensor<T>&, const Tensor<T>&);          \
  template Var<T> ssi_mse(Tape<T>*, const Var<T>&, const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> timestep_features(std::span<const int>, int);

DEPTHLAB_NN_INSTANTIATE(float)
DEPTHLAB_NN_INSTANTIATE(double)

}  // namespace depthlab::nn
