// Copyright 2026 The shiftdet Authors
// SPDX-License-Identifier: Apache-2.0

// Dense building blocks on CHW tensors. Convolutions are 3x3, padding 1,
// lowered to one GEMM per image via im2col.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "shiftdet/core/buffer.hpp"
#include "shiftdet/core/errors.hpp"

namespace shiftdet {

template <typename S>
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  Buffer<S> data;

  Tensor() = default;
  Tensor(int c, int h, int w, S fill = S(0))
      : channels(c), height(h), width(w), data(static_cast<std::size_t>(c) * h * w, fill) {}

  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  S& at(int c, int y, int x) { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }
  S at(int c, int y, int x) const { return data[c * plane() + static_cast<std::size_t>(y) * width + x]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;
template <typename S>
using VecMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>;
template <typename S>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>>;

inline int conv_out_size(int in, int stride) { return (in - 1) / stride + 1; }

// cols has shape [C * 9, Ho * Wo]; row index c * 9 + ky * 3 + kx.
template <typename S>
void im2col3x3(const Tensor<S>& in, int stride, Buffer<S>& cols) {
  const int c_in = in.channels, h = in.height, w = in.width;
  const int ho = conv_out_size(h, stride), wo = conv_out_size(w, stride);
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  cols.assign(static_cast<std::size_t>(c_in) * 9 * hw, S(0));
  for (int c = 0; c < c_in; ++c) {
    const S* src = in.data.data() + c * in.plane();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        S* dst = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < w) dst[static_cast<std::size_t>(oy) * wo + ox] = src[static_cast<std::size_t>(iy) * w + ix];
          }
        }
      }
    }
  }
}

template <typename S>
void col2im3x3_add(const Buffer<S>& cols, int stride, Tensor<S>& din) {
  const int c_in = din.channels, h = din.height, w = din.width;
  const int ho = conv_out_size(h, stride), wo = conv_out_size(w, stride);
  const std::size_t hw = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < c_in; ++c) {
    S* dst = din.data.data() + c * din.plane();
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const S* src = cols.data() + (static_cast<std::size_t>(c) * 9 + ky * 3 + kx) * hw;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - 1;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - 1;
            if (ix >= 0 && ix < w) dst[static_cast<std::size_t>(iy) * w + ix] += src[static_cast<std::size_t>(oy) * wo + ox];
          }
        }
      }
    }
  }
}

// out = act(W * im2col(in) + b), W has shape [c_out, c_in * 9].
template <typename S>
void conv3x3_forward(const S* weight, const S* bias, int c_out, const Tensor<S>& in, int stride, bool relu,
                     Tensor<S>& out, Buffer<S>& cols) {
  im2col3x3(in, stride, cols);
  const int ho = conv_out_size(in.height, stride), wo = conv_out_size(in.width, stride);
  const int hw = ho * wo, k = in.channels * 9;
  out = Tensor<S>(c_out, ho, wo);
  MatMap<S> y(out.data.data(), c_out, hw);
  y.noalias() = ConstMatMap<S>(weight, c_out, k) * ConstMatMap<S>(cols.data(), k, hw);
  y.colwise() += ConstVecMap<S>(bias, c_out);
  if (relu) y = y.cwiseMax(S(0));
}

// dout is the gradient w.r.t. the (post-activation) output and is masked in
// place when relu is set. Gradients are accumulated into dweight/dbias/din.
template <typename S>
void conv3x3_backward(const S* weight, const Tensor<S>& out, bool relu, Tensor<S>& dout, const Buffer<S>& cols,
                      int stride, S* dweight, S* dbias, Tensor<S>* din) {
  const int c_out = out.channels, hw = out.height * out.width;
  if (relu)
    for (std::size_t i = 0; i < dout.data.size(); ++i)
      if (out.data[i] <= S(0)) dout.data[i] = S(0);
  ConstMatMap<S> dy(dout.data.data(), c_out, hw);
  const int k = static_cast<int>(cols.size() / static_cast<std::size_t>(hw));
  ConstMatMap<S> x(cols.data(), k, hw);
  MatMap<S>(dweight, c_out, k).noalias() += dy * x.transpose();
  VecMap<S>(dbias, c_out) += dy.rowwise().sum();
  if (din) {
    Buffer<S> dcols(cols.size());
    MatMap<S>(dcols.data(), k, hw).noalias() = ConstMatMap<S>(weight, c_out, k).transpose() * dy;
    col2im3x3_add(dcols, stride, *din);
  }
}

// Bilinear sample grid for one box: pool x pool points, each a convex
// combination of four feature cells.
struct BilinearTap {
  int idx[4];
  double w[4];
};

// Sample point (i, j) sits at the center of bin (i, j) of the box mapped onto
// the feature grid, using pixel-center alignment: feature cell (y, x) covers
// image pixels [x * stride, (x + 1) * stride). Coordinates are clamped to the
// grid.
inline std::vector<BilinearTap> bilinear_taps(double x1, double y1, double x2, double y2, double stride, int pool,
                                              int feat_h, int feat_w) {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) || !std::isfinite(y2))
    throw NumericalError("non-finite box in ROI sampling");
  std::vector<BilinearTap> taps(static_cast<std::size_t>(pool) * pool);
  const double fx1 = x1 / stride, fy1 = y1 / stride;
  const double bw = (x2 - x1) / stride / pool, bh = (y2 - y1) / stride / pool;
  for (int i = 0; i < pool; ++i) {
    double sy = std::clamp(fy1 + (i + 0.5) * bh - 0.5, 0.0, static_cast<double>(feat_h - 1));
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1i = std::min(y0 + 1, feat_h - 1);
    const double ly = sy - y0;
    for (int j = 0; j < pool; ++j) {
      double sx = std::clamp(fx1 + (j + 0.5) * bw - 0.5, 0.0, static_cast<double>(feat_w - 1));
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1i = std::min(x0 + 1, feat_w - 1);
      const double lx = sx - x0;
      auto& t = taps[static_cast<std::size_t>(i) * pool + j];
      t.idx[0] = y0 * feat_w + x0;
      t.idx[1] = y0 * feat_w + x1i;
      t.idx[2] = y1i * feat_w + x0;
      t.idx[3] = y1i * feat_w + x1i;
      t.w[0] = (1 - ly) * (1 - lx);
      t.w[1] = (1 - ly) * lx;
      t.w[2] = ly * (1 - lx);
      t.w[3] = ly * lx;
    }
  }
  return taps;
}

// Writes C * pool * pool values (channel-major) into column `col` of a
// [C * pool * pool, n] row-major matrix.
template <typename S>
void bilinear_gather(const Tensor<S>& feat, const std::vector<BilinearTap>& taps, S* out, int n_cols, int col) {
  const std::size_t plane = feat.plane();
  const int bins = static_cast<int>(taps.size());
  for (int c = 0; c < feat.channels; ++c) {
    const S* f = feat.data.data() + c * plane;
    for (int b = 0; b < bins; ++b) {
      const auto& t = taps[static_cast<std::size_t>(b)];
      const S v = S(t.w[0]) * f[t.idx[0]] + S(t.w[1]) * f[t.idx[1]] + S(t.w[2]) * f[t.idx[2]] +
                  S(t.w[3]) * f[t.idx[3]];
      out[static_cast<std::size_t>(c * bins + b) * n_cols + col] = v;
    }
  }
}

template <typename S>
void bilinear_scatter(const std::vector<BilinearTap>& taps, const S* grad, int n_cols, int col, Tensor<S>& dfeat) {
  const std::size_t plane = dfeat.plane();
  const int bins = static_cast<int>(taps.size());
  for (int c = 0; c < dfeat.channels; ++c) {
    S* f = dfeat.data.data() + c * plane;
    for (int b = 0; b < bins; ++b) {
      const auto& t = taps[static_cast<std::size_t>(b)];
      const S g = grad[static_cast<std::size_t>(c * bins + b) * n_cols + col];
      for (int k = 0; k < 4; ++k) f[t.idx[k]] += S(t.w[k]) * g;
    }
  }
}

template <typename S>
S sigmoid(S z) {
  return z >= S(0) ? S(1) / (S(1) + std::exp(-z)) : std::exp(z) / (S(1) + std::exp(z));
}

// Binary cross-entropy on a logit, numerically stable form.
template <typename S>
S bce_with_logit(S z, S target) {
  return std::max(z, S(0)) - z * target + std::log1p(std::exp(-std::fabs(z)));
}

}  // namespace shiftdet
