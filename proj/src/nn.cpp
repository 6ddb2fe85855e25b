// Copyright 2026 The promptseg Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "promptseg/nn.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace promptseg
{
namespace
{

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

constexpr double kNormEps = 1e-5;
constexpr std::size_t kColumnBudget = 8192;

struct ConvGeom
{
  Shape3 in;
  Shape3 out;
  int k;
  int stride;
  int pad;
};

ConvGeom conv_geom(const Shape3 & in, int k, int stride)
{
  ConvGeom g{in, {}, k, stride, k / 2};
  for (int a = 0; a < 3; ++a) {
    g.out[a] = (in[a] + 2 * g.pad - k) / stride + 1;
  }
  return g;
}

// Output x positions [lo, hi) whose input column for kernel tap kx is inside the grid.
std::pair<int, int> valid_range(const ConvGeom & g, int kx)
{
  int lo = 0;
  while (lo < g.out[2] && lo * g.stride - g.pad + kx < 0) {
    ++lo;
  }
  int hi = g.out[2];
  while (hi > lo && (hi - 1) * g.stride - g.pad + kx >= g.in[2]) {
    --hi;
  }
  return {lo, hi};
}

// Fills col[K][cols] for output planes [oz0, oz1).
template <typename T>
void im2col(const T * in, int cin, const ConvGeom & g, int oz0, int oz1, T * col)
{
  const int oh = g.out[1];
  const int ow = g.out[2];
  const std::size_t cols = static_cast<std::size_t>(oz1 - oz0) * oh * ow;
  const std::size_t in_plane = static_cast<std::size_t>(g.in[1]) * g.in[2];
  std::size_t row = 0;
  for (int c = 0; c < cin; ++c) {
    const T * src_c = in + static_cast<std::size_t>(c) * voxel_count(g.in);
    for (int kz = 0; kz < g.k; ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++row) {
          T * dst = col + row * cols;
          for (int oz = oz0; oz < oz1; ++oz) {
            const int iz = oz * g.stride - g.pad + kz;
            if (iz < 0 || iz >= g.in[0]) {
              std::fill(dst, dst + static_cast<std::size_t>(oh) * ow, T{});
              dst += static_cast<std::size_t>(oh) * ow;
              continue;
            }
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in[1]) {
                std::fill(dst, dst + ow, T{});
                dst += ow;
                continue;
              }
              const T * src = src_c + iz * in_plane + static_cast<std::size_t>(iy) * g.in[2];
              const auto [lo, hi] = valid_range(g, kx);
              std::fill(dst, dst + lo, T{});
              if (g.stride == 1) {
                std::copy(src + lo - g.pad + kx, src + hi - g.pad + kx, dst + lo);
              } else {
                for (int ox = lo; ox < hi; ++ox) {
                  dst[ox] = src[ox * g.stride - g.pad + kx];
                }
              }
              std::fill(dst + hi, dst + ow, T{});
              dst += ow;
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T * col, int cin, const ConvGeom & g, int oz0, int oz1, T * din)
{
  const int oh = g.out[1];
  const int ow = g.out[2];
  const std::size_t cols = static_cast<std::size_t>(oz1 - oz0) * oh * ow;
  const std::size_t in_plane = static_cast<std::size_t>(g.in[1]) * g.in[2];
  std::size_t row = 0;
  for (int c = 0; c < cin; ++c) {
    T * dst_c = din + static_cast<std::size_t>(c) * voxel_count(g.in);
    for (int kz = 0; kz < g.k; ++kz) {
      for (int ky = 0; ky < g.k; ++ky) {
        for (int kx = 0; kx < g.k; ++kx, ++row) {
          const T * src = col + row * cols;
          for (int oz = oz0; oz < oz1; ++oz) {
            const int iz = oz * g.stride - g.pad + kz;
            if (iz < 0 || iz >= g.in[0]) {
              src += static_cast<std::size_t>(oh) * ow;
              continue;
            }
            for (int oy = 0; oy < oh; ++oy) {
              const int iy = oy * g.stride - g.pad + ky;
              if (iy < 0 || iy >= g.in[1]) {
                src += ow;
                continue;
              }
              T * d = dst_c + iz * in_plane + static_cast<std::size_t>(iy) * g.in[2];
              const auto [lo, hi] = valid_range(g, kx);
              if (g.stride == 1) {
                T * dd = d - g.pad + kx;
                for (int ox = lo; ox < hi; ++ox) {
                  dd[ox] += src[ox];
                }
              } else {
                for (int ox = lo; ox < hi; ++ox) {
                  d[ox * g.stride - g.pad + kx] += src[ox];
                }
              }
              src += ow;
            }
          }
        }
      }
    }
  }
}

int planes_per_chunk(const ConvGeom & g)
{
  const std::size_t per_plane = static_cast<std::size_t>(g.out[1]) * g.out[2];
  return static_cast<int>(std::clamp<std::size_t>(kColumnBudget / std::max<std::size_t>(per_plane, 1), 1, g.out[0]));
}

template <typename T>
Tensor<T> conv_forward(const Tensor<T> & x, const typename ResidualUNet<T>::Conv & c, const std::vector<Parameter<T>> & params)
{
  const ConvGeom g = conv_geom(x.spatial, c.kernel, c.stride);
  Tensor<T> y(x.n, c.cout, g.out);
  const int K = c.cin * c.kernel * c.kernel * c.kernel;
  const std::size_t out_plane = y.plane();
  Eigen::Map<const RowMat<T>> W(params[c.weight].values.data(), c.cout, K);
  const bool pointwise = c.kernel == 1 && c.stride == 1;
  const int step = planes_per_chunk(g);
  std::vector<T> col;
  for (int b = 0; b < x.n; ++b) {
    if (pointwise) {
      ConstStridedMap<T> X(x.ptr(b, 0), c.cin, static_cast<Eigen::Index>(out_plane), Eigen::OuterStride<>(out_plane));
      StridedMap<T> Y(y.ptr(b, 0), c.cout, static_cast<Eigen::Index>(out_plane), Eigen::OuterStride<>(out_plane));
      Y.noalias() = W * X;
    } else {
      for (int oz0 = 0; oz0 < g.out[0]; oz0 += step) {
        const int oz1 = std::min(g.out[0], oz0 + step);
        const std::size_t cols = static_cast<std::size_t>(oz1 - oz0) * g.out[1] * g.out[2];
        col.resize(static_cast<std::size_t>(K) * cols);
        im2col(x.ptr(b, 0), c.cin, g, oz0, oz1, col.data());
        Eigen::Map<const RowMat<T>> C(col.data(), K, static_cast<Eigen::Index>(cols));
        StridedMap<T> Y(y.ptr(b, 0) + static_cast<std::size_t>(oz0) * g.out[1] * g.out[2], c.cout,
                        static_cast<Eigen::Index>(cols), Eigen::OuterStride<>(out_plane));
        Y.noalias() = W * C;
      }
    }
    if (c.bias >= 0) {
      const auto & bias = params[c.bias].values;
      for (int o = 0; o < c.cout; ++o) {
        T * p = y.ptr(b, o);
        for (std::size_t i = 0; i < out_plane; ++i) {
          p[i] += bias[o];
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> conv_backward(const Tensor<T> & x, const Tensor<T> & dy, const typename ResidualUNet<T>::Conv & c,
                        const std::vector<Parameter<T>> & params, std::vector<std::vector<T>> & grads, bool need_dx)
{
  const ConvGeom g = conv_geom(x.spatial, c.kernel, c.stride);
  const int K = c.cin * c.kernel * c.kernel * c.kernel;
  const std::size_t out_plane = dy.plane();
  Eigen::Map<const RowMat<T>> W(params[c.weight].values.data(), c.cout, K);
  Eigen::Map<RowMat<T>> dW(grads[c.weight].data(), c.cout, K);
  Tensor<T> dx = need_dx ? Tensor<T>(x.n, x.c, x.spatial) : Tensor<T>();
  const bool pointwise = c.kernel == 1 && c.stride == 1;
  const int step = planes_per_chunk(g);
  std::vector<T> col;
  std::vector<T> dcol;
  for (int b = 0; b < x.n; ++b) {
    if (c.bias >= 0) {
      auto & db = grads[c.bias];
      for (int o = 0; o < c.cout; ++o) {
        const T * p = dy.ptr(b, o);
        T acc{};
        for (std::size_t i = 0; i < out_plane; ++i) {
          acc += p[i];
        }
        db[o] += acc;
      }
    }
    if (pointwise) {
      ConstStridedMap<T> X(x.ptr(b, 0), c.cin, static_cast<Eigen::Index>(out_plane), Eigen::OuterStride<>(out_plane));
      ConstStridedMap<T> DY(dy.ptr(b, 0), c.cout, static_cast<Eigen::Index>(out_plane), Eigen::OuterStride<>(out_plane));
      StridedMap<T> DX(need_dx ? dx.ptr(b, 0) : nullptr, c.cin, static_cast<Eigen::Index>(out_plane), Eigen::OuterStride<>(out_plane));
      dW.noalias() += DY * X.transpose();
      if (need_dx) {
        DX.noalias() = W.transpose() * DY;
      }
      continue;
    }
    for (int oz0 = 0; oz0 < g.out[0]; oz0 += step) {
      const int oz1 = std::min(g.out[0], oz0 + step);
      const std::size_t cols = static_cast<std::size_t>(oz1 - oz0) * g.out[1] * g.out[2];
      col.resize(static_cast<std::size_t>(K) * cols);
      dcol.resize(need_dx ? col.size() : 0);
      im2col(x.ptr(b, 0), c.cin, g, oz0, oz1, col.data());
      Eigen::Map<const RowMat<T>> C(col.data(), K, static_cast<Eigen::Index>(cols));
      ConstStridedMap<T> DY(dy.ptr(b, 0) + static_cast<std::size_t>(oz0) * g.out[1] * g.out[2], c.cout,
                            static_cast<Eigen::Index>(cols), Eigen::OuterStride<>(out_plane));
      dW.noalias() += DY * C.transpose();
      if (!need_dx) {
        continue;
      }
      Eigen::Map<RowMat<T>> DC(dcol.data(), K, static_cast<Eigen::Index>(cols));
      DC.noalias() = W.transpose() * DY;
      col2im(dcol.data(), c.cin, g, oz0, oz1, dx.ptr(b, 0));
    }
  }
  return dx;
}

// Transposed conv, kernel 2 stride 2; weight layout [cin][cout][2][2][2].
template <typename T>
Tensor<T> upconv_forward(const Tensor<T> & x, const typename ResidualUNet<T>::UpConv & u, const std::vector<Parameter<T>> & params)
{
  const Shape3 os{x.spatial[0] * 2, x.spatial[1] * 2, x.spatial[2] * 2};
  Tensor<T> y(x.n, u.cout, os);
  const std::size_t n_in = x.plane();
  Eigen::Map<const RowMat<T>> W(params[u.weight].values.data(), u.cin, u.cout * 8);
  RowMat<T> Y8(u.cout * 8, static_cast<Eigen::Index>(n_in));
  for (int b = 0; b < x.n; ++b) {
    ConstStridedMap<T> X(x.ptr(b, 0), u.cin, static_cast<Eigen::Index>(n_in), Eigen::OuterStride<>(n_in));
    Y8.noalias() = W.transpose() * X;
    for (int o = 0; o < u.cout; ++o) {
      T * dst = y.ptr(b, o);
      for (int t = 0; t < 8; ++t) {
        const int a = t >> 2;
        const int bb = (t >> 1) & 1;
        const int cc = t & 1;
        const T * src = Y8.row(o * 8 + t).data();
        std::size_t i = 0;
        for (int z = 0; z < x.spatial[0]; ++z) {
          for (int yy = 0; yy < x.spatial[1]; ++yy) {
            T * row = dst + (static_cast<std::size_t>(2 * z + a) * os[1] + (2 * yy + bb)) * os[2] + cc;
            for (int xx = 0; xx < x.spatial[2]; ++xx, ++i) {
              row[2 * xx] = src[i];
            }
          }
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> upconv_backward(const Tensor<T> & x, const Tensor<T> & dy, const typename ResidualUNet<T>::UpConv & u,
                          const std::vector<Parameter<T>> & params, std::vector<std::vector<T>> & grads)
{
  const Shape3 & os = dy.spatial;
  const std::size_t n_in = x.plane();
  Eigen::Map<const RowMat<T>> W(params[u.weight].values.data(), u.cin, u.cout * 8);
  Eigen::Map<RowMat<T>> dW(grads[u.weight].data(), u.cin, u.cout * 8);
  Tensor<T> dx(x.n, x.c, x.spatial);
  RowMat<T> DY8(u.cout * 8, static_cast<Eigen::Index>(n_in));
  for (int b = 0; b < x.n; ++b) {
    for (int o = 0; o < u.cout; ++o) {
      const T * src = dy.ptr(b, o);
      for (int t = 0; t < 8; ++t) {
        const int a = t >> 2;
        const int bb = (t >> 1) & 1;
        const int cc = t & 1;
        T * dst = DY8.row(o * 8 + t).data();
        std::size_t i = 0;
        for (int z = 0; z < x.spatial[0]; ++z) {
          for (int yy = 0; yy < x.spatial[1]; ++yy) {
            const T * row = src + (static_cast<std::size_t>(2 * z + a) * os[1] + (2 * yy + bb)) * os[2] + cc;
            for (int xx = 0; xx < x.spatial[2]; ++xx, ++i) {
              dst[i] = row[2 * xx];
            }
          }
        }
      }
    }
    ConstStridedMap<T> X(x.ptr(b, 0), u.cin, static_cast<Eigen::Index>(n_in), Eigen::OuterStride<>(n_in));
    StridedMap<T> DX(dx.ptr(b, 0), u.cin, static_cast<Eigen::Index>(n_in), Eigen::OuterStride<>(n_in));
    dW.noalias() += X * DY8.transpose();
    DX.noalias() = W * DY8;
  }
  return dx;
}

}  // namespace

// ---------------------------------------------------------------------------
// Graph
// ---------------------------------------------------------------------------

template <typename T>
int Graph<T>::push(Node n)
{
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

template <typename T>
int Graph<T>::input(Tensor<T> x)
{
  Node n;
  n.op = Op::input;
  n.value = std::move(x);
  return push(std::move(n));
}

template <typename T>
int Graph<T>::conv(int x, const typename ResidualUNet<T>::Conv & c)
{
  Node n;
  n.op = Op::conv;
  n.inputs = {x};
  n.conv = c;
  n.value = conv_forward<T>(nodes_[x].value, c, *params_);
  return push(std::move(n));
}

template <typename T>
int Graph<T>::upconv(int x, const typename ResidualUNet<T>::UpConv & u)
{
  Node n;
  n.op = Op::upconv;
  n.inputs = {x};
  n.up = u;
  n.value = upconv_forward<T>(nodes_[x].value, u, *params_);
  return push(std::move(n));
}

template <typename T>
int Graph<T>::norm(int x, const typename ResidualUNet<T>::Norm & nm)
{
  const Tensor<T> & in = nodes_[x].value;
  Node n;
  n.op = Op::norm;
  n.inputs = {x};
  n.norm = nm;
  n.value = Tensor<T>(in.n, in.c, in.spatial);
  if (record_) {
    n.xhat = Tensor<T>(in.n, in.c, in.spatial);
    n.inv_std.resize(static_cast<std::size_t>(in.n) * in.c);
  }
  const auto & gamma = (*params_)[nm.gamma].values;
  const auto & beta = (*params_)[nm.beta].values;
  const std::size_t m = in.plane();
  for (int b = 0; b < in.n; ++b) {
    for (int ch = 0; ch < in.c; ++ch) {
      const T * src = in.ptr(b, ch);
      double sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        sum += src[i];
      }
      const double mean = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = src[i] - mean;
        sq += d * d;
      }
      const double inv = 1.0 / std::sqrt(sq / static_cast<double>(m) + kNormEps);
      T * dst = n.value.ptr(b, ch);
      T * xh = record_ ? n.xhat.ptr(b, ch) : nullptr;
      const T g = gamma[ch];
      const T be = beta[ch];
      for (std::size_t i = 0; i < m; ++i) {
        const T h = static_cast<T>((src[i] - mean) * inv);
        if (xh) {
          xh[i] = h;
        }
        dst[i] = g * h + be;
      }
      if (record_) {
        n.inv_std[static_cast<std::size_t>(b) * in.c + ch] = static_cast<T>(inv);
      }
    }
  }
  return push(std::move(n));
}

template <typename T>
int Graph<T>::lrelu(int x, double slope)
{
  Node n;
  n.op = Op::lrelu;
  n.inputs = {x};
  n.slope = slope;
  n.value = nodes_[x].value;
  const T s = static_cast<T>(slope);
  for (T & v : n.value.data) {
    v = v > T{} ? v : v * s;
  }
  return push(std::move(n));
}

template <typename T>
int Graph<T>::add(int a, int b)
{
  Node n;
  n.op = Op::add;
  n.inputs = {a, b};
  n.value = nodes_[a].value;
  const auto & other = nodes_[b].value.data;
  for (std::size_t i = 0; i < other.size(); ++i) {
    n.value.data[i] += other[i];
  }
  return push(std::move(n));
}

template <typename T>
int Graph<T>::concat(int a, int b)
{
  const Tensor<T> & ta = nodes_[a].value;
  const Tensor<T> & tb = nodes_[b].value;
  if (ta.spatial != tb.spatial || ta.n != tb.n) {
    throw InvalidArgument("concat: spatial shapes differ");
  }
  Node n;
  n.op = Op::concat;
  n.inputs = {a, b};
  n.value = Tensor<T>(ta.n, ta.c + tb.c, ta.spatial);
  const std::size_t m = ta.plane();
  for (int bi = 0; bi < ta.n; ++bi) {
    std::copy(ta.ptr(bi, 0), ta.ptr(bi, 0) + ta.c * m, n.value.ptr(bi, 0));
    std::copy(tb.ptr(bi, 0), tb.ptr(bi, 0) + tb.c * m, n.value.ptr(bi, ta.c));
  }
  return push(std::move(n));
}

template <typename T>
void Graph<T>::backward(int output, const Tensor<T> & grad, std::vector<std::vector<T>> & param_grads)
{
  if (!record_) {
    throw StateError("graph was built without recording");
  }
  std::vector<Tensor<T>> g(nodes_.size());
  g[output] = grad;
  auto accumulate = [&](int id, Tensor<T> && d) {
    if (g[id].data.empty()) {
      g[id] = std::move(d);
    } else {
      for (std::size_t i = 0; i < d.data.size(); ++i) {
        g[id].data[i] += d.data[i];
      }
    }
  };
  for (int id = output; id >= 0; --id) {
    if (g[id].data.empty()) {
      continue;
    }
    Node & n = nodes_[id];
    Tensor<T> & dy = g[id];
    switch (n.op) {
      case Op::input: break;
      case Op::conv: {
        const int in = n.inputs[0];
        const bool need_dx = nodes_[in].op != Op::input;
        Tensor<T> dx = conv_backward<T>(nodes_[in].value, dy, n.conv, *params_, param_grads, need_dx);
        if (need_dx) {
          accumulate(in, std::move(dx));
        }
        break;
      }
      case Op::upconv: {
        const int in = n.inputs[0];
        accumulate(in, upconv_backward<T>(nodes_[in].value, dy, n.up, *params_, param_grads));
        break;
      }
      case Op::norm: {
        const auto & gamma = (*params_)[n.norm.gamma].values;
        auto & dgamma = param_grads[n.norm.gamma];
        auto & dbeta = param_grads[n.norm.beta];
        Tensor<T> dx(dy.n, dy.c, dy.spatial);
        const std::size_t m = dy.plane();
        for (int b = 0; b < dy.n; ++b) {
          for (int ch = 0; ch < dy.c; ++ch) {
            const T * d = dy.ptr(b, ch);
            const T * h = n.xhat.ptr(b, ch);
            double sum_d = 0.0;
            double sum_dh = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
              sum_d += d[i];
              sum_dh += static_cast<double>(d[i]) * h[i];
            }
            dgamma[ch] += static_cast<T>(sum_dh);
            dbeta[ch] += static_cast<T>(sum_d);
            const double gm = gamma[ch];
            const double inv = n.inv_std[static_cast<std::size_t>(b) * dy.c + ch];
            const double mean_dxh = gm * sum_d / static_cast<double>(m);
            const double mean_dxh_h = gm * sum_dh / static_cast<double>(m);
            T * out = dx.ptr(b, ch);
            for (std::size_t i = 0; i < m; ++i) {
              out[i] = static_cast<T>(inv * (gm * d[i] - mean_dxh - h[i] * mean_dxh_h));
            }
          }
        }
        accumulate(n.inputs[0], std::move(dx));
        break;
      }
      case Op::lrelu: {
        Tensor<T> dx = dy;
        const T s = static_cast<T>(n.slope);
        for (std::size_t i = 0; i < dx.data.size(); ++i) {
          if (!(n.value.data[i] > T{})) {
            dx.data[i] *= s;
          }
        }
        accumulate(n.inputs[0], std::move(dx));
        break;
      }
      case Op::add: {
        Tensor<T> copy = dy;
        accumulate(n.inputs[0], std::move(copy));
        accumulate(n.inputs[1], std::move(dy));
        break;
      }
      case Op::concat: {
        const Tensor<T> & ta = nodes_[n.inputs[0]].value;
        const Tensor<T> & tb = nodes_[n.inputs[1]].value;
        Tensor<T> da(ta.n, ta.c, ta.spatial);
        Tensor<T> db(tb.n, tb.c, tb.spatial);
        const std::size_t m = ta.plane();
        for (int bi = 0; bi < ta.n; ++bi) {
          std::copy(dy.ptr(bi, 0), dy.ptr(bi, 0) + ta.c * m, da.ptr(bi, 0));
          std::copy(dy.ptr(bi, ta.c), dy.ptr(bi, ta.c) + tb.c * m, db.ptr(bi, 0));
        }
        accumulate(n.inputs[0], std::move(da));
        accumulate(n.inputs[1], std::move(db));
        break;
      }
    }
    g[id] = Tensor<T>();
  }
}

// ---------------------------------------------------------------------------
// Network
// ---------------------------------------------------------------------------

NetworkConfig NetworkConfig::toy(GuidanceLayout layout)
{
  NetworkConfig c;
  c.input_channels = layout == GuidanceLayout::shared ? 4 : 10;
  c.widths = {16, 32, 64};
  c.blocks_per_stage = {1, 1, 1};
  return c;
}

NetworkConfig NetworkConfig::resenc_l(GuidanceLayout layout)
{
  NetworkConfig c;
  c.input_channels = layout == GuidanceLayout::shared ? 4 : 10;
  c.widths = {32, 64, 128, 256, 320, 320};
  c.blocks_per_stage = {1, 3, 4, 6, 6, 6};
  return c;
}

void NetworkConfig::validate() const
{
  if (input_channels != 4 && input_channels != 10) {
    throw InvalidArgument("input channels must be 4 (shared layout) or 10 (per-type layout)");
  }
  if (widths.empty() || widths.size() != blocks_per_stage.size()) {
    throw InvalidArgument("widths and blocks_per_stage must be non-empty and the same length");
  }
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1 || (i > 0 && widths[i] < widths[i - 1])) {
      throw InvalidArgument("encoder widths must be positive and non-decreasing");
    }
    if (blocks_per_stage[i] < 0) {
      throw InvalidArgument("blocks per stage must be >= 0");
    }
  }
  if (kernel != 3) {
    throw InvalidArgument("only 3x3x3 kernels are supported");
  }
  if (norm != "instance") {
    throw InvalidArgument("unsupported normalisation '" + norm + "'");
  }
  if (nonlinearity != "leaky_relu") {
    throw InvalidArgument("unsupported nonlinearity '" + nonlinearity + "'");
  }
}

nlohmann::json to_json(const NetworkConfig & c)
{
  return {
    {"input_channels", c.input_channels}, {"widths", c.widths}, {"blocks_per_stage", c.blocks_per_stage},
    {"kernel", c.kernel},                 {"norm", c.norm},     {"nonlinearity", c.nonlinearity},
    {"negative_slope", c.negative_slope},
  };
}

NetworkConfig network_config_from_json(const nlohmann::json & j)
{
  NetworkConfig c;
  c.input_channels = j.value("input_channels", c.input_channels);
  c.widths = j.value("widths", c.widths);
  c.blocks_per_stage = j.value("blocks_per_stage", c.blocks_per_stage);
  c.kernel = j.value("kernel", c.kernel);
  c.norm = j.value("norm", c.norm);
  c.nonlinearity = j.value("nonlinearity", c.nonlinearity);
  c.negative_slope = j.value("negative_slope", c.negative_slope);
  c.validate();
  return c;
}

template <typename T>
ResidualUNet<T>::ResidualUNet(const NetworkConfig & cfg, Rng & rng) : cfg_(cfg)
{
  cfg_.validate();
  build(&rng);
}

template <typename T>
ResidualUNet<T>::ResidualUNet(const NetworkConfig & cfg, NoInit) : cfg_(cfg)
{
  cfg_.validate();
  build(nullptr);
}

template <typename T>
int ResidualUNet<T>::add_param(const std::string & name, std::vector<int> shape)
{
  std::size_t n = 1;
  for (int s : shape) {
    n *= static_cast<std::size_t>(s);
  }
  params_.push_back({name, std::move(shape), std::vector<T>(n, T{})});
  return static_cast<int>(params_.size()) - 1;
}

template <typename T>
typename ResidualUNet<T>::Conv ResidualUNet<T>::make_conv(const std::string & name, int cin, int cout, int kernel,
                                                          int stride, bool bias, Rng * rng)
{
  Conv c{cin, cout, kernel, stride, -1, -1};
  c.weight = add_param(name + ".weight", {cout, cin, kernel, kernel, kernel});
  if (rng) {
    const double sd = std::sqrt(2.0 / (cin * kernel * kernel * kernel));
    for (T & v : params_[c.weight].values) {
      v = static_cast<T>(rng->normal(0.0, sd));
    }
  }
  if (bias) {
    c.bias = add_param(name + ".bias", {cout});
  }
  return c;
}

template <typename T>
typename ResidualUNet<T>::Norm ResidualUNet<T>::make_norm(const std::string & name, int channels)
{
  Norm n{channels, -1, -1};
  n.gamma = add_param(name + ".gamma", {channels});
  n.beta = add_param(name + ".beta", {channels});
  std::fill(params_[n.gamma].values.begin(), params_[n.gamma].values.end(), T{1});
  return n;
}

template <typename T>
void ResidualUNet<T>::build(Rng * rng)
{
  const int S = cfg_.stages();
  const int k = cfg_.kernel;
  int cin = cfg_.input_channels;
  for (int s = 0; s < S; ++s) {
    const std::string p = "enc" + std::to_string(s);
    Stage st;
    st.entry = make_conv(p + ".entry", cin, cfg_.widths[s], k, s == 0 ? 1 : 2, false, rng);
    st.entry_norm = make_norm(p + ".entry_norm", cfg_.widths[s]);
    for (int b = 0; b < cfg_.blocks_per_stage[s]; ++b) {
      const std::string q = p + ".block" + std::to_string(b);
      ResBlock rb;
      rb.conv1 = make_conv(q + ".conv1", cfg_.widths[s], cfg_.widths[s], k, 1, false, rng);
      rb.norm1 = make_norm(q + ".norm1", cfg_.widths[s]);
      rb.conv2 = make_conv(q + ".conv2", cfg_.widths[s], cfg_.widths[s], k, 1, false, rng);
      rb.norm2 = make_norm(q + ".norm2", cfg_.widths[s]);
      st.blocks.push_back(rb);
    }
    encoder_.push_back(st);
    cin = cfg_.widths[s];
  }
  for (int s = S - 2; s >= 0; --s) {
    const std::string p = "dec" + std::to_string(s);
    DecoderStage d;
    d.up = UpConv{cfg_.widths[s + 1], cfg_.widths[s], add_param(p + ".up.weight", {cfg_.widths[s + 1], cfg_.widths[s], 2, 2, 2})};
    if (rng) {
      const double sd = std::sqrt(2.0 / cfg_.widths[s + 1]);
      for (T & v : params_[d.up.weight].values) {
        v = static_cast<T>(rng->normal(0.0, sd));
      }
    }
    d.conv = make_conv(p + ".conv", 2 * cfg_.widths[s], cfg_.widths[s], k, 1, false, rng);
    d.norm = make_norm(p + ".norm", cfg_.widths[s]);
    decoder_.push_back(d);
  }
  head_ = make_conv("head", cfg_.widths[0], 1, 1, 1, true, rng);
}

template <typename T>
std::size_t ResidualUNet<T>::parameter_count() const
{
  std::size_t n = 0;
  for (const auto & p : params_) {
    n += p.values.size();
  }
  return n;
}

template <typename T>
std::vector<std::vector<T>> ResidualUNet<T>::zero_gradients() const
{
  std::vector<std::vector<T>> g;
  g.reserve(params_.size());
  for (const auto & p : params_) {
    g.emplace_back(p.values.size(), T{});
  }
  return g;
}

template <typename T>
int ResidualUNet<T>::conv_norm_act(Graph<T> & g, int x, const Conv & c, const Norm & n) const
{
  return g.lrelu(g.norm(g.conv(x, c), n), cfg_.negative_slope);
}

template <typename T>
Tensor<T> ResidualUNet<T>::forward_logits(const Tensor<T> & input, Graph<T> & g) const
{
  if (input.c != cfg_.input_channels) {
    throw InvalidArgument("input has " + std::to_string(input.c) + " channels, network expects " +
                          std::to_string(cfg_.input_channels));
  }
  const int f = cfg_.downsampling_factor();
  for (int a = 0; a < 3; ++a) {
    if (input.spatial[a] % f != 0) {
      throw InvalidArgument("input spatial size must be divisible by " + std::to_string(f));
    }
  }
  int x = g.input(input);
  std::vector<int> skips;
  for (const Stage & st : encoder_) {
    x = conv_norm_act(g, x, st.entry, st.entry_norm);
    for (const ResBlock & rb : st.blocks) {
      const int h = conv_norm_act(g, x, rb.conv1, rb.norm1);
      const int y = g.norm(g.conv(h, rb.conv2), rb.norm2);
      x = g.lrelu(g.add(y, x), cfg_.negative_slope);
    }
    skips.push_back(x);
  }
  for (std::size_t d = 0; d < decoder_.size(); ++d) {
    const DecoderStage & ds = decoder_[d];
    const int skip = skips[skips.size() - 2 - d];
    const int up = g.upconv(x, ds.up);
    x = conv_norm_act(g, g.concat(up, skip), ds.conv, ds.norm);
  }
  const int out = g.conv(x, head_);
  return g.value(out);
}

template <typename T>
Tensor<T> ResidualUNet<T>::forward_logits(const Tensor<T> & input) const
{
  Graph<T> g(params_, false);
  return forward_logits(input, g);
}

template <typename T>
void ResidualUNet<T>::backward(Graph<T> & graph, const Tensor<T> & d_logits, std::vector<std::vector<T>> & grads) const
{
  // the head conv is always the last node
  graph.backward(graph.size() - 1, d_logits, grads);
}

template class Graph<float>;
template class Graph<double>;
template class ResidualUNet<float>;
template class ResidualUNet<double>;

ResidualUNet<float> build_network(const NetworkConfig & cfg, Rng & rng) { return ResidualUNet<float>(cfg, rng); }

}  // namespace promptseg
