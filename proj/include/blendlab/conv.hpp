/* Copyright 2026 The BlendLab Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Spatial ops on NCHW tensors: stride-1 "same" convolution and 2x resampling.
//
// The convolution family {conv2d, conv2d_input_grad, conv2d_weight_grad} is
// closed under differentiation, as are the pairs {upsample2x, its adjoint}
// and {avg_pool2x, its adjoint}. That closure is what makes double backward
// through convolutional networks possible.

#ifndef BLENDLAB_CONV_HPP_
#define BLENDLAB_CONV_HPP_

#include <vector>

#include "blendlab/ops.hpp"

namespace blendlab::ag {

namespace detail {

struct ConvGeom {
  std::int64_t n, c, h, w, o, k, pad;
};

inline ConvGeom conv_geom(const Shape& x, const Shape& wt) {
  if (x.size() != 4 || wt.size() != 4) throw ArgumentError("conv2d expects NCHW input and OIHW weight");
  if (x[1] != wt[1]) {
    throw ArgumentError("conv2d channel mismatch: input " + shape_str(x) + " weight " + shape_str(wt));
  }
  if (wt[2] != wt[3] || wt[2] % 2 == 0) throw ArgumentError("conv2d expects odd square kernels");
  return {x[0], x[1], x[2], x[3], wt[0], wt[2], wt[2] / 2};
}

// col is [c*k*k, h*w].
template <class T>
void im2col(const T* x, const ConvGeom& g, T* col) {
  const std::int64_t hw = g.h * g.w;
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        T* dst = col + ((c * g.k + ky) * g.k + kx) * hw;
        const T* src = x + c * hw;
        const std::int64_t dy = ky - g.pad;
        const std::int64_t dx = kx - g.pad;
        for (std::int64_t y = 0; y < g.h; ++y) {
          const std::int64_t sy = y + dy;
          T* row = dst + y * g.w;
          if (sy < 0 || sy >= g.h) {
            std::fill_n(row, g.w, T(0));
            continue;
          }
          const T* srow = src + sy * g.w;
          const std::int64_t x0 = std::max<std::int64_t>(0, -dx);
          const std::int64_t x1 = std::min<std::int64_t>(g.w, g.w - dx);
          std::fill_n(row, x0, T(0));
          std::copy(srow + x0 + dx, srow + x1 + dx, row + x0);
          std::fill(row + x1, row + g.w, T(0));
        }
      }
    }
  }
}

template <class T>
void col2im(const T* col, const ConvGeom& g, T* x) {
  const std::int64_t hw = g.h * g.w;
  std::fill_n(x, g.c * hw, T(0));
  for (std::int64_t c = 0; c < g.c; ++c) {
    for (std::int64_t ky = 0; ky < g.k; ++ky) {
      for (std::int64_t kx = 0; kx < g.k; ++kx) {
        const T* src = col + ((c * g.k + ky) * g.k + kx) * hw;
        T* dst = x + c * hw;
        const std::int64_t dy = ky - g.pad;
        const std::int64_t dx = kx - g.pad;
        for (std::int64_t y = 0; y < g.h; ++y) {
          const std::int64_t sy = y + dy;
          if (sy < 0 || sy >= g.h) continue;
          const T* row = src + y * g.w;
          T* drow = dst + sy * g.w;
          const std::int64_t x0 = std::max<std::int64_t>(0, -dx);
          const std::int64_t x1 = std::min<std::int64_t>(g.w, g.w - dx);
          for (std::int64_t xx = x0; xx < x1; ++xx) drow[xx + dx] += row[xx];
        }
      }
    }
  }
}

template <class T>
Tensor<T> conv2d_value(const Tensor<T>& x, const Tensor<T>& wt) {
  const ConvGeom g = conv_geom(x.shape(), wt.shape());
  const std::int64_t hw = g.h * g.w;
  const std::int64_t ckk = g.c * g.k * g.k;
  Tensor<T> out({g.n, g.o, g.h, g.w});
  CMapMat<T> W(wt.data(), g.o, ckk);
  std::vector<T> col(g.k == 1 ? 0 : static_cast<std::size_t>(ckk * hw));
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* xn = x.data() + n * g.c * hw;
    const T* cp = xn;
    if (g.k != 1) {
      im2col(xn, g, col.data());
      cp = col.data();
    }
    CMapMat<T> C(cp, ckk, hw);
    MapMat<T> Y(out.data() + n * g.o * hw, g.o, hw);
    Y.noalias() = W * C;
  }
  return out;
}

// Adjoint of x -> conv2d(x, wt).
template <class T>
Tensor<T> conv2d_input_grad_value(const Tensor<T>& gy, const Tensor<T>& wt) {
  const Shape xs{gy.dim(0), wt.dim(1), gy.dim(2), gy.dim(3)};
  const ConvGeom g = conv_geom(xs, wt.shape());
  if (gy.dim(1) != g.o) throw ArgumentError("conv2d_input_grad: output channel mismatch");
  const std::int64_t hw = g.h * g.w;
  const std::int64_t ckk = g.c * g.k * g.k;
  Tensor<T> gx(xs);
  CMapMat<T> W(wt.data(), g.o, ckk);
  std::vector<T> col(g.k == 1 ? 0 : static_cast<std::size_t>(ckk * hw));
  for (std::int64_t n = 0; n < g.n; ++n) {
    CMapMat<T> G(gy.data() + n * g.o * hw, g.o, hw);
    if (g.k == 1) {
      MapMat<T> X(gx.data() + n * g.c * hw, ckk, hw);
      X.noalias() = W.transpose() * G;
    } else {
      MapMat<T> C(col.data(), ckk, hw);
      C.noalias() = W.transpose() * G;
      col2im(col.data(), g, gx.data() + n * g.c * hw);
    }
  }
  return gx;
}

// Adjoint of wt -> conv2d(x, wt).
template <class T>
Tensor<T> conv2d_weight_grad_value(const Tensor<T>& x, const Tensor<T>& gy, std::int64_t k) {
  const Shape ws{gy.dim(1), x.dim(1), k, k};
  const ConvGeom g = conv_geom(x.shape(), ws);
  if (gy.dim(0) != g.n || gy.dim(2) != g.h || gy.dim(3) != g.w) {
    throw ArgumentError("conv2d_weight_grad: gradient shape mismatch");
  }
  const std::int64_t hw = g.h * g.w;
  const std::int64_t ckk = g.c * g.k * g.k;
  Tensor<T> gw(ws);
  MapMat<T> GW(gw.data(), g.o, ckk);
  std::vector<T> col(g.k == 1 ? 0 : static_cast<std::size_t>(ckk * hw));
  for (std::int64_t n = 0; n < g.n; ++n) {
    const T* xn = x.data() + n * g.c * hw;
    const T* cp = xn;
    if (g.k != 1) {
      im2col(xn, g, col.data());
      cp = col.data();
    }
    CMapMat<T> C(cp, ckk, hw);
    CMapMat<T> G(gy.data() + n * g.o * hw, g.o, hw);
    GW.noalias() += G * C.transpose();
  }
  return gw;
}

}  // namespace detail

template <class T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& wt);
template <class T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, std::int64_t k);

// Stride-1 convolution with "same" zero padding; weight is [out, in, k, k].
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& wt) {
  return make_result<T>(
      detail::conv2d_value(x.value(), wt.value()), {x, wt},
      [x, wt](const Var<T>&, const Var<T>& g, const std::vector<bool>& needs) {
        std::vector<Var<T>> r(2);
        if (needs[0]) r[0] = conv2d_input_grad(g, wt);
        if (needs[1]) r[1] = conv2d_weight_grad(x, g, wt.dim(2));
        return r;
      },
      "conv2d");
}

template <class T>
Var<T> conv2d_input_grad(const Var<T>& gy, const Var<T>& wt) {
  return make_result<T>(
      detail::conv2d_input_grad_value(gy.value(), wt.value()), {gy, wt},
      [gy, wt](const Var<T>&, const Var<T>& g, const std::vector<bool>& needs) {
        // <g, A_w^T gy> = <A_w g, gy>
        std::vector<Var<T>> r(2);
        if (needs[0]) r[0] = conv2d(g, wt);
        if (needs[1]) r[1] = conv2d_weight_grad(g, gy, wt.dim(2));
        return r;
      },
      "conv2d_input_grad");
}

template <class T>
Var<T> conv2d_weight_grad(const Var<T>& x, const Var<T>& gy, std::int64_t k) {
  return make_result<T>(
      detail::conv2d_weight_grad_value(x.value(), gy.value(), k), {x, gy},
      [x, gy](const Var<T>&, const Var<T>& g, const std::vector<bool>& needs) {
        // <g, B_x^T gy> = <conv2d(x, g), gy>
        std::vector<Var<T>> r(2);
        if (needs[0]) r[0] = conv2d_input_grad(gy, g);
        if (needs[1]) r[1] = conv2d(x, g);
        return r;
      },
      "conv2d_weight_grad");
}

namespace detail {

// 1-D bilinear 2x upsampling with half-pixel centers and edge clamping:
// out[2i] = 0.75 in[i] + 0.25 in[i-1], out[2i+1] = 0.75 in[i] + 0.25 in[i+1].
template <class T>
void up1d(const T* in, std::int64_t n, std::int64_t stride, T* out, std::int64_t ostride) {
  for (std::int64_t i = 0; i < n; ++i) {
    const T c = in[i * stride];
    const T l = in[std::max<std::int64_t>(i - 1, 0) * stride];
    const T r = in[std::min<std::int64_t>(i + 1, n - 1) * stride];
    out[(2 * i) * ostride] = T(0.75) * c + T(0.25) * l;
    out[(2 * i + 1) * ostride] = T(0.75) * c + T(0.25) * r;
  }
}

// Transpose of up1d; `in` has 2n entries, `out` has n.
template <class T>
void up1d_adjoint(const T* in, std::int64_t n, std::int64_t stride, T* out, std::int64_t ostride) {
  for (std::int64_t i = 0; i < n; ++i) out[i * ostride] = T(0);
  for (std::int64_t i = 0; i < n; ++i) {
    const T e = in[(2 * i) * stride];
    const T o = in[(2 * i + 1) * stride];
    out[i * ostride] += T(0.75) * (e + o);
    out[std::max<std::int64_t>(i - 1, 0) * ostride] += T(0.25) * e;
    out[std::min<std::int64_t>(i + 1, n - 1) * ostride] += T(0.25) * o;
  }
}

template <class T>
Tensor<T> upsample2x_value(const Tensor<T>& x) {
  if (x.rank() != 4) throw ArgumentError("upsample2x expects NCHW");
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> tmp({planes, h, 2 * w});
  Tensor<T> out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x.data() + p * h * w;
    T* mid = tmp.data() + p * h * 2 * w;
    for (std::int64_t y = 0; y < h; ++y) up1d(src + y * w, w, 1, mid + y * 2 * w, 1);
    T* dst = out.data() + p * 4 * h * w;
    for (std::int64_t xx = 0; xx < 2 * w; ++xx) up1d(mid + xx, h, 2 * w, dst + xx, 2 * w);
  }
  return out;
}

template <class T>
Tensor<T> upsample2x_adjoint_value(const Tensor<T>& g) {
  if (g.rank() != 4 || g.dim(2) % 2 || g.dim(3) % 2) throw ArgumentError("upsample2x_adjoint expects even NCHW");
  const std::int64_t planes = g.dim(0) * g.dim(1), h = g.dim(2) / 2, w = g.dim(3) / 2;
  Tensor<T> tmp({planes, h, 2 * w});
  Tensor<T> out({g.dim(0), g.dim(1), h, w});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = g.data() + p * 4 * h * w;
    T* mid = tmp.data() + p * h * 2 * w;
    for (std::int64_t xx = 0; xx < 2 * w; ++xx) up1d_adjoint(src + xx, h, 2 * w, mid + xx, 2 * w);
    T* dst = out.data() + p * h * w;
    for (std::int64_t y = 0; y < h; ++y) up1d_adjoint(mid + y * 2 * w, w, 1, dst + y * w, 1);
  }
  return out;
}

template <class T>
Tensor<T> avg_pool2x_value(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(2) % 2 || x.dim(3) % 2) throw ArgumentError("avg_pool2x expects even NCHW");
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2) / 2, w = x.dim(3) / 2;
  Tensor<T> out({x.dim(0), x.dim(1), h, w});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = x.data() + p * 4 * h * w;
    T* dst = out.data() + p * h * w;
    for (std::int64_t y = 0; y < h; ++y) {
      const T* r0 = src + (2 * y) * 2 * w;
      const T* r1 = r0 + 2 * w;
      for (std::int64_t xx = 0; xx < w; ++xx)
        dst[y * w + xx] = T(0.25) * (r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1]);
    }
  }
  return out;
}

template <class T>
Tensor<T> avg_pool2x_adjoint_value(const Tensor<T>& g) {
  if (g.rank() != 4) throw ArgumentError("avg_pool2x_adjoint expects NCHW");
  const std::int64_t planes = g.dim(0) * g.dim(1), h = g.dim(2), w = g.dim(3);
  Tensor<T> out({g.dim(0), g.dim(1), 2 * h, 2 * w});
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = g.data() + p * h * w;
    T* dst = out.data() + p * 4 * h * w;
    for (std::int64_t y = 0; y < 2 * h; ++y)
      for (std::int64_t xx = 0; xx < 2 * w; ++xx) dst[y * 2 * w + xx] = T(0.25) * src[(y / 2) * w + xx / 2];
  }
  return out;
}

}  // namespace detail

template <class T>
Var<T> upsample2x_adjoint(const Var<T>& g);

// Bilinear 2x upsampling (half-pixel centers, clamped edges).
template <class T>
Var<T> upsample2x(const Var<T>& x) {
  return make_result<T>(
      detail::upsample2x_value(x.value()), {x},
      [](const Var<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{upsample2x_adjoint(g)};
      },
      "upsample2x");
}

template <class T>
Var<T> upsample2x_adjoint(const Var<T>& g) {
  return make_result<T>(
      detail::upsample2x_adjoint_value(g.value()), {g},
      [](const Var<T>&, const Var<T>& gg, const std::vector<bool>&) { return std::vector<Var<T>>{upsample2x(gg)}; },
      "upsample2x_adjoint");
}

template <class T>
Var<T> avg_pool2x_adjoint(const Var<T>& g);

// 2x2 box downsampling (bilinear at factor 2 with half-pixel centers).
template <class T>
Var<T> avg_pool2x(const Var<T>& x) {
  return make_result<T>(
      detail::avg_pool2x_value(x.value()), {x},
      [](const Var<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{avg_pool2x_adjoint(g)};
      },
      "avg_pool2x");
}

template <class T>
Var<T> avg_pool2x_adjoint(const Var<T>& g) {
  return make_result<T>(
      detail::avg_pool2x_adjoint_value(g.value()), {g},
      [](const Var<T>&, const Var<T>& gg, const std::vector<bool>&) { return std::vector<Var<T>>{avg_pool2x(gg)}; },
      "avg_pool2x_adjoint");
}

}  // namespace blendlab::ag

#endif  // BLENDLAB_CONV_HPP_
