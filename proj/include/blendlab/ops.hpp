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

// Differentiable tensor ops. Binary elementwise ops broadcast NumPy-style;
// their gradients are reduced back with sum_to.

#ifndef BLENDLAB_OPS_HPP_
#define BLENDLAB_OPS_HPP_

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "blendlab/autograd.hpp"

namespace blendlab::ag {

namespace detail {

constexpr int kMaxRank = 6;

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i + a.size() >= r ? a[i + a.size() - r] : 1;
    const std::int64_t db = i + b.size() >= r ? b[i + b.size() - r] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ArgumentError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `in` laid over `out` (zero on broadcast axes), right-aligned.
inline std::array<std::int64_t, kMaxRank> broadcast_strides(const Shape& in, const Shape& out) {
  std::array<std::int64_t, kMaxRank> strides{};
  const std::size_t r = out.size();
  std::int64_t s = 1;
  for (std::size_t k = 0; k < std::min(in.size(), r); ++k) {
    const std::size_t i = in.size() - 1 - k;
    const std::size_t o = r - 1 - k;
    strides[kMaxRank - r + o] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

inline std::array<std::int64_t, kMaxRank> padded_dims(const Shape& out) {
  if (out.size() > static_cast<std::size_t>(kMaxRank)) throw ArgumentError("rank exceeds " + std::to_string(kMaxRank));
  std::array<std::int64_t, kMaxRank> dims;
  dims.fill(1);
  for (std::size_t i = 0; i < out.size(); ++i) dims[kMaxRank - out.size() + i] = out[i];
  return dims;
}

// Calls f(out_index, a_index, b_index) over the broadcast iteration space,
// in row-major order of `out`.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  const auto dims = padded_dims(out);
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  std::int64_t o = 0;
  for (std::int64_t i0 = 0; i0 < dims[0]; ++i0)
    for (std::int64_t i1 = 0; i1 < dims[1]; ++i1)
      for (std::int64_t i2 = 0; i2 < dims[2]; ++i2)
        for (std::int64_t i3 = 0; i3 < dims[3]; ++i3)
          for (std::int64_t i4 = 0; i4 < dims[4]; ++i4) {
            std::int64_t ia = i0 * sa[0] + i1 * sa[1] + i2 * sa[2] + i3 * sa[3] + i4 * sa[4];
            std::int64_t ib = i0 * sb[0] + i1 * sb[1] + i2 * sb[2] + i3 * sb[3] + i4 * sb[4];
            const std::int64_t n = dims[5];
            const std::int64_t da = sa[5];
            const std::int64_t db = sb[5];
            for (std::int64_t i5 = 0; i5 < n; ++i5, ++o, ia += da, ib += db) f(o, ia, ib);
          }
}

template <class T, class F>
Tensor<T> broadcast_binary(const Tensor<T>& a, const Tensor<T>& b, F&& f) {
  if (a.shape() == b.shape()) {
    Tensor<T> out(a.shape());
    const T* pa = a.data();
    const T* pb = b.data();
    T* po = out.data();
    for (std::int64_t i = 0; i < out.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
  }
  Tensor<T> out(broadcast_shape(a.shape(), b.shape()));
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for_each_broadcast(out.shape(), a.shape(), b.shape(),
                     [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { po[o] = f(pa[ia], pb[ib]); });
  return out;
}

template <class T, class F>
Tensor<T> map_unary(const Tensor<T>& x, F&& f) {
  Tensor<T> out(x.shape());
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) po[i] = f(px[i]);
  return out;
}

// Whether `small` can be broadcast up to `big` without changing big.
inline bool broadcastable_to(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) {
    for (std::size_t i = 0; i + big.size() < small.size(); ++i)
      if (small[i] != 1) return false;
  }
  try {
    return broadcast_shape(small, big) == big;
  } catch (const ArgumentError&) {
    return false;
  }
}

template <class T>
Tensor<T> sum_to_value(const Tensor<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  if (!broadcastable_to(target, x.shape())) {
    throw ArgumentError("sum_to: " + shape_str(x.shape()) + " cannot reduce to " + shape_str(target));
  }
  Tensor<T> out(target);
  const T* px = x.data();
  T* po = out.data();
  for_each_broadcast(x.shape(), target, x.shape(),
                     [&](std::int64_t, std::int64_t it, std::int64_t ix) { po[it] += px[ix]; });
  return out;
}

template <class T>
Tensor<T> expand_value(const Tensor<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  if (!broadcastable_to(x.shape(), target)) {
    throw ArgumentError("expand: " + shape_str(x.shape()) + " cannot expand to " + shape_str(target));
  }
  Tensor<T> out(target);
  const T* px = x.data();
  T* po = out.data();
  for_each_broadcast(target, x.shape(), target,
                     [&](std::int64_t o, std::int64_t ix, std::int64_t) { po[o] = px[ix]; });
  return out;
}

}  // namespace detail

template <class T>
Var<T> expand(const Var<T>& x, const Shape& target);

// Sums broadcast axes away so the result has shape `target`.
template <class T>
Var<T> sum_to(const Var<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  Shape in_shape = x.shape();
  return make_result<T>(
      detail::sum_to_value(x.value(), target), {x},
      [in_shape](const Var<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{expand(g, in_shape)};
      },
      "sum_to");
}

template <class T>
Var<T> expand(const Var<T>& x, const Shape& target) {
  if (x.shape() == target) return x;
  Shape in_shape = x.shape();
  return make_result<T>(
      detail::expand_value(x.value(), target), {x},
      [in_shape](const Var<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{sum_to(g, in_shape)};
      },
      "expand");
}

template <class T>
Var<T> neg(const Var<T>& x);
template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return make_result<T>(
      detail::broadcast_binary(a.value(), b.value(), [](T x, T y) { return x + y; }), {a, b},
      [sa = a.shape(), sb = b.shape()](const Var<T>&, const Var<T>& g, const std::vector<bool>& needs) {
        std::vector<Var<T>> r(2);
        if (needs[0]) r[0] = sum_to(g, sa);
        if (needs[1]) r[1] = sum_to(g, sb);
        return r;
      },
      "add");
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return make_result<T>(
      detail::broadcast_binary(a.value(), b.value(), [](T x, T y) { return x - y; }), {a, b},
      [sa = a.shape(), sb = b.shape()](const Var<T>&, const Var<T>& g, const std::vector<bool>& needs) {
        std::vector<Var<T>> r(2);
        if (needs[0]) r[0] = sum_to(g, sa);
        if (needs[1]) r[1] = sum_to(neg(g), sb);
        return r;
      },
      "sub");
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return make_result<T>(
      detail::broadcast_binary(a.value(), b.value(), [](T x, T y) { return x * y; }), {a, b},
      [a, b](const Var<T>&, const Var<T>& g, const std::vector<bool>& needs) {
        std::vector<Var<T>> r(2);
        if (needs[0]) r[0] = sum_to(mul(g, b), a.shape());
        if (needs[1]) r[1] = sum_to(mul(g, a), b.shape());
        return r;
      },
      "mul");
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  return make_result<T>(
      detail::broadcast_binary(a.value(), b.value(), [](T x, T y) { return x / y; }), {a, b},
      [a, b](const Var<T>& out, const Var<T>& g, const std::vector<bool>& needs) {
        std::vector<Var<T>> r(2);
        const Var<T> gb = div(g, b);
        if (needs[0]) r[0] = sum_to(gb, a.shape());
        if (needs[1]) r[1] = sum_to(neg(mul(gb, out)), b.shape());
        return r;
      },
      "div");
}

// x * c for a compile-time-constant scalar c.
template <class T>
Var<T> scale(const Var<T>& x, T c) {
  return make_result<T>(
      detail::map_unary(x.value(), [c](T v) { return v * c; }), {x},
      [c](const Var<T>&, const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{scale(g, c)}; },
      "scale");
}

template <class T>
Var<T> neg(const Var<T>& x) {
  return scale(x, T(-1));
}

template <class T>
Var<T> add_scalar(const Var<T>& x, T c) {
  return make_result<T>(
      detail::map_unary(x.value(), [c](T v) { return v + c; }), {x},
      [](const Var<T>&, const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{g}; },
      "add_scalar");
}

template <class T>
Var<T> exp(const Var<T>& x) {
  return make_result<T>(
      detail::map_unary(x.value(), [](T v) { return std::exp(v); }), {x},
      [](const Var<T>& out, const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{mul(g, out)}; },
      "exp");
}

template <class T>
Var<T> log(const Var<T>& x) {
  return make_result<T>(
      detail::map_unary(x.value(), [](T v) { return std::log(v); }), {x},
      [x](const Var<T>&, const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{div(g, x)}; },
      "log");
}

template <class T>
Var<T> square(const Var<T>& x) {
  return make_result<T>(
      detail::map_unary(x.value(), [](T v) { return v * v; }), {x},
      [x](const Var<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{mul(g, scale(x, T(2)))};
      },
      "square");
}

template <class T>
Var<T> sqrt(const Var<T>& x) {
  return make_result<T>(
      detail::map_unary(x.value(), [](T v) { return std::sqrt(v); }), {x},
      [](const Var<T>& out, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{div(scale(g, T(0.5)), out)};
      },
      "sqrt");
}

template <class T>
Var<T> rsqrt(const Var<T>& x) {
  return make_result<T>(
      detail::map_unary(x.value(), [](T v) { return T(1) / std::sqrt(v); }), {x},
      [](const Var<T>& out, const Var<T>& g, const std::vector<bool>&) {
        // d/dx x^{-1/2} = -1/2 x^{-3/2} = -1/2 out^3
        return std::vector<Var<T>>{mul(g, scale(mul(out, square(out)), T(-0.5)))};
      },
      "rsqrt");
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
  return make_result<T>(
      detail::map_unary(x.value(),
                        [](T v) { return v >= 0 ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v)); }),
      {x},
      [](const Var<T>& out, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{mul(g, mul(out, add_scalar(neg(out), T(1))))};
      },
      "sigmoid");
}

// log(1 + e^x), evaluated without overflow.
template <class T>
Var<T> softplus(const Var<T>& x) {
  return make_result<T>(
      detail::map_unary(x.value(), [](T v) { return std::max(v, T(0)) + std::log1p(std::exp(-std::abs(v))); }),
      {x},
      [x](const Var<T>&, const Var<T>& g, const std::vector<bool>&) { return std::vector<Var<T>>{mul(g, sigmoid(x))}; },
      "softplus");
}

// gain * (x >= 0 ? x : slope * x). The derivative mask is a constant, so the
// second derivative is zero almost everywhere.
template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope = T(0.2), T gain = T(1)) {
  return make_result<T>(
      detail::map_unary(x.value(), [slope, gain](T v) { return gain * (v >= 0 ? v : slope * v); }), {x},
      [x, slope, gain](const Var<T>&, const Var<T>& g, const std::vector<bool>&) {
        Var<T> mask = constant(detail::map_unary(x.value(), [slope, gain](T v) { return v >= 0 ? gain : slope * gain; }));
        return std::vector<Var<T>>{mul(g, mask)};
      },
      "leaky_relu");
}

template <class T>
Var<T> reshape(const Var<T>& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  Shape in_shape = x.shape();
  return make_result<T>(
      x.value().reshaped(shape), {x},
      [in_shape](const Var<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{reshape(g, in_shape)};
      },
      "reshape");
}

template <class T>
Var<T> sum(const Var<T>& x) {
  return sum_to(x, Shape{});
}

template <class T>
Var<T> mean(const Var<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.size()));
}

// Sum over `axis`, keeping it with extent 1.
template <class T>
Var<T> sum_axis(const Var<T>& x, int axis) {
  Shape s = x.shape();
  s.at(static_cast<std::size_t>(axis < 0 ? static_cast<int>(s.size()) + axis : axis)) = 1;
  return sum_to(x, s);
}

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapMat = Eigen::Map<RowMat<T>>;
template <class T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <class T>
Tensor<T> matmul_value(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb) {
  if (a.rank() != 2 || b.rank() != 2) throw ArgumentError("matmul expects rank-2 operands");
  CMapMat<T> A(a.data(), a.dim(0), a.dim(1));
  CMapMat<T> B(b.data(), b.dim(0), b.dim(1));
  const auto m = ta ? a.dim(1) : a.dim(0);
  const auto ka = ta ? a.dim(0) : a.dim(1);
  const auto kb = tb ? b.dim(1) : b.dim(0);
  const auto n = tb ? b.dim(0) : b.dim(1);
  if (ka != kb) {
    throw ArgumentError("matmul inner dimension mismatch: " + shape_str(a.shape()) + (ta ? "^T" : "") + " x " +
                        shape_str(b.shape()) + (tb ? "^T" : ""));
  }
  Tensor<T> out({m, n});
  MapMat<T> C(out.data(), m, n);
  if (!ta && !tb) C.noalias() = A * B;
  else if (ta && !tb) C.noalias() = A.transpose() * B;
  else if (!ta && tb) C.noalias() = A * B.transpose();
  else C.noalias() = A.transpose() * B.transpose();
  return out;
}

}  // namespace detail

// op(a) * op(b) where op transposes when the flag is set.
template <class T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool ta = false, bool tb = false) {
  return make_result<T>(
      detail::matmul_value(a.value(), b.value(), ta, tb), {a, b},
      [a, b, ta, tb](const Var<T>&, const Var<T>& g, const std::vector<bool>& needs) {
        std::vector<Var<T>> r(2);
        if (needs[0]) r[0] = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
        if (needs[1]) r[1] = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
        return r;
      },
      "matmul");
}

namespace detail {

// Views shape as [outer, len, inner] around `axis`.
inline std::array<std::int64_t, 3> split_axis(const Shape& s, int axis) {
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) inner *= s[i];
  return {outer, s[static_cast<std::size_t>(axis)], inner};
}

}  // namespace detail

template <class T>
Var<T> embed_axis(const Var<T>& x, int axis, std::int64_t index, std::int64_t length);

// Selects one index along `axis`, dropping that axis.
template <class T>
Var<T> select(const Var<T>& x, int axis, std::int64_t index) {
  const auto [outer, len, inner] = detail::split_axis(x.shape(), axis);
  if (index < 0 || index >= len) throw ArgumentError("select index out of range");
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + axis);
  Tensor<T> out(out_shape);
  const T* px = x.value().data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(px + (o * len + index) * inner, inner, out.data() + o * inner);
  return make_result<T>(
      std::move(out), {x},
      [axis, index, len](const Var<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{embed_axis(g, axis, index, len)};
      },
      "select");
}

// Inverse of select: inserts an axis of `length` with x at `index`, zeros elsewhere.
template <class T>
Var<T> embed_axis(const Var<T>& x, int axis, std::int64_t index, std::int64_t length) {
  Shape out_shape = x.shape();
  out_shape.insert(out_shape.begin() + axis, length);
  const auto [outer, len, inner] = detail::split_axis(out_shape, axis);
  Tensor<T> out(out_shape);
  const T* px = x.value().data();
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(px + o * inner, inner, out.data() + (o * len + index) * inner);
  return make_result<T>(
      std::move(out), {x},
      [axis, index](const Var<T>&, const Var<T>& g, const std::vector<bool>&) {
        return std::vector<Var<T>>{select(g, axis, index)};
      },
      "embed_axis");
}

// Operator sugar for readability in model code.
template <class T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <class T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <class T>
Var<T> operator/(const Var<T>& a, const Var<T>& b) { return div(a, b); }
template <class T>
Var<T> operator*(const Var<T>& a, T c) { return scale(a, c); }
template <class T>
Var<T> operator*(T c, const Var<T>& a) { return scale(a, c); }
template <class T>
Var<T> operator+(const Var<T>& a, T c) { return add_scalar(a, c); }
template <class T>
Var<T> operator-(const Var<T>& a) { return neg(a); }

}  // namespace blendlab::ag

#endif  // BLENDLAB_OPS_HPP_
