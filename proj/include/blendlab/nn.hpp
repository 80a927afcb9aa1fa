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

// Building blocks shared by every network: named parameter lists,
// equalized-learning-rate layers, and the Adam optimizer.

#ifndef BLENDLAB_NN_HPP_
#define BLENDLAB_NN_HPP_

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "blendlab/conv.hpp"
#include "blendlab/rng.hpp"

namespace blendlab::nn {

using ag::Var;

template <class T>
using ParamList = std::vector<std::pair<std::string, Var<T>>>;

template <class T>
std::vector<Var<T>> vars_of(const ParamList<T>& params) {
  std::vector<Var<T>> out;
  out.reserve(params.size());
  for (const auto& [name, v] : params) out.push_back(v);
  return out;
}

template <class T>
void append(ParamList<T>& dst, const ParamList<T>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

// FNV-1a over names, shapes and raw bytes; used to prove parameters froze.
template <class T>
std::uint64_t params_hash(const ParamList<T>& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& [name, v] : params) {
    mix(name.data(), name.size());
    for (auto d : v.shape()) mix(&d, sizeof(d));
    mix(v.value().data(), sizeof(T) * static_cast<std::size_t>(v.size()));
  }
  return h;
}

template <class T>
Var<T> fused_lrelu(const Var<T>& x) {
  return ag::leaky_relu(x, T(0.2), static_cast<T>(std::sqrt(2.0)));
}

// Fully connected layer with runtime weight scaling (equalized learning
// rate). Weights are stored as N(0, 1/lr_mul^2) and scaled by
// lr_mul / sqrt(fan_in) on every use.
template <class T>
class EqualLinear {
 public:
  EqualLinear() = default;
  EqualLinear(std::int64_t in, std::int64_t out, Rng& rng, bool activate = false, T bias_init = T(0),
              T lr_mul = T(1))
      : in_(in), out_(out), activate_(activate), lr_mul_(lr_mul),
        weight_(ag::parameter(rng.normal_tensor<T>({out, in}, T(1) / lr_mul))),
        bias_(ag::parameter(Tensor<T>({out}, bias_init / lr_mul))) {}

  // x: [N, in] -> [N, out]
  Var<T> operator()(const Var<T>& x) const {
    if (x.shape().size() != 2 || x.dim(1) != in_) {
      throw ArgumentError("EqualLinear expects [N, " + std::to_string(in_) + "], got " + shape_str(x.shape()));
    }
    const T scale = lr_mul_ / static_cast<T>(std::sqrt(static_cast<double>(in_)));
    auto y = ag::scale(ag::matmul(x, weight_, false, true), scale);
    y = ag::add(y, ag::scale(bias_, lr_mul_));
    return activate_ ? fused_lrelu(y) : y;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.emplace_back(prefix + ".weight", weight_);
    out.emplace_back(prefix + ".bias", bias_);
  }

  std::int64_t in_features() const { return in_; }
  std::int64_t out_features() const { return out_; }
  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }

 private:
  std::int64_t in_ = 0, out_ = 0;
  bool activate_ = false;
  T lr_mul_ = T(1);
  Var<T> weight_, bias_;
};

// Stack of EqualLinear layers; every layer but the last is activated unless
// `activate_last` is set.
template <class T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<std::int64_t>& widths, Rng& rng, bool activate_last = false, T lr_mul = T(1)) {
    if (widths.size() < 2) throw ArgumentError("Mlp needs at least input and output widths");
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
      const bool act = i + 2 < widths.size() || activate_last;
      layers_.emplace_back(widths[i], widths[i + 1], rng, act, T(0), lr_mul);
    }
  }

  Var<T> operator()(Var<T> x) const {
    for (const auto& l : layers_) x = l(x);
    return x;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + "." + std::to_string(i), out);
  }

  std::size_t depth() const { return layers_.size(); }
  std::int64_t in_features() const { return layers_.front().in_features(); }
  std::int64_t out_features() const { return layers_.back().out_features(); }

 private:
  std::vector<EqualLinear<T>> layers_;
};

// Same-padded convolution with equalized learning rate, optional bias and
// fused leaky activation.
template <class T>
class EqualConv2d {
 public:
  EqualConv2d() = default;
  EqualConv2d(std::int64_t in, std::int64_t out, std::int64_t kernel, Rng& rng, bool bias = true,
              bool activate = false)
      : in_(in), kernel_(kernel), activate_(activate), has_bias_(bias),
        weight_(ag::parameter(rng.normal_tensor<T>({out, in, kernel, kernel}))) {
    if (bias) bias_ = ag::parameter(Tensor<T>::zeros({1, out, 1, 1}));
  }

  Var<T> operator()(const Var<T>& x) const {
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(in_ * kernel_ * kernel_)));
    auto y = ag::scale(ag::conv2d(x, weight_), scale);
    if (has_bias_) y = ag::add(y, bias_);
    return activate_ ? fused_lrelu(y) : y;
  }

  void collect(const std::string& prefix, ParamList<T>& out) const {
    out.emplace_back(prefix + ".weight", weight_);
    if (has_bias_) out.emplace_back(prefix + ".bias", bias_);
  }

 private:
  std::int64_t in_ = 0, kernel_ = 1;
  bool activate_ = false, has_bias_ = true;
  Var<T> weight_, bias_;
};

struct AdamConfig {
  double lr = 0.002;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
};

// Adam with per-parameter moments keyed by parameter name, so the state can
// be checkpointed alongside the weights.
template <class T>
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  void set_config(AdamConfig c) { config_ = c; }

  void step(ParamList<T>& params, const std::vector<Var<T>>& grads) {
    if (params.size() != grads.size()) throw ArgumentError("Adam::step: params/grads size mismatch");
    ++steps_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
    const T lr = static_cast<T>(config_.lr);
    const T b1 = static_cast<T>(config_.beta1), b2 = static_cast<T>(config_.beta2);
    const T eps = static_cast<T>(config_.eps);
    const T c1 = static_cast<T>(bc1), c2 = static_cast<T>(std::sqrt(bc2));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& [name, p] = params[k];
      const Tensor<T>& g = grads[k].value();
      auto& st = state_[name];
      if (st.m.shape() != p.shape()) {
        st.m = Tensor<T>::zeros(p.shape());
        st.v = Tensor<T>::zeros(p.shape());
      }
      if (g.shape() != p.shape()) throw ArgumentError("Adam::step: gradient shape mismatch for " + name);
      T* pv = p.mutable_value().data();
      T* m = st.m.data();
      T* v = st.v.data();
      const T* gv = g.data();
      for (std::int64_t i = 0; i < g.size(); ++i) {
        m[i] = b1 * m[i] + (T(1) - b1) * gv[i];
        v[i] = b2 * v[i] + (T(1) - b2) * gv[i] * gv[i];
        const T mhat = m[i] / c1;
        pv[i] -= lr * mhat / (std::sqrt(v[i]) / c2 + eps);
      }
    }
  }

  struct Moments {
    Tensor<T> m, v;
  };
  std::int64_t steps() const { return steps_; }
  void set_steps(std::int64_t s) { steps_ = s; }
  const std::map<std::string, Moments>& state() const { return state_; }
  std::map<std::string, Moments>& state() { return state_; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace blendlab::nn

#endif  // BLENDLAB_NN_HPP_
