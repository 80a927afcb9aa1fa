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

// Mapping networks into W space and the weighted blending of face and style
// codes, gated per layer by an indicator mask.
//
// A WCode is a Var of shape [B, L, D]: one D-wide row per synthesis layer.

#ifndef BLENDLAB_LATENT_BLEND_HPP_
#define BLENDLAB_LATENT_BLEND_HPP_

#include <sstream>
#include <string>
#include <vector>

#include "blendlab/nn.hpp"

namespace blendlab {

// theta to use with indicator 0 for the full blend (w = alpha w_s + (1 - alpha) w_f).
inline constexpr double kFullBlendTheta = 1.0;

inline std::int64_t num_layers_for_resolution(std::int64_t resolution) {
  std::int64_t log2 = 0;
  while ((std::int64_t{1} << log2) < resolution) ++log2;
  if ((std::int64_t{1} << log2) != resolution || resolution < 8) {
    throw ConfigError("resolution must be a power of two >= 8, got " + std::to_string(resolution));
  }
  return 2 * log2 - 2;
}

struct MappingConfig {
  std::int64_t depth = 8;
  std::int64_t w_dim = 512;
  double lr_mul = 0.01;
  bool normalize_input = true;

  void validate() const {
    if (depth < 1) throw ConfigError("mapping depth must be >= 1");
    if (w_dim < 1) throw ConfigError("w_dim must be >= 1");
    if (!(lr_mul > 0)) throw ConfigError("mapping lr_mul must be positive");
  }
};

// x * rsqrt(mean(x^2) + 1e-8) per row.
template <class T>
ag::Var<T> pixel_norm(const ag::Var<T>& x) {
  const T inv_d = T(1) / static_cast<T>(x.dim(1));
  auto ms = ag::scale(ag::sum_axis(ag::square(x), 1), inv_d);
  return ag::mul(x, ag::rsqrt(ag::add_scalar(ms, T(1e-8))));
}

template <class T>
class MappingNetwork {
 public:
  MappingNetwork() = default;
  MappingNetwork(std::int64_t in_dim, MappingConfig config, Rng& rng) : in_dim_(in_dim), config_(config) {
    config_.validate();
    std::int64_t in = in_dim;
    for (std::int64_t k = 0; k < config_.depth; ++k) {
      layers_.emplace_back(in, config_.w_dim, rng, true, T(0), static_cast<T>(config_.lr_mul));
      in = config_.w_dim;
    }
  }

  // z: [B, in_dim] -> [B, D]
  ag::Var<T> operator()(const ag::Var<T>& z) const {
    if (z.shape().size() != 2 || z.dim(1) != in_dim_) {
      throw ArgumentError("mapping expects [B, " + std::to_string(in_dim_) + "], got " + shape_str(z.shape()));
    }
    ag::Var<T> x = config_.normalize_input ? pixel_norm(z) : z;
    for (const auto& l : layers_) x = l(x);
    return x;
  }

  // [B, D] broadcast to every one of the L rows.
  ag::Var<T> to_wcode(const ag::Var<T>& z, std::int64_t num_layers) const {
    auto w = (*this)(z);
    return ag::expand(ag::reshape(w, {w.dim(0), 1, w.dim(1)}), {w.dim(0), num_layers, w.dim(1)});
  }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect(prefix + "." + std::to_string(i), out);
  }

  std::int64_t in_dim() const { return in_dim_; }
  std::int64_t w_dim() const { return config_.w_dim; }

 private:
  std::int64_t in_dim_ = 0;
  MappingConfig config_;
  std::vector<nn::EqualLinear<T>> layers_;
};

// m(i; theta): 0 below row i, theta at row i, 1 above. i == L gives all zeros.
template <class T>
Tensor<T> indicator_mask(std::int64_t num_layers, std::int64_t i, double theta) {
  if (i < 0 || i > num_layers) {
    throw ArgumentError("indicator " + std::to_string(i) + " outside [0, " + std::to_string(num_layers) + "]");
  }
  if (i < num_layers && !(theta > 0.0 && (theta < 1.0 || (i == 0 && theta == 1.0)))) {
    throw ArgumentError("theta must lie in (0, 1) (or equal 1 at indicator 0)");
  }
  Tensor<T> m({num_layers});
  for (std::int64_t j = 0; j < num_layers; ++j) m[j] = j < i ? T(0) : (j == i ? static_cast<T>(theta) : T(1));
  return m;
}

// Learnable per-layer blending weights alpha = sigmoid(alpha_raw).
template <class T>
class BlendMask {
 public:
  BlendMask() = default;
  explicit BlendMask(std::int64_t num_layers) : alpha_raw_(ag::parameter(Tensor<T>::zeros({num_layers}))) {}

  std::int64_t num_layers() const { return alpha_raw_.size(); }
  ag::Var<T> alpha() const { return ag::sigmoid(alpha_raw_); }
  ag::Var<T>& alpha_raw() { return alpha_raw_; }

  // alpha_hat = alpha * m(i; theta)
  ag::Var<T> alpha_hat(std::int64_t i, double theta) const { return make_mask(i, theta, alpha()); }

  static ag::Var<T> make_mask(std::int64_t i, double theta, const ag::Var<T>& alpha) {
    return ag::mul(alpha, ag::constant(indicator_mask<T>(alpha.size(), i, theta)));
  }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const { out.emplace_back(prefix + ".alpha_raw", alpha_raw_); }

  // Three whitespace-separated lines: alpha, m, alpha_hat.
  std::string debug_text(std::int64_t i, double theta) const {
    std::ostringstream os;
    os.precision(9);
    auto line = [&os](const char* name, const Tensor<T>& v) {
      os << name;
      for (auto x : v.values()) os << ' ' << x;
      os << '\n';
    };
    ag::NoGradGuard ng;
    line("alpha", alpha().value());
    line("mask", indicator_mask<T>(num_layers(), i, theta));
    line("alpha_hat", alpha_hat(i, theta).value());
    return os.str();
  }

 private:
  ag::Var<T> alpha_raw_;
};

// w_j = a_j w_s,j + (1 - a_j) w_f,j with a_j broadcast across row j.
template <class T>
ag::Var<T> blend(const ag::Var<T>& w_s, const ag::Var<T>& w_f, const ag::Var<T>& alpha_hat) {
  if (w_s.shape() != w_f.shape() || w_s.shape().size() != 3 || alpha_hat.shape().size() != 1 ||
      alpha_hat.dim(0) != w_s.dim(1)) {
    throw ArgumentError("blend: shapes " + shape_str(w_s.shape()) + ", " + shape_str(w_f.shape()) + ", " +
                        shape_str(alpha_hat.shape()) + " do not agree");
  }
  auto a = ag::reshape(alpha_hat, {1, alpha_hat.dim(0), 1});
  auto one_minus = ag::add_scalar(ag::neg(a), T(1));
  return ag::add(ag::mul(a, w_s), ag::mul(one_minus, w_f));
}

}  // namespace blendlab

#endif  // BLENDLAB_LATENT_BLEND_HPP_
