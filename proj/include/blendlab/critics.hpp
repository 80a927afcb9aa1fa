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

// Residual downsampling critics (plain and style-projection variants) and the
// FIFO queue of style embeddings used as negatives.

#ifndef BLENDLAB_CRITICS_HPP_
#define BLENDLAB_CRITICS_HPP_

#include <deque>
#include <string>
#include <vector>

#include "blendlab/nn.hpp"

namespace blendlab {

struct CriticConfig {
  std::int64_t resolution = 64;
  std::int64_t channel_base = 512;  // channels(r) = min(channel_max, channel_base / r)
  std::int64_t channel_max = 64;
  std::int64_t feature_dim = 512;   // width of the trunk output phi(x)

  std::int64_t channels(std::int64_t res) const {
    return std::max<std::int64_t>(1, std::min(channel_max, channel_base / res));
  }
  void validate() const {
    if (resolution < 8 || (resolution & (resolution - 1))) throw ConfigError("critic resolution must be a power of two >= 8");
    if (channel_base < 1 || channel_max < 1 || feature_dim < 1) throw ConfigError("critic widths must be positive");
  }
};

// conv3x3 -> (avgpool, conv3x3), skip = conv1x1(avgpool(x)); sum / sqrt(2).
template <class T>
class ResBlockDown {
 public:
  ResBlockDown() = default;
  ResBlockDown(std::int64_t in, std::int64_t out, Rng& rng)
      : conv1_(in, in, 3, rng, true, true), conv2_(in, out, 3, rng, true, true), skip_(in, out, 1, rng, false, false) {}

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    auto h = conv2_(ag::avg_pool2x(conv1_(x)));
    auto s = skip_(ag::avg_pool2x(x));
    return ag::scale(ag::add(h, s), static_cast<T>(1.0 / std::sqrt(2.0)));
  }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const {
    conv1_.collect(prefix + ".conv1", out);
    conv2_.collect(prefix + ".conv2", out);
    skip_.collect(prefix + ".skip", out);
  }

 private:
  nn::EqualConv2d<T> conv1_, conv2_, skip_;
};

// Shared residual trunk: images -> feature vector phi(x) of width feature_dim.
template <class T>
class CriticTrunk {
 public:
  CriticTrunk() = default;
  CriticTrunk(CriticConfig config, Rng& rng) : config_(config) {
    config_.validate();
    from_rgb_ = nn::EqualConv2d<T>(3, config_.channels(config_.resolution), 1, rng, true, true);
    for (std::int64_t r = config_.resolution; r > 4; r /= 2)
      blocks_.emplace_back(config_.channels(r), config_.channels(r / 2), rng);
    const std::int64_t c4 = config_.channels(4);
    final_conv_ = nn::EqualConv2d<T>(c4, c4, 3, rng, true, true);
    final_linear_ = nn::EqualLinear<T>(c4 * 16, config_.feature_dim, rng, true);
  }

  const CriticConfig& config() const { return config_; }

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    if (x.shape().size() != 4 || x.dim(1) != 3 || x.dim(2) != config_.resolution || x.dim(3) != config_.resolution) {
      throw ArgumentError("critic expects [B, 3, " + std::to_string(config_.resolution) + ", " +
                          std::to_string(config_.resolution) + "], got " + shape_str(x.shape()));
    }
    auto h = from_rgb_(x);
    for (const auto& b : blocks_) h = b(h);
    h = final_conv_(h);
    return final_linear_(ag::reshape(h, {x.dim(0), h.size() / x.dim(0)}));
  }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const {
    from_rgb_.collect(prefix + ".from_rgb", out);
    for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(prefix + ".block" + std::to_string(i), out);
    final_conv_.collect(prefix + ".final_conv", out);
    final_linear_.collect(prefix + ".final_linear", out);
  }

 private:
  CriticConfig config_;
  nn::EqualConv2d<T> from_rgb_, final_conv_;
  std::vector<ResBlockDown<T>> blocks_;
  nn::EqualLinear<T> final_linear_;
};

// Unconditional critic: one logit per image, shape [B].
template <class T>
class ConvCritic {
 public:
  ConvCritic() = default;
  ConvCritic(CriticConfig config, Rng& rng) : trunk_(config, rng), head_(config.feature_dim, 1, rng) {}

  ag::Var<T> operator()(const ag::Var<T>& x) const {
    auto y = head_(trunk_(x));
    return ag::reshape(y, {y.dim(0)});
  }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const {
    trunk_.collect(prefix + ".trunk", out);
    head_.collect(prefix + ".head", out);
  }
  nn::ParamList<T> parameters(const std::string& prefix) const {
    nn::ParamList<T> p;
    collect(prefix, p);
    return p;
  }

 private:
  CriticTrunk<T> trunk_;
  nn::EqualLinear<T> head_;
};

// score(x, z) = psi(phi(x)) + z^T V phi(x), with V stored unscaled and used
// as V / sqrt(style_dim).
template <class T>
class ProjectionCritic {
 public:
  ProjectionCritic() = default;
  ProjectionCritic(CriticConfig config, std::int64_t style_dim, Rng& rng)
      : style_dim_(style_dim), trunk_(config, rng), psi_(config.feature_dim, 1, rng),
        v_(ag::parameter(rng.normal_tensor<T>({style_dim, config.feature_dim}))) {}

  ag::Var<T> features(const ag::Var<T>& x) const { return trunk_(x); }
  ag::Var<T> unconditional(const ag::Var<T>& phi) const {
    auto y = psi_(phi);
    return ag::reshape(y, {y.dim(0)});
  }

  ag::Var<T> operator()(const ag::Var<T>& x, const ag::Var<T>& z) const {
    if (z.shape().size() != 2 || z.dim(1) != style_dim_ || z.dim(0) != x.dim(0)) {
      throw ArgumentError("projection critic expects z of shape [" + std::to_string(x.dim(0)) + ", " +
                          std::to_string(style_dim_) + "], got " + shape_str(z.shape()));
    }
    auto phi = features(x);
    auto zv = ag::scale(ag::matmul(z, v_), v_scale());  // [B, F]
    return ag::add(unconditional(phi), ag::reshape(ag::sum_axis(ag::mul(zv, phi), 1), {x.dim(0)}));
  }

  T v_scale() const { return T(1) / static_cast<T>(std::sqrt(static_cast<double>(style_dim_))); }
  ag::Var<T>& v() { return v_; }
  std::int64_t style_dim() const { return style_dim_; }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const {
    trunk_.collect(prefix + ".trunk", out);
    psi_.collect(prefix + ".psi", out);
    out.emplace_back(prefix + ".v", v_);
  }
  nn::ParamList<T> parameters(const std::string& prefix) const {
    nn::ParamList<T> p;
    collect(prefix, p);
    return p;
  }

 private:
  std::int64_t style_dim_ = 0;
  CriticTrunk<T> trunk_;
  nn::EqualLinear<T> psi_;
  ag::Var<T> v_;
};

// Ring buffer of style embeddings with FIFO eviction.
template <class T>
class EmbeddingQueue {
 public:
  explicit EmbeddingQueue(std::size_t capacity = 1024) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("queue capacity must be positive");
  }

  void push(const std::vector<T>& z) {
    if (!items_.empty() && z.size() != items_.front().size()) throw ArgumentError("queue: embedding width changed");
    if (items_.size() == capacity_) items_.pop_front();
    items_.push_back(z);
  }

  // Pushes every row of a [B, D] tensor in order.
  void push_rows(const Tensor<T>& z) {
    const std::int64_t d = z.dim(1);
    for (std::int64_t i = 0; i < z.dim(0); ++i) push(std::vector<T>(z.data() + i * d, z.data() + (i + 1) * d));
  }

  // Uniform over stored entries; redraws up to `retries` times while the
  // draw equals `exclude` bitwise.
  const std::vector<T>& sample(Rng& rng, const std::vector<T>* exclude = nullptr, int retries = 8) const {
    if (items_.empty()) throw StateError("sampling from an empty embedding queue");
    const std::vector<T>* pick = nullptr;
    for (int attempt = 0; attempt <= retries; ++attempt) {
      pick = &items_[static_cast<std::size_t>(rng.below(items_.size()))];
      if (!exclude || pick->size() != exclude->size() ||
          std::memcmp(pick->data(), exclude->data(), sizeof(T) * pick->size()) != 0) {
        break;
      }
    }
    return *pick;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const std::deque<std::vector<T>>& items() const { return items_; }
  void clear() { items_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<std::vector<T>> items_;
};

}  // namespace blendlab

#endif  // BLENDLAB_CRITICS_HPP_
