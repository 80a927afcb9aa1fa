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

// Style encoder: frozen convolutional backbone -> per-layer Gram matrices ->
// MLP predictor (style embedding) -> MLP projection head (contrastive space).
// Trained with NT-Xent over affine-augmented positive pairs.

#ifndef BLENDLAB_STYLE_CODEC_HPP_
#define BLENDLAB_STYLE_CODEC_HPP_

#include <cmath>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "blendlab/nn.hpp"

namespace blendlab {

struct BackboneLayer {
  std::int64_t channels = 0;
  std::int64_t downsample = 1;  // spatial factor relative to the input
  int convs = 1;
};

struct BackboneConfig {
  std::vector<BackboneLayer> layers;
  std::vector<int> tap_points;  // indices into `layers`
  std::int64_t input_resolution = 64;
  bool max_pool = false;
  bool imagenet_normalize = false;

  // Small random-feature stack used by default.
  static BackboneConfig desk(std::int64_t resolution = 64) {
    BackboneConfig c;
    c.layers = {{8, 1, 1}, {16, 2, 1}, {32, 4, 1}, {32, 8, 1}, {32, 16, 1}};
    c.tap_points = {0, 1, 2, 3, 4};
    c.input_resolution = resolution;
    return c;
  }

  // VGG-19 geometry; taps mirror relu1_2, relu2_2, relu3_4, relu4_4, relu5_4.
  static BackboneConfig vgg19(std::int64_t resolution = 256) {
    BackboneConfig c;
    c.layers = {{64, 1, 2}, {128, 2, 2}, {256, 4, 4}, {512, 8, 4}, {512, 16, 4}};
    c.tap_points = {0, 1, 2, 3, 4};
    c.input_resolution = resolution;
    c.max_pool = true;
    c.imagenet_normalize = true;
    return c;
  }

  std::vector<std::int64_t> tap_channels() const {
    std::vector<std::int64_t> out;
    for (int t : tap_points) out.push_back(layers.at(static_cast<std::size_t>(t)).channels);
    return out;
  }

  std::int64_t gram_length() const {
    std::int64_t n = 0;
    for (auto c : tap_channels()) n += c * c;
    return n;
  }

  void validate() const {
    if (layers.empty() || tap_points.empty()) throw ConfigError("backbone needs layers and tap points");
    std::int64_t prev = 1;
    for (const auto& l : layers) {
      if (l.channels <= 0 || l.convs <= 0) throw ConfigError("backbone layer needs positive channels and convs");
      if (l.downsample != prev && l.downsample != 2 * prev) {
        throw ConfigError("backbone downsample factors must stay or double per layer");
      }
      prev = l.downsample;
    }
    if (input_resolution % prev != 0) throw ConfigError("input resolution not divisible by backbone downsampling");
    for (int t : tap_points)
      if (t < 0 || t >= static_cast<int>(layers.size())) throw ConfigError("tap point out of range");
  }
};

// Fixed feature extractor. Weights never change after construction or import;
// evaluation is a pure function of (weights, input).
template <class T>
class FeatureBackbone {
 public:
  FeatureBackbone() = default;
  FeatureBackbone(BackboneConfig config, Rng& rng) : config_(std::move(config)) {
    config_.validate();
    std::int64_t in = 3;
    for (std::size_t b = 0; b < config_.layers.size(); ++b) {
      for (int j = 0; j < config_.layers[b].convs; ++j) {
        const std::int64_t out = config_.layers[b].channels;
        // He-scaled random filters keep activations O(1) through the stack.
        const T std = static_cast<T>(std::sqrt(2.0 / static_cast<double>(in * 9)));
        weights_.push_back(rng.normal_tensor<T>({out, in, 3, 3}, std));
        biases_.push_back(rng.normal_tensor<T>({1, out, 1, 1}, T(0.1)));
        in = out;
      }
    }
  }

  const BackboneConfig& config() const { return config_; }
  bool frozen() const { return true; }

  // One feature map per tap point. images: [N, 3, R, R] in [-1, 1].
  std::vector<Tensor<T>> extract_features(const Tensor<T>& images) const {
    if (weights_.empty()) throw StateError("backbone has no weights");
    if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != config_.input_resolution ||
        images.dim(3) != config_.input_resolution) {
      throw ConfigError("backbone expects [N, 3, " + std::to_string(config_.input_resolution) + ", " +
                        std::to_string(config_.input_resolution) + "], got " + shape_str(images.shape()));
    }
    Tensor<T> x = images;
    if (config_.imagenet_normalize) normalize_imagenet(x);
    std::vector<Tensor<T>> taps;
    std::size_t conv = 0;
    std::int64_t factor = 1;
    for (std::size_t b = 0; b < config_.layers.size(); ++b) {
      const auto& layer = config_.layers[b];
      if (layer.downsample != factor) {
        x = config_.max_pool ? max_pool2x(x) : ag::detail::avg_pool2x_value(x);
        factor = layer.downsample;
      }
      for (int j = 0; j < layer.convs; ++j, ++conv) {
        x = ag::detail::conv2d_value(x, weights_[conv]);
        add_bias_relu(x, biases_[conv]);
      }
      for (int t : config_.tap_points)
        if (t == static_cast<int>(b)) taps.push_back(x);
    }
    return taps;
  }

  // Named tensors in import/export order: block{b}.conv{j}.{weight,bias}.
  std::vector<std::pair<std::string, Tensor<T>*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    std::size_t conv = 0;
    for (std::size_t b = 0; b < config_.layers.size(); ++b) {
      for (int j = 0; j < config_.layers[b].convs; ++j, ++conv) {
        const std::string p = "backbone.block" + std::to_string(b) + ".conv" + std::to_string(j);
        out.emplace_back(p + ".weight", &weights_[conv]);
        out.emplace_back(p + ".bias", &biases_[conv]);
      }
    }
    return out;
  }

  std::uint64_t hash() const {
    nn::ParamList<T> list;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      list.emplace_back("w" + std::to_string(i), ag::constant(weights_[i]));
      list.emplace_back("b" + std::to_string(i), ag::constant(biases_[i]));
    }
    return nn::params_hash(list);
  }

 private:
  static void normalize_imagenet(Tensor<T>& x) {
    constexpr double mean[3] = {0.485, 0.456, 0.406};
    constexpr double stdv[3] = {0.229, 0.224, 0.225};
    const std::int64_t hw = x.dim(2) * x.dim(3);
    for (std::int64_t n = 0; n < x.dim(0); ++n)
      for (int c = 0; c < 3; ++c) {
        T* p = x.data() + (n * 3 + c) * hw;
        for (std::int64_t i = 0; i < hw; ++i)
          p[i] = static_cast<T>(((static_cast<double>(p[i]) + 1.0) * 0.5 - mean[c]) / stdv[c]);
      }
  }

  static void add_bias_relu(Tensor<T>& x, const Tensor<T>& bias) {
    const std::int64_t hw = x.dim(2) * x.dim(3);
    for (std::int64_t n = 0; n < x.dim(0); ++n)
      for (std::int64_t c = 0; c < x.dim(1); ++c) {
        T* p = x.data() + (n * x.dim(1) + c) * hw;
        const T b = bias[c];
        for (std::int64_t i = 0; i < hw; ++i) p[i] = std::max(p[i] + b, T(0));
      }
  }

  static Tensor<T> max_pool2x(const Tensor<T>& x) {
    const std::int64_t h = x.dim(2) / 2, w = x.dim(3) / 2;
    Tensor<T> out({x.dim(0), x.dim(1), h, w});
    for (std::int64_t p = 0; p < x.dim(0) * x.dim(1); ++p) {
      const T* s = x.data() + p * 4 * h * w;
      T* d = out.data() + p * h * w;
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t xx = 0; xx < w; ++xx) {
          const T* r0 = s + 2 * y * 2 * w + 2 * xx;
          const T* r1 = r0 + 2 * w;
          d[y * w + xx] = std::max({r0[0], r0[1], r1[0], r1[1]});
        }
    }
    return out;
  }

  BackboneConfig config_;
  std::vector<Tensor<T>> weights_, biases_;
};

// Batched, flattened Gram matrices: values is [N, sum_k c_k^2].
template <class T>
struct GramDescriptor {
  Tensor<T> values;
  std::vector<std::int64_t> layer_channel_counts;
};

// Per layer G = F F^T / (c h w) with F the c x (h w) flattening; blocks are
// row-major flattened and concatenated in tap order.
template <class T>
GramDescriptor<T> gram_concat(const std::vector<Tensor<T>>& features) {
  if (features.empty()) throw ArgumentError("gram_concat: empty feature list");
  const std::int64_t n = features.front().dim(0);
  GramDescriptor<T> d;
  std::int64_t total = 0;
  for (const auto& f : features) {
    if (f.rank() != 4 || f.dim(0) != n) throw ArgumentError("gram_concat: inconsistent feature maps");
    d.layer_channel_counts.push_back(f.dim(1));
    total += f.dim(1) * f.dim(1);
  }
  d.values = Tensor<T>({n, total});
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t offset = 0;
    for (const auto& f : features) {
      const std::int64_t c = f.dim(1), hw = f.dim(2) * f.dim(3);
      ag::detail::CMapMat<T> F(f.data() + i * c * hw, c, hw);
      ag::detail::MapMat<T> G(d.values.data() + i * total + offset, c, c);
      G.noalias() = F * F.transpose();
      G *= T(1) / static_cast<T>(c * hw);
      offset += c * c;
    }
  }
  return d;
}

struct AugmentConfig {
  double rotation_degrees = 15.0;    // uniform in [-r, r]
  double translation_fraction = 0.1;  // uniform in [-t, t] of the side length
  double scale_min = 0.8, scale_max = 1.2;
  double flip_probability = 0.5;

  static AugmentConfig identity() { return {0.0, 0.0, 1.0, 1.0, 0.0}; }

  void validate() const {
    if (rotation_degrees < 0 || translation_fraction < 0 || scale_min <= 0 || scale_max < scale_min ||
        flip_probability < 0 || flip_probability > 1) {
      throw ConfigError("invalid augmentation ranges");
    }
  }
};

namespace detail {

inline double reflect_coord(double u, std::int64_t n) {
  if (n == 1) return 0.0;
  const double period = 2.0 * static_cast<double>(n - 1);
  u = std::fmod(std::abs(u), period);
  return u > static_cast<double>(n - 1) ? period - u : u;
}

}  // namespace detail

// Random rotation / translation / scale / horizontal flip per image, with
// bilinear resampling and reflected borders. No color changes.
template <class T>
Tensor<T> affine_augment(const Tensor<T>& images, Rng& rng, const AugmentConfig& cfg) {
  cfg.validate();
  if (images.rank() != 4) throw ArgumentError("affine_augment expects NCHW");
  const std::int64_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  Tensor<T> out(images.shape());
  const double cx = static_cast<double>(w - 1) / 2.0, cy = static_cast<double>(h - 1) / 2.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double angle = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees) * std::numbers::pi / 180.0;
    const double tx = rng.uniform(-cfg.translation_fraction, cfg.translation_fraction) * static_cast<double>(w);
    const double ty = rng.uniform(-cfg.translation_fraction, cfg.translation_fraction) * static_cast<double>(h);
    const double s = rng.uniform(cfg.scale_min, cfg.scale_max);
    const bool flip = rng.uniform() < cfg.flip_probability;
    const double ca = std::cos(angle), sa = std::sin(angle);
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        // Inverse map: output -> pre-transform coordinates.
        const double dx = static_cast<double>(x) - cx - tx;
        const double dy = static_cast<double>(y) - cy - ty;
        double u = (ca * dx + sa * dy) / s + cx;
        const double v = (-sa * dx + ca * dy) / s + cy;
        if (flip) u = static_cast<double>(w - 1) - u;
        const double ur = detail::reflect_coord(u, w), vr = detail::reflect_coord(v, h);
        const auto u0 = static_cast<std::int64_t>(std::floor(ur));
        const auto v0 = static_cast<std::int64_t>(std::floor(vr));
        const std::int64_t u1 = std::min(u0 + 1, w - 1), v1 = std::min(v0 + 1, h - 1);
        const T fu = static_cast<T>(ur - static_cast<double>(u0));
        const T fv = static_cast<T>(vr - static_cast<double>(v0));
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const T* p = images.data() + (i * c + ch) * h * w;
          const T top = (T(1) - fu) * p[v0 * w + u0] + fu * p[v0 * w + u1];
          const T bot = (T(1) - fu) * p[v1 * w + u0] + fu * p[v1 * w + u1];
          out[((i * c + ch) * h + y) * w + x] = (T(1) - fv) * top + fv * bot;
        }
      }
    }
  }
  return out;
}

// NT-Xent over 2N projections. partner[i] is the index of i's positive.
// Loss is the mean over all 2N anchors of
//   -log( exp(sim(i, p(i)) / tau) / sum_{k != i} exp(sim(i, k) / tau) )
// with cosine similarity; eps is added to the norms.
template <class T>
ag::Var<T> nt_xent_loss(const ag::Var<T>& projections, const std::vector<std::int64_t>& partner, T tau,
                        T eps = T(1e-8)) {
  if (!(tau > 0)) throw ArgumentError("nt_xent_loss: temperature must be positive");
  if (projections.shape().size() != 2) throw ArgumentError("nt_xent_loss expects [2N, D] projections");
  const std::int64_t m = projections.dim(0);
  if (m < 2 || m % 2 || static_cast<std::int64_t>(partner.size()) != m) {
    throw ArgumentError("nt_xent_loss needs an even count >= 2 with one partner each");
  }
  Tensor<T> off_diag = Tensor<T>::ones({m, m});
  Tensor<T> positives = Tensor<T>::zeros({m, m});
  for (std::int64_t i = 0; i < m; ++i) {
    const std::int64_t j = partner[static_cast<std::size_t>(i)];
    if (j < 0 || j >= m || j == i || partner[static_cast<std::size_t>(j)] != i) {
      throw ArgumentError("nt_xent_loss: partner map must be a fixed-point-free involution");
    }
    off_diag[i * m + i] = T(0);
    positives[i * m + j] = T(1);
  }
  auto norms = ag::add_scalar(ag::sqrt(ag::sum_axis(ag::square(projections), 1)), eps);
  auto unit = ag::div(projections, norms);
  auto logits = ag::scale(ag::matmul(unit, unit, false, true), T(1) / tau);

  // Row max (diagonal excluded) as a constant shift for a stable log-sum-exp.
  Tensor<T> shift({m, 1});
  for (std::int64_t i = 0; i < m; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::int64_t k = 0; k < m; ++k)
      if (k != i) mx = std::max(mx, logits.value()[i * m + k]);
    shift[i] = mx;
  }
  auto shift_v = ag::constant(shift);
  auto denom = ag::sum_axis(ag::mul(ag::exp(ag::sub(logits, shift_v)), ag::constant(off_diag)), 1);
  auto lse = ag::add(ag::log(denom), shift_v);
  auto pos = ag::sum_axis(ag::mul(logits, ag::constant(positives)), 1);
  return ag::mean(ag::sub(lse, pos));
}

// Positive pairs laid out as (i, N + i).
inline std::vector<std::int64_t> paired_views(std::int64_t n) {
  std::vector<std::int64_t> partner(static_cast<std::size_t>(2 * n));
  for (std::int64_t i = 0; i < n; ++i) {
    partner[static_cast<std::size_t>(i)] = n + i;
    partner[static_cast<std::size_t>(n + i)] = i;
  }
  return partner;
}

struct EncoderConfig {
  BackboneConfig backbone = BackboneConfig::desk();
  std::vector<std::int64_t> predictor_hidden = {2048, 1024, 512};
  std::int64_t style_dim = 512;
  std::vector<std::int64_t> projection_hidden = {512};
  std::int64_t projection_dim = 128;
  double temperature = 0.1;
  AugmentConfig augment;
  bool direct_gram = false;

  int predictor_depth() const { return static_cast<int>(predictor_hidden.size()) + 1; }
  int projection_depth() const { return static_cast<int>(projection_hidden.size()) + 1; }

  void validate() const {
    backbone.validate();
    augment.validate();
    if (!(temperature > 0)) throw ConfigError("temperature must be positive");
    if (predictor_depth() != 4) throw ConfigError("predictor must have 4 layers");
    if (projection_depth() != 2) throw ConfigError("projection head must have 2 layers");
    if (style_dim <= 0 || projection_dim <= 0) throw ConfigError("embedding dimensions must be positive");
  }
};

template <class T>
class StyleEncoder {
 public:
  explicit StyleEncoder(EncoderConfig config = {}) : config_(std::move(config)) { config_.validate(); }

  // Random weights for the backbone and both MLPs.
  void initialize(Rng& rng) {
    Rng backbone_rng = rng.fork(0xB4C3B0E);
    backbone_ = FeatureBackbone<T>(config_.backbone, backbone_rng);
    std::vector<std::int64_t> pw{config_.backbone.gram_length()};
    pw.insert(pw.end(), config_.predictor_hidden.begin(), config_.predictor_hidden.end());
    pw.push_back(config_.style_dim);
    predictor_ = nn::Mlp<T>(pw, rng);
    std::vector<std::int64_t> hw{config_.style_dim};
    hw.insert(hw.end(), config_.projection_hidden.begin(), config_.projection_hidden.end());
    hw.push_back(config_.projection_dim);
    projection_ = nn::Mlp<T>(hw, rng);
    loaded_ = true;
  }

  bool loaded() const { return loaded_; }
  void mark_loaded() { loaded_ = true; }
  const EncoderConfig& config() const { return config_; }
  EncoderConfig& mutable_config() { return config_; }
  FeatureBackbone<T>& backbone() { return backbone_; }
  const FeatureBackbone<T>& backbone() const { return backbone_; }

  // Dimension of the code handed to the generator.
  std::int64_t style_dim() const {
    return config_.direct_gram ? config_.backbone.gram_length() : config_.style_dim;
  }

  Tensor<T> descriptor(const Tensor<T>& images) const {
    require_loaded();
    return gram_concat(backbone_.extract_features(images)).values;
  }

  // Predictor over precomputed descriptors; records the graph.
  ag::Var<T> embed(const ag::Var<T>& descriptors) const {
    require_loaded();
    if (desc_shift_.size() == 0) return predictor_(descriptors);
    return predictor_(ag::mul(ag::sub(descriptors, ag::constant(desc_shift_)), ag::constant(desc_gain_)));
  }

  // Freezes a per-dimension standardization of descriptors (rows of `d`)
  // applied before the predictor.
  void fit_descriptor_normalization(const Tensor<T>& d) {
    const std::int64_t n = d.dim(0), g = d.dim(1);
    if (n < 2) throw ArgumentError("descriptor normalization needs at least 2 samples");
    desc_shift_ = Tensor<T>::zeros({1, g});
    desc_gain_ = Tensor<T>::zeros({1, g});
    for (std::int64_t k = 0; k < g; ++k) {
      double s = 0, ss = 0;
      for (std::int64_t i = 0; i < n; ++i) s += d[i * g + k];
      const double mu = s / static_cast<double>(n);
      for (std::int64_t i = 0; i < n; ++i) ss += (d[i * g + k] - mu) * (d[i * g + k] - mu);
      desc_shift_[k] = static_cast<T>(mu);
      desc_gain_[k] = static_cast<T>(1.0 / (std::sqrt(ss / static_cast<double>(n - 1)) + 1e-6));
    }
  }
  bool has_descriptor_normalization() const { return desc_shift_.size() > 0; }
  Tensor<T>& descriptor_shift() { return desc_shift_; }
  Tensor<T>& descriptor_gain() { return desc_gain_; }

  ag::Var<T> project(const ag::Var<T>& embeddings) const {
    require_loaded();
    if (embeddings.shape().size() != 2 || embeddings.dim(1) != config_.style_dim) {
      throw ArgumentError("project expects [B, " + std::to_string(config_.style_dim) + "], got " +
                          shape_str(embeddings.shape()));
    }
    return projection_(embeddings);
  }

  // Inference path: no augmentation, no graph. Direct-Gram mode returns the
  // raw descriptor.
  Tensor<T> encode(const Tensor<T>& images) const {
    ag::NoGradGuard ng;
    Tensor<T> d = descriptor(images);
    if (config_.direct_gram) return d;
    return embed(ag::constant(std::move(d))).value();
  }

  nn::ParamList<T> parameters() const {
    nn::ParamList<T> p;
    predictor_.collect("encoder.predictor", p);
    projection_.collect("encoder.projection", p);
    return p;
  }

  // Covers every weight that affects encode(): backbone, both MLPs and the
  // descriptor standardization.
  std::uint64_t hash() const {
    auto p = parameters();
    p.emplace_back("desc_shift", ag::constant(desc_shift_));
    p.emplace_back("desc_gain", ag::constant(desc_gain_));
    return nn::params_hash(p) ^ (backbone_.hash() * 0x9E3779B97F4A7C15ull);
  }

 private:
  void require_loaded() const {
    if (!loaded_) throw StateError("style encoder weights are not loaded");
  }

  EncoderConfig config_;
  FeatureBackbone<T> backbone_;
  nn::Mlp<T> predictor_, projection_;
  Tensor<T> desc_shift_, desc_gain_;
  bool loaded_ = false;
};

struct EncoderTrainConfig {
  std::int64_t batch_images = 32;  // N; each step sees 2N views
  std::int64_t steps = 500;
  nn::AdamConfig adam;
};

// Contrastive optimization of the two MLPs; the backbone stays fixed.
template <class T>
class EncoderTrainer {
 public:
  EncoderTrainer(StyleEncoder<T>& encoder, EncoderTrainConfig config)
      : encoder_(encoder), config_(config), adam_(config.adam) {
    if (config_.batch_images < 1) throw ConfigError("encoder batch must be >= 1");
  }

  // One optimizer step on a batch of N images; returns the NT-Xent loss.
  T step(const Tensor<T>& images, Rng& rng) {
    const std::int64_t n = images.dim(0);
    Tensor<T> views = two_views(images, rng);
    Tensor<T> desc = encoder_.descriptor(views);
    auto params = encoder_.parameters();
    auto z = encoder_.project(encoder_.embed(ag::constant(std::move(desc))));
    auto loss = nt_xent_loss(z, paired_views(n), static_cast<T>(encoder_.config().temperature));
    if (!std::isfinite(loss.item())) throw NumericalError("non-finite NT-Xent loss");
    auto grads = ag::grad(loss, nn::vars_of(params));
    adam_.step(params, grads);
    return loss.item();
  }

  // First half view A of each image, second half view B.
  Tensor<T> two_views(const Tensor<T>& images, Rng& rng) const {
    Tensor<T> a = affine_augment(images, rng, encoder_.config().augment);
    Tensor<T> b = affine_augment(images, rng, encoder_.config().augment);
    Tensor<T> views({2 * images.dim(0), images.dim(1), images.dim(2), images.dim(3)});
    std::copy(a.values().begin(), a.values().end(), views.data());
    std::copy(b.values().begin(), b.values().end(), views.data() + a.size());
    return views;
  }

  nn::Adam<T>& optimizer() { return adam_; }
  const EncoderTrainConfig& config() const { return config_; }

 private:
  StyleEncoder<T>& encoder_;
  EncoderTrainConfig config_;
  nn::Adam<T> adam_;
};

// Cosine similarity matrix rows x rows.
template <class T>
Tensor<T> cosine_similarity_matrix(const Tensor<T>& rows) {
  const std::int64_t m = rows.dim(0), d = rows.dim(1);
  Tensor<T> unit = rows;
  for (std::int64_t i = 0; i < m; ++i) {
    double s = 0;
    for (std::int64_t k = 0; k < d; ++k) s += static_cast<double>(unit[i * d + k]) * unit[i * d + k];
    const T inv = static_cast<T>(1.0 / (std::sqrt(s) + 1e-8));
    for (std::int64_t k = 0; k < d; ++k) unit[i * d + k] *= inv;
  }
  return ag::detail::matmul_value(unit, unit, false, true);
}

// Fraction of the 2N views whose nearest neighbor (cosine, self excluded)
// among the other 2N - 1 embeddings is their positive partner.
template <class T>
double positive_pair_retrieval_accuracy(const Tensor<T>& embeddings, const std::vector<std::int64_t>& partner) {
  const std::int64_t m = embeddings.dim(0);
  Tensor<T> sim = cosine_similarity_matrix(embeddings);
  std::int64_t hits = 0;
  for (std::int64_t i = 0; i < m; ++i) {
    std::int64_t best = -1;
    T best_sim = -std::numeric_limits<T>::infinity();
    for (std::int64_t k = 0; k < m; ++k) {
      if (k == i) continue;
      if (sim[i * m + k] > best_sim) {
        best_sim = sim[i * m + k];
        best = k;
      }
    }
    hits += best == partner[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(hits) / static_cast<double>(m);
}

}  // namespace blendlab

#endif  // BLENDLAB_STYLE_CODEC_HPP_
