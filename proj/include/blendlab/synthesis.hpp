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

// Style-based synthesis network (modulated/demodulated convolutions, noise
// injection, skip-summed RGB heads) and the generator that pairs it with the
// face/style mapping networks and the blending mask.

#ifndef BLENDLAB_SYNTHESIS_HPP_
#define BLENDLAB_SYNTHESIS_HPP_

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "blendlab/latent_blend.hpp"

namespace blendlab {

struct SynthesisConfig {
  std::int64_t resolution = 64;
  std::int64_t w_dim = 512;
  std::int64_t channel_base = 512;  // channels(r) = min(channel_max, channel_base / r)
  std::int64_t channel_max = 64;

  std::int64_t channels(std::int64_t res) const {
    return std::max<std::int64_t>(1, std::min(channel_max, channel_base / res));
  }
  std::int64_t num_layers() const { return num_layers_for_resolution(resolution); }
  // Resolutions of the noise-carrying convolutions, in execution order.
  std::vector<std::int64_t> conv_resolutions() const {
    std::vector<std::int64_t> out{4};
    for (std::int64_t r = 8; r <= resolution; r *= 2) {
      out.push_back(r);
      out.push_back(r);
    }
    return out;
  }

  void validate() const {
    num_layers();
    if (resolution > 1024) throw ConfigError("resolution above 1024 is not supported");
    if (w_dim < 1 || channel_base < 1 || channel_max < 1) throw ConfigError("synthesis widths must be positive");
  }
};

enum class NoiseMode { kFresh, kFixed, kZero };

// Per-convolution noise maps [B, 1, r, r].
template <class T>
struct NoiseBundle {
  NoiseMode mode = NoiseMode::kZero;
  std::vector<Tensor<T>> maps;

  static NoiseBundle random(const SynthesisConfig& c, std::int64_t batch, Rng& rng, NoiseMode mode = NoiseMode::kFresh) {
    NoiseBundle b;
    b.mode = mode;
    for (auto r : c.conv_resolutions()) b.maps.push_back(rng.normal_tensor<T>({batch, 1, r, r}));
    return b;
  }
  static NoiseBundle zeros(const SynthesisConfig& c, std::int64_t batch) {
    NoiseBundle b;
    for (auto r : c.conv_resolutions()) b.maps.push_back(Tensor<T>::zeros({batch, 1, r, r}));
    return b;
  }

  std::int64_t batch() const { return maps.empty() ? 0 : maps.front().dim(0); }

  // Rows [first, first + count) of every map.
  NoiseBundle slice(std::int64_t first, std::int64_t count) const {
    NoiseBundle b;
    b.mode = mode;
    for (const auto& m : maps) {
      const std::int64_t per = m.size() / m.dim(0);
      Tensor<T> t({count, 1, m.dim(2), m.dim(3)});
      std::copy_n(m.data() + first * per, count * per, t.data());
      b.maps.push_back(std::move(t));
    }
    return b;
  }
};

// Modulated convolution. Input channels are scaled by an affine function of
// the style row; with demodulation each output channel is renormalized to
// unit expected variance.
template <class T>
class ModulatedConv {
 public:
  ModulatedConv() = default;
  ModulatedConv(std::int64_t in, std::int64_t out, std::int64_t kernel, std::int64_t w_dim, Rng& rng, bool demodulate,
                bool upsample)
      : in_(in), out_(out), kernel_(kernel), demodulate_(demodulate), upsample_(upsample),
        weight_(ag::parameter(rng.normal_tensor<T>({out, in, kernel, kernel}))),
        affine_(w_dim, in, rng, false, T(1)) {}

  // x: [B, in, h, w], w_row: [B, D]
  ag::Var<T> operator()(const ag::Var<T>& x, const ag::Var<T>& w_row) const {
    const std::int64_t b = x.dim(0);
    auto s = affine_(w_row);  // [B, in]
    auto xm = ag::mul(x, ag::reshape(s, {b, in_, 1, 1}));
    if (upsample_) xm = ag::upsample2x(xm);
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(in_ * kernel_ * kernel_)));
    auto y = ag::scale(ag::conv2d(xm, weight_), scale);
    if (!demodulate_) return y;
    // sum_k (scale * W)^2 per (out, in)
    auto w2 = ag::reshape(
        ag::scale(ag::sum_axis(ag::reshape(ag::square(weight_), {out_, in_, kernel_ * kernel_}), 2), scale * scale),
        {out_, in_});
    auto d = ag::rsqrt(ag::add_scalar(ag::matmul(ag::square(s), w2, false, true), T(1e-8)));  // [B, out]
    return ag::mul(y, ag::reshape(d, {b, out_, 1, 1}));
  }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const {
    out.emplace_back(prefix + ".weight", weight_);
    affine_.collect(prefix + ".affine", out);
  }

  std::int64_t out_channels() const { return out_; }

 private:
  std::int64_t in_ = 0, out_ = 0, kernel_ = 3;
  bool demodulate_ = true, upsample_ = false;
  ag::Var<T> weight_;
  nn::EqualLinear<T> affine_;
};

// Modulated 3x3 conv + scaled noise + bias + leaky activation.
template <class T>
class StyledConv {
 public:
  StyledConv() = default;
  StyledConv(std::int64_t in, std::int64_t out, std::int64_t w_dim, Rng& rng, bool upsample)
      : conv_(in, out, 3, w_dim, rng, true, upsample),
        noise_strength_(ag::parameter(Tensor<T>::zeros({1}))),
        bias_(ag::parameter(Tensor<T>::zeros({1, out, 1, 1}))) {}

  ag::Var<T> operator()(const ag::Var<T>& x, const ag::Var<T>& w_row, const Tensor<T>& noise,
                        std::vector<Tensor<T>>* trace = nullptr) const {
    auto y = conv_(x, w_row);
    if (trace) trace->push_back(y.value());
    if (noise.dim(0) != y.dim(0) || noise.dim(2) != y.dim(2)) {
      throw ArgumentError("noise map " + shape_str(noise.shape()) + " does not match activation " + shape_str(y.shape()));
    }
    y = ag::add(y, ag::mul(ag::constant(noise), ag::reshape(noise_strength_, {1, 1, 1, 1})));
    return nn::fused_lrelu(ag::add(y, bias_));
  }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const {
    conv_.collect(prefix + ".conv", out);
    out.emplace_back(prefix + ".noise_strength", noise_strength_);
    out.emplace_back(prefix + ".bias", bias_);
  }

 private:
  ModulatedConv<T> conv_;
  ag::Var<T> noise_strength_, bias_;
};

// 1x1 modulated conv to RGB without demodulation, plus the upsampled skip.
template <class T>
class ToRgb {
 public:
  ToRgb() = default;
  ToRgb(std::int64_t in, std::int64_t w_dim, Rng& rng)
      : conv_(in, 3, 1, w_dim, rng, false, false), bias_(ag::parameter(Tensor<T>::zeros({1, 3, 1, 1}))) {}

  ag::Var<T> operator()(const ag::Var<T>& x, const ag::Var<T>& w_row, const ag::Var<T>* skip) const {
    auto y = ag::add(conv_(x, w_row), bias_);
    return skip ? ag::add(y, ag::upsample2x(*skip)) : y;
  }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const {
    conv_.collect(prefix + ".conv", out);
    out.emplace_back(prefix + ".bias", bias_);
  }

 private:
  ModulatedConv<T> conv_;
  ag::Var<T> bias_;
};

// Optional record of each styled convolution's demodulated output.
template <class T>
struct SynthesisTrace {
  std::vector<Tensor<T>> features;
};

template <class T>
class SynthesisNetwork {
 public:
  SynthesisNetwork() = default;
  SynthesisNetwork(SynthesisConfig config, Rng& rng) : config_(config) {
    config_.validate();
    const std::int64_t d = config_.w_dim;
    const std::int64_t c4 = config_.channels(4);
    input_ = ag::parameter(rng.normal_tensor<T>({1, c4, 4, 4}));
    conv1_ = StyledConv<T>(c4, c4, d, rng, false);
    to_rgb1_ = ToRgb<T>(c4, d, rng);
    std::int64_t in = c4;
    for (std::int64_t r = 8; r <= config_.resolution; r *= 2) {
      const std::int64_t out = config_.channels(r);
      ups_.emplace_back(in, out, d, rng, true);
      convs_.emplace_back(out, out, d, rng, false);
      to_rgbs_.emplace_back(out, d, rng);
      in = out;
    }
  }

  const SynthesisConfig& config() const { return config_; }
  std::int64_t num_layers() const { return config_.num_layers(); }

  // w: [B, L, D] -> images [B, 3, R, R]
  ag::Var<T> operator()(const ag::Var<T>& w, const NoiseBundle<T>& noise, SynthesisTrace<T>* trace = nullptr) const {
    const std::int64_t num_l = num_layers();
    if (w.shape().size() != 3 || w.dim(1) != num_l || w.dim(2) != config_.w_dim) {
      throw ArgumentError("synthesis expects w of shape [B, " + std::to_string(num_l) + ", " +
                          std::to_string(config_.w_dim) + "], got " + shape_str(w.shape()));
    }
    if (noise.maps.size() != config_.conv_resolutions().size() || noise.batch() != w.dim(0)) {
      throw ArgumentError("noise bundle does not match the synthesis layout or batch");
    }
    const std::int64_t b = w.dim(0);
    auto row = [&w](std::int64_t j) { return ag::select(w, 1, j); };
    auto* rec = trace ? &trace->features : nullptr;
    auto x = ag::expand(input_, {b, input_.dim(1), 4, 4});
    x = conv1_(x, row(0), noise.maps[0], rec);
    auto skip = to_rgb1_(x, row(1), nullptr);
    std::int64_t i = 1;
    for (std::size_t lvl = 0; lvl < ups_.size(); ++lvl) {
      x = ups_[lvl](x, row(i), noise.maps[1 + 2 * lvl], rec);
      x = convs_[lvl](x, row(i + 1), noise.maps[2 + 2 * lvl], rec);
      skip = to_rgbs_[lvl](x, row(i + 2), &skip);
      i += 2;
    }
    return skip;
  }

  void collect(const std::string& prefix, nn::ParamList<T>& out) const {
    out.emplace_back(prefix + ".input", input_);
    conv1_.collect(prefix + ".conv1", out);
    to_rgb1_.collect(prefix + ".to_rgb1", out);
    for (std::size_t k = 0; k < ups_.size(); ++k) {
      const std::string p = prefix + ".level" + std::to_string(k);
      ups_[k].collect(p + ".up", out);
      convs_[k].collect(p + ".conv", out);
      to_rgbs_[k].collect(p + ".to_rgb", out);
    }
  }

 private:
  SynthesisConfig config_;
  ag::Var<T> input_;
  StyledConv<T> conv1_;
  ToRgb<T> to_rgb1_;
  std::vector<StyledConv<T>> ups_, convs_;
  std::vector<ToRgb<T>> to_rgbs_;
};

struct GeneratorConfig {
  SynthesisConfig synthesis;
  MappingConfig mapping;
  std::int64_t z_dim = 512;      // face latent width
  std::int64_t style_dim = 512;  // width of the style code fed to the style mapping

  void validate() const {
    synthesis.validate();
    mapping.validate();
    if (synthesis.w_dim != mapping.w_dim) throw ConfigError("mapping and synthesis w_dim differ");
    if (z_dim < 1 || style_dim < 1) throw ConfigError("latent widths must be positive");
  }
};

template <class T>
struct ImagePair {
  ag::Var<T> face, stylized;
};

template <class T>
class Generator {
 public:
  Generator() = default;
  Generator(GeneratorConfig config, Rng& rng) : config_(config) {
    config_.validate();
    Rng face_rng = rng.fork(1), style_rng = rng.fork(2), synth_rng = rng.fork(3);
    face_map_ = MappingNetwork<T>(config_.z_dim, config_.mapping, face_rng);
    style_map_ = MappingNetwork<T>(config_.style_dim, config_.mapping, style_rng);
    synthesis_ = SynthesisNetwork<T>(config_.synthesis, synth_rng);
    mask_ = BlendMask<T>(config_.synthesis.num_layers());
  }

  const GeneratorConfig& config() const { return config_; }
  std::int64_t num_layers() const { return config_.synthesis.num_layers(); }
  BlendMask<T>& mask() { return mask_; }
  const BlendMask<T>& mask() const { return mask_; }
  const SynthesisNetwork<T>& synthesis() const { return synthesis_; }

  ag::Var<T> map_face(const ag::Var<T>& z_f) const { return face_map_.to_wcode(z_f, num_layers()); }
  ag::Var<T> map_style(const ag::Var<T>& z_s) const { return style_map_.to_wcode(z_s, num_layers()); }

  ag::Var<T> synthesize(const ag::Var<T>& w, const NoiseBundle<T>& noise, SynthesisTrace<T>* trace = nullptr) const {
    return synthesis_(w, noise, trace);
  }

  ag::Var<T> blended_code(const ag::Var<T>& z_f, const ag::Var<T>& z_s, std::int64_t i, double theta) const {
    return blend(map_style(z_s), map_face(z_f), mask_.alpha_hat(i, theta));
  }

  // Natural and stylized images from one face latent; both share `noise`.
  ImagePair<T> generate_pair(const ag::Var<T>& z_f, const ag::Var<T>& z_s, std::int64_t i, double theta,
                             const NoiseBundle<T>& noise) const {
    auto w_f = map_face(z_f);
    auto w = blend(map_style(z_s), w_f, mask_.alpha_hat(i, theta));
    return {synthesize(w_f, noise), synthesize(w, noise)};
  }

  void collect(nn::ParamList<T>& out) const {
    face_map_.collect("g.face_mapping", out);
    style_map_.collect("g.style_mapping", out);
    synthesis_.collect("g.synthesis", out);
    mask_.collect("g.mask", out);
  }
  nn::ParamList<T> parameters() const {
    nn::ParamList<T> p;
    collect(p);
    return p;
  }

 private:
  GeneratorConfig config_;
  MappingNetwork<T> face_map_, style_map_;
  SynthesisNetwork<T> synthesis_;
  BlendMask<T> mask_;
};

}  // namespace blendlab

#endif  // BLENDLAB_SYNTHESIS_HPP_
