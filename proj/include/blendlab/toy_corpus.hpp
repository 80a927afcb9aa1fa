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

// Procedural stand-in corpora: cartoon "natural" faces and the same faces
// rendered in one of ten painterly styles. Every image carries its own jitter
// (geometry, palette, texture phase) so instances are distinguishable.

#ifndef BLENDLAB_TOY_CORPUS_HPP_
#define BLENDLAB_TOY_CORPUS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>

#include "blendlab/image_io.hpp"
#include "blendlab/rng.hpp"

namespace blendlab::toy {

inline constexpr int kNumStyles = 10;

namespace detail {

using Rgb = std::array<double, 3>;

inline double smooth_inside(double signed_dist, double softness) {
  return std::clamp(0.5 - signed_dist / softness, 0.0, 1.0);
}

// Approximate signed distance to an axis-aligned ellipse, in pixels.
inline double ellipse_sd(double x, double y, double cx, double cy, double rx, double ry) {
  const double dx = (x - cx) / rx, dy = (y - cy) / ry;
  return (std::sqrt(dx * dx + dy * dy) - 1.0) * std::min(rx, ry);
}

inline Rgb hsv(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 1.0) + 1.0, 1.0) * 6.0;
  const int i = static_cast<int>(h);
  const double f = h - i, p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

inline void blend_into(Rgb& dst, const Rgb& src, double a) {
  for (int c = 0; c < 3; ++c) dst[c] = dst[c] * (1 - a) + src[c] * a;
}

}  // namespace detail

// One face, [3, res, res] in [-1, 1].
template <class T>
Tensor<T> render_face(Rng& rng, std::int64_t res) {
  using detail::Rgb;
  const double r = static_cast<double>(res);
  const Rgb bg_top = detail::hsv(rng.uniform(), rng.uniform(0.1, 0.4), rng.uniform(0.5, 0.9));
  const Rgb bg_bot = detail::hsv(rng.uniform(), rng.uniform(0.1, 0.4), rng.uniform(0.3, 0.7));
  const Rgb skin = detail::hsv(rng.uniform(0.02, 0.1), rng.uniform(0.25, 0.6), rng.uniform(0.45, 0.95));
  const Rgb hair = detail::hsv(rng.uniform(0.0, 0.15), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.6));
  const Rgb eye{0.08, 0.06, 0.05};
  const Rgb lip = detail::hsv(rng.uniform(0.95, 1.02), rng.uniform(0.4, 0.7), rng.uniform(0.45, 0.75));
  const double cx = r * rng.uniform(0.44, 0.56), cy = r * rng.uniform(0.5, 0.6);
  const double rx = r * rng.uniform(0.22, 0.3), ry = r * rng.uniform(0.28, 0.36);
  const double hair_drop = rng.uniform(0.15, 0.45);
  const double eye_dx = rx * rng.uniform(0.35, 0.5), eye_y = cy - ry * rng.uniform(0.1, 0.25);
  const double eye_r = r * rng.uniform(0.025, 0.045);
  const double mouth_y = cy + ry * rng.uniform(0.4, 0.55), mouth_w = rx * rng.uniform(0.3, 0.5);
  const double soft = std::max(1.0, r / 64.0);

  Tensor<T> out({3, res, res});
  for (std::int64_t y = 0; y < res; ++y) {
    for (std::int64_t x = 0; x < res; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      Rgb c;
      const double t = py / r;
      for (int k = 0; k < 3; ++k) c[k] = bg_top[k] * (1 - t) + bg_bot[k] * t;
      // Hair: a larger ellipse behind the face, cut off below the hairline.
      const double hair_in = detail::smooth_inside(detail::ellipse_sd(px, py, cx, cy - ry * 0.12, rx * 1.18, ry * 1.1), soft);
      const double below = detail::smooth_inside(py - (cy + ry * hair_drop), soft);
      detail::blend_into(c, hair, hair_in * below);
      detail::blend_into(c, skin, detail::smooth_inside(detail::ellipse_sd(px, py, cx, cy, rx, ry), soft));
      // Fringe over the forehead.
      const double fringe = detail::smooth_inside(detail::ellipse_sd(px, py, cx, cy - ry * 0.95, rx * 0.95, ry * 0.35), soft);
      detail::blend_into(c, hair, fringe);
      for (double side : {-1.0, 1.0}) {
        detail::blend_into(c, eye, detail::smooth_inside(detail::ellipse_sd(px, py, cx + side * eye_dx, eye_y, eye_r * 1.4, eye_r), soft));
      }
      detail::blend_into(c, lip, detail::smooth_inside(detail::ellipse_sd(px, py, cx, mouth_y, mouth_w, r * 0.02 + 0.5), soft));
      for (int k = 0; k < 3; ++k) out[(k * res + y) * res + x] = static_cast<T>(std::clamp(c[k], 0.0, 1.0) * 2 - 1);
    }
  }
  return out;
}

// Re-renders a face ([3, res, res] in [-1, 1]) in style `style` (0..9):
// luminance is quantized onto a style palette and overlaid with a style
// texture. Palette hue, texture frequency, angle and phase are jittered per
// call.
template <class T>
Tensor<T> stylize(const Tensor<T>& face, int style, Rng& rng) {
  using detail::Rgb;
  if (style < 0 || style >= kNumStyles) throw ArgumentError("stylize: style index out of range");
  const std::int64_t res = face.dim(1);
  const double r = static_cast<double>(res);
  struct Recipe {
    double hue, hue_spread, sat, levels, tex_freq, tex_angle, tex_amp;
    int texture;  // 0 stripes, 1 checker, 2 dots, 3 rings, 4 grain, 5 waves, 6 crosshatch
    bool invert, outline;
  };
  static constexpr Recipe kRecipes[kNumStyles] = {
      {0.60, 0.10, 0.70, 3, 6, 0.0, 0.25, 0, false, true},   {0.05, 0.30, 0.80, 4, 9, 0.8, 0.20, 1, false, false},
      {0.33, 0.15, 0.60, 2, 10, 0.0, 0.30, 2, false, true},  {0.85, 0.25, 0.75, 5, 5, 0.0, 0.25, 3, false, false},
      {0.12, 0.08, 0.50, 3, 0, 0.0, 0.35, 4, true, false},   {0.50, 0.40, 0.90, 4, 4, 1.57, 0.30, 5, false, true},
      {0.95, 0.05, 0.55, 2, 12, 0.4, 0.25, 6, false, false}, {0.70, 0.50, 0.85, 6, 3, 2.3, 0.20, 0, true, true},
      {0.20, 0.20, 0.95, 3, 7, 0.0, 0.25, 2, true, false},   {0.42, 0.05, 0.30, 4, 8, 1.1, 0.30, 6, false, true},
  };
  const Recipe& rc = kRecipes[style];
  const double hue = rc.hue + rng.uniform(-0.04, 0.04);
  const double sat = std::clamp(rc.sat + rng.uniform(-0.1, 0.1), 0.0, 1.0);
  const double freq = (rc.tex_freq + rng.uniform(-0.8, 0.8)) * 2 * std::numbers::pi / r;
  const double angle = rc.tex_angle + rng.uniform(-0.15, 0.15);
  const double phase = rng.uniform(0, 2 * std::numbers::pi);
  const double amp = rc.tex_amp * rng.uniform(0.8, 1.2);
  const int levels = static_cast<int>(rc.levels);
  std::array<Rgb, 8> palette{};
  for (int l = 0; l < levels; ++l) {
    const double f = levels == 1 ? 0.5 : static_cast<double>(l) / (levels - 1);
    palette[static_cast<std::size_t>(l)] =
        detail::hsv(hue + rc.hue_spread * (f - 0.5), sat * (0.6 + 0.4 * (1 - f)), 0.15 + 0.8 * f);
  }
  const double ca = std::cos(angle), sa = std::sin(angle);
  const std::int64_t plane = res * res;
  auto lum_at = [&](std::int64_t y, std::int64_t x) {
    y = std::clamp<std::int64_t>(y, 0, res - 1);
    x = std::clamp<std::int64_t>(x, 0, res - 1);
    const std::int64_t i = y * res + x;
    return (0.299 * face[i] + 0.587 * face[plane + i] + 0.114 * face[2 * plane + i] + 1) / 2;
  };

  Tensor<T> out({3, res, res});
  for (std::int64_t y = 0; y < res; ++y) {
    for (std::int64_t x = 0; x < res; ++x) {
      double lum = lum_at(y, x);
      if (rc.invert) lum = 1 - lum;
      const double u = ca * static_cast<double>(x) + sa * static_cast<double>(y);
      const double v = -sa * static_cast<double>(x) + ca * static_cast<double>(y);
      double tex = 0;
      switch (rc.texture) {
        case 0: tex = std::sin(freq * u + phase); break;
        case 1: tex = std::sin(freq * u + phase) * std::sin(freq * v + phase) > 0 ? 1 : -1; break;
        case 2: tex = std::cos(freq * u + phase) * std::cos(freq * v + phase) > 0.5 ? 1 : -0.3; break;
        case 3: {
          const double dx = static_cast<double>(x) - r / 2, dy = static_cast<double>(y) - r / 2;
          tex = std::sin(freq * std::sqrt(dx * dx + dy * dy) + phase);
          break;
        }
        case 4: tex = rng.uniform(-1, 1); break;
        case 5: tex = std::sin(freq * u + 2.0 * std::sin(freq * 0.5 * v + phase)); break;
        default: tex = std::max(std::sin(freq * u + phase), std::sin(freq * v + phase)) > 0.7 ? -1 : 0.2; break;
      }
      lum = std::clamp(lum + amp * tex * 0.5, 0.0, 1.0);
      const int level = std::min(levels - 1, static_cast<int>(lum * levels));
      Rgb c = palette[static_cast<std::size_t>(level)];
      if (rc.outline) {
        const double gx = lum_at(y, x + 1) - lum_at(y, x - 1), gy = lum_at(y + 1, x) - lum_at(y - 1, x);
        const double edge = std::clamp(std::sqrt(gx * gx + gy * gy) * 3.0, 0.0, 1.0);
        detail::blend_into(c, Rgb{0.05, 0.04, 0.08}, edge);
      }
      for (int k = 0; k < 3; ++k) out[(k * res + y) * res + x] = static_cast<T>(std::clamp(c[k], 0.0, 1.0) * 2 - 1);
    }
  }
  return out;
}

// Stacks `count` images from `make(rng, index)` into [count, 3, res, res].
template <class T, class F>
Tensor<T> make_batch(std::int64_t count, std::int64_t res, F&& make) {
  Tensor<T> out({count, 3, res, res});
  for (std::int64_t i = 0; i < count; ++i) {
    Tensor<T> img = make(i);
    std::copy(img.values().begin(), img.values().end(), out.data() + i * 3 * res * res);
  }
  return out;
}

// Image k depends only on (seed, k), so any index range can be regenerated
// independently.
template <class T>
Tensor<T> face_corpus(std::uint64_t seed, std::int64_t first, std::int64_t count, std::int64_t res) {
  return make_batch<T>(count, res, [&](std::int64_t i) {
    Rng r = Rng::derive(seed, static_cast<std::uint64_t>(first + i));
    return render_face<T>(r, res);
  });
}

// Style image i uses style i % kNumStyles.
template <class T>
Tensor<T> style_corpus(std::uint64_t seed, std::int64_t first, std::int64_t count, std::int64_t res) {
  return make_batch<T>(count, res, [&](std::int64_t i) {
    const std::int64_t k = first + i;
    Rng r = Rng::derive(seed ^ 0x5717E5ull, static_cast<std::uint64_t>(k));
    Tensor<T> face = render_face<T>(r, res);
    return stylize(face, static_cast<int>(k % kNumStyles), r);
  });
}

// Writes images [first, first + count) of a toy corpus as PNG files named
// <kind>_<index>.png; kind is "face" or "style".
inline void write_corpus(const std::filesystem::path& dir, const std::string& kind, std::uint64_t seed,
                         std::int64_t first, std::int64_t count, std::int64_t res) {
  if (kind != "face" && kind != "style") throw ArgumentError("toy corpus kind must be face or style");
  std::filesystem::create_directories(dir);
  constexpr std::int64_t kChunk = 64;
  for (std::int64_t a = 0; a < count; a += kChunk) {
    const std::int64_t n = std::min(kChunk, count - a);
    const auto batch = kind == "face" ? face_corpus<float>(seed, first + a, n, res) : style_corpus<float>(seed, first + a, n, res);
    for (std::int64_t i = 0; i < n; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%06lld.png", kind.c_str(), static_cast<long long>(first + a + i));
      write_png(dir / name, to_image(batch, i));
    }
  }
}

}  // namespace blendlab::toy

#endif  // BLENDLAB_TOY_CORPUS_HPP_
