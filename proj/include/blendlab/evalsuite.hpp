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

// Desk metrics over frozen backbone features: a Frechet distance between
// pooled-feature Gaussians (desk-FID), a perceptual diversity score, and the
// blending-indicator sweep built from both.

#ifndef BLENDLAB_EVALSUITE_HPP_
#define BLENDLAB_EVALSUITE_HPP_

#include <Eigen/Dense>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "blendlab/config.hpp"

namespace blendlab {

inline constexpr std::uint64_t kMetricBackboneSeed = 0x3E7B4C;

// The fixed backbone every metric uses at a given resolution. Below 32x32
// the deepest blocks are dropped so every tap keeps at least 2x2 cells.
template <class T>
FeatureBackbone<T> metric_backbone(std::int64_t resolution) {
  BackboneConfig cfg = BackboneConfig::desk(resolution);
  while (cfg.layers.size() > 1 && cfg.layers.back().downsample * 2 > resolution) {
    cfg.layers.pop_back();
    cfg.tap_points.pop_back();
  }
  Rng rng(kMetricBackboneSeed);
  return FeatureBackbone<T>(cfg, rng);
}

// Global-average-pooled tap features, concatenated: [N, sum of tap channels].
template <class T>
Eigen::MatrixXd pooled_features(const FeatureBackbone<T>& backbone, const Tensor<T>& images) {
  const auto taps = backbone.extract_features(images);
  const std::int64_t n = images.dim(0);
  std::int64_t width = 0;
  for (const auto& f : taps) width += f.dim(1);
  Eigen::MatrixXd out(n, width);
  std::int64_t col = 0;
  for (const auto& f : taps) {
    const std::int64_t c = f.dim(1), hw = f.dim(2) * f.dim(3);
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t k = 0; k < c; ++k) {
        const T* p = f.data() + (i * c + k) * hw;
        double s = 0;
        for (std::int64_t q = 0; q < hw; ++q) s += p[q];
        out(i, col + k) = s / static_cast<double>(hw);
      }
    col += c;
  }
  return out;
}

struct FeatureStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::int64_t count = 0;
};

// Mean and unbiased covariance of the rows of `features`.
inline FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw ArgumentError("feature_stats needs at least 2 samples");
  FeatureStats s;
  s.count = features.rows();
  s.mu = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mu.transpose();
  s.sigma = (centered.transpose() * centered) / static_cast<double>(s.count - 1);
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose());
  return s;
}

namespace detail {

// Eigenvalues below -tol * max(1, largest) are a numerical error; the rest of
// the negative ones are clamped to zero.
inline Eigen::VectorXd clamped_eigenvalues(const Eigen::VectorXd& ev, const char* what) {
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  Eigen::VectorXd out = ev;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev[k] < -1e-6 * scale) {
      std::ostringstream os;
      os << what << " is not positive semidefinite: eigenvalue " << ev[k] << " (largest magnitude " << scale << ")";
      throw NumericalError(os.str());
    }
    out[k] = std::max(0.0, ev[k]);
  }
  return out;
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericalError(std::string("eigendecomposition failed for ") + what);
  const Eigen::VectorXd root = clamped_eigenvalues(es.eigenvalues(), what).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

// Tr((Sa Sb)^{1/2}) via the symmetric form Sa^{1/2} Sb Sa^{1/2}.
inline double trace_sqrt_product(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb) {
  const Eigen::MatrixXd ra = detail::psd_sqrt(sa, "covariance a");
  const Eigen::MatrixXd m = ra * sb * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("eigendecomposition failed for the covariance product");
  return detail::clamped_eigenvalues(es.eigenvalues(), "covariance product").cwiseSqrt().sum();
}

// S with S*S = Sa*Sb, built as Sa^{1/2} (Sa^{1/2} Sb Sa^{1/2})^{1/2} Sa^{-1/2}.
// Needs Sa positive definite.
inline Eigen::MatrixXd sqrt_product(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb) {
  const Eigen::MatrixXd ra = detail::psd_sqrt(sa, "covariance a");
  const Eigen::MatrixXd mid = detail::psd_sqrt(ra * sb * ra, "covariance product");
  return ra * mid * ra.inverse();
}

inline double desk_fid(const FeatureStats& a, const FeatureStats& b) {
  if (a.mu.size() != b.mu.size() || a.sigma.rows() != b.sigma.rows())
    throw ArgumentError("desk_fid: feature dimensions differ");
  const double mean_term = (a.mu - b.mu).squaredNorm();
  const double d = mean_term + a.sigma.trace() + b.sigma.trace() - 2.0 * trace_sqrt_product(a.sigma, b.sigma);
  return std::max(0.0, d);
}

// Per-location channel-normalized tap features, each tap scaled by
// 1/sqrt(h*w): the squared distance between two rows is the sum over taps of
// the spatial mean of the normalized-feature squared difference.
template <class T>
Eigen::MatrixXd perceptual_features(const FeatureBackbone<T>& backbone, const Tensor<T>& images) {
  const auto taps = backbone.extract_features(images);
  const std::int64_t n = images.dim(0);
  std::int64_t width = 0;
  for (const auto& f : taps) width += f.dim(1) * f.dim(2) * f.dim(3);
  Eigen::MatrixXd out(n, width);
  std::int64_t col = 0;
  for (const auto& f : taps) {
    const std::int64_t c = f.dim(1), hw = f.dim(2) * f.dim(3);
    const double spatial = 1.0 / std::sqrt(static_cast<double>(hw));
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t q = 0; q < hw; ++q) {
        double norm = 0;
        for (std::int64_t k = 0; k < c; ++k) {
          const double v = f[(i * c + k) * hw + q];
          norm += v * v;
        }
        const double inv = spatial / (std::sqrt(norm) + 1e-10);
        for (std::int64_t k = 0; k < c; ++k) out(i, col + k * hw + q) = f[(i * c + k) * hw + q] * inv;
      }
    col += c * hw;
  }
  return out;
}

// Mean squared distance over all unordered pairs of rows.
inline double mean_pairwise_distance(const Eigen::MatrixXd& rows) {
  const Eigen::Index s = rows.rows();
  if (s < 2) throw ArgumentError("diversity needs at least 2 samples per face");
  double total = 0;
  for (Eigen::Index a = 0; a < s; ++a)
    for (Eigen::Index b = a + 1; b < s; ++b) total += (rows.row(a) - rows.row(b)).squaredNorm();
  return total / static_cast<double>(s * (s - 1) / 2);
}

// Average of the per-face pairwise means.
inline double diversity_score(const std::vector<Eigen::MatrixXd>& per_face) {
  if (per_face.empty()) throw ArgumentError("diversity needs at least one face");
  double total = 0;
  for (const auto& f : per_face) total += mean_pairwise_distance(f);
  return total / static_cast<double>(per_face.size());
}

// ---- generation-side helpers ----

enum class GuidanceMode { kLatent, kReference };

inline const char* mode_name(GuidanceMode m) { return m == GuidanceMode::kLatent ? "latent" : "reference"; }

// Full blend at i = 0, otherwise the configured fractional slot.
inline double sweep_theta(std::int64_t i, double theta) { return i == 0 ? kFullBlendTheta : theta; }

inline std::vector<std::int64_t> default_indicators(std::int64_t num_layers) {
  const std::int64_t l = num_layers;
  return {0, (l + 2) / 3, (2 * l + 2) / 3, l};
}

// Draws style codes: standard Gaussian in latent mode, encoded rows of the
// reference pool in reference mode.
template <class T>
class StyleSource {
 public:
  StyleSource(GuidanceMode mode, std::int64_t style_dim, Tensor<T> reference_codes = {})
      : mode_(mode), dim_(style_dim), codes_(std::move(reference_codes)) {
    if (mode_ == GuidanceMode::kReference && (codes_.rank() != 2 || codes_.dim(0) < 1 || codes_.dim(1) != dim_))
      throw ArgumentError("reference mode needs a non-empty [N, style_dim] code pool");
  }
  GuidanceMode mode() const { return mode_; }

  Tensor<T> draw(Rng& rng, std::int64_t n) const {
    if (mode_ == GuidanceMode::kLatent) return rng.template normal_tensor<T>({n, dim_});
    Tensor<T> out({n, dim_});
    for (std::int64_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(codes_.dim(0))));
      std::copy_n(codes_.data() + k * dim_, dim_, out.data() + i * dim_);
    }
    return out;
  }

 private:
  GuidanceMode mode_;
  std::int64_t dim_;
  Tensor<T> codes_;
};

// Encodes images in chunks to bound memory.
template <class T>
Tensor<T> encode_all(const StyleEncoder<T>& enc, const Tensor<T>& images, std::int64_t chunk = 64) {
  const std::int64_t n = images.dim(0), per = images.size() / std::max<std::int64_t>(1, n);
  Tensor<T> out;
  for (std::int64_t a = 0; a < n; a += chunk) {
    const std::int64_t m = std::min(chunk, n - a);
    Tensor<T> part({m, images.dim(1), images.dim(2), images.dim(3)});
    std::copy_n(images.data() + a * per, m * per, part.data());
    Tensor<T> codes = enc.encode(part);
    if (a == 0) out = Tensor<T>({n, codes.dim(1)});
    std::copy_n(codes.data(), codes.size(), out.data() + a * codes.dim(1));
  }
  return out;
}

// Stylized outputs for given latents at indicator i; no graph is recorded.
template <class T>
Tensor<T> render_stylized(const Generator<T>& g, const Tensor<T>& z_f, const Tensor<T>& z_s, const NoiseBundle<T>& noise,
                          std::int64_t i, double theta) {
  ag::NoGradGuard ng;
  return g.generate_pair(ag::constant(z_f), ag::constant(z_s), i, theta, noise).stylized.value();
}

struct EvalConfig {
  std::int64_t fid_samples = 1000;
  std::int64_t diversity_faces = 100;
  std::int64_t styles_per_face = 10;
  std::int64_t batch = 25;
  double theta = 0.5;
  std::uint64_t seed = 0;
};

// Stats of stylized samples at indicator i; draws depend only on the seed,
// so every i sees the same latents and noise.
template <class T>
FeatureStats generated_stats(const Generator<T>& g, const StyleSource<T>& styles, const FeatureBackbone<T>& backbone,
                             std::int64_t i, const EvalConfig& cfg) {
  Rng rng = Rng::derive(cfg.seed, 0xF1D);
  std::vector<Eigen::MatrixXd> parts;
  for (std::int64_t a = 0; a < cfg.fid_samples; a += cfg.batch) {
    const std::int64_t n = std::min(cfg.batch, cfg.fid_samples - a);
    auto z_f = rng.template normal_tensor<T>({n, g.config().z_dim});
    auto z_s = styles.draw(rng, n);
    auto noise = NoiseBundle<T>::random(g.config().synthesis, n, rng);
    parts.push_back(pooled_features(backbone, render_stylized(g, z_f, z_s, noise, i, sweep_theta(i, cfg.theta))));
  }
  Eigen::MatrixXd feats(cfg.fid_samples, parts.front().cols());
  Eigen::Index row = 0;
  for (const auto& p : parts) {
    feats.middleRows(row, p.rows()) = p;
    row += p.rows();
  }
  return feature_stats(feats);
}

// Per face: styles_per_face codes rendered with one shared z_f and noise.
template <class T>
double generated_diversity(const Generator<T>& g, const StyleSource<T>& styles, const FeatureBackbone<T>& backbone,
                           std::int64_t i, const EvalConfig& cfg) {
  Rng rng = Rng::derive(cfg.seed, 0xD17);
  const std::int64_t s = cfg.styles_per_face;
  std::vector<Eigen::MatrixXd> per_face;
  for (std::int64_t f = 0; f < cfg.diversity_faces; ++f) {
    auto z1 = rng.template normal_tensor<T>({1, g.config().z_dim});
    Tensor<T> z_f({s, z1.dim(1)});
    for (std::int64_t k = 0; k < s; ++k) std::copy_n(z1.data(), z1.size(), z_f.data() + k * z1.size());
    auto z_s = styles.draw(rng, s);
    auto one = NoiseBundle<T>::random(g.config().synthesis, 1, rng);
    NoiseBundle<T> noise = NoiseBundle<T>::zeros(g.config().synthesis, s);
    for (std::size_t m = 0; m < noise.maps.size(); ++m) {
      const std::int64_t per = one.maps[m].size();
      for (std::int64_t k = 0; k < s; ++k) std::copy_n(one.maps[m].data(), per, noise.maps[m].data() + k * per);
    }
    per_face.push_back(perceptual_features(backbone, render_stylized(g, z_f, z_s, noise, i, sweep_theta(i, cfg.theta))));
  }
  return diversity_score(per_face);
}

struct SweepRow {
  std::string mode;
  std::int64_t indicator = 0;
  double theta = 0;
  double fid = 0;
  double diversity = 0;
  std::int64_t fid_samples = 0, diversity_faces = 0, styles_per_face = 0;
  std::uint64_t seed = 0;
};

struct SweepReport {
  std::vector<SweepRow> rows;

  std::vector<SweepRow> mode_rows(const std::string& mode) const {
    std::vector<SweepRow> out;
    for (const auto& r : rows)
      if (r.mode == mode) out.push_back(r);
    return out;
  }

  // Rows with indicator == `highlight` get a trailing '*'.
  std::string table(std::int64_t highlight = -1) const {
    std::ostringstream os;
    os << std::left << std::setw(10) << "mode" << std::right << std::setw(4) << "i" << std::setw(8) << "theta"
       << std::setw(14) << "desk_fid" << std::setw(12) << "diversity" << std::setw(8) << "n_fid" << std::setw(8)
       << "faces" << std::setw(8) << "styles" << std::setw(8) << "seed" << '\n';
    for (const auto& r : rows) {
      os << std::left << std::setw(10) << r.mode << std::right << std::setw(4) << r.indicator << std::setw(8)
         << std::setprecision(3) << r.theta << std::setw(14) << std::setprecision(6) << r.fid << std::setw(12)
         << std::setprecision(5) << r.diversity << std::setw(8) << r.fid_samples << std::setw(8) << r.diversity_faces
         << std::setw(8) << r.styles_per_face << std::setw(8) << r.seed << (r.indicator == highlight ? " *" : "")
         << '\n';
    }
    return os.str();
  }

  // One whitespace-separated record per (mode, i), exact decimal values.
  std::string records() const {
    std::ostringstream os;
    os << "mode indicator theta desk_fid diversity fid_samples diversity_faces styles_per_face seed\n";
    for (const auto& r : rows)
      os << r.mode << ' ' << r.indicator << ' ' << exact_string(r.theta) << ' ' << exact_string(r.fid) << ' '
         << exact_string(r.diversity) << ' ' << r.fid_samples << ' ' << r.diversity_faces << ' ' << r.styles_per_face
         << ' ' << r.seed << '\n';
    return os.str();
  }
};

// Counts adjacent pairs that break a nondecreasing (sign = +1) or
// nonincreasing (sign = -1) order.
inline int order_violations(const std::vector<double>& v, int sign) {
  int bad = 0;
  for (std::size_t k = 1; k < v.size(); ++k) bad += sign * (v[k] - v[k - 1]) < 0;
  return bad;
}

// Desk-FID against `real` and diversity for every (mode, i). Needs a trained
// generator; an iteration-0 state is rejected.
template <class T>
SweepReport indicator_sweep(const TrainState<T>& st, const std::vector<StyleSource<T>>& sources,
                            const FeatureBackbone<T>& backbone, const FeatureStats& real,
                            const std::vector<std::int64_t>& indicators, const EvalConfig& cfg) {
  if (st.iteration == 0) throw StateError("indicator sweep on an untrained model");
  const auto& g = st.model.g;
  SweepReport report;
  for (const auto& src : sources) {
    for (auto i : indicators) {
      if (i < 0 || i > g.num_layers()) throw ArgumentError("indicator " + std::to_string(i) + " outside [0, L]");
      SweepRow row;
      row.mode = mode_name(src.mode());
      row.indicator = i;
      row.theta = sweep_theta(i, cfg.theta);
      row.fid = desk_fid(generated_stats(g, src, backbone, i, cfg), real);
      row.diversity = generated_diversity(g, src, backbone, i, cfg);
      row.fid_samples = cfg.fid_samples;
      row.diversity_faces = cfg.diversity_faces;
      row.styles_per_face = cfg.styles_per_face;
      row.seed = cfg.seed;
      report.rows.push_back(row);
    }
  }
  return report;
}

}  // namespace blendlab

#endif  // BLENDLAB_EVALSUITE_HPP_
