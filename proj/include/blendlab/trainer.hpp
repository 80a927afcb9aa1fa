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

// Adversarial training of the blending generator against the face, style and
// style-latent critics: non-saturating logistic losses, lazy R1 on the
// critics, lazy path-length regularization on the natural branch.

#ifndef BLENDLAB_TRAINER_HPP_
#define BLENDLAB_TRAINER_HPP_

#include <chrono>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "blendlab/critics.hpp"
#include "blendlab/style_codec.hpp"
#include "blendlab/synthesis.hpp"

namespace blendlab {

struct TrainConfig {
  std::int64_t batch = 8;
  std::int64_t iterations = 10000;
  nn::AdamConfig adam;
  double r1_gamma = 1.0;
  std::int64_t r1_interval = 16;
  double path_weight = 2.0;
  std::int64_t path_interval = 4;
  double path_decay = 0.01;
  std::int64_t path_batch_shrink = 2;
  std::size_t queue_capacity = 1024;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(adam.lr >= 0)) throw ConfigError("learning rate must be non-negative");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (r1_interval < 1 || path_interval < 1 || path_batch_shrink < 1) throw ConfigError("intervals must be >= 1");
    if (r1_gamma < 0 || path_weight < 0) throw ConfigError("regularizer weights must be non-negative");
  }
};

// Adam hyperparameters for a network regularized every `interval` steps.
inline nn::AdamConfig lazy_adam(nn::AdamConfig c, std::int64_t interval) {
  const double ratio = static_cast<double>(interval) / static_cast<double>(interval + 1);
  c.lr *= ratio;
  c.beta1 = std::pow(c.beta1, ratio);
  c.beta2 = std::pow(c.beta2, ratio);
  return c;
}

template <class T>
struct LossTerms {
  ag::Var<T> critic, generator;
};

// Critic: softplus(-D(real)) + softplus(D(fake)); generator: softplus(-D(fake)).
// Both averaged over the batch.
template <class T>
ag::Var<T> critic_logistic(const ag::Var<T>& real_logits, const ag::Var<T>& fake_logits) {
  return ag::add(ag::mean(ag::softplus(ag::neg(real_logits))), ag::mean(ag::softplus(fake_logits)));
}

template <class T>
ag::Var<T> generator_logistic(const ag::Var<T>& fake_logits) {
  return ag::mean(ag::softplus(ag::neg(fake_logits)));
}

template <class T>
LossTerms<T> logistic_terms(const ag::Var<T>& real_logits, const ag::Var<T>& fake_logits) {
  return {critic_logistic(real_logits, fake_logits), generator_logistic(fake_logits)};
}

// gamma / 2 * E ||d score / d x||^2 at real images, differentiable in the
// critic parameters.
template <class T, class Score>
ag::Var<T> r1_penalty(Score&& score, const Tensor<T>& real, T gamma) {
  ag::GradModeGuard on(true);
  auto x = ag::parameter(real);
  auto out = ag::sum(score(x));
  auto g = ag::grad(out, {x}, {}, true)[0];
  return ag::scale(ag::sum(ag::square(g)), gamma / T(2) / static_cast<T>(real.dim(0)));
}

struct StepLog {
  std::int64_t iteration = 0;
  double d_face = 0, d_style = 0, d_latent = 0;
  double g_face = 0, g_style = 0, g_latent = 0;
  double r1 = 0, path = 0, mean_path_length = 0;
  double critic_accuracy = 0;
  double wall_seconds = 0;

  static constexpr const char* kHeader =
      "iteration d_face d_style d_latent g_face g_style g_latent r1 path mean_path critic_acc wall_s";

  // Deterministic part first; wall time last so logs compare with it cut off.
  std::string record() const {
    std::ostringstream os;
    os.precision(9);
    os << iteration << ' ' << d_face << ' ' << d_style << ' ' << d_latent << ' ' << g_face << ' ' << g_style << ' '
       << g_latent << ' ' << r1 << ' ' << path << ' ' << mean_path_length << ' ' << critic_accuracy;
    os.precision(4);
    os << ' ' << wall_seconds;
    return os.str();
  }
};

struct ModelConfig {
  GeneratorConfig generator;
  CriticConfig critic;
};

// All adversarially trained networks plus the negative queue.
template <class T>
struct GanModel {
  Generator<T> g;
  ConvCritic<T> d_face, d_style;
  ProjectionCritic<T> d_latent;
  EmbeddingQueue<T> queue;

  GanModel(const ModelConfig& c, Rng& rng, std::size_t queue_capacity = 1024)
      : g(c.generator, rng), queue(queue_capacity) {
    if (c.critic.resolution != c.generator.synthesis.resolution) throw ConfigError("critic/generator resolution differ");
    Rng rf = rng.fork(11), rs = rng.fork(12), rl = rng.fork(13);
    d_face = ConvCritic<T>(c.critic, rf);
    d_style = ConvCritic<T>(c.critic, rs);
    d_latent = ProjectionCritic<T>(c.critic, c.generator.style_dim, rl);
  }

  nn::ParamList<T> generator_params() const { return g.parameters(); }
  nn::ParamList<T> critic_params() const {
    nn::ParamList<T> p;
    d_face.collect("d_face", p);
    d_style.collect("d_style", p);
    d_latent.collect("d_latent", p);
    return p;
  }
};

// Everything needed to continue training bit-identically.
template <class T>
struct TrainState {
  ModelConfig model_config;
  TrainConfig config;
  GanModel<T> model;
  nn::Adam<T> adam_g, adam_d;
  std::int64_t iteration = 0;
  double mean_path_length = 0;
  Rng rng;
  std::vector<StepLog> history;

  TrainState(ModelConfig mc, TrainConfig tc, Rng init_rng)
      : model_config(mc), config(tc), model(mc, init_rng, tc.queue_capacity),
        adam_g(lazy_adam(tc.adam, tc.path_interval)), adam_d(lazy_adam(tc.adam, tc.r1_interval)),
        rng(Rng::derive(tc.seed, 0x7A11)) {
    tc.validate();
  }
};

struct StepOptions {
  bool push_queue = true;
};

namespace detail {

template <class T>
double sign_accuracy(const Tensor<T>& real, const Tensor<T>& fake) {
  std::int64_t hits = 0;
  for (auto v : real.values()) hits += v > 0;
  for (auto v : fake.values()) hits += v < 0;
  return static_cast<double>(hits) / static_cast<double>(real.size() + fake.size());
}

template <class T>
void check_finite(const ag::Var<T>& v, const char* what, std::int64_t it) {
  if (!std::isfinite(static_cast<double>(v.item()))) {
    std::ostringstream os;
    os << "non-finite " << what << " at iteration " << it << ": " << v.item();
    throw NumericalError(os.str());
  }
}

}  // namespace detail

// One critic update followed by one generator update.
//   faces:  [B, 3, R, R] natural images for the face critic
//   styles: [B, 3, R, R] artistic images; z_s: [B, D_s] their style codes
template <class T>
StepLog train_step(TrainState<T>& st, const Tensor<T>& faces, const Tensor<T>& styles, const Tensor<T>& z_s,
                   StepOptions opts = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  auto& m = st.model;
  auto& rng = st.rng;
  const auto& tc = st.config;
  const std::int64_t b = faces.dim(0);
  const std::int64_t num_l = m.g.num_layers();
  if (styles.dim(0) != b || z_s.dim(0) != b) throw ArgumentError("train_step: batch sizes differ");
  const std::int64_t d_s = z_s.dim(1);

  StepLog log;
  log.iteration = st.iteration;

  if (m.queue.empty()) m.queue.push_rows(z_s);
  auto z_f = ag::constant(rng.template normal_tensor<T>({b, m.g.config().z_dim}));
  auto noise = NoiseBundle<T>::random(m.g.config().synthesis, b, rng);
  Tensor<T> z_neg({b, d_s});
  for (std::int64_t i = 0; i < b; ++i) {
    const std::vector<T> own(z_s.data() + i * d_s, z_s.data() + (i + 1) * d_s);
    const auto& neg = m.queue.sample(rng, &own);
    std::copy(neg.begin(), neg.end(), z_neg.data() + i * d_s);
  }
  auto zs = ag::constant(z_s);
  auto zn = ag::constant(z_neg);
  auto real_f = ag::constant(faces);
  auto real_s = ag::constant(styles);

  // Critic step: generator outputs are constants here.
  {
    ImagePair<T> fake;
    {
      ag::NoGradGuard ng;
      fake = m.g.generate_pair(z_f, zs, 0, kFullBlendTheta, noise);
    }
    auto rf = m.d_face(real_f), ff = m.d_face(fake.face);
    auto rs = m.d_style(real_s), fs = m.d_style(fake.stylized);
    auto rl = m.d_latent(real_s, zs), fl = m.d_latent(fake.stylized, zn);
    auto lf = critic_logistic(rf, ff), ls = critic_logistic(rs, fs), ll = critic_logistic(rl, fl);
    auto total = ag::add(ag::add(lf, ls), ll);
    log.d_face = lf.item();
    log.d_style = ls.item();
    log.d_latent = ll.item();
    log.critic_accuracy = (detail::sign_accuracy(rf.value(), ff.value()) + detail::sign_accuracy(rs.value(), fs.value()) +
                           detail::sign_accuracy(rl.value(), fl.value())) / 3.0;
    if (st.iteration % tc.r1_interval == 0 && tc.r1_gamma > 0) {
      const T gamma = static_cast<T>(tc.r1_gamma);
      auto r1 = ag::add(ag::add(r1_penalty([&](const ag::Var<T>& x) { return m.d_face(x); }, faces, gamma),
                                r1_penalty([&](const ag::Var<T>& x) { return m.d_style(x); }, styles, gamma)),
                        r1_penalty([&](const ag::Var<T>& x) { return m.d_latent(x, zs); }, styles, gamma));
      log.r1 = r1.item();
      total = ag::add(total, ag::scale(r1, static_cast<T>(tc.r1_interval)));
    }
    detail::check_finite(total, "critic loss", st.iteration);
    auto params = m.critic_params();
    st.adam_d.step(params, ag::grad(total, nn::vars_of(params)));
  }

  // Generator step: critics are read but only generator parameters move.
  {
    auto w_f = m.g.map_face(z_f);
    auto w = blend(m.g.map_style(zs), w_f, m.g.mask().alpha_hat(0, kFullBlendTheta));
    auto x_f = m.g.synthesize(w_f, noise);
    auto x_s = m.g.synthesize(w, noise);
    auto gf = generator_logistic(m.d_face(x_f));
    auto gs = generator_logistic(m.d_style(x_s));
    auto gl = generator_logistic(m.d_latent(x_s, zs));
    auto total = ag::add(ag::add(gf, gs), gl);
    log.g_face = gf.item();
    log.g_style = gs.item();
    log.g_latent = gl.item();
    if (st.iteration % tc.path_interval == 0 && tc.path_weight > 0) {
      const std::int64_t pb = std::max<std::int64_t>(1, b / tc.path_batch_shrink);
      auto zp = ag::constant(rng.template normal_tensor<T>({pb, m.g.config().z_dim}));
      auto np = NoiseBundle<T>::random(m.g.config().synthesis, pb, rng);
      auto wp = m.g.map_face(zp);
      auto img = m.g.synthesize(wp, np);
      const std::int64_t res = img.dim(2);
      auto y = ag::constant(rng.template normal_tensor<T>(img.shape(), T(1) / static_cast<T>(res)));
      auto gw = ag::grad(ag::sum(ag::mul(img, y)), {wp}, {}, true)[0];  // [pb, L, D]
      // |J^T y| per sample: sqrt(mean over rows of the row-wise squared norm).
      auto lengths = ag::sqrt(ag::scale(ag::sum_axis(ag::sum_axis(ag::square(gw), 2), 1), T(1) / static_cast<T>(num_l)));
      double mean_len = 0;
      for (auto v : lengths.value().values()) mean_len += v;
      mean_len /= static_cast<double>(pb);
      const double target = st.mean_path_length + tc.path_decay * (mean_len - st.mean_path_length);
      auto pen = ag::mean(ag::square(ag::add_scalar(lengths, static_cast<T>(-target))));
      log.path = pen.item();
      total = ag::add(total, ag::scale(pen, static_cast<T>(tc.path_weight * static_cast<double>(tc.path_interval))));
      st.mean_path_length = target;
    }
    log.mean_path_length = st.mean_path_length;
    detail::check_finite(total, "generator loss", st.iteration);
    auto params = m.generator_params();
    st.adam_g.step(params, ag::grad(total, nn::vars_of(params)));
  }

  if (opts.push_queue) m.queue.push_rows(z_s);
  ++st.iteration;
  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  st.history.push_back(log);
  return log;
}

// Adapts a trained model to one reference style. The encoder is only read;
// the face critic keeps seeing natural faces from `face_source(step, batch)`
// while both style critics see only the reference. z_s is not queued, so the
// negatives stay the training-time embeddings.
template <class T, class FaceSource>
std::vector<StepLog> one_shot_finetune_code(TrainState<T>& st, const Tensor<T>& z_ref, const Tensor<T>& reference,
                                            FaceSource&& face_source, std::int64_t steps = 1000, std::int64_t batch = 1) {
  if (reference.shape().size() != 4 || reference.dim(0) != 1) throw ArgumentError("finetune expects one reference image");
  if (z_ref.shape().size() != 2 || z_ref.dim(0) != 1) throw ArgumentError("finetune expects one reference code");
  if (steps < 0 || batch < 1) throw ConfigError("finetune steps must be >= 0 and batch >= 1");
  if (st.model.queue.empty()) throw StateError("finetune needs a trained model with a populated queue");
  const std::int64_t d_s = z_ref.dim(1), px = reference.size();
  Tensor<T> styles({batch, reference.dim(1), reference.dim(2), reference.dim(3)});
  Tensor<T> z_s({batch, d_s});
  for (std::int64_t b = 0; b < batch; ++b) {
    std::copy_n(reference.data(), px, styles.data() + b * px);
    std::copy_n(z_ref.data(), d_s, z_s.data() + b * d_s);
  }
  std::vector<StepLog> logs;
  for (std::int64_t k = 0; k < steps; ++k) {
    const Tensor<T> faces = face_source(k, batch);
    logs.push_back(train_step(st, faces, styles, z_s, {.push_queue = false}));
  }
  return logs;
}

// Same, encoding `reference` itself (encoder and generator resolutions equal).
template <class T, class FaceSource>
std::vector<StepLog> one_shot_finetune(TrainState<T>& st, const StyleEncoder<T>& encoder, const Tensor<T>& reference,
                                       FaceSource&& face_source, std::int64_t steps = 1000, std::int64_t batch = 1) {
  if (reference.shape().size() != 4 || reference.dim(0) != 1) throw ArgumentError("finetune expects one reference image");
  if (st.model.queue.empty()) throw StateError("finetune needs a trained model with a populated queue");
  return one_shot_finetune_code(st, encoder.encode(reference), reference, std::forward<FaceSource>(face_source), steps,
                                batch);
}

}  // namespace blendlab

#endif  // BLENDLAB_TRAINER_HPP_
