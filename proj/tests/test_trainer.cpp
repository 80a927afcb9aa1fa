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

#include <gtest/gtest.h>

#include <cmath>

#include "blendlab/trainer.hpp"
#include "gradcheck.hpp"

namespace blendlab {
namespace {

using ag::Var;

ModelConfig tiny_model() {
  ModelConfig m;
  m.generator.synthesis = {8, 16, 64, 8};
  m.generator.mapping.depth = 2;
  m.generator.mapping.w_dim = 16;
  m.generator.z_dim = 8;
  m.generator.style_dim = 6;
  m.critic = {8, 32, 4, 6};
  return m;
}

TrainConfig tiny_train(std::uint64_t seed) {
  TrainConfig t;
  t.batch = 2;
  t.seed = seed;
  t.r1_interval = 2;
  t.path_interval = 2;
  return t;
}

double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); }

TEST(Losses, LogisticTermsMatchDirectFormula) {
  Tensor<double> real({3}), fake({3});
  real[0] = 2.0, real[1] = -0.5, real[2] = 30.0;
  fake[0] = -1.0, fake[1] = 0.25, fake[2] = -40.0;
  auto t = logistic_terms(ag::constant(real), ag::constant(fake));
  double c = 0, g = 0;
  for (int i = 0; i < 3; ++i) {
    c += softplus(-real[i]) / 3 + softplus(fake[i]) / 3;
    g += softplus(-fake[i]) / 3;
  }
  EXPECT_NEAR(t.critic.item(), c, 1e-12);
  EXPECT_NEAR(t.generator.item(), g, 1e-12);
}

TEST(Losses, ZeroLogitsGiveLogTwoTerms) {
  auto t = logistic_terms(ag::constant(Tensor<double>::zeros({4})), ag::constant(Tensor<double>::zeros({4})));
  EXPECT_NEAR(t.critic.item(), 2 * std::log(2.0), 1e-15);
  EXPECT_NEAR(t.generator.item(), std::log(2.0), 1e-15);
}

TEST(Losses, CriticTermFallsAsRealScoreRises) {
  Tensor<double> fake = Tensor<double>::zeros({2});
  double prev = 1e9;
  for (double r : {-3.0, -1.0, 0.0, 1.0, 3.0}) {
    Tensor<double> real({2});
    real.fill(r);
    const double c = critic_logistic(ag::constant(real), ag::constant(fake)).item();
    EXPECT_LT(c, prev);
    prev = c;
  }
}

TEST(Losses, GradientsMatchFiniteDifferences) {
  Rng rng(3);
  auto r = testing::grad_check(
      [](const std::vector<Var<double>>& v) {
        auto t = logistic_terms(v[0], v[1]);
        return ag::add(t.critic, ag::scale(t.generator, 0.7));
      },
      {rng.normal_tensor<double>({5}, 2.0), rng.normal_tensor<double>({5}, 2.0)});
  EXPECT_LT(r.max_rel_error, 1e-4);
}

TEST(Losses, StyleLatentTermIgnoresCodeWhenProjectionIsZero) {
  Rng rng(4);
  ProjectionCritic<double> d({8, 32, 4, 6}, 5, rng);
  d.v().mutable_value().fill(0.0);
  auto x = ag::constant(rng.uniform_tensor<double>({2, 3, 8, 8}, -1.0, 1.0));
  auto z = ag::constant(rng.normal_tensor<double>({2, 5}));
  auto zn = ag::constant(rng.normal_tensor<double>({2, 5}));
  EXPECT_EQ(generator_logistic(d(x, z)).item(), generator_logistic(d(x, zn)).item());
}

TEST(LazyAdam, AdjustsRateAndMomentsByIntervalRatio) {
  nn::AdamConfig c{0.002, 0.0, 0.99, 1e-8};
  auto d = lazy_adam(c, 16);
  EXPECT_NEAR(d.lr, 0.002 * 16 / 17, 1e-15);
  EXPECT_EQ(d.beta1, 0.0);
  EXPECT_NEAR(d.beta2, std::pow(0.99, 16.0 / 17.0), 1e-15);
}

TEST(R1, ValueMatchesFiniteDifferenceInputGradient) {
  Rng rng(1);
  ConvCritic<double> d({8, 32, 4, 6}, rng);
  const auto x = rng.uniform_tensor<double>({2, 3, 8, 8}, -1.0, 1.0);
  const double gamma = 3.0;
  auto r1 = r1_penalty([&](const Var<double>& v) { return d(v); }, x, gamma);

  ag::NoGradGuard ng;
  const double h = 1e-5;
  double sq = 0;
  for (std::int64_t i = 0; i < x.size(); ++i) {
    Tensor<double> a = x, b = x;
    a[i] += h;
    b[i] -= h;
    const double g = (ag::sum(d(ag::constant(a))).item() - ag::sum(d(ag::constant(b))).item()) / (2 * h);
    sq += g * g;
  }
  EXPECT_NEAR(r1.item(), gamma / 2 * sq / 2, 1e-6 * std::max(1.0, r1.item()));
}

TEST(R1, ParameterGradientMatchesFiniteDifferences) {
  Rng rng(2);
  ProjectionCritic<double> d({8, 32, 4, 6}, 5, rng);
  const auto x = rng.uniform_tensor<double>({2, 3, 8, 8}, -1.0, 1.0);
  const auto z = ag::constant(rng.normal_tensor<double>({2, 5}));
  auto params = d.parameters("d");
  auto penalty = [&] { return r1_penalty([&](const Var<double>& v) { return d(v, z); }, x, 1.0); };
  for (const std::string name : {"d.trunk.block0.conv2.weight", "d.v", "d.psi.weight"}) {
    Var<double> target;
    for (auto& [n, p] : params)
      if (n == name) target = p;
    const auto analytic = ag::grad(penalty(), {target})[0].value();
    double worst = 0, scale = 0;
    for (std::int64_t i = 0; i < target.size(); i += std::max<std::int64_t>(1, target.size() / 12)) {
      const double saved = target.value()[i];
      const double h = 1e-5;
      target.mutable_value()[i] = saved + h;
      const double up = penalty().item();
      target.mutable_value()[i] = saved - h;
      const double dn = penalty().item();
      target.mutable_value()[i] = saved;
      const double num = (up - dn) / (2 * h);
      worst = std::max(worst, std::abs(num - analytic[i]));
      scale = std::max({scale, std::abs(num), std::abs(analytic[i])});
    }
    EXPECT_LT(worst, 1e-4 * std::max(scale, 1e-3)) << name;
  }
}

struct Batch {
  Tensor<float> faces, styles, z_s;
};

Batch random_batch(Rng& rng, std::int64_t b) {
  return {rng.uniform_tensor<float>({b, 3, 8, 8}, -1.f, 1.f), rng.uniform_tensor<float>({b, 3, 8, 8}, -1.f, 1.f),
          rng.normal_tensor<float>({b, 6})};
}

TEST(TrainStep, RunsUpdatesBothSidesAndFillsQueue) {
  TrainState<float> st(tiny_model(), tiny_train(7), Rng(7));
  const auto g_before = nn::params_hash(st.model.generator_params());
  const auto d_before = nn::params_hash(st.model.critic_params());
  Rng data(8);
  for (int k = 0; k < 4; ++k) {
    auto b = random_batch(data, 2);
    auto log = train_step(st, b.faces, b.styles, b.z_s);
    EXPECT_EQ(log.iteration, k);
    for (double v : {log.d_face, log.d_style, log.d_latent, log.g_face, log.g_style, log.g_latent})
      EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(log.critic_accuracy, 0.0);
    EXPECT_LE(log.critic_accuracy, 1.0);
    if (k % 2 == 0) {
      EXPECT_GT(log.r1, 0.0);
      EXPECT_GT(log.mean_path_length, 0.0);
    } else {
      EXPECT_EQ(log.r1, 0.0);
    }
  }
  EXPECT_EQ(st.iteration, 4);
  EXPECT_EQ(st.history.size(), 4u);
  // Seeded with the first batch, then one push per step.
  EXPECT_EQ(st.model.queue.size(), 10u);
  EXPECT_NE(nn::params_hash(st.model.generator_params()), g_before);
  EXPECT_NE(nn::params_hash(st.model.critic_params()), d_before);
}

TEST(TrainStep, MaskReceivesGradient) {
  TrainState<float> st(tiny_model(), tiny_train(9), Rng(9));
  Rng data(10);
  auto b = random_batch(data, 2);
  const auto before = st.model.g.mask().alpha().value();
  train_step(st, b.faces, b.styles, b.z_s);
  EXPECT_GT(max_abs_diff(st.model.g.mask().alpha().value(), before), 0.0);
}

TEST(TrainStep, SameSeedSameTrajectory) {
  TrainState<float> a(tiny_model(), tiny_train(11), Rng(11));
  TrainState<float> b(tiny_model(), tiny_train(11), Rng(11));
  Rng da(12), db(12);
  for (int k = 0; k < 3; ++k) {
    auto ba = random_batch(da, 2), bb = random_batch(db, 2);
    auto la = train_step(a, ba.faces, ba.styles, ba.z_s);
    auto lb = train_step(b, bb.faces, bb.styles, bb.z_s);
    EXPECT_EQ(la.d_latent, lb.d_latent);
    EXPECT_EQ(la.g_style, lb.g_style);
  }
  EXPECT_EQ(nn::params_hash(a.model.generator_params()), nn::params_hash(b.model.generator_params()));
}

TEST(TrainStep, FinetuneModeLeavesQueueAlone) {
  TrainState<float> st(tiny_model(), tiny_train(13), Rng(13));
  Rng data(14);
  auto b = random_batch(data, 2);
  train_step(st, b.faces, b.styles, b.z_s, {.push_queue = false});
  EXPECT_EQ(st.model.queue.size(), 2u);  // seed batch only
}

TEST(TrainStep, NonFiniteInputRaisesNumericalError) {
  TrainState<float> st(tiny_model(), tiny_train(15), Rng(15));
  Rng data(16);
  auto b = random_batch(data, 2);
  b.faces[5] = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(train_step(st, b.faces, b.styles, b.z_s), NumericalError);
}

TEST(TrainStep, ZeroLearningRateLeavesParametersBitwise) {
  auto tc = tiny_train(19);
  tc.adam.lr = 0.0;
  TrainState<float> st(tiny_model(), tc, Rng(19));
  const auto g = nn::params_hash(st.model.generator_params());
  const auto d = nn::params_hash(st.model.critic_params());
  Rng data(20);
  for (int k = 0; k < 2; ++k) {
    auto b = random_batch(data, 2);
    train_step(st, b.faces, b.styles, b.z_s);
  }
  EXPECT_EQ(nn::params_hash(st.model.generator_params()), g);
  EXPECT_EQ(nn::params_hash(st.model.critic_params()), d);
}

// Each phase moves only its own side: freezing one optimizer freezes exactly
// that side.
TEST(TrainStep, CriticAndGeneratorUpdatesAreSeparated) {
  for (bool freeze_g : {true, false}) {
    TrainState<float> st(tiny_model(), tiny_train(21), Rng(21));
    auto off = (freeze_g ? st.adam_g : st.adam_d).config();
    off.lr = 0;
    (freeze_g ? st.adam_g : st.adam_d).set_config(off);
    const auto g = nn::params_hash(st.model.generator_params());
    const auto d = nn::params_hash(st.model.critic_params());
    Rng data(22);
    auto b = random_batch(data, 2);
    train_step(st, b.faces, b.styles, b.z_s);
    EXPECT_EQ(nn::params_hash(st.model.generator_params()) == g, freeze_g);
    EXPECT_EQ(nn::params_hash(st.model.critic_params()) == d, !freeze_g);
  }
}

// Two flat textures, one per domain; the critics should separate real from
// generated well above chance within 200 steps.
TEST(TrainStep, CriticAccuracyRisesOnTwoTextureCorpus) {
  TrainState<float> st(tiny_model(), tiny_train(23), Rng(23));
  Rng data(24);
  auto texture = [](std::int64_t b, bool stripes) {
    Tensor<float> t({b, 3, 8, 8});
    for (std::int64_t n = 0; n < b; ++n)
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x)
            t[((n * 3 + c) * 8 + y) * 8 + x] = stripes ? ((x / 2) % 2 ? 0.8f : -0.8f) : ((x + y) % 2 ? 0.5f : -0.5f);
    return t;
  };
  const auto faces = texture(2, false), styles = texture(2, true);
  double early = 0, late = 0;
  for (int k = 0; k < 200; ++k) {
    auto log = train_step(st, faces, styles, data.normal_tensor<float>({2, 6}));
    if (k < 20) early += log.critic_accuracy / 20;
    if (k >= 150) late += log.critic_accuracy / 50;
  }
  EXPECT_GT(late, 0.5);
  RecordProperty("early_accuracy", std::to_string(early));
  RecordProperty("late_accuracy", std::to_string(late));
}

TEST(Finetune, EncoderFrozenAndQueueUntouched) {
  EncoderConfig ec;
  ec.backbone.layers = {{4, 1, 1}, {4, 2, 1}};
  ec.backbone.tap_points = {0, 1};
  ec.backbone.input_resolution = 8;
  ec.predictor_hidden = {16, 16, 16};
  ec.style_dim = 6;
  ec.projection_hidden = {8};
  ec.projection_dim = 4;
  StyleEncoder<float> enc(ec);
  Rng er(25);
  enc.initialize(er);
  const auto h = enc.hash();
  TrainState<float> st(tiny_model(), tiny_train(26), Rng(26));
  Rng data(27);
  auto b = random_batch(data, 2);
  train_step(st, b.faces, b.styles, b.z_s);
  const auto queue = st.model.queue.items();
  const auto g = nn::params_hash(st.model.generator_params());
  auto ref = data.uniform_tensor<float>({1, 3, 8, 8}, -1.f, 1.f);
  auto logs = one_shot_finetune(
      st, enc, ref, [&](std::int64_t, std::int64_t n) { return data.uniform_tensor<float>({n, 3, 8, 8}, -1.f, 1.f); },
      5);
  EXPECT_EQ(logs.size(), 5u);
  EXPECT_EQ(enc.hash(), h);
  EXPECT_EQ(st.model.queue.items(), queue);
  EXPECT_NE(nn::params_hash(st.model.generator_params()), g);
  EXPECT_EQ(st.iteration, 6);
}

TEST(TrainStep, RejectsMismatchedBatches) {
  TrainState<float> st(tiny_model(), tiny_train(17), Rng(17));
  Rng data(18);
  auto b = random_batch(data, 2);
  auto c = random_batch(data, 3);
  EXPECT_THROW(train_step(st, b.faces, c.styles, b.z_s), ArgumentError);
}

}  // namespace
}  // namespace blendlab
