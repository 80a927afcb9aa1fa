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

#include <filesystem>
#include <limits>

#include "blendlab/checkpoint.hpp"

namespace blendlab {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("blendlab_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

RunConfig tiny_run() {
  RunConfig c;
  c.seed = 5;
  c.resolution = 8;
  c.w_dim = 16;
  c.z_dim = 8;
  c.mapping_depth = 2;
  c.channel_base = 64;
  c.channel_max = 8;
  c.critic_feature_dim = 6;
  c.style_dim = 6;
  c.encoder_resolution = 16;
  c.predictor_hidden = {16, 16, 16};
  c.projection_hidden = {8};
  c.projection_dim = 4;
  c.batch = 2;
  c.r1_interval = 2;
  c.path_interval = 2;
  return c;
}

TEST(KeyValues, ParsesCommentsAndRejectsMalformedLines) {
  std::istringstream ok("# header\n seed = 7 \nout_dir=runs/x # trailing\n\n");
  auto kv = parse_key_values(ok);
  EXPECT_EQ(kv.at("seed"), "7");
  EXPECT_EQ(kv.at("out_dir"), "runs/x");
  std::istringstream dup("a = 1\na = 2\n");
  EXPECT_THROW(parse_key_values(dup), ConfigError);
  std::istringstream bare("seed 7\n");
  EXPECT_THROW(parse_key_values(bare), ConfigError);
}

TEST(RunConfig, UnknownKeysAndBadValuesAreRejected) {
  RunConfig c;
  EXPECT_THROW(c.apply({{"sed", "1"}}), ConfigError);
  EXPECT_THROW(c.apply({{"seed", "x1"}}), ConfigError);
  EXPECT_THROW(c.apply({{"lr", "0.1.2"}}), ConfigError);
  EXPECT_THROW(c.apply({{"direct_gram", "maybe"}}), ConfigError);
  c.apply({{"seed", "9"}, {"lr", "0.001"}, {"predictor_hidden", "8, 4,2"}, {"direct_gram", "true"}});
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.lr, 0.001);
  EXPECT_EQ(c.predictor_hidden, (std::vector<std::int64_t>{8, 4, 2}));
  EXPECT_TRUE(c.direct_gram);
}

TEST(RunConfig, ValidationCatchesBadValues) {
  RunConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.resolution = 48;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig{};
  c.predictor_hidden = {64};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(RunConfig, DumpRoundTripsExactly) {
  RunConfig a = tiny_run();
  a.theta = 0.1 + 0.2;  // not representable in short decimal
  a.path_decay = 1.0 / 3.0;
  std::istringstream in(a.dump());
  RunConfig b;
  b.apply(parse_key_values(in));
  EXPECT_EQ(a.dump(), b.dump());
  EXPECT_EQ(b.theta, a.theta);
  EXPECT_EQ(b.path_decay, a.path_decay);
}

TEST(Bundle, RoundTripIsBitwiseAndOffsetsFollowShapes) {
  Bundle b;
  Rng rng(1);
  b.add("a", rng.normal_tensor<float>({3, 4}));
  Tensor<float> odd({2});
  odd[0] = -0.0f;
  odd[1] = std::numeric_limits<float>::denorm_min();
  b.add("odd", odd);
  b.add("s", Tensor<float>::scalar(1.5f));
  b.set("rng_state", rng.state());
  const auto dir = scratch_dir("bundle");
  b.save(dir);
  EXPECT_EQ(fs::file_size(dir / "tensors.bin"), 4u * (12 + 2 + 1));
  auto c = Bundle::load(dir);
  ASSERT_EQ(c.tensors.size(), 3u);
  for (const auto& [name, t] : b.tensors) EXPECT_TRUE(bitwise_equal(t, c.tensor(name))) << name;
  EXPECT_EQ(c.get("rng_state"), rng.state());
  // Offsets in the manifest follow the cumulative byte sizes.
  std::ifstream man(dir / "manifest.txt");
  std::string line;
  std::vector<std::uint64_t> offsets;
  while (std::getline(man, line))
    if (line.rfind("tensor ", 0) == 0) {
      std::istringstream is(line);
      std::string w, n;
      std::uint64_t off;
      is >> w >> n >> off;
      offsets.push_back(off);
    }
  EXPECT_EQ(offsets, (std::vector<std::uint64_t>{0, 48, 56}));
  fs::remove_all(dir);
}

TEST(Bundle, CorruptionIsDetected) {
  Bundle b;
  b.add("a", Tensor<float>::ones({4}));
  const auto dir = scratch_dir("corrupt");
  b.save(dir);
  fs::resize_file(dir / "tensors.bin", 8);
  EXPECT_THROW(Bundle::load(dir), CheckpointError);
  b.save(dir);
  {
    std::ofstream extra(dir / "tensors.bin", std::ios::app | std::ios::binary);
    extra << "xxxx";
  }
  EXPECT_THROW(Bundle::load(dir), CheckpointError);
  {
    std::ofstream man(dir / "manifest.txt");
    man << "blendlab-checkpoint 99\n";
  }
  EXPECT_THROW(Bundle::load(dir), CheckpointError);
  EXPECT_THROW(Bundle::load(dir / "missing"), CheckpointError);
  fs::remove_all(dir);
}

TEST(Checkpoint, EncoderRoundTripReproducesEmbeddings) {
  const RunConfig c = tiny_run();
  StyleEncoder<float> enc(c.encoder_config());
  Rng rng(c.seed);
  enc.initialize(rng);
  auto x = rng.uniform_tensor<float>({3, 3, 16, 16}, -1.f, 1.f);
  enc.fit_descriptor_normalization(enc.descriptor(x));
  Bundle b;
  store_encoder(b, c, enc);
  const auto dir = scratch_dir("encoder");
  b.save(dir);
  auto loaded = load_encoder(Bundle::load(dir));
  EXPECT_EQ(loaded.hash(), enc.hash());
  EXPECT_TRUE(bitwise_equal(loaded.encode(x), enc.encode(x)));
  fs::remove_all(dir);
}

struct Batch {
  Tensor<float> faces, styles, z_s;
};
Batch batch_for(std::uint64_t step) {
  Rng r = Rng::derive(99, step);
  return {r.uniform_tensor<float>({2, 3, 8, 8}, -1.f, 1.f), r.uniform_tensor<float>({2, 3, 8, 8}, -1.f, 1.f),
          r.normal_tensor<float>({2, 6})};
}

// save -> load -> one step equals one uninterrupted step, bitwise.
TEST(Checkpoint, ResumeReproducesNextStepBitwise) {
  const RunConfig c = tiny_run();
  TrainState<float> st(c.model_config(), c.train_config(), Rng(c.seed));
  for (std::uint64_t k = 0; k < 3; ++k) {
    auto b = batch_for(k);
    train_step(st, b.faces, b.styles, b.z_s);
  }
  Bundle bundle;
  store_train_state(bundle, c, st);
  const auto dir = scratch_dir("resume");
  bundle.save(dir);
  auto resumed = load_train_state(Bundle::load(dir));
  EXPECT_EQ(resumed.iteration, 3);
  EXPECT_EQ(resumed.history.size(), 3u);
  EXPECT_EQ(resumed.rng, st.rng);
  EXPECT_EQ(resumed.model.queue.items(), st.model.queue.items());

  // Saving the resumed state gives byte-identical files.
  Bundle again;
  store_train_state(again, c, resumed);
  const auto dir2 = scratch_dir("resume2");
  again.save(dir2);
  for (const char* f : {"manifest.txt", "tensors.bin"}) {
    std::ifstream a(dir / f, std::ios::binary), b(dir2 / f, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb) << f;
  }

  for (std::uint64_t k = 3; k < 5; ++k) {
    auto b = batch_for(k);
    auto la = train_step(st, b.faces, b.styles, b.z_s);
    auto lb = train_step(resumed, b.faces, b.styles, b.z_s);
    EXPECT_EQ(la.d_latent, lb.d_latent);
    EXPECT_EQ(la.g_face, lb.g_face);
    EXPECT_EQ(la.path, lb.path);
  }
  auto pa = st.model.generator_params(), pb = resumed.model.generator_params();
  for (std::size_t i = 0; i < pa.size(); ++i)
    EXPECT_TRUE(bitwise_equal(pa[i].second.value(), pb[i].second.value())) << pa[i].first;
  EXPECT_EQ(nn::params_hash(st.model.critic_params()), nn::params_hash(resumed.model.critic_params()));
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(Checkpoint, ShapeMismatchIsReported) {
  const RunConfig c = tiny_run();
  TrainState<float> st(c.model_config(), c.train_config(), Rng(c.seed));
  Bundle bundle;
  store_train_state(bundle, c, st);
  RunConfig wider = c;
  wider.w_dim = 32;
  bundle.set_config("config", wider);
  EXPECT_THROW(load_train_state(bundle), CheckpointError);
}

}  // namespace
}  // namespace blendlab
