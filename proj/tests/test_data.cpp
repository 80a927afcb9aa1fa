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

#include <set>

#include "blendlab/data_pipeline.hpp"
#include "blendlab/toy_corpus.hpp"

namespace blendlab {
namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("blendlab_data_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Image8 noise_image(Rng& rng, int w, int h) {
  Image8 img;
  img.width = w;
  img.height = h;
  img.rgb.resize(static_cast<std::size_t>(w) * h * 3);
  for (auto& v : img.rgb) v = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

TEST(ImageIo, PixelMappingEndpoints) {
  Image8 img;
  img.width = 2;
  img.height = 1;
  img.rgb = {0, 0, 0, 255, 255, 255};
  auto t = to_tensor<float>(img);
  EXPECT_EQ(t[0], -1.f);
  EXPECT_EQ(t[1], 1.f);
  EXPECT_EQ(to_image(t).rgb, img.rgb);
}

TEST(ImageIo, PngRoundTripIsExact) {
  TempDir dir("png");
  Rng rng(1);
  auto img = noise_image(rng, 7, 5);
  write_png(dir.path / "a.png", img);
  auto back = read_image(dir.path / "a.png");
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.height, 5);
  EXPECT_EQ(back.rgb, img.rgb);
}

TEST(ImageIo, CenterCropAveragesIntegerFactors) {
  // 6x4 source: crop the central 4x4, then average 2x2 blocks.
  Image8 img;
  img.width = 6;
  img.height = 4;
  img.rgb.resize(6 * 4 * 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 6; ++x)
      for (int c = 0; c < 3; ++c) img.rgb[(y * 6 + x) * 3 + c] = static_cast<std::uint8_t>(10 * x + y + c);
  auto out = center_crop_resize(img, 2);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x)
      for (int c = 0; c < 3; ++c) {
        int acc = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) acc += 10 * (1 + 2 * x + dx) + (2 * y + dy) + c;
        EXPECT_EQ(out.rgb[(y * 2 + x) * 3 + c], (acc + 2) / 4);
      }
}

TEST(Ingest, EmptyDirectoryGivesEmptyManifestAndWarning) {
  TempDir dir("empty");
  auto c = ingest(dir.path, 16);
  EXPECT_EQ(c.size(), 0);
  EXPECT_FALSE(c.manifest.warnings.empty());
  BatchPlan plan(1, 2, 0);
  EXPECT_THROW(next_batch<float>(c, plan, 0), StateError);
}

TEST(Ingest, MissingDirectoryIsConfigError) { EXPECT_THROW(ingest("/nonexistent/blendlab", 16), ConfigError); }

TEST(Ingest, MixedSizesAndFormatsBecomeSquareEntries) {
  TempDir dir("mixed");
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const int w = 20 + static_cast<int>(rng.below(70)), h = 20 + static_cast<int>(rng.below(70));
    auto img = noise_image(rng, w, h);
    char name[32];
    std::snprintf(name, sizeof(name), "img_%03d.%s", i, i % 3 ? "png" : "jpg");
    if (i % 3) {
      write_png(dir.path / name, img);
    } else {
      write_jpeg(dir.path / name, img);
    }
  }
  { std::ofstream(dir.path / "notes.txt") << "not an image"; }
  auto c = ingest(dir.path, 64);
  ASSERT_EQ(c.size(), 100);
  ASSERT_EQ(c.manifest.rejects.size(), 1u);
  EXPECT_EQ(c.manifest.rejects[0].first, "notes.txt");
  auto all = c.all<float>();
  EXPECT_EQ(all.shape(), (Shape{100, 3, 64, 64}));
  for (float v : all.values()) {
    ASSERT_GE(v, -1.f);
    ASSERT_LE(v, 1.f);
  }
  for (const auto& e : c.manifest.entries) {
    EXPECT_GE(e.width, 20);
    EXPECT_GE(e.height, 20);
  }
}

TEST(Ingest, ReingestIsStableAndUsesCache) {
  TempDir dir("stable");
  toy::write_corpus(dir.path, "face", 3, 0, 12, 32);
  auto a = ingest(dir.path, 16);
  ASSERT_EQ(a.size(), 12);
  EXPECT_TRUE(fs::exists(cache_path(cache_root_for(dir.path), a.manifest.entries[0].hash, 16)));
  auto b = ingest(dir.path, 16);
  EXPECT_EQ(a.manifest.hash(), b.manifest.hash());
  EXPECT_EQ(a.pixels, b.pixels);
  // The text format lists path, hash, width, height.
  std::istringstream is(a.manifest.text());
  std::string header, path, hash;
  int w, h;
  std::getline(is, header);
  is >> path >> hash >> w >> h;
  EXPECT_EQ(path, "face_000000.png");
  EXPECT_EQ(w, 32);
  EXPECT_EQ(h, 32);
}

TEST(Ingest, CacheRootFollowsEnvironment) {
  TempDir dir("env");
  TempDir cache("envcache");
  toy::write_corpus(dir.path, "style", 4, 0, 3, 16);
  ::setenv("BLENDLAB_CACHE", cache.path.c_str(), 1);
  auto c = ingest(dir.path, 8);
  ::unsetenv("BLENDLAB_CACHE");
  EXPECT_TRUE(fs::exists(cache_path(cache.path, c.manifest.entries[2].hash, 8)));
  EXPECT_FALSE(fs::exists(dir.path / ".blendlab_cache"));
}

TEST(BatchPlan, SameStepSameBatch) {
  BatchPlan p(7, 5, 23);
  EXPECT_EQ(p.indices(11), p.indices(11));
  BatchPlan q(7, 5, 23);
  EXPECT_EQ(p.indices(3), q.indices(3));
}

TEST(BatchPlan, EachEpochIsABijection) {
  const std::int64_t n = 24;
  BatchPlan p(9, 4, n);
  for (std::int64_t epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::int64_t> seen;
    for (std::int64_t s = epoch * n / 4; s < (epoch + 1) * n / 4; ++s)
      for (auto i : p.indices(s)) seen.insert(i);
    ASSERT_EQ(seen.size(), static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) EXPECT_EQ(seen.count(i), 1u);
  }
  EXPECT_NE(p.permutation(0), p.permutation(1));
}

TEST(BatchPlan, WrapsAcrossEpochsWithFreshPermutation) {
  BatchPlan p(10, 4, 6);
  auto b1 = p.indices(1);  // positions 4..7 straddle epochs 0 and 1
  auto e0 = p.permutation(0), e1 = p.permutation(1);
  EXPECT_EQ(b1[0], e0[4]);
  EXPECT_EQ(b1[1], e0[5]);
  EXPECT_EQ(b1[2], e1[0]);
  EXPECT_EQ(b1[3], e1[1]);
}

// With n = 50 two independent uniform permutations agree with probability
// 1/50!, so distinct seeds must differ.
TEST(BatchPlan, DifferentSeedsGiveDifferentPermutations) {
  int same = 0;
  for (std::uint64_t s = 0; s < 20; ++s) same += BatchPlan(s, 1, 50).permutation(0) == BatchPlan(s + 100, 1, 50).permutation(0);
  EXPECT_EQ(same, 0);
}

TEST(NextBatch, DeterministicAndInRange) {
  TempDir dir("batch");
  toy::write_corpus(dir.path, "style", 5, 0, 10, 16);
  auto c = ingest(dir.path, 16);
  BatchPlan plan(3, 4, c.size());
  auto a = next_batch<float>(c, plan, 2), b = next_batch<float>(c, plan, 2);
  EXPECT_TRUE(bitwise_equal(a, b));
  EXPECT_EQ(a.shape(), (Shape{4, 3, 16, 16}));
  BatchPlan wrong(3, 4, 11);
  EXPECT_THROW(next_batch<float>(c, wrong, 0), ArgumentError);
}

TEST(ToyCorpus, ImagesDependOnlyOnSeedAndIndex) {
  auto all = toy::style_corpus<float>(8, 0, 12, 16);
  auto one = toy::style_corpus<float>(8, 7, 1, 16);
  EXPECT_TRUE(std::equal(one.values().begin(), one.values().end(), all.data() + 7 * 3 * 16 * 16));
  auto faces = toy::face_corpus<float>(8, 0, 4, 16);
  for (float v : faces.values()) {
    ASSERT_GE(v, -1.f);
    ASSERT_LE(v, 1.f);
  }
}

}  // namespace
}  // namespace blendlab
