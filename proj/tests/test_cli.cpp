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

// Drives the blendlab binary end to end on a tiny configuration.

#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <sstream>

#include "blendlab/toy_corpus.hpp"
#include "blendlab/workflows.hpp"

#ifndef BLENDLAB_CLI
#error "BLENDLAB_CLI must point at the blendlab binary"
#endif

namespace blendlab {
namespace {

const char* kTinyConfig = R"(# small enough for a unit test
resolution = 8
w_dim = 16
z_dim = 8
mapping_depth = 2
channel_base = 64
channel_max = 8
critic_feature_dim = 6
style_dim = 6
encoder_resolution = 16
predictor_hidden = 16,16,16
projection_hidden = 8
projection_dim = 4
batch = 2
r1_interval = 2
path_interval = 2
encoder_batch = 8
encoder_steps = 12
iterations = 6
checkpoint_every = 3
sample_every = 3
fid_samples = 12
diversity_faces = 2
styles_per_face = 3
finetune_steps = 3
count = 3
seed = 5
)";

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Log text without the trailing wall-time column of each record.
std::string strip_wall(const std::string& log) {
  std::istringstream in(log);
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.find_last_of(' ')) + '\n';
  return out;
}

class Cli : public ::testing::Test {
 protected:
  static fs::path root;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / ("blendlab_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "tiny.cfg") << kTinyConfig;
    toy::write_corpus(root / "faces", "face", 1, 0, 24, 16);
    toy::write_corpus(root / "styles", "style", 2, 0, 24, 16);
    ASSERT_EQ(run("encoder-train --style-corpus styles --out-dir enc"), 0);
    ASSERT_EQ(run("gan-train --encoder-checkpoint enc/checkpoint --face-corpus faces --style-corpus styles --out-dir gan"), 0);
  }
  static void TearDownTestSuite() { fs::remove_all(root); }

  // Runs the binary inside `root` with the tiny config; returns the exit code.
  static int run(const std::string& args) {
    const std::string cmd = "cd '" + root.string() + "' && '" BLENDLAB_CLI "' " + args.substr(0, args.find(' ')) +
                            " --config tiny.cfg -q" + (args.find(' ') == std::string::npos ? "" : args.substr(args.find(' '))) +
                            " > /dev/null 2> last_stderr.txt";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

fs::path Cli::root;

TEST_F(Cli, MissingCorpusExitsTwoAndWritesNothing) {
  EXPECT_EQ(run("encoder-train --style-corpus no_such_dir --out-dir never"), 2);
  EXPECT_FALSE(fs::exists(root / "never"));
}

TEST_F(Cli, GanTrainWithoutEncoderCheckpointExitsTwo) {
  EXPECT_EQ(run("gan-train --face-corpus faces --style-corpus styles --out-dir never2"), 2);
  EXPECT_FALSE(fs::exists(root / "never2"));
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run("generate --no-such-flag"), 2);
  EXPECT_EQ(run("generate --checkpoint gan/checkpoint --set no_such_key=1"), 2);
  EXPECT_EQ(run("generate --checkpoint gan/checkpoint --set batch=abc"), 2);
}

TEST_F(Cli, EncoderCheckpointLoadsAndLogIsComplete) {
  const auto b = Bundle::load(root / "enc" / "checkpoint");
  auto enc = load_encoder(b);
  EXPECT_EQ(enc.style_dim(), 6);
  std::istringstream log(slurp(root / "enc" / "encoder_log.txt"));
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) ++lines;
  EXPECT_EQ(lines, 1 + 12);
  EXPECT_TRUE(fs::exists(root / "enc" / "encoder-train_config.txt"));
}

TEST_F(Cli, EncoderRerunIsIdentical) {
  const std::string log = slurp(root / "enc" / "encoder_log.txt");
  const std::string blob = slurp(root / "enc" / "checkpoint" / "tensors.bin");
  const std::string manifest = slurp(root / "enc" / "checkpoint" / "manifest.txt");
  ASSERT_EQ(run("encoder-train --style-corpus styles --out-dir enc"), 0);
  EXPECT_EQ(slurp(root / "enc" / "encoder_log.txt"), log);
  EXPECT_EQ(slurp(root / "enc" / "checkpoint" / "tensors.bin"), blob);
  EXPECT_EQ(slurp(root / "enc" / "checkpoint" / "manifest.txt"), manifest);
}

TEST_F(Cli, GanTrainWritesPeriodicArtifacts) {
  EXPECT_TRUE(fs::exists(root / "gan" / "samples" / "iter_000003.png"));
  EXPECT_TRUE(fs::exists(root / "gan" / "samples" / "iter_000006.png"));
  const auto b = Bundle::load(root / "gan" / "checkpoint");
  EXPECT_EQ(b.get_int("iteration"), 6);
  EXPECT_EQ(b.get_int("num_layers"), 4);
  EXPECT_EQ(b.history.size(), 6u);
}

TEST_F(Cli, ResumedRunMatchesUnbrokenRun) {
  ASSERT_EQ(run("gan-train --encoder-checkpoint enc/checkpoint --face-corpus faces --style-corpus styles "
                "--out-dir split --iterations 3"),
            0);
  ASSERT_EQ(run("gan-train --checkpoint split/checkpoint --face-corpus faces --style-corpus styles --out-dir split"), 0);
  EXPECT_EQ(strip_wall(slurp(root / "split" / "train_log.txt")), strip_wall(slurp(root / "gan" / "train_log.txt")));
  EXPECT_EQ(slurp(root / "split" / "checkpoint" / "tensors.bin"), slurp(root / "gan" / "checkpoint" / "tensors.bin"));
}

TEST_F(Cli, GenerateAtLastIndicatorGivesIdenticalFiles) {
  ASSERT_EQ(run("generate --checkpoint gan/checkpoint --indicator 4 --out-dir gen_l"), 0);
  for (int k = 0; k < 3; ++k) {
    const std::string n = "000" + std::to_string(k);
    EXPECT_EQ(slurp(root / "gen_l" / ("face_" + n + ".png")), slurp(root / "gen_l" / ("stylized_" + n + ".png")));
  }
  const std::string prov = slurp(root / "gen_l" / "provenance.txt");
  EXPECT_NE(prov.find("seed = 5"), std::string::npos);
  EXPECT_NE(prov.find("indicator = 4"), std::string::npos);
  EXPECT_NE(prov.find("theta = 0.5"), std::string::npos);
}

TEST_F(Cli, GenerateFullBlendDiffersAndDefaultsThetaToOne) {
  ASSERT_EQ(run("generate --checkpoint gan/checkpoint --indicator 0 --out-dir gen_0"), 0);
  EXPECT_NE(slurp(root / "gen_0" / "face_0000.png"), slurp(root / "gen_0" / "stylized_0000.png"));
  EXPECT_NE(slurp(root / "gen_0" / "provenance.txt").find("theta = 1\n"), std::string::npos);
}

TEST_F(Cli, IndicatorOutOfRangeExitsTwo) {
  EXPECT_EQ(run("generate --checkpoint gan/checkpoint --indicator 5 --out-dir gen_bad"), 2);
  EXPECT_EQ(run("generate --checkpoint gan/checkpoint --indicator -1 --out-dir gen_bad"), 2);
  EXPECT_FALSE(fs::exists(root / "gen_bad"));
}

TEST_F(Cli, ReferenceModeMatchesEncodeThenBlend) {
  ASSERT_EQ(run("generate --checkpoint gan/checkpoint --mode reference --reference styles/style_000004.png "
                "--indicator 2 --out-dir gen_ref"),
            0);
  // Same draws in process: z_f from the generate stream, z_s from the encoder.
  auto ck = load_gan((root / "gan" / "checkpoint").string());
  const auto& g = ck.state->model.g;
  Rng rng = Rng::derive(5, salt::kGenerate);
  auto z_f = rng.normal_tensor<float>({3, g.config().z_dim});
  auto z_ref = ck.encoder.encode(load_reference((root / "styles" / "style_000004.png").string(), 16));
  Tensor<float> z_s({3, z_ref.dim(1)});
  for (int k = 0; k < 3; ++k) std::copy_n(z_ref.data(), z_ref.size(), z_s.data() + k * z_ref.size());
  auto noise = NoiseBundle<float>::random(g.config().synthesis, 3, rng);
  auto imgs = render_pairs(g, z_f, z_s, noise, 2, 0.5);
  for (int k = 0; k < 3; ++k) {
    const auto file = read_image(root / "gen_ref" / ("stylized_000" + std::to_string(k) + ".png"));
    EXPECT_EQ(file.rgb, to_image(imgs.stylized, k).rgb);
  }
}

TEST_F(Cli, EmbedExportsRowsTimesDimFloats) {
  ASSERT_EQ(run("embed --checkpoint enc/checkpoint --style-corpus styles --out-dir emb"), 0);
  EXPECT_EQ(fs::file_size(root / "emb" / "embeddings.f32"), 24u * 6u * 4u);
  const std::string m = slurp(root / "emb" / "embeddings.txt");
  EXPECT_NE(m.find("rows = 24"), std::string::npos);
  EXPECT_NE(m.find("dim = 6"), std::string::npos);
}

TEST_F(Cli, SweepEvalAndFinetuneRun) {
  ASSERT_EQ(run("sweep --checkpoint gan/checkpoint --style-corpus styles --indicator 3 --out-dir sw"), 0);
  const std::string table = slurp(root / "sw" / "sweep.txt");
  EXPECT_NE(table.find(" *\n"), std::string::npos);
  ASSERT_EQ(run("eval --checkpoint gan/checkpoint --style-corpus styles --face-corpus faces --indicator 2 --out-dir ev"), 0);
  EXPECT_NE(slurp(root / "ev" / "eval.txt").find("face_fid"), std::string::npos);
  ASSERT_EQ(run("finetune --checkpoint gan/checkpoint --reference styles/style_000001.png --face-corpus faces "
                "--out-dir ft"),
            0);
  const auto before = Bundle::load(root / "gan" / "checkpoint"), after = Bundle::load(root / "ft" / "checkpoint");
  EXPECT_EQ(load_encoder(before).hash(), load_encoder(after).hash());
  EXPECT_EQ(after.get_int("iteration"), 9);
}

TEST_F(Cli, NumericalBlowUpExitsThreeWithSnapshot) {
  EXPECT_EQ(run("gan-train --encoder-checkpoint enc/checkpoint --face-corpus faces --style-corpus styles "
                "--out-dir boom --set lr=1e30"),
            3);
  EXPECT_TRUE(Bundle::load(root / "boom" / "crash_snapshot").has_meta("crash_reason"));
}

TEST_F(Cli, MaskDebugPrintsThreeRows) {
  const std::string cmd = "'" BLENDLAB_CLI "' mask -q --resolution 16 --indicator 2 --theta 0.25 > '" +
                          (root / "mask.txt").string() + "'";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_EQ(slurp(root / "mask.txt"),
            "alpha 0.5 0.5 0.5 0.5 0.5 0.5\nmask 0 0 0.25 1 1 1\nalpha_hat 0 0 0.125 0.5 0.5 0.5\n");
}

}  // namespace
}  // namespace blendlab
