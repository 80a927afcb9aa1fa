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

// blendlab command-line entry point.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 runtime or
// numerical error.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "blendlab/toy_corpus.hpp"
#include "blendlab/workflows.hpp"

namespace {

using namespace blendlab;

constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

// Flag values stay text and go through RunConfig::apply, so a flag and the
// same key in a config file parse identically.
struct Flags {
  std::string config;
  std::map<std::string, std::string> values;  // key -> text, only flags actually given
  std::vector<std::string> sets;
  bool direct_gram = false;
  bool quiet = false;
};

struct Resolved {
  RunConfig config;
  bool theta_given = false;
};

Resolved resolve(const Flags& f) {
  Resolved r;
  KeyValues file;
  if (!f.config.empty()) file = read_key_values(f.config);
  r.config.apply(file);
  KeyValues over(f.values.begin(), f.values.end());
  for (const auto& s : f.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    over[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  r.config.apply(over);
  if (f.direct_gram) r.config.direct_gram = true;
  r.theta_given = file.count("theta") || over.count("theta");
  return r;
}

// Registers --<flag> writing into flags.values[key].
void text_flag(CLI::App* app, Flags& f, const std::string& flag, const std::string& key, const std::string& help) {
  app->add_option_function<std::string>("--" + flag, [&f, key](const std::string& v) { f.values[key] = v; }, help);
}

void common_flags(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "key = value config file; flags override it");
  text_flag(app, f, "seed", "seed", "master seed of the run");
  text_flag(app, f, "resolution", "resolution", "generator resolution (power of two)");
  text_flag(app, f, "out-dir", "out_dir", "output directory");
  text_flag(app, f, "checkpoint", "checkpoint", "checkpoint directory to load");
  app->add_flag("--direct-gram", f.direct_gram, "use the raw Gram descriptor as the style code");
  app->add_option("--set", f.sets, "override any config key: --set key=value (repeatable)");
  app->add_flag("-q,--quiet", f.quiet, "no progress output");
}

void generation_flags(CLI::App* app, Flags& f) {
  text_flag(app, f, "indicator", "indicator", "blending indicator i in [0, L]");
  text_flag(app, f, "theta", "theta", "fractional mask slot theta");
  text_flag(app, f, "mode", "mode", "latent | reference");
  text_flag(app, f, "reference", "reference", "reference style image");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"blendlab: artistic face stylization with a weighted latent blend"};
  app.require_subcommand(1);
  app.fallthrough(false);

  Flags flags;
  std::string command;
  auto sub = [&](const std::string& name, const std::string& help) {
    auto* s = app.add_subcommand(name, help);
    s->callback([&command, name] { command = name; });
    common_flags(s, flags);
    return s;
  };

  auto* enc = sub("encoder-train", "train the contrastive style encoder");
  text_flag(enc, flags, "style-corpus", "style_corpus", "directory of style images");
  text_flag(enc, flags, "steps", "encoder_steps", "optimizer steps");

  auto* gan = sub("gan-train", "adversarial training of generator and critics");
  text_flag(gan, flags, "encoder-checkpoint", "encoder_checkpoint", "trained encoder checkpoint");
  text_flag(gan, flags, "face-corpus", "face_corpus", "directory of natural face images");
  text_flag(gan, flags, "style-corpus", "style_corpus", "directory of style images");
  text_flag(gan, flags, "iterations", "iterations", "total iterations (resume continues up to this)");

  auto* gen = sub("generate", "write natural / stylized image pairs");
  generation_flags(gen, flags);
  text_flag(gen, flags, "count", "count", "number of pairs");

  auto* sweep = sub("sweep", "desk-FID and diversity across blending indicators");
  generation_flags(sweep, flags);
  text_flag(sweep, flags, "style-corpus", "style_corpus", "real style images for statistics and references");

  auto* embed = sub("embed", "export style embeddings of a corpus");
  text_flag(embed, flags, "style-corpus", "style_corpus", "images to embed");

  auto* fine = sub("finetune", "one-shot adaptation to a reference style");
  generation_flags(fine, flags);
  text_flag(fine, flags, "face-corpus", "face_corpus", "directory of natural face images");
  text_flag(fine, flags, "steps", "finetune_steps", "finetune iterations");

  auto* eval = sub("eval", "metric report for a checkpoint");
  generation_flags(eval, flags);
  text_flag(eval, flags, "style-corpus", "style_corpus", "real style images");
  text_flag(eval, flags, "face-corpus", "face_corpus", "real face images (optional)");

  auto* mask = sub("mask", "print alpha, m(i; theta) and alpha_hat");
  generation_flags(mask, flags);

  std::string toy_kind = "face";
  std::int64_t toy_first = 0, toy_count = 100, toy_res = 64;
  auto* toy = sub("make-toy", "write a synthetic face or style corpus");
  toy->add_option("--kind", toy_kind, "face | style")->check(CLI::IsMember({"face", "style"}));
  toy->add_option("--first", toy_first, "index of the first image");
  toy->add_option("--count", toy_count, "number of images");
  toy->add_option("--size", toy_res, "image side in pixels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const Resolved r = resolve(flags);
    const Console console{flags.quiet ? nullptr : &std::cerr};
    if (!flags.quiet) std::cerr << "# resolved config\n" << r.config.dump();
    if (command == "encoder-train") {
      cmd_encoder_train(r.config, console);
    } else if (command == "gan-train") {
      cmd_gan_train(r.config, console);
    } else if (command == "generate") {
      cmd_generate(r.config, r.theta_given, console);
    } else if (command == "sweep") {
      cmd_sweep(r.config, console);
    } else if (command == "embed") {
      cmd_embed(r.config, console);
    } else if (command == "finetune") {
      cmd_finetune(r.config, console);
    } else if (command == "eval") {
      cmd_eval(r.config, console);
    } else if (command == "mask") {
      std::cout << cmd_mask(r.config, r.theta_given);
    } else if (command == "make-toy") {
      if (toy_count < 0 || toy_first < 0 || toy_res < 1) throw ConfigError("make-toy needs count, first >= 0 and size >= 1");
      toy::write_corpus(r.config.out_dir, toy_kind, r.config.seed, toy_first, toy_count, toy_res);
      console.say("wrote ", toy_count, " ", toy_kind, " images to ", r.config.out_dir);
    }
  } catch (const ConfigError& e) {
    std::cerr << "blendlab: config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ArgumentError& e) {
    std::cerr << "blendlab: invalid argument: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "blendlab: numerical error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "blendlab: error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
