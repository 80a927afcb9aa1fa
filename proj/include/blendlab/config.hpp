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

// Plain-text key = value run configuration. Every tunable of the encoder,
// generator, critics, trainer and evaluation lives here; unknown keys are
// rejected so typos fail loudly.

#ifndef BLENDLAB_CONFIG_HPP_
#define BLENDLAB_CONFIG_HPP_

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "blendlab/style_codec.hpp"
#include "blendlab/trainer.hpp"

namespace blendlab {

// Shortest decimal text that parses back to the same double.
inline std::string exact_string(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

using KeyValues = std::map<std::string, std::string>;

// "key = value" lines; '#' starts a comment. Duplicate keys are an error.
inline KeyValues parse_key_values(std::istream& in, const std::string& origin = "config") {
  KeyValues kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
  }
  return kv;
}

inline KeyValues read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_key_values(in, path);
}

struct RunConfig {
  // paths
  std::string out_dir = "runs/default";
  std::string face_corpus;
  std::string style_corpus;
  std::string encoder_checkpoint;
  std::string checkpoint;
  std::string reference;

  std::uint64_t seed = 0;
  std::int64_t resolution = 64;

  // style encoder
  std::string backbone = "desk";  // desk | vgg19
  std::int64_t encoder_resolution = 64;
  std::vector<std::int64_t> predictor_hidden{2048, 1024, 512};
  std::int64_t style_dim = 512;
  std::vector<std::int64_t> projection_hidden{512};
  std::int64_t projection_dim = 128;
  double temperature = 0.1;
  bool direct_gram = false;
  double augment_rotation = 15, augment_translation = 0.1, augment_scale_min = 0.8, augment_scale_max = 1.2,
         augment_flip = 0.5;
  std::int64_t encoder_batch = 32;
  std::int64_t encoder_steps = 500;
  double encoder_lr = 0.002;
  bool encoder_standardize = true;

  // generator and critics
  std::int64_t z_dim = 512;
  std::int64_t w_dim = 512;
  std::int64_t mapping_depth = 8;
  double mapping_lr_mul = 0.01;
  std::int64_t channel_base = 512;
  std::int64_t channel_max = 64;
  std::int64_t critic_feature_dim = 512;

  // adversarial training
  std::int64_t batch = 8;
  std::int64_t iterations = 10000;
  double lr = 0.002, beta1 = 0.0, beta2 = 0.99, adam_eps = 1e-8;
  double r1_gamma = 1.0;
  std::int64_t r1_interval = 16;
  double path_weight = 2.0;
  std::int64_t path_interval = 4;
  double path_decay = 0.01;
  std::int64_t path_batch_shrink = 2;
  std::int64_t queue_capacity = 1024;
  std::int64_t checkpoint_every = 1000;
  std::int64_t sample_every = 1000;

  // finetune
  std::int64_t finetune_steps = 1000;
  std::int64_t finetune_batch = 1;

  // generation and evaluation
  std::string mode = "latent";  // latent | reference
  std::int64_t indicator = 6;
  double theta = 0.5;
  std::int64_t count = 8;
  std::int64_t fid_samples = 1000;
  std::int64_t diversity_faces = 100;
  std::int64_t styles_per_face = 10;
  std::vector<std::int64_t> sweep_indicators;  // empty: 0, ceil(L/3), ceil(2L/3), L

  // Visits every field with its key; the single source of truth for the
  // text format.
  template <class V>
  void visit(V&& v) {
    v("out_dir", out_dir);
    v("face_corpus", face_corpus);
    v("style_corpus", style_corpus);
    v("encoder_checkpoint", encoder_checkpoint);
    v("checkpoint", checkpoint);
    v("reference", reference);
    v("seed", seed);
    v("resolution", resolution);
    v("backbone", backbone);
    v("encoder_resolution", encoder_resolution);
    v("predictor_hidden", predictor_hidden);
    v("style_dim", style_dim);
    v("projection_hidden", projection_hidden);
    v("projection_dim", projection_dim);
    v("temperature", temperature);
    v("direct_gram", direct_gram);
    v("augment_rotation", augment_rotation);
    v("augment_translation", augment_translation);
    v("augment_scale_min", augment_scale_min);
    v("augment_scale_max", augment_scale_max);
    v("augment_flip", augment_flip);
    v("encoder_batch", encoder_batch);
    v("encoder_steps", encoder_steps);
    v("encoder_lr", encoder_lr);
    v("encoder_standardize", encoder_standardize);
    v("z_dim", z_dim);
    v("w_dim", w_dim);
    v("mapping_depth", mapping_depth);
    v("mapping_lr_mul", mapping_lr_mul);
    v("channel_base", channel_base);
    v("channel_max", channel_max);
    v("critic_feature_dim", critic_feature_dim);
    v("batch", batch);
    v("iterations", iterations);
    v("lr", lr);
    v("beta1", beta1);
    v("beta2", beta2);
    v("adam_eps", adam_eps);
    v("r1_gamma", r1_gamma);
    v("r1_interval", r1_interval);
    v("path_weight", path_weight);
    v("path_interval", path_interval);
    v("path_decay", path_decay);
    v("path_batch_shrink", path_batch_shrink);
    v("queue_capacity", queue_capacity);
    v("checkpoint_every", checkpoint_every);
    v("sample_every", sample_every);
    v("finetune_steps", finetune_steps);
    v("finetune_batch", finetune_batch);
    v("mode", mode);
    v("indicator", indicator);
    v("theta", theta);
    v("count", count);
    v("fid_samples", fid_samples);
    v("diversity_faces", diversity_faces);
    v("styles_per_face", styles_per_face);
    v("sweep_indicators", sweep_indicators);
  }

  // Overrides fields named in `kv`; throws ConfigError on unknown keys or
  // unparsable values.
  void apply(const KeyValues& kv) {
    std::map<std::string, bool> used;
    for (const auto& [k, _] : kv) used[k] = false;
    visit([&](const char* key, auto& field) {
      auto it = kv.find(key);
      if (it == kv.end()) return;
      used[key] = true;
      parse_field(key, it->second, field);
    });
    for (const auto& [k, u] : used)
      if (!u) throw ConfigError("unknown config key '" + k + "'");
  }

  KeyValues to_key_values() const {
    KeyValues kv;
    const_cast<RunConfig*>(this)->visit([&](const char* key, const auto& field) { kv[key] = format_field(field); });
    return kv;
  }

  // Fully resolved config, one key per line, sorted.
  std::string dump() const {
    std::ostringstream os;
    for (const auto& [k, v] : to_key_values()) os << k << " = " << v << '\n';
    return os.str();
  }

  void validate() const {
    if (resolution < 8 || (resolution & (resolution - 1))) throw ConfigError("resolution must be a power of two >= 8");
    if (backbone != "desk" && backbone != "vgg19") throw ConfigError("backbone must be desk or vgg19");
    if (mode != "latent" && mode != "reference") throw ConfigError("mode must be latent or reference");
    if (!(temperature > 0)) throw ConfigError("temperature must be positive");
    if (!(lr > 0) || !(encoder_lr > 0)) throw ConfigError("learning rates must be positive");
    if (batch < 1 || encoder_batch < 1 || finetune_batch < 1) throw ConfigError("batch sizes must be >= 1");
    if (iterations < 0 || encoder_steps < 0 || finetune_steps < 0) throw ConfigError("step counts must be >= 0");
    if (styles_per_face < 2) throw ConfigError("styles_per_face must be >= 2");
    if (queue_capacity < 1) throw ConfigError("queue_capacity must be >= 1");
    if (checkpoint_every < 0 || sample_every < 0) throw ConfigError("intervals must be >= 0");
    encoder_config().validate();
    train_config().validate();
    generator_config().validate();
    critic_config().validate();
  }

  EncoderConfig encoder_config() const {
    EncoderConfig c;
    c.backbone = backbone == "vgg19" ? BackboneConfig::vgg19(encoder_resolution) : BackboneConfig::desk(encoder_resolution);
    c.predictor_hidden = predictor_hidden;
    c.style_dim = style_dim;
    c.projection_hidden = projection_hidden;
    c.projection_dim = projection_dim;
    c.temperature = temperature;
    c.augment = {augment_rotation, augment_translation, augment_scale_min, augment_scale_max, augment_flip};
    c.direct_gram = direct_gram;
    return c;
  }

  EncoderTrainConfig encoder_train_config() const {
    EncoderTrainConfig c;
    c.batch_images = encoder_batch;
    c.steps = encoder_steps;
    c.adam = {encoder_lr, beta1, beta2, adam_eps};
    return c;
  }

  // The style code width seen by the generator depends on the encoder mode.
  GeneratorConfig generator_config() const {
    GeneratorConfig g;
    g.synthesis = {resolution, w_dim, channel_base, channel_max};
    g.mapping.depth = mapping_depth;
    g.mapping.w_dim = w_dim;
    g.mapping.lr_mul = mapping_lr_mul;
    g.z_dim = z_dim;
    g.style_dim = encoder_config().backbone.gram_length();
    if (!direct_gram) g.style_dim = style_dim;
    return g;
  }

  CriticConfig critic_config() const { return {resolution, channel_base, channel_max, critic_feature_dim}; }

  ModelConfig model_config() const { return {generator_config(), critic_config()}; }

  TrainConfig train_config() const {
    TrainConfig t;
    t.batch = batch;
    t.iterations = iterations;
    t.adam = {lr, beta1, beta2, adam_eps};
    t.r1_gamma = r1_gamma;
    t.r1_interval = r1_interval;
    t.path_weight = path_weight;
    t.path_interval = path_interval;
    t.path_decay = path_decay;
    t.path_batch_shrink = path_batch_shrink;
    t.queue_capacity = static_cast<std::size_t>(queue_capacity);
    t.seed = seed;
    return t;
  }

 private:
  static void parse_field(const std::string&, const std::string& text, std::string& out) { out = text; }
  static void parse_field(const std::string& key, const std::string& text, bool& out) {
    if (text == "true" || text == "1") {
      out = true;
    } else if (text == "false" || text == "0") {
      out = false;
    } else {
      throw ConfigError("config key '" + key + "' expects true/false, got '" + text + "'");
    }
  }
  template <class N>
  static void parse_field(const std::string& key, const std::string& text, N& out) {
    const char* end = text.data() + text.size();
    auto r = std::from_chars(text.data(), end, out);
    if (r.ec != std::errc() || r.ptr != end || text.empty())
      throw ConfigError("config key '" + key + "' expects a number, got '" + text + "'");
  }
  static void parse_field(const std::string& key, const std::string& text, std::vector<std::int64_t>& out) {
    out.clear();
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
      std::int64_t v = 0;
      parse_field(key, trim(item), v);
      out.push_back(v);
    }
  }

  static std::string format_field(const std::string& v) { return v; }
  static std::string format_field(bool v) { return v ? "true" : "false"; }
  static std::string format_field(double v) { return exact_string(v); }
  static std::string format_field(std::int64_t v) { return std::to_string(v); }
  static std::string format_field(std::uint64_t v) { return std::to_string(v); }
  static std::string format_field(const std::vector<std::int64_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  }
};

}  // namespace blendlab

#endif  // BLENDLAB_CONFIG_HPP_
