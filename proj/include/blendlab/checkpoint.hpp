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

// Checkpoint bundles: a plain-text manifest (metadata plus a named tensor
// index with shapes and byte offsets) next to a blob of row-major
// little-endian float32 data.
//
//   <dir>/manifest.txt
//     blendlab-checkpoint 1
//     meta <key> <value>
//     history <iteration> <d_face> ... <critic_acc>
//     tensor <name> <byte offset> <rank> <dims...>
//   <dir>/tensors.bin

#ifndef BLENDLAB_CHECKPOINT_HPP_
#define BLENDLAB_CHECKPOINT_HPP_

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "blendlab/config.hpp"

namespace blendlab {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Bundle {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
  std::vector<StepLog> history;

  void set(const std::string& key, const std::string& value) {
    if (key.find_first_of(" \t\n") != std::string::npos || value.find('\n') != std::string::npos)
      throw ArgumentError("checkpoint meta key/value may not contain whitespace/newlines: " + key);
    for (auto& [k, v] : meta)
      if (k == key) {
        v = value;
        return;
      }
    meta.emplace_back(key, value);
  }
  bool has_meta(const std::string& key) const {
    for (const auto& [k, _] : meta)
      if (k == key) return true;
    return false;
  }
  const std::string& get(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    throw CheckpointError("checkpoint has no meta key '" + key + "'");
  }
  std::int64_t get_int(const std::string& key) const { return std::stoll(get(key)); }
  double get_double(const std::string& key) const { return std::stod(get(key)); }

  void add(const std::string& name, Tensor<float> t) {
    if (name.find_first_of(" \t\n") != std::string::npos) throw ArgumentError("tensor name has whitespace: " + name);
    if (index_.count(name)) throw ArgumentError("duplicate tensor name " + name);
    index_[name] = tensors.size();
    tensors.emplace_back(name, std::move(t));
  }
  bool has(const std::string& name) const { return index_.count(name) > 0; }
  const Tensor<float>& tensor(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw CheckpointError("checkpoint has no tensor '" + name + "'");
    return tensors[it->second].second;
  }
  // Copies a stored tensor into `dst`, checking the shape.
  void read_into(const std::string& name, Tensor<float>& dst) const {
    const auto& src = tensor(name);
    if (src.shape() != dst.shape())
      throw CheckpointError("tensor '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                            shape_str(dst.shape()));
    dst = src;
  }

  // Sub-configuration stored under "<prefix>.<key>" meta entries.
  void set_config(const std::string& prefix, const RunConfig& c) {
    for (const auto& [k, v] : c.to_key_values()) set(prefix + "." + k, v.empty() ? "-" : v);
  }
  RunConfig get_config(const std::string& prefix) const {
    KeyValues kv;
    const std::string p = prefix + ".";
    for (const auto& [k, v] : meta)
      if (k.rfind(p, 0) == 0) kv[k.substr(p.size())] = v == "-" ? "" : v;
    if (kv.empty()) throw CheckpointError("checkpoint has no '" + prefix + "' config");
    RunConfig c;
    c.apply(kv);
    return c;
  }

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream blob(dir / "tensors.bin", std::ios::binary);
    std::ofstream man(dir / "manifest.txt");
    if (!blob || !man) throw CheckpointError("cannot write checkpoint to " + dir.string());
    man << "blendlab-checkpoint " << kCheckpointVersion << '\n';
    for (const auto& [k, v] : meta) man << "meta " << k << ' ' << v << '\n';
    for (const auto& h : history) {
      man << "history " << h.iteration;
      for (double x : {h.d_face, h.d_style, h.d_latent, h.g_face, h.g_style, h.g_latent, h.r1, h.path,
                       h.mean_path_length, h.critic_accuracy})
        man << ' ' << exact_string(x);
      man << '\n';
    }
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
      man << "tensor " << name << ' ' << offset << ' ' << t.rank();
      for (auto d : t.shape()) man << ' ' << d;
      man << '\n';
      write_le(blob, t);
      offset += 4 * static_cast<std::uint64_t>(t.size());
    }
    if (!blob || !man) throw CheckpointError("short write to " + dir.string());
  }

  static Bundle load(const std::filesystem::path& dir) {
    std::ifstream man(dir / "manifest.txt");
    if (!man) throw CheckpointError("no checkpoint manifest in " + dir.string());
    std::ifstream blob(dir / "tensors.bin", std::ios::binary);
    if (!blob) throw CheckpointError("no tensor blob in " + dir.string());
    blob.seekg(0, std::ios::end);
    const auto blob_size = static_cast<std::uint64_t>(blob.tellg());

    Bundle b;
    std::string line, word;
    std::getline(man, line);
    {
      std::istringstream is(line);
      int version = 0;
      if (!(is >> word >> version) || word != "blendlab-checkpoint")
        throw CheckpointError("not a blendlab checkpoint: " + dir.string());
      if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    std::uint64_t expected = 0;
    while (std::getline(man, line)) {
      if (line.empty()) continue;
      std::istringstream is(line);
      is >> word;
      if (word == "meta") {
        std::string key;
        is >> key;
        std::string value;
        std::getline(is, value);
        if (!value.empty() && value[0] == ' ') value.erase(0, 1);
        b.meta.emplace_back(key, value);
      } else if (word == "history") {
        StepLog h;
        is >> h.iteration;
        for (double* x : {&h.d_face, &h.d_style, &h.d_latent, &h.g_face, &h.g_style, &h.g_latent, &h.r1, &h.path,
                          &h.mean_path_length, &h.critic_accuracy}) {
          std::string tok;
          is >> tok;
          auto r = std::from_chars(tok.data(), tok.data() + tok.size(), *x);
          if (r.ec != std::errc()) throw CheckpointError("malformed history line: " + line);
        }
        b.history.push_back(h);
      } else if (word == "tensor") {
        std::string name;
        std::uint64_t offset = 0;
        int rank = 0;
        if (!(is >> name >> offset >> rank) || rank < 0) throw CheckpointError("malformed tensor line: " + line);
        Shape shape(static_cast<std::size_t>(rank));
        for (auto& d : shape)
          if (!(is >> d) || d < 0) throw CheckpointError("malformed tensor line: " + line);
        if (offset != expected) throw CheckpointError("tensor '" + name + "' offset does not follow its predecessor");
        Tensor<float> t(shape);
        expected += 4 * static_cast<std::uint64_t>(t.size());
        if (expected > blob_size) throw CheckpointError("tensor blob too short for '" + name + "'");
        blob.seekg(static_cast<std::streamoff>(offset));
        read_le(blob, t);
        b.add(name, std::move(t));
      } else {
        throw CheckpointError("unknown manifest record: " + line);
      }
    }
    if (expected != blob_size) throw CheckpointError("tensor blob has trailing bytes");
    return b;
  }

 private:
  static void write_le(std::ofstream& out, const Tensor<float>& t) {
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(4 * t.size()));
    } else {
      for (float v : t.values()) {
        auto u = std::bit_cast<std::uint32_t>(v);
        char c[4] = {char(u), char(u >> 8), char(u >> 16), char(u >> 24)};
        out.write(c, 4);
      }
    }
  }
  static void read_le(std::ifstream& in, Tensor<float>& t) {
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(4 * t.size()));
    if (!in) throw CheckpointError("failed reading tensor blob");
    if constexpr (std::endian::native != std::endian::little) {
      for (auto& v : t.values()) {
        auto u = std::bit_cast<std::uint32_t>(v);
        v = std::bit_cast<float>(__builtin_bswap32(u));
      }
    }
  }

  std::map<std::string, std::size_t> index_;
};

// ---- style encoder ----

inline void store_encoder(Bundle& b, const RunConfig& config, StyleEncoder<float>& enc) {
  b.set_config("encoder_config", config);
  b.set("style_dim", std::to_string(enc.style_dim()));
  for (auto& [name, t] : enc.backbone().named_tensors()) b.add(name, *t);
  for (const auto& [name, v] : enc.parameters()) b.add(name, v.value());
  if (enc.has_descriptor_normalization()) {
    b.add("encoder.desc_shift", enc.descriptor_shift());
    b.add("encoder.desc_gain", enc.descriptor_gain());
  }
}

// Backbone tensors may come from an external import (for instance converted
// VGG-19 weights); any backbone.* tensor present overrides the seeded init.
inline StyleEncoder<float> load_encoder(const Bundle& b) {
  const RunConfig c = b.get_config("encoder_config");
  StyleEncoder<float> enc(c.encoder_config());
  Rng rng(c.seed);
  enc.initialize(rng);
  for (auto& [name, t] : enc.backbone().named_tensors())
    if (b.has(name)) b.read_into(name, *t);
  for (auto& [name, v] : enc.parameters()) b.read_into(name, v.mutable_value());
  if (b.has("encoder.desc_shift")) {
    enc.descriptor_shift() = b.tensor("encoder.desc_shift");
    enc.descriptor_gain() = b.tensor("encoder.desc_gain");
  }
  return enc;
}

// ---- adversarial training state ----

inline void store_adam(Bundle& b, const std::string& prefix, const nn::Adam<float>& adam) {
  b.set(prefix + ".steps", std::to_string(adam.steps()));
  for (const auto& [name, mom] : adam.state()) {
    b.add(prefix + ".m/" + name, mom.m);
    b.add(prefix + ".v/" + name, mom.v);
  }
}

inline void load_adam(const Bundle& b, const std::string& prefix, const nn::ParamList<float>& params,
                      nn::Adam<float>& adam) {
  adam.set_steps(b.get_int(prefix + ".steps"));
  adam.state().clear();
  for (const auto& [name, _] : params) {
    if (!b.has(prefix + ".m/" + name)) continue;
    adam.state()[name] = {b.tensor(prefix + ".m/" + name), b.tensor(prefix + ".v/" + name)};
  }
}

inline void store_train_state(Bundle& b, const RunConfig& config, const TrainState<float>& st) {
  b.set_config("config", config);
  b.set("resolution", std::to_string(st.model_config.generator.synthesis.resolution));
  b.set("num_layers", std::to_string(st.model.g.num_layers()));
  b.set("style_dim", std::to_string(st.model_config.generator.style_dim));
  b.set("seed", std::to_string(st.config.seed));
  b.set("iteration", std::to_string(st.iteration));
  b.set("mean_path_length", exact_string(st.mean_path_length));
  b.set("rng_state", st.rng.state());
  for (const auto& [name, v] : st.model.generator_params()) b.add(name, v.value());
  for (const auto& [name, v] : st.model.critic_params()) b.add(name, v.value());
  store_adam(b, "adam_g", st.adam_g);
  store_adam(b, "adam_d", st.adam_d);
  const auto& items = st.model.queue.items();
  b.set("queue_size", std::to_string(items.size()));
  if (!items.empty()) {
    const auto d = static_cast<std::int64_t>(items.front().size());
    Tensor<float> q({static_cast<std::int64_t>(items.size()), d});
    for (std::size_t i = 0; i < items.size(); ++i) std::copy(items[i].begin(), items[i].end(), q.data() + i * d);
    b.add("queue", std::move(q));
  }
  b.history = st.history;
  for (auto& h : b.history) h.wall_seconds = 0;
}

inline TrainState<float> load_train_state(const Bundle& b) {
  const RunConfig c = b.get_config("config");
  TrainState<float> st(c.model_config(), c.train_config(), Rng(c.seed));
  auto gp = st.model.generator_params();
  auto dp = st.model.critic_params();
  for (auto& [name, v] : gp) b.read_into(name, v.mutable_value());
  for (auto& [name, v] : dp) b.read_into(name, v.mutable_value());
  load_adam(b, "adam_g", gp, st.adam_g);
  load_adam(b, "adam_d", dp, st.adam_d);
  st.iteration = b.get_int("iteration");
  {
    const auto& s = b.get("mean_path_length");
    std::from_chars(s.data(), s.data() + s.size(), st.mean_path_length);
  }
  st.rng.set_state(b.get("rng_state"));
  st.model.queue.clear();
  if (b.get_int("queue_size") > 0) st.model.queue.push_rows(b.tensor("queue"));
  st.history = b.history;
  return st;
}

}  // namespace blendlab

#endif  // BLENDLAB_CHECKPOINT_HPP_
