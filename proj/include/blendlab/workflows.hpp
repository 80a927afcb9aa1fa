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

// End-to-end commands behind the blendlab binary. Each cmd_* validates all
// inputs before it creates the output directory, so a usage error leaves no
// files behind.

#ifndef BLENDLAB_WORKFLOWS_HPP_
#define BLENDLAB_WORKFLOWS_HPP_

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "blendlab/checkpoint.hpp"
#include "blendlab/data_pipeline.hpp"
#include "blendlab/evalsuite.hpp"

namespace blendlab {

// Salts of the independent random streams inside one run.
namespace salt {
inline constexpr std::uint64_t kEncoderInit = 0xE4C0;
inline constexpr std::uint64_t kEncoderAugment = 0xA061;
inline constexpr std::uint64_t kEncoderBatches = 0xB47C;
inline constexpr std::uint64_t kDescriptorFit = 0xDE5C;
inline constexpr std::uint64_t kGanInit = 0x6A41;
inline constexpr std::uint64_t kFaceBatches = 0xFACE;
inline constexpr std::uint64_t kStyleBatches = 0x57E1;
inline constexpr std::uint64_t kSamples = 0x5A3B;
inline constexpr std::uint64_t kGenerate = 0x6E7;
inline constexpr std::uint64_t kFinetuneFaces = 0xF17E;
inline constexpr std::uint64_t kStyleDistance = 0x5D15;
}  // namespace salt

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t s) { return Rng::derive(seed, s).next_u64(); }

// Progress lines go here; null silences them.
struct Console {
  std::ostream* out = &std::cerr;
  template <class... A>
  void say(const A&... a) const {
    if (!out) return;
    ((*out) << ... << a) << std::endl;
  }
};

// ---- input checks ----

inline void require_dir(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is not set");
  if (!fs::is_directory(path)) throw ConfigError(what + " does not exist: " + path);
}

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is not set");
  if (!fs::is_regular_file(path)) throw ConfigError(what + " does not exist: " + path);
}

inline void require_checkpoint(const std::string& path, const std::string& what) {
  if (path.empty()) throw ConfigError(what + " is not set");
  if (!fs::is_regular_file(fs::path(path) / "manifest.txt")) throw ConfigError(what + " is not a checkpoint: " + path);
}

inline Corpus load_corpus(const std::string& root, std::int64_t size, const std::string& what) {
  require_dir(root, what);
  Corpus c = ingest(root, static_cast<int>(size));
  if (c.size() == 0) throw ConfigError(what + " has no decodable images: " + root);
  return c;
}

// Reads one image, crops and resizes it, returns [1, 3, size, size].
inline Tensor<float> load_reference(const std::string& path, std::int64_t size) {
  require_file(path, "reference image");
  const Image8 img = center_crop_resize(read_image(path), static_cast<int>(size));
  return to_tensor<float>(img).reshaped({1, 3, size, size});
}

// ---- small tensor helpers ----

inline Tensor<float> slice_rows(const Tensor<float>& t, std::int64_t first, std::int64_t count) {
  Shape s = t.shape();
  const std::int64_t per = t.size() / std::max<std::int64_t>(1, s[0]);
  s[0] = count;
  Tensor<float> out(s);
  std::copy_n(t.data() + first * per, count * per, out.data());
  return out;
}

inline Tensor<float> concat_rows(const std::vector<Tensor<float>>& parts) {
  Shape s = parts.front().shape();
  s[0] = 0;
  for (const auto& p : parts) s[0] += p.dim(0);
  Tensor<float> out(s);
  std::int64_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.data(), p.size(), out.data() + off);
    off += p.size();
  }
  return out;
}

// Resamples a batch to size x size through the 8-bit crop path.
inline Tensor<float> resample(const Tensor<float>& images, std::int64_t size) {
  if (images.dim(2) == size && images.dim(3) == size) return images;
  std::vector<Tensor<float>> parts;
  for (std::int64_t k = 0; k < images.dim(0); ++k)
    parts.push_back(to_tensor<float>(center_crop_resize(to_image(images, k), static_cast<int>(size))).reshaped({1, 3, size, size}));
  return concat_rows(parts);
}

// Descriptors of `images`, `chunk` at a time.
inline Tensor<float> descriptors(const StyleEncoder<float>& enc, const Tensor<float>& images, std::int64_t chunk = 64) {
  std::vector<Tensor<float>> parts;
  for (std::int64_t a = 0; a < images.dim(0); a += chunk)
    parts.push_back(enc.descriptor(slice_rows(images, a, std::min(chunk, images.dim(0) - a))));
  return concat_rows(parts);
}

// Stats over the first `limit` corpus images (all when limit < 0).
inline FeatureStats corpus_stats(const FeatureBackbone<float>& backbone, const Corpus& corpus, std::int64_t limit = -1,
                                 std::int64_t chunk = 64) {
  const std::int64_t n = limit < 0 ? corpus.size() : std::min(limit, corpus.size());
  Eigen::MatrixXd feats;
  std::vector<std::int64_t> idx;
  for (std::int64_t a = 0; a < n; a += chunk) {
    idx.clear();
    for (std::int64_t k = a; k < std::min(n, a + chunk); ++k) idx.push_back(k);
    Eigen::MatrixXd part = pooled_features(backbone, corpus.gather<float>(idx));
    if (a == 0) feats.resize(n, part.cols());
    feats.middleRows(a, part.rows()) = part;
  }
  return feature_stats(feats);
}

// Atomic-ish replace: write next to `dir`, then swap in.
inline void save_bundle(const Bundle& b, const fs::path& dir) {
  const fs::path tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  b.save(tmp);
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

// ---- style encoder ----

// Seeded weights; descriptor standardization is fitted on up to 1024
// corpus images.
inline StyleEncoder<float> build_encoder(const RunConfig& cfg, const Corpus& styles) {
  StyleEncoder<float> enc(cfg.encoder_config());
  Rng init = Rng::derive(cfg.seed, salt::kEncoderInit);
  enc.initialize(init);
  if (cfg.encoder_standardize && !cfg.direct_gram && styles.size() >= 2) {
    BatchPlan plan(sub_seed(cfg.seed, salt::kDescriptorFit), std::min<std::int64_t>(1024, styles.size()), styles.size());
    enc.fit_descriptor_normalization(descriptors(enc, styles.gather<float>(plan.indices(0))));
  }
  return enc;
}

// Writes "step loss" records to `log`. Direct-Gram mode has nothing to train.
inline StyleEncoder<float> train_encoder(const RunConfig& cfg, const Corpus& styles, std::ostream& log,
                                         const Console& console = {}) {
  if (styles.size() < cfg.encoder_batch)
    throw ConfigError("style corpus has " + std::to_string(styles.size()) + " images, fewer than encoder_batch = " +
                      std::to_string(cfg.encoder_batch));
  StyleEncoder<float> enc = build_encoder(cfg, styles);
  log << "step loss\n";
  if (cfg.direct_gram) {
    console.say("direct-gram encoder: no trainable weights, skipping optimization");
    return enc;
  }
  EncoderTrainer<float> trainer(enc, cfg.encoder_train_config());
  BatchPlan plan(sub_seed(cfg.seed, salt::kEncoderBatches), cfg.encoder_batch, styles.size());
  Rng aug = Rng::derive(cfg.seed, salt::kEncoderAugment);
  const auto t0 = std::chrono::steady_clock::now();
  for (std::int64_t step = 0; step < cfg.encoder_steps; ++step) {
    const float loss = trainer.step(styles.gather<float>(plan.indices(step)), aug);
    log << step << ' ' << exact_string(loss) << '\n';
    if ((step + 1) % 50 == 0 || step + 1 == cfg.encoder_steps) {
      log.flush();
      console.say("encoder step ", step + 1, "/", cfg.encoder_steps, " loss ", loss, " (",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), " s)");
    }
  }
  return enc;
}

inline void cmd_encoder_train(const RunConfig& cfg, const Console& console = {}) {
  cfg.validate();
  const Corpus styles = load_corpus(cfg.style_corpus, cfg.encoder_resolution, "style corpus");
  if (styles.size() < cfg.encoder_batch)
    throw ConfigError("style corpus has " + std::to_string(styles.size()) + " images, fewer than encoder_batch = " +
                      std::to_string(cfg.encoder_batch));
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / "encoder-train_config.txt", cfg.dump());
  write_text(out / "style_manifest.txt", styles.manifest.text());
  std::ofstream log(out / "encoder_log.txt");
  StyleEncoder<float> enc = train_encoder(cfg, styles, log, console);
  log.close();
  Bundle b;
  b.set("kind", "encoder");
  store_encoder(b, cfg, enc);
  save_bundle(b, out / "checkpoint");
  console.say("wrote ", (out / "checkpoint").string(), " (encoder hash ", hex64(enc.hash()), ")");
}

// ---- adversarial training ----

// The encoder checkpoint fixes every encoder field of the run config.
inline RunConfig adopt_encoder_config(RunConfig cfg, const RunConfig& enc) {
  if (cfg.direct_gram != enc.direct_gram)
    throw ConfigError(std::string("encoder checkpoint was built with direct_gram = ") + (enc.direct_gram ? "true" : "false") +
                      " but the run asks for " + (cfg.direct_gram ? "true" : "false"));
  cfg.backbone = enc.backbone;
  cfg.encoder_resolution = enc.encoder_resolution;
  cfg.predictor_hidden = enc.predictor_hidden;
  cfg.style_dim = enc.style_dim;
  cfg.projection_hidden = enc.projection_hidden;
  cfg.projection_dim = enc.projection_dim;
  cfg.temperature = enc.temperature;
  cfg.encoder_standardize = enc.encoder_standardize;
  return cfg;
}

// Trained model plus the frozen encoder it was trained with.
struct GanCheckpoint {
  RunConfig config;
  std::unique_ptr<TrainState<float>> state;
  StyleEncoder<float> encoder;
};

inline void store_gan(Bundle& b, const RunConfig& cfg, const TrainState<float>& st, StyleEncoder<float>& enc) {
  b.set("kind", "gan");
  store_train_state(b, cfg, st);
  store_encoder(b, cfg, enc);
}

inline GanCheckpoint load_gan(const std::string& path) {
  require_checkpoint(path, "checkpoint");
  const Bundle b = Bundle::load(path);
  if (!b.has_meta("kind") || b.get("kind") != "gan") throw ConfigError("not a gan checkpoint: " + path);
  GanCheckpoint g{b.get_config("config"), std::make_unique<TrainState<float>>(load_train_state(b)), load_encoder(b)};
  return g;
}

inline StyleEncoder<float> load_encoder_checkpoint(const std::string& path, RunConfig* stored = nullptr) {
  require_checkpoint(path, "encoder checkpoint");
  const Bundle b = Bundle::load(path);
  if (!b.has_meta("encoder_config.seed")) throw ConfigError("no encoder in checkpoint " + path);
  if (stored) *stored = b.get_config("encoder_config");
  return load_encoder(b);
}

inline TrainState<float> fresh_train_state(const RunConfig& cfg) {
  return TrainState<float>(cfg.model_config(), cfg.train_config(), Rng::derive(cfg.seed, salt::kGanInit));
}

// Natural row, full blend row (i = 0) and a row at the configured indicator.
inline Image8 sample_grid(const RunConfig& cfg, const Generator<float>& g) {
  const std::int64_t n = 8;
  Rng rng = Rng::derive(cfg.seed, salt::kSamples);
  auto z_f = rng.normal_tensor<float>({n, g.config().z_dim});
  auto z_s = rng.normal_tensor<float>({n, g.config().style_dim});
  auto noise = NoiseBundle<float>::random(g.config().synthesis, n, rng);
  ag::NoGradGuard ng;
  const std::int64_t i = std::clamp<std::int64_t>(cfg.indicator, 0, g.num_layers());
  auto full = g.generate_pair(ag::constant(z_f), ag::constant(z_s), 0, kFullBlendTheta, noise);
  auto part = render_stylized(g, z_f, z_s, noise, i, sweep_theta(i, cfg.theta));
  return make_grid(concat_rows({full.face.value(), full.stylized.value(), part}), n);
}

struct GanData {
  Corpus faces, styles;
  std::optional<Corpus> styles_enc;  // style corpus at the encoder resolution, when it differs
  const Corpus& encoder_view() const { return styles_enc ? *styles_enc : styles; }
};

inline GanData load_gan_data(const RunConfig& cfg) {
  GanData d{load_corpus(cfg.face_corpus, cfg.resolution, "face corpus"),
            load_corpus(cfg.style_corpus, cfg.resolution, "style corpus"), std::nullopt};
  if (cfg.encoder_resolution != cfg.resolution)
    d.styles_enc = load_corpus(cfg.style_corpus, cfg.encoder_resolution, "style corpus");
  return d;
}

// Runs st up to cfg.iterations, one log record per step. A non-finite loss
// leaves a snapshot in out/crash_snapshot before rethrowing.
inline void train_gan(const RunConfig& cfg, TrainState<float>& st, StyleEncoder<float>& enc, const GanData& data,
                      const fs::path& out, std::ostream& log, const Console& console = {}) {
  const std::int64_t b = st.config.batch;
  BatchPlan face_plan(sub_seed(cfg.seed, salt::kFaceBatches), b, data.faces.size());
  BatchPlan style_plan(sub_seed(cfg.seed, salt::kStyleBatches), b, data.styles.size());
  const auto t0 = std::chrono::steady_clock::now();
  while (st.iteration < cfg.iterations) {
    const std::int64_t it = st.iteration;
    const auto idx = style_plan.indices(it);
    const Tensor<float> faces = next_batch<float>(data.faces, face_plan, it);
    const Tensor<float> styles = data.styles.gather<float>(idx);
    const Tensor<float> z_s = enc.encode(data.encoder_view().gather<float>(idx));
    StepLog rec;
    try {
      rec = train_step(st, faces, styles, z_s);
    } catch (const NumericalError& e) {
      Bundle snap;
      store_gan(snap, cfg, st, enc);
      snap.set("crash_reason", e.what());
      save_bundle(snap, out / "crash_snapshot");
      log.flush();
      throw;
    }
    log << rec.record() << '\n';
    const std::int64_t done = st.iteration;
    if (cfg.sample_every > 0 && done % cfg.sample_every == 0) {
      fs::create_directories(out / "samples");
      char name[32];
      std::snprintf(name, sizeof(name), "iter_%06lld.png", static_cast<long long>(done));
      write_png(out / "samples" / name, sample_grid(cfg, st.model.g));
    }
    if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0) {
      log.flush();
      Bundle bun;
      store_gan(bun, cfg, st, enc);
      save_bundle(bun, out / "checkpoint");
    }
    if (done % 50 == 0 || done == cfg.iterations)
      console.say("iteration ", done, "/", cfg.iterations, "  d_face ", rec.d_face, "  g_face ", rec.g_face, "  acc ",
                  rec.critic_accuracy, "  (", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(),
                  " s)");
  }
  log.flush();
  Bundle bun;
  store_gan(bun, cfg, st, enc);
  save_bundle(bun, out / "checkpoint");
}

// Fresh run from cfg.encoder_checkpoint, or a resume when cfg.checkpoint is
// set. Logs append on resume so a split run matches an unbroken one.
inline void cmd_gan_train(RunConfig cfg, const Console& console = {}) {
  cfg.validate();
  RunConfig enc_cfg;
  StyleEncoder<float> enc;
  std::unique_ptr<TrainState<float>> st;
  if (!cfg.checkpoint.empty()) {
    GanCheckpoint ck = load_gan(cfg.checkpoint);
    cfg = adopt_encoder_config(cfg, ck.config);
    enc = std::move(ck.encoder);
    st = std::move(ck.state);
  } else {
    require_checkpoint(cfg.encoder_checkpoint, "encoder checkpoint");
    enc = load_encoder_checkpoint(cfg.encoder_checkpoint, &enc_cfg);
    cfg = adopt_encoder_config(cfg, enc_cfg);
    cfg.validate();
  }
  if (enc.style_dim() != cfg.generator_config().style_dim)
    throw ConfigError("encoder emits " + std::to_string(enc.style_dim()) + "-dim codes, generator expects " +
                      std::to_string(cfg.generator_config().style_dim));
  const GanData data = load_gan_data(cfg);
  if (data.faces.size() < cfg.batch || data.styles.size() < cfg.batch)
    throw ConfigError("corpora must hold at least one batch of images");
  if (!st) st = std::make_unique<TrainState<float>>(fresh_train_state(cfg));

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / "gan-train_config.txt", cfg.dump());
  const bool resume = st->iteration > 0;
  std::ofstream log(out / "train_log.txt", resume ? std::ios::app : std::ios::trunc);
  if (!resume) log << StepLog::kHeader << '\n';
  console.say(resume ? "resuming at iteration " : "starting at iteration ", st->iteration, ", L = ",
              st->model.g.num_layers(), ", style dim = ", enc.style_dim());
  train_gan(cfg, *st, enc, data, out, log, console);
  console.say("wrote ", (out / "checkpoint").string());
}

// ---- generation ----

struct Generated {
  Tensor<float> faces, stylized;
};

// Renders `z_f` with `z_s` at (i, theta) in chunks; faces and stylized images
// share each sample's noise.
inline Generated render_pairs(const Generator<float>& g, const Tensor<float>& z_f, const Tensor<float>& z_s,
                              const NoiseBundle<float>& noise, std::int64_t i, double theta, std::int64_t chunk = 8) {
  std::vector<Tensor<float>> fs_, ss_;
  ag::NoGradGuard ng;
  for (std::int64_t a = 0; a < z_f.dim(0); a += chunk) {
    const std::int64_t n = std::min(chunk, z_f.dim(0) - a);
    auto pair = g.generate_pair(ag::constant(slice_rows(z_f, a, n)), ag::constant(slice_rows(z_s, a, n)), i, theta,
                                noise.slice(a, n));
    fs_.push_back(pair.face.value());
    ss_.push_back(pair.stylized.value());
  }
  return {concat_rows(fs_), concat_rows(ss_)};
}

// theta_given: an explicit theta is honoured at i = 0; otherwise i = 0 uses
// the full blend.
inline void cmd_generate(const RunConfig& cfg, bool theta_given, const Console& console = {}) {
  cfg.validate();
  if (cfg.count < 1) throw ConfigError("count must be >= 1");
  GanCheckpoint ck = load_gan(cfg.checkpoint);
  const Generator<float>& g = ck.state->model.g;
  const std::int64_t L = g.num_layers();
  if (cfg.indicator < 0 || cfg.indicator > L)
    throw ConfigError("indicator " + std::to_string(cfg.indicator) + " outside [0, " + std::to_string(L) + "]");
  const double theta = cfg.indicator == 0 && !theta_given ? kFullBlendTheta : cfg.theta;
  indicator_mask<float>(L, cfg.indicator, theta);  // rejects an invalid theta up front
  std::optional<Tensor<float>> z_ref;
  if (cfg.mode == "reference") z_ref = ck.encoder.encode(load_reference(cfg.reference, ck.config.encoder_resolution));

  Rng rng = Rng::derive(cfg.seed, salt::kGenerate);
  const std::int64_t n = cfg.count;
  auto z_f = rng.normal_tensor<float>({n, g.config().z_dim});
  Tensor<float> z_s({n, g.config().style_dim});
  if (z_ref) {
    for (std::int64_t k = 0; k < n; ++k) std::copy_n(z_ref->data(), z_ref->size(), z_s.data() + k * z_ref->size());
  } else {
    z_s = rng.normal_tensor<float>({n, g.config().style_dim});
  }
  auto noise = NoiseBundle<float>::random(g.config().synthesis, n, rng);
  const Generated out_imgs = render_pairs(g, z_f, z_s, noise, cfg.indicator, theta);

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / "generate_config.txt", cfg.dump());
  std::ostringstream prov;
  prov << "checkpoint = " << cfg.checkpoint << "\ncheckpoint_iteration = " << ck.state->iteration
       << "\nmode = " << cfg.mode << "\nseed = " << cfg.seed << "\nindicator = " << cfg.indicator
       << "\ntheta = " << exact_string(theta) << "\nnum_layers = " << L << "\ncount = " << n << '\n';
  if (z_ref) prov << "reference = " << cfg.reference << "\nreference_hash = " << hex64(file_hash(cfg.reference)) << '\n';
  for (std::int64_t k = 0; k < n; ++k) {
    char a[48], b[48];
    std::snprintf(a, sizeof(a), "face_%04lld.png", static_cast<long long>(k));
    std::snprintf(b, sizeof(b), "stylized_%04lld.png", static_cast<long long>(k));
    write_png(out / a, to_image(out_imgs.faces, k));
    write_png(out / b, to_image(out_imgs.stylized, k));
    prov << "pair " << k << " = " << a << ' ' << b << '\n';
  }
  write_text(out / "provenance.txt", prov.str());
  console.say("wrote ", n, " image pairs to ", out.string());
}

// ---- evaluation ----

// Encoded style codes of up to 1000 corpus images (fewer for very wide codes).
inline Tensor<float> reference_pool(const StyleEncoder<float>& enc, const Corpus& styles) {
  const std::int64_t cap = std::max<std::int64_t>(1, std::min<std::int64_t>(1000, (std::int64_t{1} << 26) / enc.style_dim()));
  std::vector<std::int64_t> idx;
  for (std::int64_t k = 0; k < std::min(cap, styles.size()); ++k) idx.push_back(k);
  return encode_all(enc, styles.gather<float>(idx), 32);
}

inline EvalConfig eval_config(const RunConfig& cfg) {
  EvalConfig e;
  e.fid_samples = cfg.fid_samples;
  e.diversity_faces = cfg.diversity_faces;
  e.styles_per_face = cfg.styles_per_face;
  e.theta = cfg.theta;
  e.seed = cfg.seed;
  return e;
}

struct EvalInputs {
  GanCheckpoint ck;
  FeatureBackbone<float> backbone;
  FeatureStats real;
  std::vector<StyleSource<float>> sources;
};

inline EvalInputs load_eval_inputs(const RunConfig& cfg) {
  GanCheckpoint ck = load_gan(cfg.checkpoint);
  const std::int64_t res = ck.state->model_config.generator.synthesis.resolution;
  const Corpus real = load_corpus(cfg.style_corpus, res, "style corpus");
  if (real.size() < 2) throw ConfigError("style corpus needs at least 2 images for statistics");
  const Corpus enc_view =
      ck.config.encoder_resolution == res ? real : load_corpus(cfg.style_corpus, ck.config.encoder_resolution, "style corpus");
  auto backbone = metric_backbone<float>(res);
  FeatureStats stats = corpus_stats(backbone, real, cfg.fid_samples);
  const std::int64_t d = ck.state->model_config.generator.style_dim;
  std::vector<StyleSource<float>> sources{StyleSource<float>(GuidanceMode::kLatent, d),
                                          StyleSource<float>(GuidanceMode::kReference, d, reference_pool(ck.encoder, enc_view))};
  return {std::move(ck), std::move(backbone), std::move(stats), std::move(sources)};
}

inline void cmd_sweep(const RunConfig& cfg, const Console& console = {}) {
  cfg.validate();
  if (cfg.fid_samples < 2) throw ConfigError("fid_samples must be >= 2");
  EvalInputs in = load_eval_inputs(cfg);
  const std::int64_t L = in.ck.state->model.g.num_layers();
  std::vector<std::int64_t> indicators = cfg.sweep_indicators;
  if (indicators.empty()) {
    indicators = default_indicators(L);
    if (cfg.indicator >= 0 && cfg.indicator <= L) indicators.push_back(cfg.indicator);
    std::sort(indicators.begin(), indicators.end());
    indicators.erase(std::unique(indicators.begin(), indicators.end()), indicators.end());
  }
  for (auto i : indicators)
    if (i < 0 || i > L) throw ConfigError("indicator " + std::to_string(i) + " outside [0, " + std::to_string(L) + "]");
  console.say("sweeping i over ", indicators.size(), " values, both modes");
  const SweepReport report = indicator_sweep(*in.ck.state, in.sources, in.backbone, in.real, indicators, eval_config(cfg));
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / "sweep_config.txt", cfg.dump());
  write_text(out / "sweep.txt", report.table(cfg.indicator));
  write_text(out / "sweep_records.txt", report.records());
  console.say(report.table(cfg.indicator));
}

// Desk-FID and diversity at i = 0 and the configured indicator for both
// modes; also the natural branch against the face corpus when one is given.
// Works on an untrained checkpoint as well.
inline void cmd_eval(const RunConfig& cfg, const Console& console = {}) {
  cfg.validate();
  if (cfg.fid_samples < 2) throw ConfigError("fid_samples must be >= 2");
  EvalInputs in = load_eval_inputs(cfg);
  const Generator<float>& g = in.ck.state->model.g;
  const std::int64_t L = g.num_layers();
  if (cfg.indicator < 0 || cfg.indicator > L)
    throw ConfigError("indicator " + std::to_string(cfg.indicator) + " outside [0, " + std::to_string(L) + "]");
  std::optional<Corpus> faces;
  if (!cfg.face_corpus.empty()) faces = load_corpus(cfg.face_corpus, g.config().synthesis.resolution, "face corpus");
  const EvalConfig ec = eval_config(cfg);
  std::ostringstream rec;
  rec << "metric mode indicator theta value\n";
  std::set<std::int64_t> is{0, cfg.indicator};
  for (const auto& src : in.sources)
    for (auto i : is) {
      const double fid = desk_fid(generated_stats(g, src, in.backbone, i, ec), in.real);
      const double div = generated_diversity(g, src, in.backbone, i, ec);
      rec << "desk_fid " << mode_name(src.mode()) << ' ' << i << ' ' << exact_string(sweep_theta(i, ec.theta)) << ' '
          << exact_string(fid) << '\n';
      rec << "diversity " << mode_name(src.mode()) << ' ' << i << ' ' << exact_string(sweep_theta(i, ec.theta)) << ' '
          << exact_string(div) << '\n';
    }
  if (faces) {
    // Natural branch: no style involvement, so any source and i will do.
    Rng rng = Rng::derive(ec.seed, 0xF1D);
    std::vector<Eigen::MatrixXd> parts;
    for (std::int64_t a = 0; a < ec.fid_samples; a += ec.batch) {
      const std::int64_t n = std::min(ec.batch, ec.fid_samples - a);
      auto z_f = rng.normal_tensor<float>({n, g.config().z_dim});
      auto noise = NoiseBundle<float>::random(g.config().synthesis, n, rng);
      ag::NoGradGuard ng;
      parts.push_back(pooled_features(in.backbone, g.synthesize(g.map_face(ag::constant(z_f)), noise).value()));
    }
    Eigen::MatrixXd feats(ec.fid_samples, parts.front().cols());
    Eigen::Index row = 0;
    for (const auto& p : parts) {
      feats.middleRows(row, p.rows()) = p;
      row += p.rows();
    }
    rec << "face_fid natural - - " << exact_string(desk_fid(feature_stats(feats), corpus_stats(in.backbone, *faces, ec.fid_samples))) << '\n';
  }
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / "eval_config.txt", cfg.dump());
  write_text(out / "eval.txt", rec.str());
  console.say(rec.str());
}

// ---- embedding export ----

// Row-major little-endian f32 rows plus a text manifest naming each row.
inline void cmd_embed(const RunConfig& cfg, const Console& console = {}) {
  cfg.validate();
  require_checkpoint(cfg.checkpoint, "checkpoint");
  RunConfig enc_cfg;
  const StyleEncoder<float> enc = load_encoder_checkpoint(cfg.checkpoint, &enc_cfg);
  const Corpus styles = load_corpus(cfg.style_corpus, enc_cfg.encoder_resolution, "style corpus");
  const Tensor<float> codes = encode_all(enc, styles.all<float>(), 32);
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / "embed_config.txt", cfg.dump());
  {
    std::ofstream bin(out / "embeddings.f32", std::ios::binary);
    for (float v : codes.values()) {
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      const unsigned char le[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                                   static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
      bin.write(reinterpret_cast<const char*>(le), 4);
    }
  }
  std::ostringstream m;
  m << "rows = " << codes.dim(0) << "\ndim = " << codes.dim(1) << "\nformat = f32le row-major\nfile = embeddings.f32"
    << "\nencoder_hash = " << hex64(enc.hash()) << "\ncorpus = " << cfg.style_corpus << '\n';
  for (std::int64_t k = 0; k < styles.size(); ++k)
    m << "row " << k << " = " << styles.manifest.entries[static_cast<std::size_t>(k)].path << ' '
      << hex64(styles.manifest.entries[static_cast<std::size_t>(k)].hash) << '\n';
  write_text(out / "embeddings.txt", m.str());
  console.say("wrote ", codes.dim(0), " x ", codes.dim(1), " embeddings to ", out.string());
}

// ---- one-shot finetune ----

// Mean L2 distance between encoded stylized samples (reference-guided with
// z_ref, i = 0) and z_ref itself.
inline double reference_style_distance(const Generator<float>& g, const StyleEncoder<float>& enc, const Tensor<float>& z_ref,
                                       std::int64_t encoder_resolution, std::int64_t n, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, salt::kStyleDistance);
  auto z_f = rng.normal_tensor<float>({n, g.config().z_dim});
  Tensor<float> z_s({n, z_ref.dim(1)});
  for (std::int64_t k = 0; k < n; ++k) std::copy_n(z_ref.data(), z_ref.size(), z_s.data() + k * z_ref.size());
  auto noise = NoiseBundle<float>::random(g.config().synthesis, n, rng);
  const Generated gen = render_pairs(g, z_f, z_s, noise, 0, kFullBlendTheta);
  const Tensor<float> codes = encode_all(enc, resample(gen.stylized, encoder_resolution), 32);
  double total = 0;
  const std::int64_t d = codes.dim(1);
  for (std::int64_t k = 0; k < n; ++k) {
    double s = 0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double e = static_cast<double>(codes[k * d + j]) - z_ref[j];
      s += e * e;
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(n);
}

inline void cmd_finetune(const RunConfig& cfg, const Console& console = {}) {
  cfg.validate();
  GanCheckpoint ck = load_gan(cfg.checkpoint);
  const std::int64_t res = ck.state->model_config.generator.synthesis.resolution;
  const Tensor<float> reference = load_reference(cfg.reference, res);
  const Tensor<float> z_ref = ck.encoder.encode(load_reference(cfg.reference, ck.config.encoder_resolution));
  const Corpus faces = load_corpus(cfg.face_corpus, res, "face corpus");
  if (faces.size() < cfg.finetune_batch) throw ConfigError("face corpus is smaller than finetune_batch");

  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  write_text(out / "finetune_config.txt", cfg.dump());
  const std::uint64_t enc_hash = ck.encoder.hash();
  const std::int64_t probe = 16;
  const double before = reference_style_distance(ck.state->model.g, ck.encoder, z_ref, ck.config.encoder_resolution, probe, cfg.seed);
  BatchPlan plan(sub_seed(cfg.seed, salt::kFinetuneFaces), cfg.finetune_batch, faces.size());
  std::ofstream log(out / "finetune_log.txt");
  log << StepLog::kHeader << '\n';
  const auto t0 = std::chrono::steady_clock::now();
  auto face_source = [&](std::int64_t step, std::int64_t) {
    if ((step + 1) % 50 == 0)
      console.say("finetune step ", step + 1, "/", cfg.finetune_steps, " (",
                  std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), " s)");
    return next_batch<float>(faces, plan, step);
  };
  const auto logs = one_shot_finetune_code(*ck.state, z_ref, reference, face_source, cfg.finetune_steps, cfg.finetune_batch);
  for (const auto& r : logs) log << r.record() << '\n';
  log.close();
  const double after = reference_style_distance(ck.state->model.g, ck.encoder, z_ref, ck.config.encoder_resolution, probe, cfg.seed);
  if (ck.encoder.hash() != enc_hash) throw StateError("encoder weights changed during finetune");

  Bundle b;
  store_gan(b, ck.config, *ck.state, ck.encoder);
  b.set("finetune_reference", cfg.reference);
  b.set("finetune_reference_hash", hex64(file_hash(cfg.reference)));
  save_bundle(b, out / "checkpoint");
  std::ostringstream rep;
  rep << "encoder_hash = " << hex64(enc_hash) << "\nstyle_distance_before = " << exact_string(before)
      << "\nstyle_distance_after = " << exact_string(after) << "\nsteps = " << cfg.finetune_steps << '\n';
  write_text(out / "finetune_report.txt", rep.str());
  console.say(rep.str());
}

// ---- debugging ----

// alpha, m(i; theta) and alpha_hat of a checkpoint, or of a fresh mask with
// L from cfg.resolution when no checkpoint is given.
inline std::string cmd_mask(const RunConfig& cfg, bool theta_given) {
  cfg.validate();
  std::unique_ptr<GanCheckpoint> ck;
  BlendMask<float> fresh(num_layers_for_resolution(cfg.resolution));
  const BlendMask<float>* mask = &fresh;
  if (!cfg.checkpoint.empty()) {
    ck = std::make_unique<GanCheckpoint>(load_gan(cfg.checkpoint));
    mask = &ck->state->model.g.mask();
  }
  const std::int64_t L = mask->num_layers();
  if (cfg.indicator < 0 || cfg.indicator > L)
    throw ConfigError("indicator " + std::to_string(cfg.indicator) + " outside [0, " + std::to_string(L) + "]");
  const double theta = cfg.indicator == 0 && !theta_given ? kFullBlendTheta : cfg.theta;
  indicator_mask<float>(L, cfg.indicator, theta);
  return mask->debug_text(cfg.indicator, theta);
}

}  // namespace blendlab

#endif  // BLENDLAB_WORKFLOWS_HPP_
