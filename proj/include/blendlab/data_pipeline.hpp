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

// Image corpus ingestion (center crop + resize, 8-bit cache) and seeded,
// epoch-permuted batching.

#ifndef BLENDLAB_DATA_PIPELINE_HPP_
#define BLENDLAB_DATA_PIPELINE_HPP_

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "blendlab/image_io.hpp"
#include "blendlab/rng.hpp"

namespace blendlab {

namespace fs = std::filesystem;

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ull) {
  const auto* b = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= b[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ImageError("cannot read " + p.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof(buf));
    h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct ManifestEntry {
  std::string path;  // relative to the corpus root, '/' separated
  std::uint64_t hash = 0;
  int width = 0, height = 0;  // source dimensions

  bool operator==(const ManifestEntry&) const = default;
};

struct CorpusManifest {
  std::string root;
  int size = 0;
  std::string split = "train";
  std::vector<ManifestEntry> entries;
  std::vector<std::pair<std::string, std::string>> rejects;  // path, reason
  std::vector<std::string> warnings;

  // One record per line: relative path, hash, width, height (tab separated).
  std::string text() const {
    std::ostringstream os;
    os << "# blendlab-manifest size=" << size << " split=" << split << '\n';
    for (const auto& e : entries) os << e.path << '\t' << hex64(e.hash) << '\t' << e.width << '\t' << e.height << '\n';
    return os.str();
  }
  std::uint64_t hash() const {
    const std::string t = text();
    return fnv1a(t.data(), t.size());
  }
  std::string rejects_text() const {
    std::ostringstream os;
    for (const auto& [p, why] : rejects) os << p << '\t' << why << '\n';
    return os.str();
  }
};

// Cache root: $BLENDLAB_CACHE if set, otherwise <root>/.blendlab_cache.
inline fs::path cache_root_for(const fs::path& corpus_root) {
  if (const char* env = std::getenv("BLENDLAB_CACHE"); env && *env) return fs::path(env);
  return corpus_root / ".blendlab_cache";
}

inline fs::path cache_path(const fs::path& cache_root, std::uint64_t hash, int size) {
  return cache_root / (hex64(hash) + "_" + std::to_string(size) + ".rgb");
}

namespace detail {

inline bool hidden_component(const fs::path& rel) {
  for (const auto& part : rel)
    if (!part.empty() && part.string()[0] == '.') return true;
  return false;
}

inline bool read_cached(const fs::path& p, int size, std::vector<std::uint8_t>& out) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return false;
  out.resize(static_cast<std::size_t>(size) * size * 3);
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size()));
  return static_cast<std::size_t>(in.gcount()) == out.size() && in.peek() == EOF;
}

}  // namespace detail

// In-memory corpus: manifest plus the cropped 8-bit pixels, [N, size, size, 3].
struct Corpus {
  CorpusManifest manifest;
  std::vector<std::uint8_t> pixels;

  std::int64_t size() const { return static_cast<std::int64_t>(manifest.entries.size()); }
  int resolution() const { return manifest.size; }

  Image8 image(std::int64_t i) const {
    const std::size_t n = static_cast<std::size_t>(manifest.size) * manifest.size * 3;
    Image8 img;
    img.width = img.height = manifest.size;
    img.rgb.assign(pixels.begin() + static_cast<std::ptrdiff_t>(i * n), pixels.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    return img;
  }

  // Images at `indices` as [B, 3, size, size] with x / 127.5 - 1.
  template <class T>
  Tensor<T> gather(const std::vector<std::int64_t>& indices) const {
    const std::int64_t r = manifest.size, plane = r * r;
    Tensor<T> out({static_cast<std::int64_t>(indices.size()), 3, r, r});
    for (std::size_t b = 0; b < indices.size(); ++b) {
      if (indices[b] < 0 || indices[b] >= size()) throw ArgumentError("corpus index out of range");
      const std::uint8_t* src = pixels.data() + indices[b] * plane * 3;
      T* dst = out.data() + static_cast<std::int64_t>(b) * 3 * plane;
      for (std::int64_t i = 0; i < plane; ++i)
        for (int c = 0; c < 3; ++c) dst[c * plane + i] = static_cast<T>(src[i * 3 + c]) / T(127.5) - T(1);
    }
    return out;
  }
  template <class T>
  Tensor<T> all() const {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(size()));
    std::iota(idx.begin(), idx.end(), 0);
    return gather<T>(idx);
  }
};

// Walks `root` (recursively, sorted, skipping dot-paths), decodes every
// regular file, crops and resizes to size x size. Undecodable files go to
// the rejects list. Processed pixels are cached by content hash.
inline Corpus ingest(const fs::path& root, int size, const std::string& split = "train") {
  if (size < 1) throw ConfigError("ingest size must be positive");
  if (!fs::is_directory(root)) throw ConfigError("corpus directory does not exist: " + root.string());
  Corpus c;
  c.manifest.root = root.string();
  c.manifest.size = size;
  c.manifest.split = split;

  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root);
    if (detail::hidden_component(rel)) continue;
    files.push_back(rel.generic_string());
  }
  std::sort(files.begin(), files.end());

  const fs::path cache = cache_root_for(root);
  std::error_code ec;
  fs::create_directories(cache, ec);
  const bool cache_ok = !ec;
  const std::size_t per = static_cast<std::size_t>(size) * size * 3;
  std::vector<std::uint8_t> px;
  for (const auto& rel : files) {
    const fs::path full = root / rel;
    try {
      ManifestEntry e;
      e.path = rel;
      e.hash = file_hash(full);
      const fs::path cp = cache_path(cache, e.hash, size);
      // Source dimensions are kept next to the cached pixels.
      const fs::path dims = cp.string() + ".dims";
      bool hit = false;
      if (cache_ok && detail::read_cached(cp, size, px)) {
        std::ifstream d(dims);
        hit = static_cast<bool>(d >> e.width >> e.height);
      }
      if (!hit) {
        const Image8 img = read_image(full);
        if (img.width < 1 || img.height < 1) throw ImageError("empty image");
        e.width = img.width;
        e.height = img.height;
        px = center_crop_resize(img, size).rgb;
        if (cache_ok) {
          std::ofstream out(cp, std::ios::binary);
          out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
          std::ofstream(dims) << e.width << ' ' << e.height << '\n';
        }
      }
      if (px.size() != per) throw ImageError("cached image has the wrong size");
      c.pixels.insert(c.pixels.end(), px.begin(), px.end());
      c.manifest.entries.push_back(e);
    } catch (const ImageError& err) {
      c.manifest.rejects.emplace_back(rel, err.what());
    }
  }
  if (c.manifest.entries.empty()) c.manifest.warnings.push_back("no decodable images under " + root.string());
  if (!c.manifest.rejects.empty())
    c.manifest.warnings.push_back(std::to_string(c.manifest.rejects.size()) + " file(s) rejected");
  return c;
}

// Index stream: epoch e visits a fresh permutation drawn from (seed, e).
class BatchPlan {
 public:
  BatchPlan(std::uint64_t seed, std::int64_t batch_size, std::int64_t corpus_size)
      : seed_(seed), batch_(batch_size), n_(corpus_size) {
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }

  std::uint64_t seed() const { return seed_; }
  std::int64_t batch_size() const { return batch_; }
  std::int64_t corpus_size() const { return n_; }

  std::vector<std::int64_t> permutation(std::int64_t epoch) const {
    std::vector<std::int64_t> p(static_cast<std::size_t>(n_));
    std::iota(p.begin(), p.end(), 0);
    Rng rng = Rng::derive(seed_, static_cast<std::uint64_t>(epoch));
    for (std::int64_t i = n_ - 1; i > 0; --i)
      std::swap(p[static_cast<std::size_t>(i)], p[rng.below(static_cast<std::uint64_t>(i + 1))]);
    return p;
  }

  // Indices of batch `step`; batches run straight across epoch boundaries.
  std::vector<std::int64_t> indices(std::int64_t step) const {
    if (n_ == 0) throw StateError("batching an empty corpus");
    if (step < 0) throw ArgumentError("negative batch step");
    std::vector<std::int64_t> out;
    out.reserve(static_cast<std::size_t>(batch_));
    for (std::int64_t k = 0; k < batch_; ++k) {
      const std::int64_t pos = step * batch_ + k;
      const std::int64_t epoch = pos / n_;
      if (epoch != cached_epoch_) {
        cached_ = permutation(epoch);
        cached_epoch_ = epoch;
      }
      out.push_back(cached_[static_cast<std::size_t>(pos % n_)]);
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  std::int64_t batch_, n_;
  mutable std::int64_t cached_epoch_ = -1;
  mutable std::vector<std::int64_t> cached_;
};

template <class T>
Tensor<T> next_batch(const Corpus& corpus, const BatchPlan& plan, std::int64_t step) {
  if (corpus.size() == 0) throw StateError("next_batch on an empty corpus");
  if (plan.corpus_size() != corpus.size()) throw ArgumentError("batch plan was built for a different corpus size");
  return corpus.gather<T>(plan.indices(step));
}

}  // namespace blendlab

#endif  // BLENDLAB_DATA_PIPELINE_HPP_
