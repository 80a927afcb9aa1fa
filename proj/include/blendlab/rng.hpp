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

#ifndef BLENDLAB_RNG_HPP_
#define BLENDLAB_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "blendlab/tensor.hpp"

namespace blendlab {

// Seeded random source. The only state is the engine, so the stream is fully
// captured by state() and restored by set_state().
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("Rng::below(0)");
    // Rejection sampling keeps the draw exactly uniform.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Marsaglia's polar method, no cached second value.
  double normal() {
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }

  template <class T>
  Tensor<T> normal_tensor(Shape shape, T stddev = T(1)) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(normal()) * stddev;
    return t;
  }

  template <class T>
  Tensor<T> uniform_tensor(Shape shape, T lo, T hi) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.values()) v = static_cast<T>(uniform(lo, hi));
    return t;
  }

  // Derives an independent stream, e.g. one per subsystem.
  Rng fork(std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(engine_()), static_cast<std::uint32_t>(salt),
                      static_cast<std::uint32_t>(salt >> 32)};
    Rng child;
    child.engine_.seed(seq);
    return child;
  }

  // Stream determined by (seed, salt) alone; does not touch any other Rng.
  static Rng derive(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    Rng child;
    child.engine_.seed(seq);
    return child;
  }

  std::string state() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }
  void set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_;
    if (!is) throw ArgumentError("malformed rng state");
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace blendlab

#endif  // BLENDLAB_RNG_HPP_
