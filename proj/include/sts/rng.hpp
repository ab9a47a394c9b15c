// include/sts/rng.hpp

// Copyright 2026  STS toolkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef STS_RNG_HPP_
#define STS_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

namespace sts {

// splitmix64 finalizer; used both as a mixing step for seed derivation and as
// a deterministic hash for per-token embeddings.
inline uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from a base seed plus stream indices,
// e.g. DeriveSeed(base, partition, example) or DeriveSeed(base, step).
inline uint64_t DeriveSeed(uint64_t base, uint64_t a, uint64_t b = 0,
                           uint64_t c = 0) {
  uint64_t s = SplitMix64(base);
  s = SplitMix64(s ^ (a + 0x9e3779b97f4a7c15ULL));
  s = SplitMix64(s ^ (b + 0xc2b2ae3d27d4eb4fULL));
  s = SplitMix64(s ^ (c + 0x165667b19e3779f9ULL));
  return s;
}

// Deterministic RNG. The raw 64-bit stream comes from std::mt19937_64 (whose
// output sequence is fixed by the standard); all mappings to doubles/ints are
// implemented here so results do not depend on library distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t NextU64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double Uniform() {
    return static_cast<double>(NextU64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double Uniform(double lo, double hi) { return lo + (hi - lo) * Uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int64_t UniformInt(int64_t lo, int64_t hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int64_t>(NextU64() % span);
  }

  // Standard normal via Box-Muller (one value per pair of uniforms; the spare
  // is discarded to keep the draw count per call fixed).
  double Normal() {
    double u1 = 0.0;
    do {
      u1 = Uniform();
    } while (u1 <= 0.0);
    double u2 = Uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double Normal(double mean, double stddev) { return mean + stddev * Normal(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sts

#endif  // STS_RNG_HPP_
