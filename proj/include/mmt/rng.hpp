// Copyright 2026 MMT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MMT_RNG_HPP_
#define MMT_RNG_HPP_

#include <cstdint>
#include <random>

namespace mmt {

// Deterministic random source: the (fully specified) mt19937_64 engine plus
// hand-rolled distributions, so that a seeded stream produces identical draws
// on every platform and standard library. Several tests freeze sampled values
// as regression constants, and training reproducibility is checked byte for
// byte, which rules out the implementation-defined std:: distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53-bit resolution. One engine draw.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer on [lo, hi], both ends inclusive. Unbiased (Lemire's
  // multiply-shift with rejection).
  int uniform_int(int lo, int hi);

  // N(mu, sigma^2) via Box-Muller. Always consumes exactly two engine draws.
  double gaussian(double mu, double sigma);

  // Stateless 64-bit mixer (splitmix64 finalizer). Used to derive independent
  // substream seeds, e.g. one per dataset split.
  static std::uint64_t mix(std::uint64_t x);

 private:
  std::mt19937_64 engine_;
};

}  // namespace mmt

#endif  // MMT_RNG_HPP_
