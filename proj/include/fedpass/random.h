// Copyright 2026 The FedPass Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FEDPASS_RANDOM_H_
#define FEDPASS_RANDOM_H_

#include <cstdint>
#include <random>
#include <vector>

#include "fedpass/tensor.h"

namespace fedpass {

// Explicitly seeded random source. There is no global generator; every
// consumer of randomness receives one of these by reference.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream derived from this generator's seed material and a
  // caller-chosen label; does not advance this generator.
  static Rng Derive(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream),
                      static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
    std::mt19937_64 engine(seq);
    return Rng(engine());
  }

  double Uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  double Normal(double mean, double stddev) {
    if (stddev == 0.0) return mean;
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }

  std::uint64_t NextU64() { return engine_(); }

  Index UniformIndex(Index n) {
    return std::uniform_int_distribution<Index>(0, n - 1)(engine_);
  }

  Tensor NormalTensor(Shape shape, double mean, double stddev) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = Normal(mean, stddev);
    return t;
  }

  Tensor UniformTensor(Shape shape, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) v = Uniform(lo, hi);
    return t;
  }

  std::vector<Index> Permutation(Index n) {
    std::vector<Index> p(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    std::shuffle(p.begin(), p.end(), engine_);
    return p;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fedpass

#endif  // FEDPASS_RANDOM_H_
