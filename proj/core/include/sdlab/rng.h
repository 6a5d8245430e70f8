// Copyright 2026 The sdlab Authors
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

#ifndef SDLAB_RNG_H_
#define SDLAB_RNG_H_

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace sdlab {

// Mixes (master, component, index) into an independent stream seed. Every
// stochastic component derives its seed this way; there is no global RNG.
std::uint64_t DeriveSeed(std::uint64_t master, std::string_view component,
                         std::uint64_t index = 0);

// FNV-1a over a token sequence, used to key per-prompt streams by content.
std::uint64_t HashTokens(std::span<const std::int32_t> tokens);

// Seeded generator with platform-independent draws. std::mt19937_64 output is
// fixed by the standard; the <random> distributions are not, so all
// derived draws are implemented here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 bits of resolution.
  double Uniform();
  // Uniform integer on [0, n).
  std::uint64_t Below(std::uint64_t n);
  // Index drawn proportionally to `weights` (need not be normalized). Zero
  // weights are never selected.
  int Categorical(std::span<const double> weights);
  double Gaussian();

  template <typename T>
  void Shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = Below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sdlab

#endif  // SDLAB_RNG_H_
