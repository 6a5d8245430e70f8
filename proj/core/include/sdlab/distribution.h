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

#ifndef SDLAB_DISTRIBUTION_H_
#define SDLAB_DISTRIBUTION_H_

#include <span>
#include <vector>

#include "sdlab/vocabulary.h"

namespace sdlab {

inline constexpr double kSumTolerance = 1e-9;

// A probability vector over the vocabulary.
class Distribution {
 public:
  Distribution() = default;
  // Validates non-negativity and unit mass (within `tolerance`).
  explicit Distribution(std::vector<double> probs,
                        double tolerance = kSumTolerance);

  static Distribution Uniform(int size);
  static Distribution OneHot(int size, TokenId id);
  // Numerically stable softmax (row max subtracted before exponentiation).
  static Distribution Softmax(std::span<const double> logits);

  int size() const { return static_cast<int>(probs_.size()); }
  double operator[](TokenId id) const { return probs_[id]; }
  std::span<const double> probs() const { return probs_; }

  // Lowest id among the maximal entries.
  TokenId Argmax() const;
  double Entropy() const;

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  std::vector<double> probs_;
};

// log(sum(exp(x))) with the max shifted out.
double LogSumExp(std::span<const double> values);

// Sum of min(p, q); equals 1 - TV(p, q).
double Overlap(const Distribution& p, const Distribution& q);
double TotalVariation(const Distribution& p, const Distribution& q);

// D(p || q) in nats. Terms with p == 0 contribute nothing; q == 0 where
// p > 0 yields +inf.
double KlDivergence(const Distribution& p, const Distribution& q);

}  // namespace sdlab

#endif  // SDLAB_DISTRIBUTION_H_
