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

#include "sdlab/distribution.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "sdlab/error.h"

namespace sdlab {

Distribution::Distribution(std::vector<double> probs, double tolerance)
    : probs_(std::move(probs)) {
  if (probs_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty distribution");
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "probability entries must be finite and non-negative");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > tolerance) {
    throw Error(ErrorCode::kInvalidArgument,
                "probabilities sum to " + std::to_string(total));
  }
}

Distribution Distribution::Uniform(int size) {
  return Distribution(std::vector<double>(size, 1.0 / size));
}

Distribution Distribution::OneHot(int size, TokenId id) {
  std::vector<double> probs(size, 0.0);
  probs.at(id) = 1.0;
  return Distribution(std::move(probs));
}

Distribution Distribution::Softmax(std::span<const double> logits) {
  const double max = *std::max_element(logits.begin(), logits.end());
  std::vector<double> probs(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - max);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return Distribution(std::move(probs));
}

TokenId Distribution::Argmax() const {
  return static_cast<TokenId>(
      std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
}

double Distribution::Entropy() const {
  double h = 0.0;
  for (double p : probs_) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

double LogSumExp(std::span<const double> values) {
  const double max = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += std::exp(v - max);
  return max + std::log(total);
}

double Overlap(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) {
    throw Error(ErrorCode::kShapeMismatch, "distribution sizes differ");
  }
  double total = 0.0;
  for (int i = 0; i < p.size(); ++i) total += std::min(p[i], q[i]);
  return total;
}

double TotalVariation(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) {
    throw Error(ErrorCode::kShapeMismatch, "distribution sizes differ");
  }
  double total = 0.0;
  for (int i = 0; i < p.size(); ++i) total += std::abs(p[i] - q[i]);
  return 0.5 * total;
}

double KlDivergence(const Distribution& p, const Distribution& q) {
  if (p.size() != q.size()) {
    throw Error(ErrorCode::kShapeMismatch, "distribution sizes differ");
  }
  double total = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    total += p[i] * (std::log(p[i]) - std::log(q[i]));
  }
  return total;
}

}  // namespace sdlab
