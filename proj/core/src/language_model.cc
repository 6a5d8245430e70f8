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

#include "sdlab/language_model.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "sdlab/error.h"
#include "sdlab/rng.h"

namespace sdlab {
namespace {

std::size_t CheckedRows(const Vocabulary& vocab, int order) {
  if (order < 1 || order > SoftmaxTableLM::kMaxOrder) {
    throw Error(ErrorCode::kInvalidArgument,
                "model order " + std::to_string(order) + " outside [1, " +
                    std::to_string(SoftmaxTableLM::kMaxOrder) + "]");
  }
  std::size_t rows = 1;
  for (int i = 0; i < order; ++i) rows *= static_cast<std::size_t>(vocab.size());
  if (rows * static_cast<std::size_t>(vocab.size()) >
      SoftmaxTableLM::kMaxEntries) {
    throw Error(ErrorCode::kInvalidArgument,
                "logit table for vocab " + std::to_string(vocab.size()) +
                    " and order " + std::to_string(order) + " is too large");
  }
  return rows;
}

}  // namespace

SoftmaxTableLM::SoftmaxTableLM(Vocabulary vocab, int order)
    : vocab_(vocab),
      order_(order),
      num_rows_(CheckedRows(vocab, order)),
      logits_(num_rows_ * static_cast<std::size_t>(vocab.size()), 0.0) {}

SoftmaxTableLM::SoftmaxTableLM(Vocabulary vocab, int order,
                               std::vector<double> logits)
    : vocab_(vocab),
      order_(order),
      num_rows_(CheckedRows(vocab, order)),
      logits_(std::move(logits)) {
  if (logits_.size() != num_rows_ * static_cast<std::size_t>(vocab.size())) {
    throw Error(ErrorCode::kShapeMismatch,
                "expected " +
                    std::to_string(num_rows_ * vocab.size()) +
                    " logits, got " + std::to_string(logits_.size()));
  }
  for (double z : logits_) {
    if (!std::isfinite(z)) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite logit");
    }
  }
}

std::size_t SoftmaxTableLM::ContextKey(std::span<const TokenId> history) const {
  vocab_.Validate(history);
  const auto v = static_cast<std::size_t>(vocab_.size());
  std::size_t key = 0;
  const auto n = static_cast<std::ptrdiff_t>(history.size());
  for (std::ptrdiff_t i = n - order_; i < n; ++i) {
    const TokenId t = i < 0 ? Vocabulary::kPad : history[i];
    key = key * v + static_cast<std::size_t>(t);
  }
  return key;
}

std::size_t SoftmaxTableLM::ExtendKey(std::size_t key, TokenId next) const {
  if (!vocab_.Contains(next)) {
    throw Error(ErrorCode::kInvalidToken,
                "token " + std::to_string(next) + " not in vocabulary");
  }
  return (key * static_cast<std::size_t>(vocab_.size()) +
          static_cast<std::size_t>(next)) %
         num_rows_;
}

std::span<const double> SoftmaxTableLM::Row(std::size_t key) const {
  const auto v = static_cast<std::size_t>(vocab_.size());
  return std::span<const double>(logits_).subspan(key * v, v);
}

std::span<double> SoftmaxTableLM::MutableRow(std::size_t key) {
  const auto v = static_cast<std::size_t>(vocab_.size());
  return std::span<double>(logits_).subspan(key * v, v);
}

Distribution SoftmaxTableLM::NextDistribution(
    std::span<const TokenId> history) const {
  return RowDistribution(ContextKey(history));
}

Distribution SoftmaxTableLM::RowDistribution(std::size_t key) const {
  return Distribution::Softmax(Row(key));
}

double SoftmaxTableLM::LogProb(std::size_t key, TokenId token) const {
  const auto row = Row(key);
  return row[token] - LogSumExp(row);
}

Sequence GreedyGenerate(const SoftmaxTableLM& model,
                        std::span<const TokenId> prompt, int max_len) {
  if (max_len < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_len must be >= 1");
  }
  Sequence out;
  std::size_t key = model.ContextKey(prompt);
  for (int i = 0; i < max_len; ++i) {
    const auto row = model.Row(key);
    const auto t = static_cast<TokenId>(
        std::max_element(row.begin(), row.end()) - row.begin());
    out.push_back(t);
    if (t == Vocabulary::kEos) break;
    key = model.ExtendKey(key, t);
  }
  return out;
}

Sequence SampleGenerate(const SoftmaxTableLM& model,
                        std::span<const TokenId> prompt, int max_len,
                        std::uint64_t seed) {
  if (max_len < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_len must be >= 1");
  }
  Rng rng(seed);
  Sequence out;
  std::size_t key = model.ContextKey(prompt);
  for (int i = 0; i < max_len; ++i) {
    const Distribution dist = model.RowDistribution(key);
    const auto t = static_cast<TokenId>(rng.Categorical(dist.probs()));
    out.push_back(t);
    if (t == Vocabulary::kEos) break;
    key = model.ExtendKey(key, t);
  }
  return out;
}

SoftmaxTableLM MleFit(std::span<const Sequence> corpus, int order,
                      const Vocabulary& vocab, double smoothing_count) {
  if (corpus.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty corpus");
  }
  SoftmaxTableLM model(vocab, order);
  const auto v = static_cast<std::size_t>(vocab.size());
  std::vector<double> counts(model.num_rows() * v, 0.0);
  const std::size_t start_key = model.ContextKey({});
  for (const Sequence& seq : corpus) {
    vocab.Validate(seq);
    std::size_t key = start_key;
    for (TokenId t : seq) {
      counts[key * v + static_cast<std::size_t>(t)] += 1.0;
      key = model.ExtendKey(key, t);
    }
  }
  const double lambda =
      smoothing_count > 0.0 ? smoothing_count : kSmoothingFloor;
  for (std::size_t row = 0; row < model.num_rows(); ++row) {
    double total = 0.0;
    for (std::size_t t = 0; t < v; ++t) total += counts[row * v + t];
    const double log_norm = std::log(total + lambda * static_cast<double>(v));
    auto logits = model.MutableRow(row);
    for (std::size_t t = 0; t < v; ++t) {
      const double c = counts[row * v + t];
      logits[t] = std::log(c + lambda) - log_norm;
    }
  }
  return model;
}

}  // namespace sdlab
