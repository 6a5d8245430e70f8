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

#ifndef SDLAB_LANGUAGE_MODEL_H_
#define SDLAB_LANGUAGE_MODEL_H_

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sdlab/distribution.h"
#include "sdlab/vocabulary.h"

namespace sdlab {

// Order-n conditional next-token model backed by a dense logit table with
// vocab^order rows of vocab entries. The row for a history is addressed by
// the base-vocab encoding of its last `order` tokens, left-padded with PAD.
//
// Instances are plain values: copying duplicates the table, and a const
// instance is safe to share across threads.
class SoftmaxTableLM {
 public:
  static constexpr int kMaxOrder = 3;
  // 64^3 contexts x 64 tokens.
  static constexpr std::size_t kMaxEntries = std::size_t{1} << 24;

  // Zero-initialized (uniform) model.
  SoftmaxTableLM(Vocabulary vocab, int order);
  SoftmaxTableLM(Vocabulary vocab, int order, std::vector<double> logits);

  const Vocabulary& vocab() const { return vocab_; }
  int vocab_size() const { return vocab_.size(); }
  int order() const { return order_; }
  std::size_t num_rows() const { return num_rows_; }

  // Validates token ids, then encodes the trailing context.
  std::size_t ContextKey(std::span<const TokenId> history) const;
  // Key of the context obtained by shifting `key` left and appending `next`.
  std::size_t ExtendKey(std::size_t key, TokenId next) const;

  std::span<const double> Row(std::size_t key) const;
  std::span<double> MutableRow(std::size_t key);
  std::span<const double> logits() const { return logits_; }

  Distribution NextDistribution(std::span<const TokenId> history) const;
  Distribution RowDistribution(std::size_t key) const;
  // log q(token | row) via log-sum-exp.
  double LogProb(std::size_t key, TokenId token) const;

  friend bool operator==(const SoftmaxTableLM&,
                         const SoftmaxTableLM&) = default;

 private:
  Vocabulary vocab_;
  int order_;
  std::size_t num_rows_;
  std::vector<double> logits_;
};

// Appends argmax tokens (lowest id wins ties) until EOS or `max_len` new
// tokens. The result excludes the prompt and includes EOS if produced.
Sequence GreedyGenerate(const SoftmaxTableLM& model,
                        std::span<const TokenId> prompt, int max_len);

// Ancestral sampling at temperature 1 from a generator seeded with `seed`.
Sequence SampleGenerate(const SoftmaxTableLM& model,
                        std::span<const TokenId> prompt, int max_len,
                        std::uint64_t seed);

inline constexpr double kDefaultSmoothing = 0.1;
// Stand-in for a zero smoothing count so that every logit stays finite.
inline constexpr double kSmoothingFloor = 1e-12;

// Add-lambda smoothed conditional MLE. Every position of every sequence is
// counted, including the first (whose context is all PAD). The logit of
// (c, t) is ln(count(c, t) + lambda) - ln(total(c) + lambda * V), so rows are
// log-probabilities.
SoftmaxTableLM MleFit(std::span<const Sequence> corpus, int order,
                      const Vocabulary& vocab,
                      double smoothing_count = kDefaultSmoothing);

}  // namespace sdlab

#endif  // SDLAB_LANGUAGE_MODEL_H_
