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

#ifndef SDLAB_DISTILL_H_
#define SDLAB_DISTILL_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "sdlab/distribution.h"
#include "sdlab/language_model.h"
#include "sdlab/specdec.h"

namespace sdlab {

// One training item: a prompt, the target's completion, and (for white-box
// training) the target distribution at every completion position.
struct DistillExample {
  Sequence prompt;
  Sequence completion;
  std::optional<std::vector<Distribution>> target_dists;

  bool white_box() const { return target_dists.has_value(); }
  // Non-empty completion; one distribution per completion token if present.
  void Validate() const;

  friend bool operator==(const DistillExample&,
                         const DistillExample&) = default;
};

enum class LossKind {
  kSft,
  // D(p || q), p the target.
  kForwardKl,
  // D(q || p).
  kReverseKl,
};

std::string_view LossKindName(LossKind kind);
LossKind ParseLossKind(std::string_view name);

struct TrainConfig {
  LossKind loss = LossKind::kForwardKl;
  double learning_rate = 0.5;
  int epochs = 3;
  int batch_size = 8;
  std::uint64_t seed = 0;

  // Reference hyperparameters for 8B-scale models.
  static TrainConfig ReferenceOffline(LossKind loss);
  static TrainConfig ReferenceOnline(LossKind loss);
  // Step sizes rescaled for tabular logits. Online keeps the smaller rate.
  static TrainConfig DeskOffline(LossKind loss);
  static TrainConfig DeskOnline(LossKind loss);

  void Validate() const;
};

// Greedy target completions for each prompt; with `white_box`, also the
// target distribution at every completion position.
std::vector<DistillExample> BuildOfflineDataset(
    const SoftmaxTableLM& target, std::span<const Sequence> prompts,
    int max_len, bool white_box);

// Mean over completion positions of -log q(y_i | x, y_<i).
double LossSft(const SoftmaxTableLM& draft, const DistillExample& example);
// Mean over completion positions of D(p||q) or D(q||p).
double LossKd(const SoftmaxTableLM& draft, const DistillExample& example,
              LossKind kind);
double Loss(const SoftmaxTableLM& draft, const DistillExample& example,
            LossKind kind);

// Divergence between a target row p and draft row q for a KD kind.
double KdDivergence(const Distribution& p, const Distribution& q,
                    LossKind kind);

// Gradient with respect to touched logit rows, keyed by context row.
class SparseGradient {
 public:
  explicit SparseGradient(int vocab_size) : vocab_size_(vocab_size) {}

  // Accumulates scale * values into row `key`.
  void Add(std::size_t key, std::span<const double> values, double scale);
  void Scale(double factor);
  void Merge(const SparseGradient& other, double scale);

  const std::map<std::size_t, std::vector<double>>& rows() const {
    return rows_;
  }
  double SquaredNorm() const;

 private:
  int vocab_size_;
  std::map<std::size_t, std::vector<double>> rows_;
};

// Analytic gradient of Loss(draft, example, kind) with respect to the draft
// logits. Per position, with q the draft row:
//   SFT: q - onehot(y_i);  FKL: q - p;  RKL: q * (ln(q/p) - D(q||p)),
// each scaled by 1/|y|.
SparseGradient LossGradient(const SoftmaxTableLM& draft,
                            const DistillExample& example, LossKind kind);

// Per-row KD gradient for a single (q, p) pair.
std::vector<double> KdRowGradient(const Distribution& p, const Distribution& q,
                                  LossKind kind);

// logits -= learning_rate * gradient. A zero rate leaves the model untouched.
void ApplySgd(SoftmaxTableLM& model, const SparseGradient& gradient,
              double learning_rate);

struct OfflineResult {
  SoftmaxTableLM model;
  // Mean pre-step batch loss for each epoch.
  std::vector<double> epoch_losses;
};

// Plain mini-batch SGD, reshuffled every epoch from config.seed. Batch
// gradients average per-example gradients, which are themselves per-token
// means.
OfflineResult TrainOffline(SoftmaxTableLM draft,
                           std::span<const DistillExample> dataset,
                           const TrainConfig& config);

// Accumulates rejection records; a caller drains it once Ready().
class OnlineBuffer {
 public:
  explicit OnlineBuffer(int threshold);

  void Add(RejectionRecord record);
  bool Ready() const;
  std::vector<RejectionRecord> Drain();

  int threshold() const { return threshold_; }
  std::size_t size() const { return records_.size(); }
  const std::vector<RejectionRecord>& records() const { return records_; }

 private:
  int threshold_;
  std::vector<RejectionRecord> records_;
};

inline constexpr int kDefaultBufferThreshold = 32;

struct OnlineOptions {
  DecodeOptions decode;
  int buffer_threshold = kDefaultBufferThreshold;
};

struct OnlineTracePoint {
  std::int64_t tokens_processed = 0;
  // Cumulative acceptance rate up to and including this prompt.
  double acceptance_rate = 0.0;
  // This prompt's own counts.
  DecodeStats prompt_stats;
  // Updates fired so far.
  int updates = 0;
};

struct OnlineResult {
  SoftmaxTableLM model;
  std::vector<OnlineTracePoint> trace;
  int updates = 0;
  // Records still buffered when the stream ended.
  std::size_t pending_records = 0;
  std::int64_t total_records = 0;
  // Pre-step loss of the most recent update; NaN if none fired.
  double last_update_loss = 0.0;
  DecodeStats stats;
};

// One gradient step of the KD loss over buffered records. Draft rows are
// read from the current model, not from the time of rejection.
double OnlineUpdate(SoftmaxTableLM& draft,
                    std::span<const RejectionRecord> records, LossKind kind,
                    double learning_rate);

// Single pass over the prompt stream with speculative decoding; buffered
// rejections trigger one update each time the buffer reaches the threshold.
// SFT is rejected with kConfig.
OnlineResult TrainOnline(SoftmaxTableLM draft, const SoftmaxTableLM& target,
                         std::span<const Sequence> prompt_stream,
                         const OnlineOptions& options,
                         const TrainConfig& config, std::uint64_t seed);

}  // namespace sdlab

#endif  // SDLAB_DISTILL_H_
