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

#include "sdlab/distill.h"

#include <cmath>
#include <limits>
#include <string>

#include "sdlab/error.h"
#include "sdlab/rng.h"

namespace sdlab {

void DistillExample::Validate() const {
  if (completion.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty completion");
  }
  if (target_dists && target_dists->size() != completion.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "target_dists has " + std::to_string(target_dists->size()) +
                    " rows for a completion of " +
                    std::to_string(completion.size()) + " tokens");
  }
}

std::string_view LossKindName(LossKind kind) {
  switch (kind) {
    case LossKind::kSft:
      return "SFT";
    case LossKind::kForwardKl:
      return "FKL";
    case LossKind::kReverseKl:
      return "RKL";
  }
  return "?";
}

LossKind ParseLossKind(std::string_view name) {
  if (name == "SFT" || name == "sft") return LossKind::kSft;
  if (name == "FKL" || name == "fkl") return LossKind::kForwardKl;
  if (name == "RKL" || name == "rkl") return LossKind::kReverseKl;
  throw Error(ErrorCode::kConfig, "unknown loss '" + std::string(name) + "'");
}

TrainConfig TrainConfig::ReferenceOffline(LossKind loss) {
  return {.loss = loss, .learning_rate = 2e-5, .epochs = 3, .batch_size = 8};
}

TrainConfig TrainConfig::ReferenceOnline(LossKind loss) {
  return {.loss = loss, .learning_rate = 1e-6, .epochs = 1, .batch_size = 8};
}

TrainConfig TrainConfig::DeskOffline(LossKind loss) {
  return {.loss = loss, .learning_rate = 0.5, .epochs = 3, .batch_size = 8};
}

TrainConfig TrainConfig::DeskOnline(LossKind loss) {
  return {.loss = loss, .learning_rate = 0.05, .epochs = 1, .batch_size = 8};
}

void TrainConfig::Validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::kConfig, "learning rate must be finite and >= 0");
  }
  if (epochs < 1) throw Error(ErrorCode::kConfig, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::kConfig, "batch size must be >= 1");
}

std::vector<DistillExample> BuildOfflineDataset(
    const SoftmaxTableLM& target, std::span<const Sequence> prompts,
    int max_len, bool white_box) {
  if (prompts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no prompts");
  }
  std::vector<DistillExample> out;
  out.reserve(prompts.size());
  for (const Sequence& prompt : prompts) {
    DistillExample ex{.prompt = prompt,
                      .completion = GreedyGenerate(target, prompt, max_len)};
    if (white_box) {
      std::vector<Distribution> dists;
      dists.reserve(ex.completion.size());
      std::size_t key = target.ContextKey(prompt);
      for (TokenId t : ex.completion) {
        dists.push_back(target.RowDistribution(key));
        key = target.ExtendKey(key, t);
      }
      ex.target_dists = std::move(dists);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

double LossSft(const SoftmaxTableLM& draft, const DistillExample& example) {
  example.Validate();
  std::size_t key = draft.ContextKey(example.prompt);
  double total = 0.0;
  for (TokenId y : example.completion) {
    total -= draft.LogProb(key, y);
    key = draft.ExtendKey(key, y);
  }
  return total / static_cast<double>(example.completion.size());
}

double KdDivergence(const Distribution& p, const Distribution& q,
                    LossKind kind) {
  switch (kind) {
    case LossKind::kForwardKl:
      return KlDivergence(p, q);
    case LossKind::kReverseKl:
      return KlDivergence(q, p);
    case LossKind::kSft:
      break;
  }
  throw Error(ErrorCode::kInvalidArgument, "SFT is not a divergence");
}

double LossKd(const SoftmaxTableLM& draft, const DistillExample& example,
              LossKind kind) {
  example.Validate();
  if (!example.target_dists) {
    throw Error(ErrorCode::kWhiteBoxDataRequired,
                "KD loss needs target distributions");
  }
  std::size_t key = draft.ContextKey(example.prompt);
  double total = 0.0;
  for (std::size_t i = 0; i < example.completion.size(); ++i) {
    total += KdDivergence((*example.target_dists)[i],
                          draft.RowDistribution(key), kind);
    key = draft.ExtendKey(key, example.completion[i]);
  }
  return total / static_cast<double>(example.completion.size());
}

double Loss(const SoftmaxTableLM& draft, const DistillExample& example,
            LossKind kind) {
  return kind == LossKind::kSft ? LossSft(draft, example)
                                : LossKd(draft, example, kind);
}

void SparseGradient::Add(std::size_t key, std::span<const double> values,
                         double scale) {
  auto [it, inserted] = rows_.try_emplace(key);
  if (inserted) it->second.assign(vocab_size_, 0.0);
  for (int j = 0; j < vocab_size_; ++j) it->second[j] += scale * values[j];
}

void SparseGradient::Scale(double factor) {
  for (auto& [key, row] : rows_) {
    for (double& g : row) g *= factor;
  }
}

void SparseGradient::Merge(const SparseGradient& other, double scale) {
  for (const auto& [key, row] : other.rows_) Add(key, row, scale);
}

double SparseGradient::SquaredNorm() const {
  double total = 0.0;
  for (const auto& [key, row] : rows_) {
    for (double g : row) total += g * g;
  }
  return total;
}

std::vector<double> KdRowGradient(const Distribution& p, const Distribution& q,
                                  LossKind kind) {
  std::vector<double> g(q.size());
  if (kind == LossKind::kForwardKl) {
    for (int j = 0; j < q.size(); ++j) g[j] = q[j] - p[j];
    return g;
  }
  if (kind != LossKind::kReverseKl) {
    throw Error(ErrorCode::kInvalidArgument, "SFT has no KD row gradient");
  }
  const double divergence = KlDivergence(q, p);
  if (!std::isfinite(divergence)) {
    throw Error(ErrorCode::kUndefined,
                "reverse KL is infinite where the target has zero mass");
  }
  for (int j = 0; j < q.size(); ++j) {
    g[j] = q[j] == 0.0
               ? 0.0
               : q[j] * (std::log(q[j]) - std::log(p[j]) - divergence);
  }
  return g;
}

namespace {

// Loss and gradient in one pass over the completion.
double LossWithGradient(const SoftmaxTableLM& draft,
                        const DistillExample& example, LossKind kind,
                        SparseGradient& gradient, double scale) {
  example.Validate();
  if (kind != LossKind::kSft && !example.target_dists) {
    throw Error(ErrorCode::kWhiteBoxDataRequired,
                "KD loss needs target distributions");
  }
  const double inv_len = 1.0 / static_cast<double>(example.completion.size());
  std::size_t key = draft.ContextKey(example.prompt);
  double total = 0.0;
  std::vector<double> g;
  for (std::size_t i = 0; i < example.completion.size(); ++i) {
    const TokenId y = example.completion[i];
    const Distribution q = draft.RowDistribution(key);
    if (kind == LossKind::kSft) {
      total -= draft.LogProb(key, y);
      g.assign(q.probs().begin(), q.probs().end());
      g[y] -= 1.0;
    } else {
      const Distribution& p = (*example.target_dists)[i];
      total += KdDivergence(p, q, kind);
      g = KdRowGradient(p, q, kind);
    }
    gradient.Add(key, g, scale * inv_len);
    key = draft.ExtendKey(key, y);
  }
  return total * inv_len;
}

}  // namespace

SparseGradient LossGradient(const SoftmaxTableLM& draft,
                            const DistillExample& example, LossKind kind) {
  SparseGradient gradient(draft.vocab_size());
  LossWithGradient(draft, example, kind, gradient, 1.0);
  return gradient;
}

void ApplySgd(SoftmaxTableLM& model, const SparseGradient& gradient,
              double learning_rate) {
  if (learning_rate == 0.0) return;
  for (const auto& [key, g] : gradient.rows()) {
    auto row = model.MutableRow(key);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] -= learning_rate * g[j];
  }
}

OfflineResult TrainOffline(SoftmaxTableLM draft,
                           std::span<const DistillExample> dataset,
                           const TrainConfig& config) {
  config.Validate();
  if (dataset.empty()) throw Error(ErrorCode::kInvalidArgument, "empty dataset");
  for (const DistillExample& ex : dataset) {
    ex.Validate();
    if (config.loss != LossKind::kSft && !ex.white_box()) {
      throw Error(ErrorCode::kWhiteBoxDataRequired,
                  std::string(LossKindName(config.loss)) +
                      " training needs target distributions");
    }
  }
  Rng rng(DeriveSeed(config.seed, "offline-shuffle"));
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  OfflineResult result{.model = std::move(draft)};
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.Shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(
          order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      SparseGradient gradient(result.model.vocab_size());
      for (std::size_t i = start; i < end; ++i) {
        epoch_loss += LossWithGradient(result.model, dataset[order[i]],
                                       config.loss, gradient, inv_batch);
      }
      ApplySgd(result.model, gradient, config.learning_rate);
    }
    result.epoch_losses.push_back(epoch_loss /
                                  static_cast<double>(dataset.size()));
  }
  return result;
}

OnlineBuffer::OnlineBuffer(int threshold) : threshold_(threshold) {
  if (threshold < 1) {
    throw Error(ErrorCode::kConfig, "buffer threshold must be >= 1");
  }
}

void OnlineBuffer::Add(RejectionRecord record) {
  records_.push_back(std::move(record));
}

bool OnlineBuffer::Ready() const {
  return records_.size() >= static_cast<std::size_t>(threshold_);
}

std::vector<RejectionRecord> OnlineBuffer::Drain() {
  std::vector<RejectionRecord> out;
  out.swap(records_);
  return out;
}

double OnlineUpdate(SoftmaxTableLM& draft,
                    std::span<const RejectionRecord> records, LossKind kind,
                    double learning_rate) {
  if (records.empty()) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(records.size());
  SparseGradient gradient(draft.vocab_size());
  double loss = 0.0;
  for (const RejectionRecord& record : records) {
    const std::size_t key = draft.ContextKey(record.context);
    const Distribution q = draft.RowDistribution(key);
    loss += KdDivergence(record.target_dist, q, kind);
    gradient.Add(key, KdRowGradient(record.target_dist, q, kind), inv_n);
  }
  ApplySgd(draft, gradient, learning_rate);
  return loss * inv_n;
}

OnlineResult TrainOnline(SoftmaxTableLM draft, const SoftmaxTableLM& target,
                         std::span<const Sequence> prompt_stream,
                         const OnlineOptions& options,
                         const TrainConfig& config, std::uint64_t seed) {
  config.Validate();
  if (config.loss == LossKind::kSft) {
    throw Error(ErrorCode::kConfig,
                "online distillation needs a KD loss; buffered records carry "
                "distributions, not completions");
  }
  OnlineBuffer buffer(options.buffer_threshold);
  OnlineResult result{.model = std::move(draft),
                      .last_update_loss =
                          std::numeric_limits<double>::quiet_NaN()};
  std::int64_t tokens = 0;
  for (std::size_t i = 0; i < prompt_stream.size(); ++i) {
    DecodeSession session(target, prompt_stream[i], options.decode,
                          DeriveSeed(seed, "online-prompt", i));
    while (!session.done()) {
      SpeculationRound round = session.Step(result.model);
      for (RejectionRecord& record : round.rejection_records) {
        buffer.Add(std::move(record));
        ++result.total_records;
        if (buffer.Ready()) {
          const auto batch = buffer.Drain();
          result.last_update_loss = OnlineUpdate(result.model, batch,
                                                 config.loss,
                                                 config.learning_rate);
          ++result.updates;
        }
      }
    }
    tokens += static_cast<std::int64_t>(session.output().size());
    result.stats += session.stats();
    result.trace.push_back({.tokens_processed = tokens,
                            .acceptance_rate = result.stats.acceptance_rate(),
                            .prompt_stats = session.stats(),
                            .updates = result.updates});
  }
  result.pending_records = buffer.size();
  return result;
}

}  // namespace sdlab
