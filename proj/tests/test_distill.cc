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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "sdlab/distill.h"
#include "sdlab/error.h"
#include "test_util.h"

namespace sdlab {
namespace {

using testing::RandomModel;

const Sequence kPrompt = {Vocabulary::kUser, 5, Vocabulary::kAssistant};

DistillExample RandomExample(Rng& rng, int vocab, int len, bool white_box) {
  DistillExample ex{.prompt = kPrompt,
                    .completion = testing::RandomSequence(rng, vocab, len)};
  if (white_box) {
    std::vector<Distribution> dists;
    for (int i = 0; i < len; ++i) dists.push_back(testing::RandomDistribution(rng, vocab));
    ex.target_dists = std::move(dists);
  }
  return ex;
}

// Direct per-position summation, independent of the library's loss code.
double SftOracle(const SoftmaxTableLM& m, const DistillExample& ex) {
  Sequence h = ex.prompt;
  double total = 0.0;
  for (TokenId y : ex.completion) {
    const Distribution q = m.NextDistribution(h);
    total -= std::log(q[y]);
    h.push_back(y);
  }
  return total / ex.completion.size();
}

TEST(Example, Validation) {
  DistillExample ex{.prompt = kPrompt, .completion = {}};
  EXPECT_THROW(ex.Validate(), Error);
  ex.completion = {4, 5};
  ex.target_dists = std::vector<Distribution>{Distribution::Uniform(8)};
  EXPECT_THROW(ex.Validate(), Error);
}

TEST(TrainConfig, ReferenceAndDeskDefaults) {
  const auto off = TrainConfig::ReferenceOffline(LossKind::kForwardKl);
  EXPECT_EQ(off.learning_rate, 2e-5);
  EXPECT_EQ(off.epochs, 3);
  EXPECT_EQ(off.batch_size, 8);
  const auto on = TrainConfig::ReferenceOnline(LossKind::kForwardKl);
  EXPECT_EQ(on.learning_rate, 1e-6);
  EXPECT_EQ(on.epochs, 1);
  EXPECT_EQ(on.batch_size, 8);
  EXPECT_EQ(TrainConfig::DeskOffline(LossKind::kSft).learning_rate, 0.5);
  EXPECT_EQ(TrainConfig::DeskOnline(LossKind::kReverseKl).learning_rate, 0.05);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.Validate(), Error);
}

TEST(LossKind, Names) {
  for (auto k : {LossKind::kSft, LossKind::kForwardKl, LossKind::kReverseKl}) {
    EXPECT_EQ(ParseLossKind(LossKindName(k)), k);
  }
  EXPECT_THROW(ParseLossKind("JSD"), Error);
}

TEST(BuildOfflineDataset, GreedyConsistentAndDeterministic) {
  Rng rng(1);
  const auto target = RandomModel(rng, 8, 2, 2.0);
  const std::vector<Sequence> prompts = {kPrompt, {Vocabulary::kUser, 6, 7, Vocabulary::kAssistant}};
  const auto a = BuildOfflineDataset(target, prompts, 12, true);
  const auto b = BuildOfflineDataset(target, prompts, 12, true);
  ASSERT_EQ(a.size(), 2u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].completion, b[i].completion);
    EXPECT_EQ(a[i].completion, GreedyGenerate(target, prompts[i], 12));
    ASSERT_TRUE(a[i].white_box());
    for (std::size_t j = 0; j < a[i].completion.size(); ++j) {
      EXPECT_EQ((*a[i].target_dists)[j].Argmax(), a[i].completion[j]);
    }
  }
  EXPECT_FALSE(BuildOfflineDataset(target, prompts, 12, false)[0].white_box());
}

TEST(BuildOfflineDataset, ForcedChain) {
  const auto target = testing::ConstantModel(8, 1, 6);
  const auto ds = BuildOfflineDataset(target, std::vector<Sequence>{kPrompt}, 4, false);
  EXPECT_EQ(ds[0].completion, (Sequence{6, 6, 6, 6}));
}

// The smallest vocabulary holds 8 tokens, so the uniform case is ln 8.
TEST(LossSft, UniformDraftIsLnV) {
  for (int v : {8, 40, 64}) {
    SoftmaxTableLM draft(Vocabulary(v), 1);
    DistillExample ex{.prompt = kPrompt, .completion = {2, 3, 0, 7}};
    EXPECT_NEAR(LossSft(draft, ex), std::log(static_cast<double>(v)), 1e-14);
  }
  EXPECT_NEAR(std::log(8.0), 2.079442, 1e-6);
}

TEST(LossSft, ConfidentDraftApproachesZero) {
  const auto draft = testing::ConstantModel(8, 1, 5, 40.0);
  DistillExample ex{.prompt = kPrompt, .completion = {5, 5}};
  EXPECT_LT(LossSft(draft, ex), 1e-15);
}

TEST(LossSft, MatchesSummationOracle) {
  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto draft = RandomModel(rng, 8, 2);
    const auto ex = RandomExample(rng, 8, 1 + rng.Below(6), false);
    EXPECT_NEAR(LossSft(draft, ex), SftOracle(draft, ex), 1e-12);
  }
}

TEST(LossKd, HandOracleAndIdentity) {
  const Distribution p({0.75, 0.25});
  const Distribution q = Distribution::Uniform(2);
  const double fkl = 0.75 * std::log(1.5) + 0.25 * std::log(0.5);
  EXPECT_NEAR(KdDivergence(p, q, LossKind::kForwardKl), fkl, 1e-15);
  EXPECT_NEAR(fkl, 0.130812, 1e-6);
  EXPECT_EQ(KdDivergence(p, p, LossKind::kForwardKl), 0.0);
  EXPECT_EQ(KdDivergence(p, p, LossKind::kReverseKl), 0.0);

  Rng rng(3);
  const auto draft = RandomModel(rng, 8, 1);
  DistillExample ex{.prompt = kPrompt, .completion = {4, 5}};
  Sequence h = kPrompt;
  std::vector<Distribution> dists;
  for (TokenId t : ex.completion) {
    dists.push_back(draft.NextDistribution(h));
    h.push_back(t);
  }
  ex.target_dists = dists;
  EXPECT_NEAR(LossKd(draft, ex, LossKind::kForwardKl), 0.0, 1e-12);
  EXPECT_NEAR(LossKd(draft, ex, LossKind::kReverseKl), 0.0, 1e-12);
}

TEST(LossKd, NonNegativeAndNeedsWhiteBox) {
  Rng rng(4);
  for (int i = 0; i < 50; ++i) {
    const auto draft = RandomModel(rng, 8, 2);
    const auto ex = RandomExample(rng, 8, 4, true);
    EXPECT_GE(LossKd(draft, ex, LossKind::kForwardKl), 0.0);
    EXPECT_GE(LossKd(draft, ex, LossKind::kReverseKl), 0.0);
  }
  const auto draft = RandomModel(rng, 8, 2);
  const auto black = RandomExample(rng, 8, 3, false);
  try {
    LossKd(draft, black, LossKind::kForwardKl);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWhiteBoxDataRequired);
  }
}

TEST(Gradient, FklTwoTokenExample) {
  const auto g = KdRowGradient(Distribution({0.75, 0.25}), Distribution::Uniform(2),
                               LossKind::kForwardKl);
  EXPECT_NEAR(g[0], -0.25, 1e-15);
  EXPECT_NEAR(g[1], 0.25, 1e-15);
}

TEST(Gradient, RklVanishesAtTheTarget) {
  Rng rng(5);
  const auto p = testing::RandomDistribution(rng, 6);
  for (double v : KdRowGradient(p, p, LossKind::kReverseKl)) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, SftVanishesForConfidentDraft) {
  const auto draft = testing::ConstantModel(8, 1, 5, 40.0);
  DistillExample ex{.prompt = kPrompt, .completion = {5}};
  const auto g = LossGradient(draft, ex, LossKind::kSft);
  EXPECT_LT(g.SquaredNorm(), 1e-30);
}

TEST(Gradient, RepeatedContextsAccumulate) {
  // Order-1 draft, completion 5 5 5: the row for context {5} is hit twice.
  SoftmaxTableLM draft(Vocabulary(8), 1);
  DistillExample ex{.prompt = kPrompt, .completion = {5, 5, 5}};
  const auto g = LossGradient(draft, ex, LossKind::kSft);
  ASSERT_EQ(g.rows().size(), 2u);
  const auto& row5 = g.rows().at(draft.ContextKey(Sequence{5}));
  EXPECT_NEAR(row5[5], 2.0 * (1.0 / 8.0 - 1.0) / 3.0, 1e-15);
}

// Central finite differences over every touched logit.
double FiniteDifferenceError(const SoftmaxTableLM& draft, const DistillExample& ex,
                             LossKind kind) {
  const auto g = LossGradient(draft, ex, kind);
  const double h = 1e-6;
  double diff2 = 0.0, a2 = 0.0, b2 = 0.0;
  for (const auto& [key, row] : g.rows()) {
    for (int t = 0; t < draft.vocab_size(); ++t) {
      SoftmaxTableLM plus = draft, minus = draft;
      plus.MutableRow(key)[t] += h;
      minus.MutableRow(key)[t] -= h;
      const double fd = (Loss(plus, ex, kind) - Loss(minus, ex, kind)) / (2 * h);
      diff2 += (fd - row[t]) * (fd - row[t]);
      a2 += row[t] * row[t];
      b2 += fd * fd;
    }
  }
  const double denom = std::sqrt(a2) + std::sqrt(b2);
  return denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
}

TEST(Gradient, MatchesFiniteDifferences) {
  Rng rng(6);
  for (int i = 0; i < 30; ++i) {
    const int order = 1 + rng.Below(2);
    const auto draft = RandomModel(rng, 8, order);
    const auto ex = RandomExample(rng, 8, 1 + rng.Below(5), true);
    for (auto kind : {LossKind::kSft, LossKind::kForwardKl, LossKind::kReverseKl}) {
      EXPECT_LT(FiniteDifferenceError(draft, ex, kind), 1e-4);
    }
  }
}

TEST(Sgd, SmallStepDecreasesBatchLoss) {
  Rng rng(7);
  int checked = 0;
  for (int i = 0; i < 60; ++i) {
    auto draft = RandomModel(rng, 8, 2);
    std::vector<DistillExample> batch;
    for (int j = 0; j < 4; ++j) batch.push_back(RandomExample(rng, 8, 3, true));
    const auto kind = static_cast<LossKind>(i % 3);
    SparseGradient g(8);
    double before = 0.0;
    for (const auto& ex : batch) {
      g.Merge(LossGradient(draft, ex, kind), 1.0 / batch.size());
      before += Loss(draft, ex, kind) / batch.size();
    }
    if (g.SquaredNorm() < 1e-20) continue;
    ApplySgd(draft, g, 1e-3);
    double after = 0.0;
    for (const auto& ex : batch) after += Loss(draft, ex, kind) / batch.size();
    EXPECT_LT(after, before);
    ++checked;
  }
  EXPECT_GT(checked, 50);
}

TEST(Sgd, ZeroRateIsANoOp) {
  Rng rng(8);
  const auto draft = RandomModel(rng, 8, 2);
  std::vector<DistillExample> data;
  for (int i = 0; i < 10; ++i) data.push_back(RandomExample(rng, 8, 3, true));
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  const auto out = TrainOffline(draft, data, cfg);
  EXPECT_EQ(out.model, draft);
}

TEST(TrainOffline, ReducesLossAndIsReproducible) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(100 + seed);
    const auto target = RandomModel(rng, 8, 2, 2.0);
    // Exhaustive-context data: one prompt per order-2 context.
    std::vector<Sequence> prompts;
    for (TokenId a = 4; a < 8; ++a) {
      for (TokenId b = 4; b < 8; ++b) prompts.push_back({a, b});
    }
    const auto data = BuildOfflineDataset(target, prompts, 6, true);
    const SoftmaxTableLM draft(Vocabulary(8), 2);
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 5;
    double initial = 0.0;
    for (const auto& ex : data) initial += Loss(draft, ex, LossKind::kForwardKl);
    initial /= data.size();
    const auto a = TrainOffline(draft, data, cfg);
    const auto b = TrainOffline(draft, data, cfg);
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.epoch_losses, b.epoch_losses);
    ASSERT_EQ(a.epoch_losses.size(), 5u);
    double final_loss = 0.0;
    for (const auto& ex : data) final_loss += Loss(a.model, ex, LossKind::kForwardKl);
    final_loss /= data.size();
    EXPECT_LT(final_loss, initial);
  }
}

TEST(TrainOffline, WhiteBoxLossOnBlackBoxData) {
  Rng rng(9);
  const auto draft = RandomModel(rng, 8, 1);
  std::vector<DistillExample> data = {RandomExample(rng, 8, 3, false)};
  TrainConfig cfg;
  cfg.loss = LossKind::kReverseKl;
  try {
    TrainOffline(draft, data, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWhiteBoxDataRequired);
  }
  cfg.loss = LossKind::kSft;
  EXPECT_NO_THROW(TrainOffline(draft, data, cfg));
}

TEST(OnlineBuffer, ThresholdContract) {
  EXPECT_THROW(OnlineBuffer(0), Error);
  OnlineBuffer buffer(8);
  int fired = 0;
  for (int i = 0; i < 20; ++i) {
    buffer.Add({kPrompt, Distribution::Uniform(8)});
    if (buffer.Ready()) {
      EXPECT_EQ(buffer.Drain().size(), 8u);
      ++fired;
    }
  }
  EXPECT_EQ(fired, 2);
  EXPECT_EQ(buffer.size(), 4u);
}

// Target always ends with EOS; the draft strongly prefers token 5, so in
// greedy mode every prompt produces exactly one imperfect round.
TEST(TrainOnline, ScriptedStreamFiresTwice) {
  const auto target = testing::ConstantModel(8, 1, Vocabulary::kEos);
  const auto draft = testing::ConstantModel(8, 1, 5, 30.0);
  std::vector<Sequence> stream(20, kPrompt);
  OnlineOptions opt{.decode = {.k = 3, .max_new_tokens = 8,
                               .mode = VerificationMode::kGreedy},
                    .buffer_threshold = 8};
  TrainConfig cfg = TrainConfig::DeskOnline(LossKind::kForwardKl);
  cfg.learning_rate = 1e-3;
  const auto r = TrainOnline(draft, target, stream, opt, cfg, 1);
  EXPECT_EQ(r.total_records, 20);
  EXPECT_EQ(r.updates, 2);
  EXPECT_EQ(r.pending_records, 4u);
  EXPECT_FALSE(std::isnan(r.last_update_loss));
  ASSERT_EQ(r.trace.size(), 20u);
  for (std::size_t i = 0; i < r.trace.size(); ++i) {
    EXPECT_EQ(r.trace[i].updates, static_cast<int>((i + 1) / 8));
  }
  EXPECT_NE(r.model, draft);
}

TEST(TrainOnline, IdenticalDraftNeverUpdates) {
  Rng rng(10);
  const auto m = RandomModel(rng, 8, 2);
  std::vector<Sequence> stream(30, kPrompt);
  OnlineOptions opt{.decode = {.k = 4, .max_new_tokens = 16}, .buffer_threshold = 4};
  const auto r = TrainOnline(m, m, stream, opt, TrainConfig::DeskOnline(LossKind::kForwardKl), 2);
  EXPECT_EQ(r.updates, 0);
  EXPECT_EQ(r.total_records, 0);
  EXPECT_EQ(r.model, m);
  EXPECT_TRUE(std::isnan(r.last_update_loss));
  EXPECT_EQ(r.stats.acceptance_rate(), 1.0);
}

TEST(TrainOnline, RejectsSft) {
  SoftmaxTableLM m(Vocabulary(8), 1);
  std::vector<Sequence> stream = {kPrompt};
  try {
    TrainOnline(m, m, stream, {}, TrainConfig::DeskOnline(LossKind::kSft), 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(TrainOnline, StreamAdaptationTrend) {
  // Stationary stream from one target; the last quarter should not be worse
  // than the first, averaged over 5 seeds.
  double first = 0.0, last = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(200 + seed);
    const auto target = RandomModel(rng, 8, 1, 3.0);
    const auto draft = RandomModel(rng, 8, 1, 3.0);
    std::vector<Sequence> stream;
    for (int i = 0; i < 400; ++i) {
      stream.push_back({Vocabulary::kUser, static_cast<TokenId>(4 + rng.Below(4)),
                        Vocabulary::kAssistant});
    }
    OnlineOptions opt{.decode = {.k = 4, .max_new_tokens = 16}, .buffer_threshold = 8};
    TrainConfig cfg = TrainConfig::DeskOnline(LossKind::kForwardKl);
    cfg.learning_rate = 0.5;
    const auto r = TrainOnline(draft, target, stream, opt, cfg, seed);
    DecodeStats a, b;
    for (std::size_t i = 0; i < 100; ++i) a += r.trace[i].prompt_stats;
    for (std::size_t i = 300; i < 400; ++i) b += r.trace[i].prompt_stats;
    first += a.acceptance_rate() / 5;
    last += b.acceptance_rate() / 5;
  }
  EXPECT_GE(last, first);
}

}  // namespace
}  // namespace sdlab
