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

#include <algorithm>
#include <cmath>

#include "sdlab/error.h"
#include "sdlab/specdec.h"
#include "test_util.h"

namespace sdlab {
namespace {

using testing::ConstantModel;
using testing::RandomModel;

// Order-1 model over `vocab` whose every row is the given distribution.
SoftmaxTableLM RowModel(int vocab, const std::vector<double>& probs) {
  SoftmaxTableLM m(Vocabulary(vocab), 1);
  for (std::size_t r = 0; r < m.num_rows(); ++r) {
    auto row = m.MutableRow(r);
    for (int t = 0; t < vocab; ++t) {
      row[t] = probs[t] > 0 ? std::log(probs[t]) : -1e3;
    }
  }
  return m;
}

const Sequence kPrompt = {Vocabulary::kUser, 5, 6, Vocabulary::kAssistant};

TEST(Propose, DeterministicDraftFollowsItsChain) {
  const auto draft = ConstantModel(8, 2, 5);
  const Proposal p = Propose(draft, kPrompt, 4, VerificationMode::kStochastic, 1);
  EXPECT_EQ(p.tokens, (Sequence{5, 5, 5, 5}));
  ASSERT_EQ(p.draft_dists.size(), 4u);
  for (const auto& d : p.draft_dists) EXPECT_NEAR(d[5], 1.0, 1e-12);
}

TEST(Propose, SingleUniformToken) {
  SoftmaxTableLM draft(Vocabulary(8), 1);
  const Proposal p = Propose(draft, kPrompt, 1, VerificationMode::kStochastic, 3);
  ASSERT_EQ(p.tokens.size(), 1u);
  EXPECT_EQ(p.draft_dists[0], Distribution::Uniform(8));
}

TEST(Propose, SeededAndStepwise) {
  Rng rng(4);
  const auto draft = RandomModel(rng, 8, 2);
  const auto a = Propose(draft, kPrompt, 6, VerificationMode::kStochastic, 9);
  const auto b = Propose(draft, kPrompt, 6, VerificationMode::kStochastic, 9);
  EXPECT_EQ(a.tokens, b.tokens);
  // Each distribution conditions on the prefix proposed so far.
  Sequence h = kPrompt;
  for (std::size_t i = 0; i < a.tokens.size(); ++i) {
    EXPECT_EQ(a.draft_dists[i], draft.NextDistribution(h));
    h.push_back(a.tokens[i]);
  }
}

TEST(Propose, StopsAfterEos) {
  const auto draft = ConstantModel(8, 1, Vocabulary::kEos);
  const auto p = Propose(draft, kPrompt, 9, VerificationMode::kGreedy, 0);
  EXPECT_EQ(p.tokens, Sequence{Vocabulary::kEos});
}

TEST(Verify, IdenticalModelsAcceptEverything) {
  Rng rng(5);
  const auto m = RandomModel(rng, 8, 2);
  for (std::uint64_t s = 0; s < 200; ++s) {
    const auto p = Propose(m, kPrompt, 5, VerificationMode::kStochastic, s);
    const auto r = Verify(m, kPrompt, p, VerificationMode::kStochastic, s + 1000);
    EXPECT_EQ(r.accepted_count, static_cast<int>(p.tokens.size()));
    EXPECT_TRUE(r.rejection_records.empty());
  }
}

TEST(Verify, DisjointOneHotsRejectAtOnce) {
  const auto target = ConstantModel(8, 1, 4);
  const auto draft = ConstantModel(8, 1, 6);
  for (auto mode : {VerificationMode::kStochastic, VerificationMode::kGreedy}) {
    const auto p = Propose(draft, kPrompt, 3, mode, 1);
    const auto r = Verify(target, kPrompt, p, mode, 2);
    EXPECT_EQ(r.accepted_count, 0);
    ASSERT_TRUE(r.bonus_token.has_value());
    EXPECT_EQ(*r.bonus_token, 4);
    ASSERT_EQ(r.rejection_records.size(), 1u);
    EXPECT_EQ(r.rejection_records[0].context, kPrompt);
    EXPECT_NEAR(r.rejection_records[0].target_dist[4], 1.0, 1e-12);
    EXPECT_EQ(r.Emitted(), Sequence{4});
  }
}

TEST(Verify, AllAcceptedDrawsAnExtension) {
  const auto m = ConstantModel(8, 1, 7);
  const auto p = Propose(m, kPrompt, 3, VerificationMode::kGreedy, 0);
  const auto r = Verify(m, kPrompt, p, VerificationMode::kGreedy, 0);
  EXPECT_EQ(r.accepted_count, 3);
  EXPECT_EQ(r.bonus_token, std::optional<TokenId>(7));
  EXPECT_EQ(r.Emitted(), (Sequence{7, 7, 7, 7}));
}

TEST(Verify, GreedyRecordsTheFirstMismatch) {
  // Target: 5 -> 6 -> 7; draft: 5 -> 6 -> 4.
  SoftmaxTableLM target(Vocabulary(8), 1), draft(Vocabulary(8), 1);
  auto force = [](SoftmaxTableLM& m, TokenId from, TokenId to) {
    m.MutableRow(m.ContextKey(Sequence{from}))[to] = 50.0;
  };
  force(target, 1, 5);
  force(target, 5, 6);
  force(target, 6, 7);
  force(draft, 1, 5);
  force(draft, 5, 6);
  force(draft, 6, 4);
  const auto p = Propose(draft, kPrompt, 3, VerificationMode::kGreedy, 0);
  EXPECT_EQ(p.tokens, (Sequence{5, 6, 4}));
  const auto r = Verify(target, kPrompt, p, VerificationMode::kGreedy, 0);
  EXPECT_EQ(r.accepted_count, 2);
  EXPECT_EQ(r.bonus_token, std::optional<TokenId>(7));
  Sequence ctx = kPrompt;
  ctx.push_back(5);
  ctx.push_back(6);
  ASSERT_EQ(r.rejection_records.size(), 1u);
  EXPECT_EQ(r.rejection_records[0].context, ctx);
}

TEST(Acceptance, HandOracles) {
  const Distribution p({0.5, 0.5});
  const Distribution q({0.9, 0.1});
  EXPECT_NEAR(AcceptanceProbability(p, q, 0), 0.5 / 0.9, 1e-15);
  EXPECT_EQ(AcceptanceProbability(p, q, 1), 1.0);
  double expected = 0.0;
  for (TokenId t = 0; t < 2; ++t) expected += q[t] * AcceptanceProbability(p, q, t);
  EXPECT_NEAR(expected, 0.6, 1e-15);
  EXPECT_NEAR(ExpectedStepAcceptance(p, q), 0.6, 1e-15);
  EXPECT_EQ(ExpectedStepAcceptance(p, p), 1.0);
  EXPECT_EQ(ExpectedStepAcceptance(Distribution::OneHot(3, 0),
                                   Distribution::OneHot(3, 2)),
            0.0);
}

TEST(Residual, Examples) {
  const auto r1 = ResidualDistribution(Distribution({0.5, 0.5}), Distribution({0.9, 0.1}));
  EXPECT_EQ(r1[0], 0.0);
  EXPECT_NEAR(r1[1], 1.0, 1e-15);
  const auto r2 = ResidualDistribution(Distribution({0.6, 0.3, 0.1}),
                                       Distribution({0.2, 0.3, 0.5}));
  EXPECT_NEAR(r2[0], 1.0, 1e-15);
  EXPECT_EQ(r2[1], 0.0);
  EXPECT_EQ(r2[2], 0.0);
  try {
    ResidualDistribution(Distribution::Uniform(4), Distribution::Uniform(4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUndefined);
  }
}

TEST(Residual, RandomPairsProperty) {
  Rng rng(6);
  for (int i = 0; i < 200; ++i) {
    const auto p = testing::RandomDistribution(rng, 7);
    const auto q = testing::RandomDistribution(rng, 7);
    const auto r = ResidualDistribution(p, q);
    double sum = 0.0;
    for (int t = 0; t < 7; ++t) {
      sum += r[t];
      if (q[t] >= p[t]) EXPECT_EQ(r[t], 0.0);
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(Decode, DraftEqualsTargetGivesRateOne) {
  Rng rng(7);
  const auto m = RandomModel(rng, 8, 2);
  for (auto mode : {VerificationMode::kStochastic, VerificationMode::kGreedy}) {
    const auto r = SpeculativeDecode(m, m, kPrompt, {.k = 4, .max_new_tokens = 40, .mode = mode}, 3);
    EXPECT_EQ(r.stats.acceptance_rate(), 1.0);
  }
}

TEST(Decode, MatchingGreedyChainsGiveRateOne) {
  // Different distributions, same argmax everywhere.
  SoftmaxTableLM target(Vocabulary(8), 2), draft(Vocabulary(8), 2);
  Rng rng(8);
  for (std::size_t r = 0; r < target.num_rows(); ++r) {
    const TokenId best = static_cast<TokenId>(rng.Below(8));
    target.MutableRow(r)[best] = 2.0;
    draft.MutableRow(r)[best] = 0.7;
  }
  const auto r = SpeculativeDecode(draft, target, kPrompt,
                                   {.k = 9, .max_new_tokens = 30,
                                    .mode = VerificationMode::kGreedy}, 1);
  EXPECT_EQ(r.stats.acceptance_rate(), 1.0);
}

TEST(Decode, RoundAccountingAndTruncation) {
  Rng rng(9);
  const auto target = RandomModel(rng, 8, 2);
  const auto draft = RandomModel(rng, 8, 2);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const DecodeOptions opt{.k = 3, .max_new_tokens = 10};
    const auto r = SpeculativeDecode(draft, target, kPrompt, opt, seed);
    EXPECT_LE(static_cast<int>(r.output.size()), opt.max_new_tokens);
    std::int64_t proposed = 0, accepted = 0;
    std::size_t emitted = 0;
    for (std::size_t i = 0; i < r.rounds.size(); ++i) {
      const auto& round = r.rounds[i];
      EXPECT_LE(round.accepted_count, static_cast<int>(round.proposed.size()));
      EXPECT_LE(static_cast<int>(round.proposed.size()), opt.k);
      EXPECT_EQ(round.rejection_records.empty(),
                round.accepted_count == static_cast<int>(round.proposed.size()));
      proposed += round.proposed.size();
      accepted += round.accepted_count;
      const auto e = round.Emitted();
      if (i + 1 < r.rounds.size()) {
        EXPECT_EQ(e.size(), static_cast<std::size_t>(round.accepted_count) + 1);
      }
      emitted += e.size();
    }
    EXPECT_GE(emitted, r.output.size());
    EXPECT_EQ(proposed, r.stats.proposed_tokens);
    EXPECT_EQ(accepted, r.stats.accepted_tokens);
    EXPECT_EQ(static_cast<std::int64_t>(r.rounds.size()), r.stats.rounds);
    const bool eos = !r.output.empty() && r.output.back() == Vocabulary::kEos;
    EXPECT_TRUE(eos || static_cast<int>(r.output.size()) == opt.max_new_tokens);
  }
}

TEST(Decode, FinalRoundUsesRemainingBudget) {
  const auto m = ConstantModel(8, 1, 5);
  const auto r = SpeculativeDecode(m, m, kPrompt, {.k = 4, .max_new_tokens = 6}, 0);
  // Round 1: 4 proposed + bonus = 5 tokens; round 2: 1 proposed.
  ASSERT_EQ(r.rounds.size(), 2u);
  EXPECT_EQ(r.rounds[1].proposed.size(), 1u);
  EXPECT_EQ(r.stats.proposed_tokens, 5);
  EXPECT_EQ(r.output.size(), 6u);
}

TEST(Decode, ConstantPairMatchesOverlapOracle) {
  // Two live tokens with p = (0.5, 0.5) and q = (0.9, 0.1) at every position.
  std::vector<double> p(8, 0.0), q(8, 0.0);
  p[4] = p[5] = 0.5;
  q[4] = 0.9;
  q[5] = 0.1;
  const auto target = RowModel(8, p);
  const auto draft = RowModel(8, q);
  std::int64_t trials = 0, accepted = 0;
  for (std::uint64_t s = 0; trials < 100000; ++s) {
    const auto prop = Propose(draft, kPrompt, 1, VerificationMode::kStochastic, DeriveSeed(s, "p"));
    const auto r = Verify(target, kPrompt, prop, VerificationMode::kStochastic, DeriveSeed(s, "v"));
    ++trials;
    accepted += r.accepted_count;
  }
  EXPECT_TRUE(testing::WithinBinomial(double(accepted) / trials, 0.6, trials));
}

TEST(AcceptanceRate, SinglePromptSingleRound) {
  const auto target = ConstantModel(8, 1, Vocabulary::kEos);
  const auto draft = ConstantModel(8, 1, 5);
  const std::vector<Sequence> prompts = {kPrompt};
  const DecodeOptions opt{.k = 4, .max_new_tokens = 8};
  const auto r = SpeculativeDecode(draft, target, kPrompt, opt, PromptSeed(1, kPrompt));
  ASSERT_EQ(r.rounds.size(), 1u);
  EXPECT_EQ(AcceptanceRate(draft, target, prompts, opt, 1),
            r.rounds[0].accepted_count / 4.0);
}

TEST(AcceptanceRate, PromptOrderInvariant) {
  Rng rng(10);
  const auto target = RandomModel(rng, 8, 2);
  const auto draft = RandomModel(rng, 8, 2);
  std::vector<Sequence> prompts;
  for (int i = 0; i < 20; ++i) {
    Sequence s = {Vocabulary::kUser};
    for (TokenId t : testing::RandomSequence(rng, 4, 3)) s.push_back(t + 4);
    s.push_back(Vocabulary::kAssistant);
    prompts.push_back(s);
  }
  const DecodeOptions opt{.k = 4, .max_new_tokens = 12};
  const double micro = AcceptanceRate(draft, target, prompts, opt, 5);
  const double macro = AcceptanceRate(draft, target, prompts, opt, 5, Averaging::kMacro);
  std::reverse(prompts.begin(), prompts.end());
  rng.Shuffle(prompts);
  EXPECT_EQ(micro, AcceptanceRate(draft, target, prompts, opt, 5));
  EXPECT_EQ(macro, AcceptanceRate(draft, target, prompts, opt, 5, Averaging::kMacro));
  EXPECT_GE(micro, 0.0);
  EXPECT_LE(micro, 1.0);
}

TEST(AcceptanceRate, EmptyPromptSetRejected) {
  SoftmaxTableLM m(Vocabulary(8), 1);
  EXPECT_THROW(AcceptanceRate(m, m, {}, {}, 1), Error);
}

}  // namespace
}  // namespace sdlab
