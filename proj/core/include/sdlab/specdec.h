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

#ifndef SDLAB_SPECDEC_H_
#define SDLAB_SPECDEC_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sdlab/distribution.h"
#include "sdlab/language_model.h"
#include "sdlab/rng.h"

namespace sdlab {

inline constexpr int kDefaultProposalLength = 9;

enum class VerificationMode {
  // Accept t with probability min(1, p(t)/q(t)); resample from
  // norm(max(0, p - q)) on rejection. Preserves the target distribution.
  kStochastic,
  // Accept t iff it is the target argmax.
  kGreedy,
};

struct Proposal {
  Sequence tokens;
  // Draft distribution at each proposed position.
  std::vector<Distribution> draft_dists;
};

// Target distribution at a position the draft got wrong, with the full
// history that preceded it.
struct RejectionRecord {
  Sequence context;
  Distribution target_dist;
};

struct SpeculationRound {
  Sequence proposed;
  int accepted_count = 0;
  // Correction token on rejection, target extension when everything was
  // accepted. Absent only when the accepted prefix already ends in EOS.
  std::optional<TokenId> bonus_token;
  // Exactly one record (the first rejected position) iff accepted_count <
  // proposed.size().
  std::vector<RejectionRecord> rejection_records;

  Sequence Emitted() const;
};

struct DecodeStats {
  std::int64_t proposed_tokens = 0;
  std::int64_t accepted_tokens = 0;
  std::int64_t rounds = 0;

  double acceptance_rate() const;
  double mean_accepted_per_round() const;
  DecodeStats& operator+=(const DecodeStats& other);
};

struct DecodeOptions {
  int k = kDefaultProposalLength;
  int max_new_tokens = 64;
  VerificationMode mode = VerificationMode::kStochastic;
};

// Draws up to k draft tokens, stopping early after EOS. Greedy mode takes the
// argmax and consumes no randomness.
Proposal Propose(const SoftmaxTableLM& draft, std::span<const TokenId> context,
                 int k, VerificationMode mode, Rng& rng);
Proposal Propose(const SoftmaxTableLM& draft, std::span<const TokenId> context,
                 int k, VerificationMode mode, std::uint64_t seed);

// Scans the proposal left to right and stops at the first rejection. Random
// draws happen in position order: one uniform per examined position, then
// the residual (or extension) draw.
SpeculationRound Verify(const SoftmaxTableLM& target,
                        std::span<const TokenId> context,
                        const Proposal& proposal, VerificationMode mode,
                        Rng& rng);
SpeculationRound Verify(const SoftmaxTableLM& target,
                        std::span<const TokenId> context,
                        const Proposal& proposal, VerificationMode mode,
                        std::uint64_t seed);

// min(1, p(t)/q(t)).
double AcceptanceProbability(const Distribution& p, const Distribution& q,
                             TokenId token);

// norm(max(0, p - q)). Throws kUndefined when the residual mass is below
// 1e-12 (p == q), which a rejection can never reach.
Distribution ResidualDistribution(const Distribution& p,
                                  const Distribution& q);

// Probability that a single draft token drawn from q is accepted against p.
double ExpectedStepAcceptance(const Distribution& p, const Distribution& q);

// Incremental decoder. The draft is passed per step so callers may adapt it
// between rounds; the target and RNG stream stay fixed for the session.
class DecodeSession {
 public:
  DecodeSession(const SoftmaxTableLM& target, Sequence prompt,
                DecodeOptions options, std::uint64_t seed);

  bool done() const { return done_; }
  SpeculationRound Step(const SoftmaxTableLM& draft);

  // Tokens generated after the prompt.
  const Sequence& output() const { return output_; }
  const DecodeStats& stats() const { return stats_; }

 private:
  const SoftmaxTableLM* target_;
  Sequence history_;
  Sequence output_;
  DecodeOptions options_;
  Rng rng_;
  DecodeStats stats_;
  bool done_ = false;
};

struct DecodeResult {
  Sequence output;
  DecodeStats stats;
  std::vector<SpeculationRound> rounds;
};

DecodeResult SpeculativeDecode(const SoftmaxTableLM& draft,
                               const SoftmaxTableLM& target,
                               std::span<const TokenId> prompt,
                               const DecodeOptions& options,
                               std::uint64_t seed);

enum class Averaging {
  // Total accepted over total proposed across every round of every prompt.
  kMicro,
  // Mean of per-prompt acceptance rates.
  kMacro,
};

// Per-prompt streams are seeded from (seed, prompt content), so the result
// does not depend on prompt order.
std::uint64_t PromptSeed(std::uint64_t seed, std::span<const TokenId> prompt);

DecodeStats AcceptanceStats(const SoftmaxTableLM& draft,
                            const SoftmaxTableLM& target,
                            std::span<const Sequence> prompts,
                            const DecodeOptions& options, std::uint64_t seed);

double AcceptanceRate(const SoftmaxTableLM& draft, const SoftmaxTableLM& target,
                      std::span<const Sequence> prompts,
                      const DecodeOptions& options, std::uint64_t seed,
                      Averaging averaging = Averaging::kMicro);

}  // namespace sdlab

#endif  // SDLAB_SPECDEC_H_
