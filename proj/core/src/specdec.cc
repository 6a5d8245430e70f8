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

#include "sdlab/specdec.h"

#include <algorithm>
#include <cassert>
#include <string>

#include "sdlab/error.h"

namespace sdlab {

Sequence SpeculationRound::Emitted() const {
  Sequence out(proposed.begin(), proposed.begin() + accepted_count);
  if (bonus_token) out.push_back(*bonus_token);
  return out;
}

double DecodeStats::acceptance_rate() const {
  return proposed_tokens == 0 ? 0.0
                              : static_cast<double>(accepted_tokens) /
                                    static_cast<double>(proposed_tokens);
}

double DecodeStats::mean_accepted_per_round() const {
  return rounds == 0 ? 0.0
                     : static_cast<double>(accepted_tokens) /
                           static_cast<double>(rounds);
}

DecodeStats& DecodeStats::operator+=(const DecodeStats& other) {
  proposed_tokens += other.proposed_tokens;
  accepted_tokens += other.accepted_tokens;
  rounds += other.rounds;
  return *this;
}

Proposal Propose(const SoftmaxTableLM& draft, std::span<const TokenId> context,
                 int k, VerificationMode mode, Rng& rng) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  Proposal proposal;
  proposal.tokens.reserve(k);
  proposal.draft_dists.reserve(k);
  std::size_t key = draft.ContextKey(context);
  for (int i = 0; i < k; ++i) {
    Distribution q = draft.RowDistribution(key);
    const TokenId t = mode == VerificationMode::kGreedy
                          ? q.Argmax()
                          : static_cast<TokenId>(rng.Categorical(q.probs()));
    proposal.tokens.push_back(t);
    proposal.draft_dists.push_back(std::move(q));
    if (t == Vocabulary::kEos) break;
    key = draft.ExtendKey(key, t);
  }
  return proposal;
}

Proposal Propose(const SoftmaxTableLM& draft, std::span<const TokenId> context,
                 int k, VerificationMode mode, std::uint64_t seed) {
  Rng rng(seed);
  return Propose(draft, context, k, mode, rng);
}

double AcceptanceProbability(const Distribution& p, const Distribution& q,
                             TokenId token) {
  // Softmax drafts never put exactly zero mass on a token they proposed.
  assert(q[token] > 0.0);
  if (p[token] >= q[token]) return 1.0;
  return p[token] / q[token];
}

Distribution ResidualDistribution(const Distribution& p,
                                  const Distribution& q) {
  if (p.size() != q.size()) {
    throw Error(ErrorCode::kShapeMismatch, "distribution sizes differ");
  }
  std::vector<double> residual(p.size());
  double mass = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    residual[i] = std::max(0.0, p[i] - q[i]);
    mass += residual[i];
  }
  if (mass < 1e-12) {
    throw Error(ErrorCode::kUndefined,
                "residual of identical distributions is undefined");
  }
  for (double& r : residual) r /= mass;
  // Renormalization can leave the sum a few ulps off; the constructor's
  // tolerance absorbs that.
  return Distribution(std::move(residual));
}

double ExpectedStepAcceptance(const Distribution& p, const Distribution& q) {
  return Overlap(p, q);
}

SpeculationRound Verify(const SoftmaxTableLM& target,
                        std::span<const TokenId> context,
                        const Proposal& proposal, VerificationMode mode,
                        Rng& rng) {
  if (proposal.tokens.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty proposal");
  }
  const bool stochastic = mode == VerificationMode::kStochastic;
  if (stochastic && proposal.draft_dists.size() != proposal.tokens.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                "one draft distribution per proposed token required");
  }
  SpeculationRound round;
  round.proposed = proposal.tokens;
  Sequence history(context.begin(), context.end());
  std::size_t key = target.ContextKey(context);
  for (std::size_t i = 0; i < proposal.tokens.size(); ++i) {
    const TokenId t = proposal.tokens[i];
    Distribution p = target.RowDistribution(key);
    bool accept;
    if (stochastic) {
      const Distribution& q = proposal.draft_dists[i];
      accept = rng.Uniform() < AcceptanceProbability(p, q, t);
      if (!accept) {
        const Distribution residual = ResidualDistribution(p, q);
        round.bonus_token = static_cast<TokenId>(
            rng.Categorical(residual.probs()));
      }
    } else {
      const TokenId best = p.Argmax();
      accept = t == best;
      if (!accept) round.bonus_token = best;
    }
    if (!accept) {
      round.rejection_records.push_back({std::move(history), std::move(p)});
      return round;
    }
    ++round.accepted_count;
    history.push_back(t);
    key = target.ExtendKey(key, t);
  }
  if (proposal.tokens.back() != Vocabulary::kEos) {
    const Distribution p = target.RowDistribution(key);
    round.bonus_token = stochastic
                            ? static_cast<TokenId>(rng.Categorical(p.probs()))
                            : p.Argmax();
  }
  return round;
}

SpeculationRound Verify(const SoftmaxTableLM& target,
                        std::span<const TokenId> context,
                        const Proposal& proposal, VerificationMode mode,
                        std::uint64_t seed) {
  Rng rng(seed);
  return Verify(target, context, proposal, mode, rng);
}

DecodeSession::DecodeSession(const SoftmaxTableLM& target, Sequence prompt,
                             DecodeOptions options, std::uint64_t seed)
    : target_(&target),
      history_(std::move(prompt)),
      options_(options),
      rng_(seed) {
  if (options_.k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (options_.max_new_tokens < 1) {
    throw Error(ErrorCode::kInvalidArgument, "max_new_tokens must be >= 1");
  }
  target_->vocab().Validate(history_);
}

SpeculationRound DecodeSession::Step(const SoftmaxTableLM& draft) {
  if (done_) throw Error(ErrorCode::kInvalidArgument, "session finished");
  if (draft.vocab() != target_->vocab()) {
    throw Error(ErrorCode::kShapeMismatch, "draft and target vocabularies differ");
  }
  const int remaining =
      options_.max_new_tokens - static_cast<int>(output_.size());
  const int k = std::min(options_.k, remaining);
  const Proposal proposal = Propose(draft, history_, k, options_.mode, rng_);
  SpeculationRound round =
      Verify(*target_, history_, proposal, options_.mode, rng_);

  stats_.proposed_tokens += static_cast<std::int64_t>(proposal.tokens.size());
  stats_.accepted_tokens += round.accepted_count;
  stats_.rounds += 1;

  for (TokenId t : round.Emitted()) {
    if (static_cast<int>(output_.size()) >= options_.max_new_tokens) break;
    output_.push_back(t);
    history_.push_back(t);
    if (t == Vocabulary::kEos) {
      done_ = true;
      break;
    }
  }
  if (static_cast<int>(output_.size()) >= options_.max_new_tokens) done_ = true;
  return round;
}

DecodeResult SpeculativeDecode(const SoftmaxTableLM& draft,
                               const SoftmaxTableLM& target,
                               std::span<const TokenId> prompt,
                               const DecodeOptions& options,
                               std::uint64_t seed) {
  DecodeSession session(target, Sequence(prompt.begin(), prompt.end()),
                        options, seed);
  DecodeResult result;
  while (!session.done()) result.rounds.push_back(session.Step(draft));
  result.output = session.output();
  result.stats = session.stats();
  return result;
}

std::uint64_t PromptSeed(std::uint64_t seed, std::span<const TokenId> prompt) {
  return DeriveSeed(seed, "prompt", HashTokens(prompt));
}

namespace {

std::vector<DecodeStats> PerPromptStats(const SoftmaxTableLM& draft,
                                        const SoftmaxTableLM& target,
                                        std::span<const Sequence> prompts,
                                        const DecodeOptions& options,
                                        std::uint64_t seed) {
  if (prompts.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty prompt set");
  }
  std::vector<DecodeStats> out;
  out.reserve(prompts.size());
  for (const Sequence& prompt : prompts) {
    DecodeSession session(target, prompt, options, PromptSeed(seed, prompt));
    while (!session.done()) session.Step(draft);
    out.push_back(session.stats());
  }
  return out;
}

}  // namespace

DecodeStats AcceptanceStats(const SoftmaxTableLM& draft,
                            const SoftmaxTableLM& target,
                            std::span<const Sequence> prompts,
                            const DecodeOptions& options, std::uint64_t seed) {
  DecodeStats total;
  for (const DecodeStats& s :
       PerPromptStats(draft, target, prompts, options, seed)) {
    total += s;
  }
  return total;
}

double AcceptanceRate(const SoftmaxTableLM& draft, const SoftmaxTableLM& target,
                      std::span<const Sequence> prompts,
                      const DecodeOptions& options, std::uint64_t seed,
                      Averaging averaging) {
  const auto per_prompt = PerPromptStats(draft, target, prompts, options, seed);
  if (averaging == Averaging::kMicro) {
    DecodeStats total;
    for (const DecodeStats& s : per_prompt) total += s;
    return total.acceptance_rate();
  }
  // Summed in sorted order so the result is exactly order-invariant.
  std::vector<double> rates;
  rates.reserve(per_prompt.size());
  for (const DecodeStats& s : per_prompt) rates.push_back(s.acceptance_rate());
  std::sort(rates.begin(), rates.end());
  double sum = 0.0;
  for (double r : rates) sum += r;
  return sum / static_cast<double>(rates.size());
}

}  // namespace sdlab
