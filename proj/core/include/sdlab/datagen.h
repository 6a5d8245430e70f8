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

#ifndef SDLAB_DATAGEN_H_
#define SDLAB_DATAGEN_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sdlab/distill.h"
#include "sdlab/language_model.h"
#include "sdlab/rng.h"

namespace sdlab {

struct ParsedRecord {
  Sequence query;
  Sequence completion;  // Without the trailing EOS.
};

// Record layout: USER q_1..q_m ASSISTANT c_1..c_n EOS.
struct ChatTemplate {
  int min_query = 1;
  int max_query = 16;
  int min_completion = 1;
  int max_completion = 32;

  // Structure only: one USER first, one ASSISTANT, one trailing EOS, and no
  // other markers. Length bounds are not checked.
  static std::optional<ParsedRecord> Parse(std::span<const TokenId> record);
  // A prompt is USER q_1..q_m ASSISTANT with no other markers.
  static std::optional<Sequence> ParsePrompt(std::span<const TokenId> prompt);
  static Sequence MakePrompt(std::span<const TokenId> query);
  static Sequence MakeRecord(std::span<const TokenId> query,
                             std::span<const TokenId> completion);

  bool WithinBounds(const ParsedRecord& record) const;
  // Parse plus bounds.
  bool Accepts(std::span<const TokenId> record) const;

  void Validate() const;
  friend bool operator==(const ChatTemplate&, const ChatTemplate&) = default;
};

// Stochastic chain over a domain alphabet. Every weight table is indexed by
// alphabet position and each row is normalized.
struct Grammar {
  std::vector<double> start;
  std::vector<std::vector<double>> transition;
  // Probability of ending after each token, applied once the minimum length
  // is reached; the maximum length forces the end.
  std::vector<double> stop;
  // When non-empty the output has exactly this shape: alphabet indices for
  // fixed tokens, kFreeSlot for positions drawn from the chain restricted to
  // `slot_mask`.
  std::vector<int> pattern;
  std::vector<bool> slot_mask;

  static constexpr int kFreeSlot = -1;
  friend bool operator==(const Grammar&, const Grammar&) = default;
};

enum class DomainKind {
  // Rigid slot templates with low-entropy completions.
  kStruct,
  // Its own content-token distribution over shared function tokens.
  kTopic,
  // Content tokens from a vocabulary segment disjoint from TOPIC's.
  kScript,
};

std::string_view DomainKindName(DomainKind kind);
DomainKind ParseDomainKind(std::string_view name);
inline constexpr DomainKind kAllDomains[] = {
    DomainKind::kStruct, DomainKind::kTopic, DomainKind::kScript};

struct DomainSpec {
  std::string name;
  int vocab_size = 40;
  ChatTemplate chat;
  // Token ids this domain uses; grammar tables index into it.
  std::vector<TokenId> alphabet;
  // Subset of the alphabet that is specific to this domain.
  std::vector<TokenId> content_tokens;
  Grammar query;
  Grammar completion;
  // First completion draw conditioned on the last query token.
  std::vector<std::vector<double>> handoff;
  // 0 for a base domain; mixing weight toward the re-drawn grammar otherwise.
  double shift = 0.0;

  void Validate() const;
  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

// Built-in domain grammars. Their weight tables are fixed by `kind` and
// `vocab_size` alone; experiment seeds only drive sampling. Requires
// vocab_size >= 28.
DomainSpec BuiltinDomain(DomainKind kind, int vocab_size = 40);

// Row-wise (1 - shift) * base + shift * redraw, where the redraw is an
// independently drawn grammar with the same structure. shift == 0 returns
// `base` unchanged.
DomainSpec ShiftDomain(const DomainSpec& base, double shift);

// The domain as it shows up in general-purpose data: the built-in grammar
// blended with a second, independent redraw (not the one ShiftDomain uses).
// Generic corpora come from these, so a generic model only approximates each
// specialist domain.
inline constexpr double kGeneralistBlend = 1.0;
DomainSpec GeneralistDomain(DomainKind kind, int vocab_size = 40,
                            double blend = kGeneralistBlend);

// One full chat record.
Sequence SampleRecord(const DomainSpec& spec, Rng& rng);
std::vector<Sequence> GenDomainCorpus(const DomainSpec& spec, int count,
                                      std::uint64_t seed);

struct ScenarioSplit {
  std::vector<Sequence> train_prompts;
  std::vector<Sequence> train_completions;  // Corpus completions, with EOS.
  std::vector<Sequence> test_prompts;
};

// Seeded disjoint split of corpus records; only prompts are kept on the test
// side. Requires test_count < corpus.size() (or zero).
ScenarioSplit ScenarioISplit(std::span<const Sequence> corpus, int test_count,
                             std::uint64_t seed);

// Prompts from the domain shifted by `shift` in (0, 1].
std::vector<Sequence> ScenarioIIRelated(const DomainSpec& spec, double shift,
                                        int count, std::uint64_t seed);

struct MagpieOptions {
  int max_query_len = 16;
  int max_completion_len = 64;
  int max_retries = 10;
  // Fraction of `count` that must survive filtering.
  double min_yield = 0.5;
};

struct MagpieStats {
  int attempts = 0;
  int accepted = 0;
  int no_assistant = 0;
  int bad_query = 0;
  int bad_completion = 0;
  int skipped_items = 0;
};

// Self-synthesis from a template-trained target: condition on USER, sample
// until ASSISTANT (the query), then greedily complete until EOS. Returns
// white-box examples. Throws kYieldTooLow when fewer than min_yield * count
// items survive.
std::vector<DistillExample> MagpieSynthesize(const SoftmaxTableLM& target,
                                             const ChatTemplate& chat,
                                             int count, std::uint64_t seed,
                                             const MagpieOptions& options = {},
                                             MagpieStats* stats = nullptr);

inline constexpr int kDefaultTargetOrder = 3;

SoftmaxTableLM TrainDomainTarget(const DomainSpec& spec, int corpus_size,
                                 int order, std::uint64_t seed);

// Equal mixture of the given domains' corpora (corpus_size records each).
std::vector<Sequence> GenMixtureCorpus(std::span<const DomainSpec> specs,
                                       int corpus_size, std::uint64_t seed);
SoftmaxTableLM TrainGenericTarget(std::span<const DomainSpec> specs,
                                  int corpus_size, int order,
                                  std::uint64_t seed);

// Empirical unigram distribution of non-marker tokens over records.
Distribution ContentUnigram(std::span<const Sequence> records, int vocab_size);
// Mean per-token entropy (nats) of the completion chain, estimated from the
// empirical conditional bigram statistics of the records' completions.
double CompletionEntropy(std::span<const Sequence> records, int vocab_size);

}  // namespace sdlab

#endif  // SDLAB_DATAGEN_H_
