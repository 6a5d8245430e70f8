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

#include "sdlab/datagen.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "sdlab/error.h"

namespace sdlab {
namespace {

constexpr std::uint64_t kGrammarSeed = 0x5d1ab0c0ffeeULL;

bool IsNormalized(std::span<const double> row) {
  double total = 0.0;
  for (double w : row) {
    if (!(w >= 0.0)) return false;
    total += w;
  }
  return std::abs(total - 1.0) < 1e-9;
}

std::vector<double> Normalize(std::vector<double> row) {
  double total = 0.0;
  for (double w : row) total += w;
  for (double& w : row) w /= total;
  return row;
}

// Token-id layout of the built-in domains. The content range [4, V) is cut
// into four equal segments: shared function tokens, STRUCT slots, TOPIC
// content and SCRIPT content.
struct Layout {
  int segment;
  TokenId function_begin;
  TokenId slot_begin;
  TokenId topic_begin;
  TokenId script_begin;
  TokenId end;

  explicit Layout(int vocab_size)
      : segment((vocab_size - Vocabulary::kFirstContent) / 4),
        function_begin(Vocabulary::kFirstContent),
        slot_begin(function_begin + segment),
        topic_begin(slot_begin + segment),
        script_begin(topic_begin + segment),
        end(vocab_size) {}

  // Function-token roles.
  TokenId period() const { return function_begin; }
  TokenId question() const { return function_begin + 1; }
  TokenId open() const { return function_begin + 2; }
  TokenId colon() const { return function_begin + 3; }
  TokenId comma() const { return function_begin + 4; }
  TokenId close() const { return function_begin + 5; }
};

std::vector<TokenId> Range(TokenId begin, TokenId end) {
  std::vector<TokenId> out;
  for (TokenId t = begin; t < end; ++t) out.push_back(t);
  return out;
}

// Draws the weight tables of a domain. The same builder with a different
// seed yields the re-drawn grammar used for shifts.
struct GrammarShape {
  std::vector<TokenId> alphabet;
  std::vector<TokenId> content;
  ChatTemplate chat;
  double sigma;
  // Additive log-weight per alphabet token for transitions.
  std::vector<double> query_bias;
  std::vector<double> completion_bias;
  TokenId query_end;
  TokenId completion_end;
  // Function tokens used only in queries and only in completions.
  std::vector<TokenId> query_function;
  std::vector<TokenId> completion_function;
  std::vector<TokenId> pattern;  // Token ids, or Grammar::kFreeSlot.
  std::vector<TokenId> slot_tokens;
};

int IndexOf(const std::vector<TokenId>& alphabet, TokenId t) {
  auto it = std::find(alphabet.begin(), alphabet.end(), t);
  if (it == alphabet.end()) {
    throw Error(ErrorCode::kInvalidArgument,
                "token " + std::to_string(t) + " not in domain alphabet");
  }
  return static_cast<int>(it - alphabet.begin());
}

std::vector<double> DrawRow(Rng& rng, std::span<const double> bias,
                            double sigma) {
  std::vector<double> row(bias.size());
  for (std::size_t j = 0; j < row.size(); ++j) {
    row[j] = std::exp(sigma * rng.Gaussian() + bias[j]);
  }
  return Normalize(std::move(row));
}

// Redirects argmax successors until every token's greedy path reaches
// `end`: on each cycle that avoids it, the lowest index swaps its top weight
// with the weight of `end`. Row entropies are unchanged.
void RouteGreedyToEnd(std::vector<std::vector<double>>& rows, int end) {
  const int n = static_cast<int>(rows.size());
  auto next = [&](int i) {
    const auto& r = rows[i];
    return static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  };
  for (bool changed = true; changed;) {
    changed = false;
    for (int s = 0; s < n && !changed; ++s) {
      std::vector<int> seen(n, -1);
      int cur = s;
      for (int step = 0; cur != end && seen[cur] < 0; ++step) {
        seen[cur] = step;
        cur = next(cur);
      }
      if (cur == end) continue;
      int low = cur;
      for (int c = next(cur); c != cur; c = next(c)) low = std::min(low, c);
      std::swap(rows[low][next(low)], rows[low][end]);
      changed = true;
    }
  }
}

std::vector<std::vector<double>> DrawTable(Rng& rng, const GrammarShape& shape,
                                           std::span<const double> bias) {
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < shape.alphabet.size(); ++i) {
    rows.push_back(DrawRow(rng, bias, shape.sigma));
  }
  return rows;
}

// A chain over `table` that never emits the `excluded` tokens (the other
// side's function words) and whose greedy path always reaches `end_token`.
Grammar MakeChain(const GrammarShape& shape, std::vector<double> start,
                  std::vector<std::vector<double>> table, TokenId end_token,
                  std::span<const TokenId> excluded, double other_stop) {
  const int end = IndexOf(shape.alphabet, end_token);
  auto strip = [&](std::vector<double> row) {
    for (TokenId t : excluded) row[IndexOf(shape.alphabet, t)] = 0.0;
    return Normalize(std::move(row));
  };
  Grammar g;
  g.start = strip(std::move(start));
  for (auto& row : table) g.transition.push_back(strip(std::move(row)));
  RouteGreedyToEnd(g.transition, end);
  g.stop.assign(shape.alphabet.size(), other_stop);
  g.stop[end] = 1.0;
  return g;
}

DomainSpec DrawDomain(const GrammarShape& shape, std::string name,
                      int vocab_size, std::uint64_t seed) {
  Rng rng(seed);
  DomainSpec spec;
  spec.name = std::move(name);
  spec.vocab_size = vocab_size;
  spec.chat = shape.chat;
  spec.alphabet = shape.alphabet;
  spec.content_tokens = shape.content;
  auto query_start = DrawRow(rng, shape.query_bias, shape.sigma);
  auto query_table = DrawTable(rng, shape, shape.query_bias);
  spec.query = MakeChain(shape, std::move(query_start), std::move(query_table),
                         shape.query_end, shape.completion_function, 0.15);
  auto completion_start = DrawRow(rng, shape.completion_bias, shape.sigma);
  auto completion_table = DrawTable(rng, shape, shape.completion_bias);
  spec.completion = MakeChain(shape, std::move(completion_start),
                              std::move(completion_table),
                              shape.completion_end, shape.query_function,
                              0.02);
  for (std::size_t i = 0; i < shape.alphabet.size(); ++i) {
    std::vector<double> row =
        DrawRow(rng, shape.completion_bias, shape.sigma);
    for (TokenId t : shape.query_function) {
      row[IndexOf(shape.alphabet, t)] = 0.0;
    }
    spec.handoff.push_back(Normalize(std::move(row)));
  }
  if (!shape.pattern.empty()) {
    for (TokenId t : shape.pattern) {
      spec.completion.pattern.push_back(
          t == Grammar::kFreeSlot ? Grammar::kFreeSlot
                                  : IndexOf(shape.alphabet, t));
    }
    spec.completion.slot_mask.assign(shape.alphabet.size(), false);
    for (TokenId t : shape.slot_tokens) {
      spec.completion.slot_mask[IndexOf(shape.alphabet, t)] = true;
    }
  }
  spec.Validate();
  return spec;
}

GrammarShape ShapeFor(DomainKind kind, int vocab_size) {
  const Layout layout(vocab_size);
  const auto function_tokens = Range(layout.function_begin, layout.slot_begin);
  GrammarShape shape;
  auto bias_for = [&](double function_bias, double content_bias) {
    std::vector<double> bias;
    for (TokenId t : shape.alphabet) {
      bias.push_back(t < layout.slot_begin ? function_bias : content_bias);
    }
    return bias;
  };
  switch (kind) {
    case DomainKind::kStruct: {
      shape.content = Range(layout.slot_begin, layout.topic_begin);
      shape.alphabet = function_tokens;
      shape.alphabet.insert(shape.alphabet.end(), shape.content.begin(),
                            shape.content.end());
      shape.chat = {.min_query = 3, .max_query = 10,
                    .min_completion = 8, .max_completion = 8};
      shape.sigma = 6.0;
      shape.query_bias = bias_for(0.0, 1.0);
      shape.completion_bias = bias_for(-1.0, 1.0);
      shape.pattern = {layout.open(),  Grammar::kFreeSlot, layout.colon(),
                       Grammar::kFreeSlot, layout.comma(), Grammar::kFreeSlot,
                       Grammar::kFreeSlot, layout.close()};
      shape.slot_tokens = shape.content;
      break;
    }
    case DomainKind::kTopic: {
      shape.content = Range(layout.topic_begin, layout.script_begin);
      shape.alphabet = function_tokens;
      // A few STRUCT slot tokens are shared, as real domains share jargon.
      for (TokenId t = layout.slot_begin; t < layout.slot_begin + 3; ++t) {
        shape.alphabet.push_back(t);
      }
      shape.alphabet.insert(shape.alphabet.end(), shape.content.begin(),
                            shape.content.end());
      shape.chat = {.min_query = 3, .max_query = 12,
                    .min_completion = 4, .max_completion = 24};
      shape.sigma = 6.0;
      shape.query_bias = bias_for(0.8, 0.0);
      shape.completion_bias = bias_for(0.8, 0.0);
      break;
    }
    case DomainKind::kScript: {
      shape.content = Range(layout.script_begin, layout.end);
      shape.alphabet = function_tokens;
      shape.alphabet.insert(shape.alphabet.end(), shape.content.begin(),
                            shape.content.end());
      shape.chat = {.min_query = 3, .max_query = 12,
                    .min_completion = 4, .max_completion = 24};
      shape.sigma = 6.0;
      shape.query_bias = bias_for(0.8, 0.0);
      shape.completion_bias = bias_for(0.8, 0.0);
      break;
    }
  }
  shape.query_end = layout.question();
  shape.completion_end = layout.period();
  // Queries use the question mark and the trailing function tokens;
  // completions use the period and the punctuation STRUCT's pattern needs.
  shape.completion_function = {layout.period(), layout.open(), layout.colon(),
                               layout.comma(), layout.close()};
  for (TokenId t : Range(layout.function_begin, layout.slot_begin)) {
    if (std::find(shape.completion_function.begin(),
                  shape.completion_function.end(),
                  t) == shape.completion_function.end()) {
      shape.query_function.push_back(t);
    }
  }
  // The closers are favoured so chains end within the length bounds.
  shape.query_bias[IndexOf(shape.alphabet, shape.query_end)] += 0.5;
  shape.completion_bias[IndexOf(shape.alphabet, shape.completion_end)] += 0.5;
  return shape;
}

std::vector<double> Mix(const std::vector<double>& base,
                        const std::vector<double>& other, double shift) {
  std::vector<double> out(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    out[i] = (1.0 - shift) * base[i] + shift * other[i];
  }
  return out;
}

std::vector<std::vector<double>> MixRows(
    const std::vector<std::vector<double>>& base,
    const std::vector<std::vector<double>>& other, double shift) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < base.size(); ++i) {
    out.push_back(Mix(base[i], other[i], shift));
  }
  return out;
}

Grammar MixGrammar(const Grammar& base, const Grammar& other, double shift) {
  Grammar g = base;
  g.start = Mix(base.start, other.start, shift);
  g.transition = MixRows(base.transition, other.transition, shift);
  g.stop = Mix(base.stop, other.stop, shift);
  return g;
}

// Draws from `row` restricted to `mask` (if non-empty).
int DrawMasked(Rng& rng, const std::vector<double>& row,
               const std::vector<bool>& mask) {
  if (mask.empty()) return rng.Categorical(row);
  std::vector<double> masked(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) {
    masked[i] = mask[i] ? row[i] : 0.0;
  }
  return rng.Categorical(masked);
}

// Free chain: first index from `first`, then transitions until a stop.
std::vector<int> SampleChain(Rng& rng, const Grammar& g,
                             const std::vector<double>& first, int min_len,
                             int max_len) {
  std::vector<int> out;
  int current = rng.Categorical(first);
  out.push_back(current);
  while (static_cast<int>(out.size()) < max_len) {
    if (static_cast<int>(out.size()) >= min_len &&
        rng.Uniform() < g.stop[current]) {
      break;
    }
    current = rng.Categorical(g.transition[current]);
    out.push_back(current);
  }
  return out;
}

std::vector<int> SamplePattern(Rng& rng, const Grammar& g,
                               const std::vector<double>& first) {
  std::vector<int> out;
  bool first_slot = true;
  for (int cell : g.pattern) {
    if (cell != Grammar::kFreeSlot) {
      out.push_back(cell);
      continue;
    }
    const std::vector<double>& row =
        first_slot ? first : g.transition[out.back()];
    out.push_back(DrawMasked(rng, row, g.slot_mask));
    first_slot = false;
  }
  return out;
}

}  // namespace

std::optional<ParsedRecord> ChatTemplate::Parse(
    std::span<const TokenId> record) {
  if (record.size() < 3 || record.front() != Vocabulary::kUser ||
      record.back() != Vocabulary::kEos) {
    return std::nullopt;
  }
  std::optional<std::size_t> assistant;
  for (std::size_t i = 1; i + 1 < record.size(); ++i) {
    const TokenId t = record[i];
    if (t == Vocabulary::kAssistant && !assistant) {
      assistant = i;
    } else if (Vocabulary::IsMarker(t) || t < 0) {
      return std::nullopt;
    }
  }
  if (!assistant) return std::nullopt;
  ParsedRecord parsed;
  parsed.query.assign(record.begin() + 1, record.begin() + *assistant);
  parsed.completion.assign(record.begin() + *assistant + 1, record.end() - 1);
  return parsed;
}

std::optional<Sequence> ChatTemplate::ParsePrompt(
    std::span<const TokenId> prompt) {
  if (prompt.size() < 2 || prompt.front() != Vocabulary::kUser ||
      prompt.back() != Vocabulary::kAssistant) {
    return std::nullopt;
  }
  for (std::size_t i = 1; i + 1 < prompt.size(); ++i) {
    if (Vocabulary::IsMarker(prompt[i]) || prompt[i] < 0) return std::nullopt;
  }
  return Sequence(prompt.begin() + 1, prompt.end() - 1);
}

Sequence ChatTemplate::MakePrompt(std::span<const TokenId> query) {
  Sequence out{Vocabulary::kUser};
  out.insert(out.end(), query.begin(), query.end());
  out.push_back(Vocabulary::kAssistant);
  return out;
}

Sequence ChatTemplate::MakeRecord(std::span<const TokenId> query,
                                  std::span<const TokenId> completion) {
  Sequence out = MakePrompt(query);
  out.insert(out.end(), completion.begin(), completion.end());
  out.push_back(Vocabulary::kEos);
  return out;
}

bool ChatTemplate::WithinBounds(const ParsedRecord& record) const {
  const int m = static_cast<int>(record.query.size());
  const int n = static_cast<int>(record.completion.size());
  return m >= min_query && m <= max_query && n >= min_completion &&
         n <= max_completion;
}

bool ChatTemplate::Accepts(std::span<const TokenId> record) const {
  const auto parsed = Parse(record);
  return parsed && WithinBounds(*parsed);
}

void ChatTemplate::Validate() const {
  if (min_query < 1 || max_query < min_query || min_completion < 1 ||
      max_completion < min_completion) {
    throw Error(ErrorCode::kInvalidArgument, "inconsistent template bounds");
  }
}

std::string_view DomainKindName(DomainKind kind) {
  switch (kind) {
    case DomainKind::kStruct:
      return "STRUCT";
    case DomainKind::kTopic:
      return "TOPIC";
    case DomainKind::kScript:
      return "SCRIPT";
  }
  return "?";
}

DomainKind ParseDomainKind(std::string_view name) {
  for (DomainKind kind : kAllDomains) {
    if (DomainKindName(kind) == name) return kind;
  }
  throw Error(ErrorCode::kConfig, "unknown domain '" + std::string(name) + "'");
}

void DomainSpec::Validate() const {
  chat.Validate();
  const std::size_t n = alphabet.size();
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "empty alphabet");
  for (TokenId t : alphabet) {
    if (t < Vocabulary::kFirstContent || t >= vocab_size) {
      throw Error(ErrorCode::kInvalidToken,
                  "alphabet token " + std::to_string(t) + " is not content");
    }
  }
  auto check_rows = [&](const std::vector<std::vector<double>>& rows,
                        const char* what) {
    if (rows.size() != n) {
      throw Error(ErrorCode::kShapeMismatch, std::string(what) + " rows");
    }
    for (const auto& row : rows) {
      if (row.size() != n || !IsNormalized(row)) {
        throw Error(ErrorCode::kInvalidArgument,
                    std::string(what) + " row is not a distribution");
      }
    }
  };
  for (const Grammar* g : {&query, &completion}) {
    if (g->start.size() != n || !IsNormalized(g->start) || g->stop.size() != n) {
      throw Error(ErrorCode::kShapeMismatch, "grammar start/stop tables");
    }
    for (double s : g->stop) {
      if (!(s >= 0.0 && s <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "stop probability");
      }
    }
    check_rows(g->transition, "transition");
    if (!g->pattern.empty()) {
      if (g->slot_mask.size() != n ||
          std::none_of(g->slot_mask.begin(), g->slot_mask.end(),
                       [](bool b) { return b; })) {
        throw Error(ErrorCode::kShapeMismatch, "slot mask");
      }
      for (int cell : g->pattern) {
        if (cell != Grammar::kFreeSlot &&
            (cell < 0 || cell >= static_cast<int>(n))) {
          throw Error(ErrorCode::kShapeMismatch, "pattern cell");
        }
      }
    }
  }
  check_rows(handoff, "handoff");
  if (!query.pattern.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "query patterns unsupported");
  }
  if (!completion.pattern.empty()) {
    const int len = static_cast<int>(completion.pattern.size());
    if (len < chat.min_completion || len > chat.max_completion) {
      throw Error(ErrorCode::kInvalidArgument,
                  "completion pattern violates template bounds");
    }
  }
  if (!(shift >= 0.0 && shift <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "shift outside [0, 1]");
  }
}

DomainSpec BuiltinDomain(DomainKind kind, int vocab_size) {
  if (vocab_size < 28 || vocab_size > Vocabulary::kMaxSize) {
    throw Error(ErrorCode::kInvalidArgument,
                "built-in domains need a vocabulary of at least 28 tokens");
  }
  const std::string name(DomainKindName(kind));
  return DrawDomain(ShapeFor(kind, vocab_size), name, vocab_size,
                    DeriveSeed(kGrammarSeed, name, vocab_size));
}

namespace {

DomainSpec Blend(const DomainSpec& base, std::string_view tag, double shift) {
  const DomainKind kind = ParseDomainKind(base.name);
  const DomainSpec redraw =
      DrawDomain(ShapeFor(kind, base.vocab_size), base.name, base.vocab_size,
                 DeriveSeed(kGrammarSeed, base.name + std::string(tag),
                            base.vocab_size));
  DomainSpec out = base;
  out.query = MixGrammar(base.query, redraw.query, shift);
  out.completion = MixGrammar(base.completion, redraw.completion, shift);
  out.handoff = MixRows(base.handoff, redraw.handoff, shift);
  return out;
}

}  // namespace

DomainSpec ShiftDomain(const DomainSpec& base, double shift) {
  if (!(shift >= 0.0 && shift <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "shift outside [0, 1]");
  }
  if (shift == 0.0) return base;
  DomainSpec out = Blend(base, "/redraw", shift);
  out.shift = shift;
  out.Validate();
  return out;
}

DomainSpec GeneralistDomain(DomainKind kind, int vocab_size, double blend) {
  if (!(blend >= 0.0 && blend <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "blend outside [0, 1]");
  }
  const DomainSpec base = BuiltinDomain(kind, vocab_size);
  if (blend == 0.0) return base;
  DomainSpec out = Blend(base, "/general", blend);
  out.Validate();
  return out;
}

Sequence SampleRecord(const DomainSpec& spec, Rng& rng) {
  const std::vector<int> query =
      SampleChain(rng, spec.query, spec.query.start, spec.chat.min_query,
                  spec.chat.max_query);
  const std::vector<double>& first = spec.handoff[query.back()];
  const std::vector<int> completion =
      spec.completion.pattern.empty()
          ? SampleChain(rng, spec.completion, first, spec.chat.min_completion,
                        spec.chat.max_completion)
          : SamplePattern(rng, spec.completion, first);
  Sequence q, c;
  for (int i : query) q.push_back(spec.alphabet[i]);
  for (int i : completion) c.push_back(spec.alphabet[i]);
  return ChatTemplate::MakeRecord(q, c);
}

std::vector<Sequence> GenDomainCorpus(const DomainSpec& spec, int count,
                                      std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "count must be >= 1");
  Rng rng(seed);
  std::vector<Sequence> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back(SampleRecord(spec, rng));
  return out;
}

ScenarioSplit ScenarioISplit(std::span<const Sequence> corpus, int test_count,
                             std::uint64_t seed) {
  if (test_count < 0 || static_cast<std::size_t>(test_count) >= corpus.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "test_count must be smaller than the corpus");
  }
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.Shuffle(order);
  ScenarioSplit split;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    const Sequence& record = corpus[order[rank]];
    const auto parsed = ChatTemplate::Parse(record);
    if (!parsed) {
      throw Error(ErrorCode::kInvalidArgument, "corpus record does not parse");
    }
    Sequence prompt = ChatTemplate::MakePrompt(parsed->query);
    if (rank < static_cast<std::size_t>(test_count)) {
      split.test_prompts.push_back(std::move(prompt));
    } else {
      Sequence completion = parsed->completion;
      completion.push_back(Vocabulary::kEos);
      split.train_prompts.push_back(std::move(prompt));
      split.train_completions.push_back(std::move(completion));
    }
  }
  return split;
}

std::vector<Sequence> ScenarioIIRelated(const DomainSpec& spec, double shift,
                                        int count, std::uint64_t seed) {
  if (!(shift > 0.0 && shift <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "related shift must be in (0, 1]");
  }
  const DomainSpec related = ShiftDomain(spec, shift);
  std::vector<Sequence> prompts;
  for (const Sequence& record : GenDomainCorpus(related, count, seed)) {
    prompts.push_back(ChatTemplate::MakePrompt(ChatTemplate::Parse(record)->query));
  }
  return prompts;
}

std::vector<DistillExample> MagpieSynthesize(const SoftmaxTableLM& target,
                                             const ChatTemplate& chat,
                                             int count, std::uint64_t seed,
                                             const MagpieOptions& options,
                                             MagpieStats* stats) {
  if (count < 1) throw Error(ErrorCode::kInvalidArgument, "count must be >= 1");
  chat.Validate();
  MagpieStats local;
  Rng rng(seed);
  std::vector<DistillExample> out;
  const std::size_t start_key = target.ContextKey(Sequence{Vocabulary::kUser});
  for (int item = 0; item < count; ++item) {
    bool done = false;
    for (int attempt = 0; attempt <= options.max_retries && !done; ++attempt) {
      ++local.attempts;
      Sequence query;
      std::size_t key = start_key;
      bool closed = false;
      bool bad = false;
      for (int step = 0; step <= options.max_query_len; ++step) {
        const Distribution dist = target.RowDistribution(key);
        const auto t = static_cast<TokenId>(rng.Categorical(dist.probs()));
        if (t == Vocabulary::kAssistant) {
          closed = true;
          break;
        }
        if (Vocabulary::IsMarker(t) || step == options.max_query_len) {
          bad = Vocabulary::IsMarker(t);
          break;
        }
        query.push_back(t);
        key = target.ExtendKey(key, t);
      }
      if (!closed) {
        ++(bad ? local.bad_query : local.no_assistant);
        continue;
      }
      const int m = static_cast<int>(query.size());
      if (m < chat.min_query || m > chat.max_query) {
        ++local.bad_query;
        continue;
      }
      Sequence prompt = ChatTemplate::MakePrompt(query);
      Sequence completion =
          GreedyGenerate(target, prompt, options.max_completion_len);
      Sequence record = prompt;
      record.insert(record.end(), completion.begin(), completion.end());
      if (!chat.Accepts(record)) {
        ++local.bad_completion;
        continue;
      }
      DistillExample ex{.prompt = std::move(prompt),
                        .completion = std::move(completion)};
      std::vector<Distribution> dists;
      std::size_t ckey = target.ContextKey(ex.prompt);
      for (TokenId t : ex.completion) {
        dists.push_back(target.RowDistribution(ckey));
        ckey = target.ExtendKey(ckey, t);
      }
      ex.target_dists = std::move(dists);
      out.push_back(std::move(ex));
      ++local.accepted;
      done = true;
    }
    if (!done) ++local.skipped_items;
  }
  if (stats) *stats = local;
  if (static_cast<double>(out.size()) <
      options.min_yield * static_cast<double>(count)) {
    throw Error(ErrorCode::kYieldTooLow,
                std::to_string(out.size()) + " of " + std::to_string(count) +
                    " synthesized records survived filtering");
  }
  return out;
}

SoftmaxTableLM TrainDomainTarget(const DomainSpec& spec, int corpus_size,
                                 int order, std::uint64_t seed) {
  return MleFit(GenDomainCorpus(spec, corpus_size, seed), order,
                Vocabulary(spec.vocab_size));
}

std::vector<Sequence> GenMixtureCorpus(std::span<const DomainSpec> specs,
                                       int corpus_size, std::uint64_t seed) {
  std::vector<Sequence> mixture;
  for (const DomainSpec& spec : specs) {
    auto part = GenDomainCorpus(spec, corpus_size, DeriveSeed(seed, spec.name));
    mixture.insert(mixture.end(), std::make_move_iterator(part.begin()),
                   std::make_move_iterator(part.end()));
  }
  return mixture;
}

SoftmaxTableLM TrainGenericTarget(std::span<const DomainSpec> specs,
                                  int corpus_size, int order,
                                  std::uint64_t seed) {
  if (specs.empty()) throw Error(ErrorCode::kInvalidArgument, "no domains");
  return MleFit(GenMixtureCorpus(specs, corpus_size, seed), order,
                Vocabulary(specs.front().vocab_size));
}

Distribution ContentUnigram(std::span<const Sequence> records, int vocab_size) {
  std::vector<double> counts(vocab_size, 0.0);
  double total = 0.0;
  for (const Sequence& r : records) {
    for (TokenId t : r) {
      if (Vocabulary::IsMarker(t)) continue;
      counts.at(t) += 1.0;
      total += 1.0;
    }
  }
  if (total == 0.0) throw Error(ErrorCode::kInvalidArgument, "no content tokens");
  for (double& c : counts) c /= total;
  return Distribution(std::move(counts));
}

double CompletionEntropy(std::span<const Sequence> records, int vocab_size) {
  // Plug-in estimate of H(c_i | c_{i-1}), EOS included as an outcome.
  std::map<TokenId, std::vector<double>> counts;
  double total = 0.0;
  for (const Sequence& r : records) {
    const auto parsed = ChatTemplate::Parse(r);
    if (!parsed) continue;
    TokenId prev = Vocabulary::kAssistant;
    Sequence completion = parsed->completion;
    completion.push_back(Vocabulary::kEos);
    for (TokenId t : completion) {
      auto [it, inserted] = counts.try_emplace(prev);
      if (inserted) it->second.assign(vocab_size, 0.0);
      it->second.at(t) += 1.0;
      total += 1.0;
      prev = t;
    }
  }
  if (total == 0.0) return 0.0;
  double h = 0.0;
  for (const auto& [prev, row] : counts) {
    double row_total = 0.0;
    for (double c : row) row_total += c;
    for (double c : row) {
      if (c > 0.0) h -= c / total * std::log(c / row_total);
    }
  }
  return h;
}

}  // namespace sdlab
