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

#include "sdlab/dataset_io.h"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"
#include "sdlab/error.h"

namespace sdlab {
namespace {

using nlohmann::json;

DistillExample ParseExample(const json& j) {
  DistillExample ex;
  ex.prompt = j.at("prompt").get<Sequence>();
  ex.completion = j.at("completion").get<Sequence>();
  const json& probs = j.at("target_probs");
  if (!probs.is_null()) {
    std::vector<Distribution> dists;
    for (const json& row : probs) {
      dists.emplace_back(row.get<std::vector<double>>(), kLoadSumTolerance);
    }
    ex.target_dists = std::move(dists);
  }
  return ex;
}

json GrammarToJson(const Grammar& g) {
  std::vector<int> mask(g.slot_mask.begin(), g.slot_mask.end());
  return json{{"start", g.start},     {"transition", g.transition},
              {"stop", g.stop},       {"pattern", g.pattern},
              {"slot_mask", mask}};
}

Grammar GrammarFromJson(const json& j) {
  Grammar g;
  g.start = j.at("start").get<std::vector<double>>();
  g.transition = j.at("transition").get<std::vector<std::vector<double>>>();
  g.stop = j.at("stop").get<std::vector<double>>();
  g.pattern = j.at("pattern").get<std::vector<int>>();
  for (int b : j.at("slot_mask").get<std::vector<int>>()) {
    g.slot_mask.push_back(b != 0);
  }
  return g;
}

}  // namespace

void WriteDataset(std::span<const DistillExample> examples, std::ostream& out) {
  for (const DistillExample& ex : examples) {
    json j = {{"prompt", ex.prompt}, {"completion", ex.completion}};
    if (ex.target_dists) {
      json rows = json::array();
      for (const Distribution& d : *ex.target_dists) {
        rows.push_back(std::vector<double>(d.probs().begin(), d.probs().end()));
      }
      j["target_probs"] = std::move(rows);
    } else {
      j["target_probs"] = nullptr;
    }
    out << j.dump() << '\n';
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing dataset");
}

std::vector<DistillExample> ReadDataset(std::istream& in) {
  std::vector<DistillExample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(ParseExample(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kCorruptFile,
                  "line " + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::kCorruptFile,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
    const DistillExample& ex = out.back();
    if (ex.target_dists && ex.target_dists->size() != ex.completion.size()) {
      throw Error(ErrorCode::kShapeMismatch,
                  "line " + std::to_string(line_no) +
                      ": target_probs rows do not match completion length");
    }
  }
  return out;
}

void SaveDataset(std::span<const DistillExample> examples,
                 const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  WriteDataset(examples, out);
}

std::vector<DistillExample> LoadDataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return ReadDataset(in);
}

std::vector<DistillExample> RecordsToExamples(
    std::span<const Sequence> records) {
  std::vector<DistillExample> out;
  for (const Sequence& r : records) {
    const auto parsed = ChatTemplate::Parse(r);
    if (!parsed) throw Error(ErrorCode::kInvalidArgument, "record does not parse");
    DistillExample ex{.prompt = ChatTemplate::MakePrompt(parsed->query),
                      .completion = parsed->completion};
    ex.completion.push_back(Vocabulary::kEos);
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<DistillExample> PromptsToExamples(
    std::span<const Sequence> prompts) {
  std::vector<DistillExample> out;
  for (const Sequence& p : prompts) out.push_back({.prompt = p});
  return out;
}

std::vector<Sequence> ExamplesToPrompts(std::span<const DistillExample> items) {
  std::vector<Sequence> out;
  for (const DistillExample& ex : items) out.push_back(ex.prompt);
  return out;
}

void SaveDomainSpec(const DomainSpec& spec, const std::filesystem::path& path) {
  const json j = {{"name", spec.name},
                  {"vocab_size", spec.vocab_size},
                  {"shift", spec.shift},
                  {"chat",
                   {{"min_query", spec.chat.min_query},
                    {"max_query", spec.chat.max_query},
                    {"min_completion", spec.chat.min_completion},
                    {"max_completion", spec.chat.max_completion}}},
                  {"alphabet", spec.alphabet},
                  {"content_tokens", spec.content_tokens},
                  {"query", GrammarToJson(spec.query)},
                  {"completion", GrammarToJson(spec.completion)},
                  {"handoff", spec.handoff}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  out << j.dump(1) << '\n';
}

DomainSpec LoadDomainSpec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  DomainSpec spec;
  try {
    const json j = json::parse(in);
    spec.name = j.at("name").get<std::string>();
    spec.vocab_size = j.at("vocab_size").get<int>();
    spec.shift = j.at("shift").get<double>();
    const json& chat = j.at("chat");
    spec.chat = {.min_query = chat.at("min_query").get<int>(),
                 .max_query = chat.at("max_query").get<int>(),
                 .min_completion = chat.at("min_completion").get<int>(),
                 .max_completion = chat.at("max_completion").get<int>()};
    spec.alphabet = j.at("alphabet").get<std::vector<TokenId>>();
    spec.content_tokens = j.at("content_tokens").get<std::vector<TokenId>>();
    spec.query = GrammarFromJson(j.at("query"));
    spec.completion = GrammarFromJson(j.at("completion"));
    spec.handoff = j.at("handoff").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile,
                "bad domain spec " + path.string() + ": " + e.what());
  }
  spec.Validate();
  return spec;
}

}  // namespace sdlab
