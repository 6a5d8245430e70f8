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

#ifndef SDLAB_DATASET_IO_H_
#define SDLAB_DATASET_IO_H_

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "sdlab/datagen.h"
#include "sdlab/distill.h"

namespace sdlab {

// JSON-lines, one object per example:
//   {"prompt": [ids], "completion": [ids], "target_probs": [[p...]] | null}
// Probabilities round-trip exactly (shortest round-trip decimal). Loaders
// require every probability row to sum to 1 within 1e-6.
inline constexpr double kLoadSumTolerance = 1e-6;

void WriteDataset(std::span<const DistillExample> examples, std::ostream& out);
std::vector<DistillExample> ReadDataset(std::istream& in);
void SaveDataset(std::span<const DistillExample> examples,
                 const std::filesystem::path& path);
std::vector<DistillExample> LoadDataset(const std::filesystem::path& path);

// Corpus records are stored split at the ASSISTANT marker: the prompt
// includes it, the completion keeps the EOS. Query sets have empty
// completions.
std::vector<DistillExample> RecordsToExamples(std::span<const Sequence> records);
std::vector<DistillExample> PromptsToExamples(std::span<const Sequence> prompts);
std::vector<Sequence> ExamplesToPrompts(std::span<const DistillExample> items);

void SaveDomainSpec(const DomainSpec& spec, const std::filesystem::path& path);
DomainSpec LoadDomainSpec(const std::filesystem::path& path);

}  // namespace sdlab

#endif  // SDLAB_DATASET_IO_H_
