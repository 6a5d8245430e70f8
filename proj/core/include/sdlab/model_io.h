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

#ifndef SDLAB_MODEL_IO_H_
#define SDLAB_MODEL_IO_H_

#include <filesystem>
#include <iosfwd>
#include <string_view>

#include "sdlab/language_model.h"

namespace sdlab {

// File layout: the magic line "SDLM1\n", one line of JSON header
// {"format_version", "order", "vocab_size", "reserved_ids"}, then
// vocab_size^(order+1) little-endian IEEE-754 binary64 logits, row-major.
inline constexpr std::string_view kModelMagic = "SDLM1\n";
inline constexpr int kModelFormatVersion = 1;

void WriteModel(const SoftmaxTableLM& model, std::ostream& out);
SoftmaxTableLM ReadModel(std::istream& in);

void SaveModel(const SoftmaxTableLM& model, const std::filesystem::path& path);
SoftmaxTableLM LoadModel(const std::filesystem::path& path);

}  // namespace sdlab

#endif  // SDLAB_MODEL_IO_H_
