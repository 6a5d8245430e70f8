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

#include "sdlab/model_io.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "json.hpp"
#include "sdlab/error.h"

namespace sdlab {
namespace {

using nlohmann::json;

std::uint64_t ToLittleEndian(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((x >> (8 * i)) & 0xffU) << (8 * (7 - i));
    return r;
  }
  return x;
}

json ReservedIds() {
  return json{{"USER", Vocabulary::kUser},
              {"ASSISTANT", Vocabulary::kAssistant},
              {"EOS", Vocabulary::kEos},
              {"PAD", Vocabulary::kPad}};
}

}  // namespace

void WriteModel(const SoftmaxTableLM& model, std::ostream& out) {
  const json header = {{"format_version", kModelFormatVersion},
                       {"order", model.order()},
                       {"vocab_size", model.vocab_size()},
                       {"reserved_ids", ReservedIds()}};
  out << kModelMagic << header.dump() << '\n';
  for (double z : model.logits()) {
    const std::uint64_t bits = ToLittleEndian(std::bit_cast<std::uint64_t>(z));
    char buf[8];
    std::memcpy(buf, &bits, 8);
    out.write(buf, 8);
  }
  if (!out) throw Error(ErrorCode::kIo, "failed writing model");
}

SoftmaxTableLM ReadModel(std::istream& in) {
  std::string magic(kModelMagic.size(), '\0');
  in.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || magic != kModelMagic) {
    throw Error(ErrorCode::kCorruptFile, "missing SDLM1 magic");
  }
  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw Error(ErrorCode::kCorruptFile, "missing model header");
  }
  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile,
                std::string("unparseable model header: ") + e.what());
  }
  int order = 0;
  int vocab_size = 0;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error(ErrorCode::kVersionMismatch,
                  "model format version " + std::to_string(version) +
                      ", expected " + std::to_string(kModelFormatVersion));
    }
    order = header.at("order").get<int>();
    vocab_size = header.at("vocab_size").get<int>();
    if (header.at("reserved_ids") != ReservedIds()) {
      throw Error(ErrorCode::kShapeMismatch, "reserved id layout differs");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kCorruptFile,
                std::string("bad model header: ") + e.what());
  }
  // Validates the shape before allocating.
  SoftmaxTableLM shape(Vocabulary(vocab_size), order);
  std::vector<double> logits(shape.logits().size());
  for (double& z : logits) {
    char buf[8];
    in.read(buf, 8);
    if (in.gcount() != 8) {
      throw Error(ErrorCode::kCorruptFile, "truncated logit table");
    }
    std::uint64_t bits;
    std::memcpy(&bits, buf, 8);
    z = std::bit_cast<double>(ToLittleEndian(bits));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kCorruptFile, "trailing bytes after logit table");
  }
  return SoftmaxTableLM(shape.vocab(), order, std::move(logits));
}

void SaveModel(const SoftmaxTableLM& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  WriteModel(model, out);
}

SoftmaxTableLM LoadModel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  return ReadModel(in);
}

}  // namespace sdlab
