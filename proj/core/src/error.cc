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

#include "sdlab/error.h"

#include <string>

#include "sdlab/vocabulary.h"

namespace sdlab {

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
      return "invalid argument";
    case ErrorCode::kInvalidToken:
      return "invalid token";
    case ErrorCode::kShapeMismatch:
      return "shape mismatch";
    case ErrorCode::kCorruptFile:
      return "corrupt file";
    case ErrorCode::kVersionMismatch:
      return "version mismatch";
    case ErrorCode::kIo:
      return "i/o error";
    case ErrorCode::kConfig:
      return "configuration error";
    case ErrorCode::kWhiteBoxDataRequired:
      return "white-box data required";
    case ErrorCode::kYieldTooLow:
      return "yield too low";
    case ErrorCode::kUndefined:
      return "undefined";
  }
  return "unknown";
}

Vocabulary::Vocabulary(int size) : size_(size) {
  if (size < kMinSize || size > kMaxSize) {
    throw Error(ErrorCode::kInvalidArgument,
                "vocabulary size " + std::to_string(size) + " outside [" +
                    std::to_string(kMinSize) + ", " +
                    std::to_string(kMaxSize) + "]");
  }
}

void Vocabulary::Validate(std::span<const TokenId> tokens) const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!Contains(tokens[i])) {
      throw Error(ErrorCode::kInvalidToken,
                  "token " + std::to_string(tokens[i]) + " at position " +
                      std::to_string(i) + " not in vocabulary of size " +
                      std::to_string(size_));
    }
  }
}

}  // namespace sdlab
