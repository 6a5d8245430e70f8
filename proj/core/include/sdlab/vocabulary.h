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

#ifndef SDLAB_VOCABULARY_H_
#define SDLAB_VOCABULARY_H_

#include <cstdint>
#include <span>
#include <vector>

namespace sdlab {

using TokenId = std::int32_t;
using Sequence = std::vector<TokenId>;

// Token ids 0..3 are reserved chat markers; content tokens start at 4.
class Vocabulary {
 public:
  static constexpr TokenId kUser = 0;
  static constexpr TokenId kAssistant = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kPad = 3;
  static constexpr TokenId kFirstContent = 4;
  static constexpr int kMinSize = 8;
  static constexpr int kMaxSize = 64;

  explicit Vocabulary(int size);

  int size() const { return size_; }
  bool Contains(TokenId id) const { return id >= 0 && id < size_; }
  static bool IsMarker(TokenId id) { return id >= 0 && id < kFirstContent; }

  // Throws kInvalidToken on the first id outside [0, size).
  void Validate(std::span<const TokenId> tokens) const;

  friend bool operator==(const Vocabulary&, const Vocabulary&) = default;

 private:
  int size_;
};

}  // namespace sdlab

#endif  // SDLAB_VOCABULARY_H_
