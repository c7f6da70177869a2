// Copyright 2026 The FaViT Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "favit/tensor.hpp"

namespace favit {

enum class Init {
  kTruncatedNormal,  // N(0, 0.02^2) redrawn outside +-2 sigma
  kZeros,
  kOnes,
};

inline constexpr double kInitStddev = 0.02;

/// Named parameters in creation order, drawn from one seeded generator.
/// Two stores built with the same seed and the same sequence of add() calls
/// hold bit-identical values.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  /// Every add() leaves the tensor zeroed. Good for counting.
  static ParamStore shapes_only() {
    ParamStore s;
    s.initialize_ = false;
    return s;
  }

  /// Throws ConfigError on a duplicate name.
  Tensor add(std::string name, Shape shape, Init init);
  Tensor add(std::string name, Tensor value);

  bool contains(std::string_view name) const;
  /// Throws IndexError for unknown names.
  Tensor get(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  /// Total scalar element count over all tensors.
  std::size_t count_elements() const;
  void zero_grad();

 private:
  std::mt19937_64 rng_;
  bool initialize_ = true;
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace favit
