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
#include <functional>
#include <optional>
#include <vector>

#include "favit/tensor.hpp"

namespace favit {

/// Records backward closures in execution order and replays them in reverse.
///
/// A tape in inference mode records nothing, which keeps memory flat for
/// large forward-only runs. The MAC counter is independent of the mode and
/// only counts once instrumentation is enabled.
class Tape {
 public:
  enum class Mode { kRecord, kInference };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::kRecord; }

  /// Registers `backward` as the adjoint of the op that produced `output`.
  void record(const Tensor& output, std::function<void()> backward);

  /// Seeds d(root)/d(root) = 1 and runs every recorded closure in reverse.
  /// Throws ContractError when root is not a scalar or was not produced on
  /// this tape.
  void backward(const Tensor& root);

  void clear();
  std::size_t size() const { return entries_.size(); }

  void enable_instrumentation();
  void disable_instrumentation() { macs_.reset(); }
  bool instrumented() const { return macs_.has_value(); }
  void add_macs(std::uint64_t count) {
    if (macs_) *macs_ += count;
  }
  /// Throws ContractError when instrumentation is disabled.
  std::uint64_t macs() const;

 private:
  struct Entry {
    const detail::TensorImpl* output;
    Tensor keep_alive;
    std::function<void()> backward;
  };
  Mode mode_;
  std::vector<Entry> entries_;
  std::optional<std::uint64_t> macs_;
};

}  // namespace favit
