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

#include "favit/tape.hpp"

#include "favit/error.hpp"

namespace favit {

void Tape::record(const Tensor& output, std::function<void()> backward) {
  if (!recording()) return;
  entries_.push_back({output.node(), output, std::move(backward)});
}

void Tape::backward(const Tensor& root) {
  if (root.size() != 1) {
    throw ContractError("backward needs a scalar root, got shape " + to_string(root.shape()));
  }
  std::size_t end = entries_.size();
  while (end > 0 && entries_[end - 1].output != root.node()) --end;
  if (end == 0) throw ContractError("backward root was not produced on this tape");

  Tensor seed = entries_[end - 1].keep_alive;
  seed.mutable_grad()[0] += 1.0;
  for (std::size_t i = end; i-- > 0;) entries_[i].backward();
}

void Tape::clear() { entries_.clear(); }

void Tape::enable_instrumentation() {
  if (!macs_) macs_ = 0;
}

std::uint64_t Tape::macs() const {
  if (!macs_) throw ContractError("MAC instrumentation is disabled on this tape");
  return *macs_;
}

}  // namespace favit
