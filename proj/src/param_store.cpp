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

#include "favit/param_store.hpp"

#include <algorithm>
#include <cmath>

#include "favit/error.hpp"

namespace favit {

Tensor ParamStore::add(std::string name, Shape shape, Init init) {
  Tensor t(std::move(shape));
  if (!initialize_) return add(std::move(name), t);
  switch (init) {
    case Init::kTruncatedNormal: {
      std::normal_distribution<double> normal(0.0, kInitStddev);
      for (double& v : t.data()) {
        do {
          v = normal(rng_);
        } while (std::abs(v) > 2.0 * kInitStddev);
      }
      break;
    }
    case Init::kZeros:
      break;
    case Init::kOnes:
      std::ranges::fill(t.data(), 1.0);
      break;
  }
  return add(std::move(name), t);
}

Tensor ParamStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), value);
  return value;
}

bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

Tensor ParamStore::get(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw IndexError("unknown parameter '" + std::string(name) + "'");
  return entries_[it->second].second;
}

std::size_t ParamStore::count_elements() const {
  std::size_t total = 0;
  for (const auto& [name, t] : entries_) total += t.size();
  return total;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

}  // namespace favit
