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
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "favit/param_store.hpp"
#include "favit/tensor.hpp"

// Little-endian weight container:
//   "FAVT" | u32 version | u32 count |
//   count x ( u32 name_len | name bytes | u32 rank | u64 extents[rank] | f64 values[] )
namespace favit {

inline constexpr std::uint32_t kWeightFormatVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_weights(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_weights(std::istream& in);

void save_weights(const std::filesystem::path& path, const ParamStore& store);
NamedTensors load_weights(const std::filesystem::path& path);

/// Copies loaded values into the matching parameters of `store`. Every
/// parameter must be present with an identical shape and no extras allowed.
void assign_weights(ParamStore& store, const NamedTensors& loaded);

}  // namespace favit
