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

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "favit/fasa.hpp"

namespace favit::attnmap {

/// Where one query's attention lands on the map of one head group.
struct GroupSpan {
  std::size_t group = 0;
  std::size_t dilation = 0;
  std::size_t window_side = 0;
  std::size_t rows = 0;  // unpadded map extents
  std::size_t cols = 0;
  std::size_t padded_rows = 0;
  std::size_t padded_cols = 0;
  std::vector<double> key_weights;  // M*M fused-key weights of the query (sums to 1)
  std::vector<double> weights;      // padded_rows x padded_cols, row-major (sums to 1)

  /// Attributed mass that fell inside the unpadded map.
  double mass_in_map() const;
};

/// Spreads each fused key's weight over the sampled positions behind it.
/// Max fusion credits the window that supplied the maximum, split by the
/// fraction of channels it won; mean fusion splits evenly over windows.
/// Throws IndexError for a query outside the map or a batch index out of range.
std::vector<GroupSpan> attribute(std::span<const GroupTrace> traces, Fusion fusion, std::size_t batch,
                                 std::size_t query_row, std::size_t query_col);

/// Binary P5 image of the unpadded map, scaled so the largest weight is 255.
void write_pgm(std::ostream& out, const GroupSpan& span);

/// Rows "group,query_row,query_col,key_index,weight" for every fused key.
void write_csv(std::ostream& out, std::span<const GroupSpan> spans, std::size_t query_row, std::size_t query_col);

}  // namespace favit::attnmap
