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

#include "favit/attnmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "favit/error.hpp"

namespace favit::attnmap {

double GroupSpan::mass_in_map() const {
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) total += weights[r * padded_cols + c];
  return total;
}

std::vector<GroupSpan> attribute(std::span<const GroupTrace> traces, Fusion fusion, std::size_t batch,
                                 std::size_t query_row, std::size_t query_col) {
  std::vector<GroupSpan> spans;
  for (const auto& tr : traces) {
    if (query_row >= tr.map_rows || query_col >= tr.map_cols) {
      throw IndexError("query (" + std::to_string(query_row) + "," + std::to_string(query_col) + ") outside " +
                       std::to_string(tr.map_rows) + "x" + std::to_string(tr.map_cols) + " map");
    }
    const auto& ks = tr.window_keys.shape();  // [b, w, p, c']
    if (batch >= ks[0]) throw IndexError("batch index " + std::to_string(batch) + " out of range");
    const std::size_t nw = ks[1], p = ks[2], ch = ks[3];
    const std::size_t n = tr.map_rows * tr.map_cols;
    const std::size_t q = query_row * tr.map_cols + query_col;

    GroupSpan span;
    span.group = tr.group;
    span.dilation = tr.dilation;
    span.window_side = tr.window_side;
    span.rows = tr.map_rows;
    span.cols = tr.map_cols;
    span.padded_rows = tr.windows_down * tr.window_side;
    span.padded_cols = tr.windows_across * tr.window_side;
    span.weights.assign(span.padded_rows * span.padded_cols, 0.0);

    auto attn = tr.attention.data();
    span.key_weights.assign(attn.begin() + (batch * n + q) * p, attn.begin() + (batch * n + q + 1) * p);

    auto wk = tr.window_keys.data();
    auto fused = tr.keys.data();
    std::vector<double> share(nw);
    for (std::size_t k = 0; k < p; ++k) {
      if (fusion == Fusion::kMean) {
        std::fill(share.begin(), share.end(), 1.0 / static_cast<double>(nw));
      } else {
        std::fill(share.begin(), share.end(), 0.0);
        for (std::size_t c = 0; c < ch; ++c) {
          const double target = fused[(batch * p + k) * ch + c];
          // First window holding the maximum, matching the forward tie rule.
          for (std::size_t w = 0; w < nw; ++w) {
            if (wk[((batch * nw + w) * p + k) * ch + c] == target) {
              share[w] += 1.0 / static_cast<double>(ch);
              break;
            }
          }
        }
      }
      for (std::size_t w = 0; w < nw; ++w) {
        if (share[w] == 0.0) continue;
        const GridOffset at = tr.grids[w].offsets()[k];
        span.weights[at.row * span.padded_cols + at.col] += span.key_weights[k] * share[w];
      }
    }
    spans.push_back(std::move(span));
  }
  return spans;
}

void write_pgm(std::ostream& out, const GroupSpan& span) {
  double peak = 0.0;
  for (std::size_t r = 0; r < span.rows; ++r)
    for (std::size_t c = 0; c < span.cols; ++c) peak = std::max(peak, span.weights[r * span.padded_cols + c]);
  out << "P5\n" << span.cols << ' ' << span.rows << "\n255\n";
  std::string row(span.cols, '\0');
  for (std::size_t r = 0; r < span.rows; ++r) {
    for (std::size_t c = 0; c < span.cols; ++c) {
      const double v = peak > 0.0 ? span.weights[r * span.padded_cols + c] / peak : 0.0;
      row[c] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

void write_csv(std::ostream& out, std::span<const GroupSpan> spans, std::size_t query_row, std::size_t query_col) {
  out << "group,query_row,query_col,key_index,weight\n";
  char buf[64];
  for (const auto& s : spans) {
    for (std::size_t k = 0; k < s.key_weights.size(); ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", s.key_weights[k]);
      out << s.group << ',' << query_row << ',' << query_col << ',' << k << ',' << buf << '\n';
    }
  }
}

}  // namespace favit::attnmap
