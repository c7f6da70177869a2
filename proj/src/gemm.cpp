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

#include "gemm.hpp"

#include <algorithm>
#include <vector>

namespace favit::gemm {

namespace {
constexpr std::size_t kRowBlock = 4;
constexpr std::size_t kColBlock = 512;
}  // namespace

void nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
        bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
    const std::size_t j1 = std::min(n, j0 + kColBlock);
    std::size_t i = 0;
    for (; i + kRowBlock <= m; i += kRowBlock) {
      double* c0 = c + (i + 0) * n;
      double* c1 = c + (i + 1) * n;
      double* c2 = c + (i + 2) * n;
      double* c3 = c + (i + 3) * n;
      const double* a0 = a + (i + 0) * k;
      const double* a1 = a + (i + 1) * k;
      const double* a2 = a + (i + 2) * k;
      const double* a3 = a + (i + 3) * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        const double v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
        for (std::size_t j = j0; j < j1; ++j) {
          const double bj = brow[j];
          c0[j] += v0 * bj;
          c1[j] += v1 * bj;
          c2[j] += v2 * bj;
          c3[j] += v3 * bj;
        }
      }
    }
    for (; i < m; ++i) {
      double* ci = c + i * n;
      const double* ai = a + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b + p * n;
        const double v = ai[p];
        for (std::size_t j = j0; j < j1; ++j) ci[j] += v * brow[j];
      }
    }
  }
}

void nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
        bool accumulate) {
  std::vector<double> bt(k * n);
  transpose(n, k, b, bt.data());
  nn(m, k, n, a, bt.data(), c, accumulate);
}

void tn_accumulate(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c) {
  std::vector<double> at(k * m);
  transpose(m, k, a, at.data());
  nn(k, m, n, at.data(), b, c, true);
}

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile)
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile)
      for (std::size_t r = r0; r < std::min(rows, r0 + kTile); ++r)
        for (std::size_t cc = c0; cc < std::min(cols, c0 + kTile); ++cc) dst[cc * rows + r] = src[r * cols + cc];
}

}  // namespace favit::gemm
