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

// Row-major double kernels. Every output element is accumulated over the
// inner dimension in ascending order, independent of its row or column
// position, so identical input rows always give bit-identical output rows.
namespace favit::gemm {

/// c[m,n] (+)= a[m,k] * b[k,n]
void nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
        bool accumulate);

/// c[m,n] (+)= a[m,k] * b[n,k]^T
void nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c,
        bool accumulate);

/// c[k,n] += a[m,k]^T * b[m,n]
void tn_accumulate(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst);

}  // namespace favit::gemm
