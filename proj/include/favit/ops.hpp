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
#include <optional>
#include <span>

#include "favit/tape.hpp"
#include "favit/tensor.hpp"

// Differentiable kernels. Every op validates shapes eagerly (ConfigError on
// mismatch), computes its result, and registers its adjoint on the tape.
// Only matmul-family ops and conv2d report multiply-accumulates.
namespace favit::ops {

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);
/// [g,m,k] x [g,k,n] -> [g,m,n]
Tensor batched_matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// [g,m,k] x [g,n,k]^T -> [g,m,n]
Tensor batched_matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
/// x[..., c] + bias[c]
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);
Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
Tensor reshape(Tape& tape, const Tensor& a, Shape shape);

/// Softmax along the last axis with the row maximum subtracted first.
Tensor softmax_rows(Tape& tape, const Tensor& a);

/// [..., w, p, c] -> [..., p, c], elementwise maximum over the window axis.
/// The adjoint goes to the lowest window index attaining the maximum.
Tensor max_reduce_over_windows(Tape& tape, const Tensor& stack);
/// [..., w, p, c] -> [..., p, c], arithmetic mean over the window axis. Each
/// mean sums its w terms in ascending value order, so any permutation of the
/// window axis gives a bit-identical result.
Tensor mean_reduce_over_windows(Tape& tape, const Tensor& stack);

/// x[b,h,w,cin] * kernel[kh,kw,cin,cout] with zero padding `pad` on all sides.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad,
              const std::optional<Tensor>& bias = std::nullopt);

inline constexpr double kLayerNormEpsilon = 1e-6;
/// Normalizes over the trailing axis, then applies gain and bias.
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias);

/// x * Phi(x) with the exact Gaussian CDF.
Tensor gelu(Tape& tape, const Tensor& x);

/// x[b,h,w,c] at the grid positions -> [b,p,c], rows in grid order.
Tensor gather(Tape& tape, const Tensor& x, const IndexGrid& grid);
/// One gather per grid, stacked: [b,h,w,c] -> [b,windows,p,c]. All grids must
/// have the same number of points.
Tensor gather_windows(Tape& tape, const Tensor& x, std::span<const IndexGrid> grids);

/// Zero-pads [b,h,w,c] at the bottom and right to [b,rows,cols,c].
Tensor pad_spatial(Tape& tape, const Tensor& x, std::size_t rows, std::size_t cols);

Tensor slice_channels(Tape& tape, const Tensor& x, std::size_t offset, std::size_t count);
Tensor concat_channels(Tape& tape, std::span<const Tensor> parts);

/// [b,n,heads*d] -> [b*heads,n,d]
Tensor split_heads(Tape& tape, const Tensor& x, std::size_t heads);
/// [b*heads,n,d] -> [b,n,heads*d]
Tensor merge_heads(Tape& tape, const Tensor& x, std::size_t heads);

/// [b,h,w,c] -> [b,c]
Tensor global_avg_pool(Tape& tape, const Tensor& x);

/// Mean softmax cross-entropy of logits[b,k] against integer labels.
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace favit::ops
