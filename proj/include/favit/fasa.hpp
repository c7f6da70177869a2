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
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "favit/param_store.hpp"
#include "favit/tape.hpp"
#include "favit/tensor.hpp"

namespace favit {

/// Symmetric aggregation used for cross-window fusion.
enum class Fusion { kMax, kMean };

std::string_view fusion_name(Fusion fusion);
/// Accepts "max" or "mean"; throws ConfigError otherwise.
Fusion parse_fusion(std::string_view name);

inline constexpr std::size_t kDefaultSampleSide = 7;

/// Parameters of one factorization self-attention layer.
///
/// Channels are split into one group per dilation rate. Group i covers the
/// map with windows of side S_i = D_i (M - 1) + 1 and samples an M x M grid
/// with stride D_i in every window, so each group ends up with exactly M^2
/// fused keys whatever its window size. heads_per_group heads run inside
/// each group.
struct FasaConfig {
  std::size_t channels = 0;
  std::vector<std::size_t> dilations{1};
  std::size_t heads_per_group = 1;
  std::size_t sample_side = kDefaultSampleSide;
  Fusion fusion = Fusion::kMax;

  std::size_t groups() const { return dilations.size(); }
  std::size_t group_channels() const { return channels / groups(); }
  std::size_t head_dim() const { return group_channels() / heads_per_group; }
  std::size_t keys_per_group() const { return sample_side * sample_side; }
  std::size_t window_side(std::size_t group) const;

  /// Throws ConfigError if channels do not split evenly or any rate is zero.
  void validate() const;
};

/// Dilation rate that spreads `sample_side` points across `window_side`.
/// Throws ConfigError when (S - 1) / (M - 1) is not a positive integer.
std::size_t dilation_for(std::size_t window_side, std::size_t sample_side);

/// Per-group query/key/value embeddings [C' x C'] and the output projection
/// [C x C]. All are stored (out, in), i.e. y = x W^T.
struct FasaParams {
  std::vector<Tensor> wq;
  std::vector<Tensor> wk;
  std::vector<Tensor> wv;
  Tensor wo;

  static FasaParams create(ParamStore& store, const std::string& prefix, const FasaConfig& cfg,
                           Init init = Init::kTruncatedNormal);
};

/// Non-overlapping S x S windows over a zero-padded group feature map.
struct WindowPartition {
  Tensor padded;  // [b, windows_down * S, windows_across * S, c']
  std::size_t window_side = 0;
  std::size_t windows_down = 0;
  std::size_t windows_across = 0;

  std::size_t count() const { return windows_down * windows_across; }
  /// Top-left corner of window j (row-major window order) in the padded map.
  GridOffset origin(std::size_t j) const;
  /// Copy of window j as [b, S, S, c'].
  Tensor window(std::size_t j) const;
};

struct SampledWindows {
  std::vector<IndexGrid> grids;  // one per window, padded-map coordinates
  Tensor samples;                // [b, windows, M*M, c']
};

/// Intermediates of one head group, kept for inspection and attention maps.
struct GroupTrace {
  std::size_t group = 0;
  std::size_t window_side = 0;
  std::size_t dilation = 0;
  std::size_t windows_down = 0;
  std::size_t windows_across = 0;
  std::size_t map_rows = 0;
  std::size_t map_cols = 0;
  std::vector<IndexGrid> grids;
  Tensor window_keys;     // [b, windows, M*M, c'] before fusion
  Tensor keys;            // [b, M*M, c']
  Tensor values;          // [b, M*M, c']
  Tensor attention;       // [b, N, M*M], averaged over heads
  Tensor head_attention;  // [b*heads, N, M*M]
};

struct FasaResult {
  Tensor output;                      // [b, h, w, c]
  std::vector<Tensor> group_outputs;  // [b, N, c'] per group, before merging
  std::vector<GroupTrace> traces;     // empty unless requested
};

/// Contiguous channel slices, one per group.
std::vector<Tensor> split_groups(Tape& tape, const Tensor& x, const FasaConfig& cfg);

/// 1x1 embedding of every position: [b, h, w, c'] -> [b, h*w, c'].
Tensor embed_queries(Tape& tape, const Tensor& group_map, const Tensor& wq);

/// Throws ConfigError when window_side < sample_side.
WindowPartition partition_windows(Tape& tape, const Tensor& group_map, std::size_t window_side,
                                  std::size_t sample_side);

/// M x M sample offsets of window j, stride `dilation`, anchored at the
/// window corner. Throws ConfigError unless dilation (M - 1) + 1 == S.
IndexGrid dilated_grid(const WindowPartition& part, std::size_t window, std::size_t sample_side,
                       std::size_t dilation);

/// Samples every window of the partition.
SampledWindows dilated_sample(Tape& tape, const WindowPartition& part, std::size_t sample_side,
                              std::size_t dilation);

/// Independent 1x1 key and value embeddings of the sampled points.
std::pair<Tensor, Tensor> embed_keys_values(Tape& tape, const Tensor& samples, const Tensor& wk, const Tensor& wv);

/// [b, windows, M*M, c'] -> [b, M*M, c'].
Tensor cross_window_fuse(Tape& tape, const Tensor& stack, Fusion fusion);

/// softmax(Q K^T / sqrt(d)) V per head, with d = c' / heads.
Tensor group_attention(Tape& tape, const Tensor& queries, const Tensor& keys, const Tensor& values,
                       std::size_t heads, GroupTrace* trace = nullptr);

/// Channel concatenation in group order, output projection, reshape to a map.
Tensor merge_groups(Tape& tape, std::span<const Tensor> outputs, const Tensor& wo, std::size_t height,
                    std::size_t width);

FasaResult fasa_forward(Tape& tape, const Tensor& x, const FasaConfig& cfg, const FasaParams& params,
                        bool trace = false);

}  // namespace favit
