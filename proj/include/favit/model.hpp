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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "favit/fasa.hpp"
#include "favit/param_store.hpp"
#include "favit/tape.hpp"
#include "favit/tensor.hpp"

namespace favit {

inline constexpr std::size_t kStages = 4;
inline constexpr std::size_t kDefaultClasses = 1000;

struct StageSpec {
  std::size_t patch_size = 2;  // stride of the embedding that feeds this stage
  std::size_t channels = 0;
  std::size_t heads = 1;       // heads inside each dilation group
  std::size_t mlp_ratio = 4;
  std::size_t blocks = 1;
  std::vector<std::size_t> dilations{1};

  bool operator==(const StageSpec&) const = default;
};

/// One column of the FaViT variant table plus the knobs shared by all stages.
struct VariantSpec {
  std::string name;
  std::array<StageSpec, kStages> stages;
  std::size_t sample_side = kDefaultSampleSide;
  Fusion fusion = Fusion::kMax;
  std::size_t num_classes = kDefaultClasses;

  bool operator==(const VariantSpec&) const = default;

  /// Throws ConfigError on inconsistent stage settings.
  void validate() const;
};

/// Built-in B0, B1, B2, B3. Throws ConfigError for other names.
VariantSpec load_variant(std::string_view name);
std::vector<std::string> variant_names();

/// JSON mirror of VariantSpec (see variant_config.cpp for the schema).
VariantSpec variant_from_json_text(std::string_view text);
std::string variant_to_json_text(const VariantSpec& spec);
VariantSpec load_variant_file(const std::filesystem::path& path);

FasaConfig stage_fasa_config(const VariantSpec& spec, std::size_t stage);

struct BlockParams {
  Tensor norm1_gain;
  Tensor norm1_bias;
  FasaParams attn;
  Tensor norm2_gain;
  Tensor norm2_bias;
  Tensor mlp_expand;    // [c, e*c]
  Tensor mlp_contract;  // [e*c, c]

  static BlockParams create(ParamStore& store, const std::string& prefix, const FasaConfig& cfg,
                            std::size_t mlp_ratio);
};

struct ModelParams {
  ParamStore store;
  Tensor stem_kernel;        // [7, 7, 3, c1], stride 2
  Tensor projection_kernel;  // [p1/2, p1/2, c1, c1], non-overlapping
  std::array<std::vector<BlockParams>, kStages> blocks;
  std::array<Tensor, kStages - 1> downsample_kernels;  // [p, p, c_s, c_{s+1}]
  Tensor head_norm_gain;
  Tensor head_norm_bias;
  Tensor head_weight;  // [c4, classes]
  Tensor head_bias;    // [classes]
};

ModelParams build_model(const VariantSpec& spec, std::uint64_t seed);
std::size_t count_params(const ModelParams& params);
/// Same count without drawing initial values.
std::size_t count_params(const VariantSpec& spec);

/// Overlapping 7x7 stride-2 convolution, then a non-overlapping projection;
/// [b, H, W, 3] -> [b, H/4, W/4, c1].
Tensor patch_embed(Tape& tape, const Tensor& image, const ModelParams& params, const VariantSpec& spec);

/// Pre-norm residual block: y = x + FaSA(norm1(x)); out = y + MLP(norm2(y)).
Tensor block_forward(Tape& tape, const Tensor& x, const BlockParams& block, const FasaConfig& cfg,
                     std::vector<GroupTrace>* traces = nullptr);

/// Non-overlapping patch x patch convolution: halves extents (for patch 2).
Tensor downsample(Tape& tape, const Tensor& x, const Tensor& kernel);

struct BlockRef {
  std::size_t stage = 0;  // zero-based
  std::size_t block = 0;
};

struct ForwardResult {
  std::array<Tensor, kStages> pyramid;  // F_1 .. F_4
  Tensor logits;                        // [b, classes]
  std::vector<GroupTrace> traces;       // from the requested block, if any
};

ForwardResult favit_forward(Tape& tape, const Tensor& image, const ModelParams& params, const VariantSpec& spec,
                            std::optional<BlockRef> trace_block = std::nullopt);

struct StepStats {
  double loss = 0.0;
  double accuracy = 0.0;  // before the update
};

/// One plain gradient-descent step on mean cross-entropy.
StepStats sgd_step(ModelParams& params, const VariantSpec& spec, const Tensor& images,
                   std::span<const std::size_t> labels, double learning_rate);

}  // namespace favit
