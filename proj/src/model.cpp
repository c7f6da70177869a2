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

#include "favit/model.hpp"

#include <algorithm>

#include "favit/error.hpp"
#include "favit/ops.hpp"

namespace favit {

namespace {

StageSpec stage(std::size_t patch, std::size_t channels, std::size_t heads, std::size_t ratio, std::size_t blocks,
                std::vector<std::size_t> dilations) {
  return StageSpec{patch, channels, heads, ratio, blocks, std::move(dilations)};
}

}  // namespace

void VariantSpec::validate() const {
  if (stages[0].patch_size < 2 || stages[0].patch_size % 2 != 0) {
    throw ConfigError("stage 1 patch size must be an even number >= 2");
  }
  if (num_classes == 0) throw ConfigError("class count must be positive");
  for (std::size_t s = 0; s < kStages; ++s) {
    const auto& st = stages[s];
    if (st.blocks == 0 || st.mlp_ratio == 0) throw ConfigError("stage " + std::to_string(s + 1) + ": empty stage");
    if (s > 0 && st.patch_size == 0) throw ConfigError("stage " + std::to_string(s + 1) + ": zero patch size");
    stage_fasa_config(*this, s).validate();
  }
}

VariantSpec load_variant(std::string_view name) {
  VariantSpec v;
  v.name = std::string(name);
  if (name == "B0") {
    v.stages = {stage(4, 32, 1, 8, 2, {1, 8}), stage(2, 64, 2, 6, 2, {1, 4}), stage(2, 128, 4, 4, 6, {1, 2}),
                stage(2, 256, 8, 4, 2, {1})};
  } else if (name == "B1") {
    v.stages = {stage(4, 64, 1, 8, 2, {1, 8}), stage(2, 128, 2, 6, 2, {1, 4}), stage(2, 256, 4, 4, 6, {1, 2}),
                stage(2, 512, 8, 4, 2, {1})};
  } else if (name == "B2") {
    v.stages = {stage(4, 64, 1, 8, 2, {1, 8}), stage(2, 128, 2, 6, 3, {1, 4}), stage(2, 256, 4, 4, 18, {1, 2}),
                stage(2, 512, 8, 4, 3, {1})};
  } else if (name == "B3") {
    v.stages = {stage(4, 96, 1, 8, 2, {1, 8}), stage(2, 192, 2, 6, 3, {1, 4}), stage(2, 384, 4, 4, 14, {1, 2}),
                stage(2, 768, 8, 4, 3, {1})};
  } else {
    throw ConfigError("unknown variant '" + std::string(name) + "' (expected B0, B1, B2 or B3)");
  }
  return v;
}

std::vector<std::string> variant_names() { return {"B0", "B1", "B2", "B3"}; }

FasaConfig stage_fasa_config(const VariantSpec& spec, std::size_t s) {
  const auto& st = spec.stages.at(s);
  FasaConfig cfg;
  cfg.channels = st.channels;
  cfg.dilations = st.dilations;
  cfg.heads_per_group = st.heads;
  cfg.sample_side = spec.sample_side;
  cfg.fusion = spec.fusion;
  return cfg;
}

BlockParams BlockParams::create(ParamStore& store, const std::string& prefix, const FasaConfig& cfg,
                                std::size_t mlp_ratio) {
  const std::size_t c = cfg.channels;
  BlockParams b;
  b.norm1_gain = store.add(prefix + ".norm1.gain", {c}, Init::kOnes);
  b.norm1_bias = store.add(prefix + ".norm1.bias", {c}, Init::kZeros);
  b.attn = FasaParams::create(store, prefix + ".attn", cfg);
  b.norm2_gain = store.add(prefix + ".norm2.gain", {c}, Init::kOnes);
  b.norm2_bias = store.add(prefix + ".norm2.bias", {c}, Init::kZeros);
  b.mlp_expand = store.add(prefix + ".mlp.expand", {c, mlp_ratio * c}, Init::kTruncatedNormal);
  b.mlp_contract = store.add(prefix + ".mlp.contract", {mlp_ratio * c, c}, Init::kTruncatedNormal);
  return b;
}

namespace {

ModelParams build_into(const VariantSpec& spec, ParamStore store) {
  spec.validate();
  ModelParams m{std::move(store), {}, {}, {}, {}, {}, {}, {}, {}};
  const std::size_t c1 = spec.stages[0].channels;
  const std::size_t proj = spec.stages[0].patch_size / 2;
  m.stem_kernel = m.store.add("patch_embed.stem", {7, 7, 3, c1}, Init::kTruncatedNormal);
  m.projection_kernel = m.store.add("patch_embed.projection", {proj, proj, c1, c1}, Init::kTruncatedNormal);
  for (std::size_t s = 0; s < kStages; ++s) {
    const auto cfg = stage_fasa_config(spec, s);
    for (std::size_t b = 0; b < spec.stages[s].blocks; ++b) {
      const std::string prefix = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
      m.blocks[s].push_back(BlockParams::create(m.store, prefix, cfg, spec.stages[s].mlp_ratio));
    }
    if (s + 1 < kStages) {
      const std::size_t p = spec.stages[s + 1].patch_size;
      m.downsample_kernels[s] =
          m.store.add("downsample" + std::to_string(s + 1), {p, p, spec.stages[s].channels, spec.stages[s + 1].channels},
                      Init::kTruncatedNormal);
    }
  }
  const std::size_t c4 = spec.stages[kStages - 1].channels;
  m.head_norm_gain = m.store.add("head.norm.gain", {c4}, Init::kOnes);
  m.head_norm_bias = m.store.add("head.norm.bias", {c4}, Init::kZeros);
  m.head_weight = m.store.add("head.weight", {c4, spec.num_classes}, Init::kTruncatedNormal);
  m.head_bias = m.store.add("head.bias", {spec.num_classes}, Init::kZeros);
  return m;
}

}  // namespace

ModelParams build_model(const VariantSpec& spec, std::uint64_t seed) { return build_into(spec, ParamStore(seed)); }

std::size_t count_params(const ModelParams& params) { return params.store.count_elements(); }

std::size_t count_params(const VariantSpec& spec) {
  return count_params(build_into(spec, ParamStore::shapes_only()));
}

Tensor patch_embed(Tape& tape, const Tensor& image, const ModelParams& params, const VariantSpec& spec) {
  if (image.rank() != 4 || image.dim(3) != 3) {
    throw ConfigError("patch_embed: expected [b, H, W, 3], got " + to_string(image.shape()));
  }
  const std::size_t patch = spec.stages[0].patch_size;
  if (image.dim(1) % patch != 0 || image.dim(2) % patch != 0) {
    throw ConfigError("patch_embed: image extents " + to_string(image.shape()) + " not divisible by " +
                      std::to_string(patch));
  }
  Tensor stem = ops::conv2d(tape, image, params.stem_kernel, 2, 3);
  return ops::conv2d(tape, stem, params.projection_kernel, patch / 2, 0);
}

Tensor block_forward(Tape& tape, const Tensor& x, const BlockParams& block, const FasaConfig& cfg,
                     std::vector<GroupTrace>* traces) {
  if (x.rank() != 4 || x.dim(3) != cfg.channels) {
    throw ConfigError("block_forward: input " + to_string(x.shape()) + " vs " + std::to_string(cfg.channels) +
                      " channels");
  }
  auto attended = fasa_forward(tape, ops::layer_norm(tape, x, block.norm1_gain, block.norm1_bias), cfg, block.attn,
                               traces != nullptr);
  if (traces) *traces = std::move(attended.traces);
  Tensor y = ops::add(tape, x, attended.output);

  const std::size_t c = cfg.channels, rows = y.size() / c;
  Tensor h = ops::reshape(tape, ops::layer_norm(tape, y, block.norm2_gain, block.norm2_bias), {rows, c});
  h = ops::gelu(tape, ops::matmul(tape, h, block.mlp_expand));
  h = ops::matmul(tape, h, block.mlp_contract);
  return ops::add(tape, y, ops::reshape(tape, h, y.shape()));
}

Tensor downsample(Tape& tape, const Tensor& x, const Tensor& kernel) {
  if (x.rank() != 4) throw ConfigError("downsample: expected [b,h,w,c], got " + to_string(x.shape()));
  const std::size_t p = kernel.dim(0);
  if (x.dim(1) % p != 0 || x.dim(2) % p != 0) {
    throw ConfigError("downsample: extents " + to_string(x.shape()) + " not divisible by " + std::to_string(p));
  }
  return ops::conv2d(tape, x, kernel, p, 0);
}

ForwardResult favit_forward(Tape& tape, const Tensor& image, const ModelParams& params, const VariantSpec& spec,
                            std::optional<BlockRef> trace_block) {
  std::size_t reduction = spec.stages[0].patch_size;
  for (std::size_t s = 1; s < kStages; ++s) reduction *= spec.stages[s].patch_size;
  if (image.rank() != 4 || image.dim(1) % reduction != 0 || image.dim(2) % reduction != 0) {
    throw ConfigError("favit_forward: image " + to_string(image.shape()) + " extents must be divisible by " +
                      std::to_string(reduction));
  }
  ForwardResult result;
  Tensor x = patch_embed(tape, image, params, spec);
  for (std::size_t s = 0; s < kStages; ++s) {
    if (s > 0) x = downsample(tape, x, params.downsample_kernels[s - 1]);
    const auto cfg = stage_fasa_config(spec, s);
    for (std::size_t b = 0; b < params.blocks[s].size(); ++b) {
      const bool want = trace_block && trace_block->stage == s && trace_block->block == b;
      x = block_forward(tape, x, params.blocks[s][b], cfg, want ? &result.traces : nullptr);
    }
    result.pyramid[s] = x;
  }
  Tensor normed = ops::layer_norm(tape, x, params.head_norm_gain, params.head_norm_bias);
  Tensor pooled = ops::global_avg_pool(tape, normed);
  result.logits = ops::add_bias(tape, ops::matmul(tape, pooled, params.head_weight), params.head_bias);
  return result;
}

StepStats sgd_step(ModelParams& params, const VariantSpec& spec, const Tensor& images,
                   std::span<const std::size_t> labels, double learning_rate) {
  Tape tape;
  params.store.zero_grad();
  auto fwd = favit_forward(tape, images, params, spec);
  Tensor loss = ops::cross_entropy(tape, fwd.logits, labels);

  StepStats stats;
  stats.loss = loss.item();
  const std::size_t k = fwd.logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    const double* row = fwd.logits.data().data() + b * k;
    if (static_cast<std::size_t>(std::max_element(row, row + k) - row) == labels[b]) ++correct;
  }
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());

  tape.backward(loss);
  for (auto& [name, t] : params.store.entries()) {
    if (!t.has_grad()) continue;
    Tensor p = t;
    auto g = p.grad();
    auto d = p.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] -= learning_rate * g[i];
  }
  return stats;
}

}  // namespace favit
