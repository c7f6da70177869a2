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

#include "favit/fasa.hpp"

#include <cmath>

#include "favit/error.hpp"
#include "favit/ops.hpp"

namespace favit {

std::string_view fusion_name(Fusion fusion) { return fusion == Fusion::kMax ? "max" : "mean"; }

Fusion parse_fusion(std::string_view name) {
  if (name == "max") return Fusion::kMax;
  if (name == "mean") return Fusion::kMean;
  throw ConfigError("unknown fusion operator '" + std::string(name) + "' (expected max or mean)");
}

std::size_t FasaConfig::window_side(std::size_t group) const {
  return dilations.at(group) * (sample_side - 1) + 1;
}

void FasaConfig::validate() const {
  if (sample_side < 2) throw ConfigError("sample side M must be at least 2");
  if (dilations.empty()) throw ConfigError("at least one dilation rate is required");
  for (auto d : dilations) {
    if (d == 0) throw ConfigError("dilation rates must be >= 1");
  }
  if (channels == 0 || channels % groups() != 0) {
    throw ConfigError("channels " + std::to_string(channels) + " not divisible into " + std::to_string(groups()) +
                      " groups");
  }
  if (heads_per_group == 0 || group_channels() % heads_per_group != 0) {
    throw ConfigError("group channels " + std::to_string(group_channels()) + " not divisible into " +
                      std::to_string(heads_per_group) + " heads");
  }
}

std::size_t dilation_for(std::size_t window_side, std::size_t sample_side) {
  if (sample_side < 2 || window_side < sample_side || (window_side - 1) % (sample_side - 1) != 0) {
    throw ConfigError("window side " + std::to_string(window_side) + " cannot hold " + std::to_string(sample_side) +
                      " evenly spaced samples per axis");
  }
  return (window_side - 1) / (sample_side - 1);
}

FasaParams FasaParams::create(ParamStore& store, const std::string& prefix, const FasaConfig& cfg, Init init) {
  cfg.validate();
  const std::size_t cg = cfg.group_channels();
  FasaParams p;
  for (std::size_t g = 0; g < cfg.groups(); ++g) {
    const std::string group = prefix + ".group" + std::to_string(g);
    p.wq.push_back(store.add(group + ".wq", {cg, cg}, init));
    p.wk.push_back(store.add(group + ".wk", {cg, cg}, init));
    p.wv.push_back(store.add(group + ".wv", {cg, cg}, init));
  }
  p.wo = store.add(prefix + ".wo", {cfg.channels, cfg.channels}, init);
  return p;
}

GridOffset WindowPartition::origin(std::size_t j) const {
  if (j >= count()) throw IndexError("window " + std::to_string(j) + " of " + std::to_string(count()));
  return {(j / windows_across) * window_side, (j % windows_across) * window_side};
}

Tensor WindowPartition::window(std::size_t j) const {
  const auto o = origin(j);
  const std::size_t nb = padded.dim(0), cols = padded.dim(2), c = padded.dim(3);
  const std::size_t rows = padded.dim(1);
  Tensor out({nb, window_side, window_side, c});
  auto dst = out.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t r = 0; r < window_side; ++r)
      for (std::size_t col = 0; col < window_side; ++col)
        for (std::size_t k = 0; k < c; ++k)
          dst[((b * window_side + r) * window_side + col) * c + k] =
              padded[((b * rows + o.row + r) * cols + o.col + col) * c + k];
  return out;
}

std::vector<Tensor> split_groups(Tape& tape, const Tensor& x, const FasaConfig& cfg) {
  cfg.validate();
  if (x.rank() == 0 || x.shape().back() != cfg.channels) {
    throw ConfigError("split_groups: input " + to_string(x.shape()) + " does not have " +
                      std::to_string(cfg.channels) + " channels");
  }
  if (cfg.groups() == 1) return {x};
  std::vector<Tensor> parts;
  const std::size_t cg = cfg.group_channels();
  for (std::size_t g = 0; g < cfg.groups(); ++g) parts.push_back(ops::slice_channels(tape, x, g * cg, cg));
  return parts;
}

Tensor embed_queries(Tape& tape, const Tensor& group_map, const Tensor& wq) {
  if (group_map.rank() != 4) throw ConfigError("embed_queries: expected [b,h,w,c], got " + to_string(group_map.shape()));
  const std::size_t nb = group_map.dim(0), n = group_map.dim(1) * group_map.dim(2), c = group_map.dim(3);
  Tensor rows = ops::reshape(tape, group_map, {nb * n, c});
  return ops::reshape(tape, ops::matmul_nt(tape, rows, wq), {nb, n, wq.dim(0)});
}

WindowPartition partition_windows(Tape& tape, const Tensor& group_map, std::size_t window_side,
                                  std::size_t sample_side) {
  if (group_map.rank() != 4) {
    throw ConfigError("partition_windows: expected [b,h,w,c], got " + to_string(group_map.shape()));
  }
  if (window_side < sample_side) {
    throw ConfigError("window side " + std::to_string(window_side) + " smaller than sample side " +
                      std::to_string(sample_side));
  }
  WindowPartition part;
  part.window_side = window_side;
  part.windows_down = (group_map.dim(1) + window_side - 1) / window_side;
  part.windows_across = (group_map.dim(2) + window_side - 1) / window_side;
  part.padded =
      ops::pad_spatial(tape, group_map, part.windows_down * window_side, part.windows_across * window_side);
  return part;
}

IndexGrid dilated_grid(const WindowPartition& part, std::size_t window, std::size_t sample_side,
                       std::size_t dilation) {
  if (sample_side < 2 || dilation == 0 || dilation * (sample_side - 1) + 1 != part.window_side) {
    throw ConfigError("dilation mismatch: window side S=" + std::to_string(part.window_side) +
                      ", samples M=" + std::to_string(sample_side) + ", dilation D=" + std::to_string(dilation) +
                      " (need D*(M-1)+1 == S)");
  }
  return IndexGrid::dilated(part.padded.dim(1), part.padded.dim(2), part.origin(window), sample_side, dilation);
}

SampledWindows dilated_sample(Tape& tape, const WindowPartition& part, std::size_t sample_side,
                              std::size_t dilation) {
  SampledWindows s;
  s.grids.reserve(part.count());
  for (std::size_t j = 0; j < part.count(); ++j) s.grids.push_back(dilated_grid(part, j, sample_side, dilation));
  s.samples = ops::gather_windows(tape, part.padded, s.grids);
  return s;
}

std::pair<Tensor, Tensor> embed_keys_values(Tape& tape, const Tensor& samples, const Tensor& wk, const Tensor& wv) {
  if (samples.rank() < 2) throw ConfigError("embed_keys_values: bad samples " + to_string(samples.shape()));
  const std::size_t c = samples.shape().back();
  const std::size_t rows = samples.size() / c;
  Tensor flat = ops::reshape(tape, samples, {rows, c});
  Tensor k = ops::reshape(tape, ops::matmul_nt(tape, flat, wk), samples.shape());
  Tensor v = ops::reshape(tape, ops::matmul_nt(tape, flat, wv), samples.shape());
  return {k, v};
}

Tensor cross_window_fuse(Tape& tape, const Tensor& stack, Fusion fusion) {
  return fusion == Fusion::kMax ? ops::max_reduce_over_windows(tape, stack)
                                : ops::mean_reduce_over_windows(tape, stack);
}

Tensor group_attention(Tape& tape, const Tensor& queries, const Tensor& keys, const Tensor& values,
                       std::size_t heads, GroupTrace* trace) {
  if (queries.rank() != 3 || keys.rank() != 3 || values.shape() != keys.shape() || keys.dim(0) != queries.dim(0) ||
      keys.dim(2) != queries.dim(2)) {
    throw ConfigError("group_attention: incompatible q " + to_string(queries.shape()) + ", k " +
                      to_string(keys.shape()) + ", v " + to_string(values.shape()));
  }
  const std::size_t c = queries.dim(2);
  if (heads == 0 || c % heads != 0) {
    throw ConfigError("group_attention: " + std::to_string(c) + " channels not divisible into " +
                      std::to_string(heads) + " heads");
  }
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(c / heads));
  Tensor qh = ops::split_heads(tape, queries, heads);
  Tensor kh = ops::split_heads(tape, keys, heads);
  Tensor vh = ops::split_heads(tape, values, heads);
  Tensor attn = ops::softmax_rows(tape, ops::scale(tape, ops::batched_matmul_nt(tape, qh, kh), inv_scale));
  Tensor out = ops::merge_heads(tape, ops::batched_matmul(tape, attn, vh), heads);

  if (trace) {
    const std::size_t nb = queries.dim(0), n = queries.dim(1), p = keys.dim(1);
    trace->head_attention = attn;
    trace->attention = Tensor({nb, n, p});
    auto avg = trace->attention.data();
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t i = 0; i < n * p; ++i) avg[b * n * p + i] += attn[(b * heads + h) * n * p + i];
    for (double& v : avg) v /= static_cast<double>(heads);
  }
  return out;
}

Tensor merge_groups(Tape& tape, std::span<const Tensor> outputs, const Tensor& wo, std::size_t height,
                    std::size_t width) {
  if (outputs.empty()) throw ConfigError("merge_groups: no group outputs");
  for (const auto& o : outputs) {
    if (o.rank() != 3 || o.dim(0) != outputs.front().dim(0) || o.dim(1) != outputs.front().dim(1)) {
      throw ConfigError("merge_groups: ragged group outputs " + to_string(outputs.front().shape()) + " vs " +
                        to_string(o.shape()));
    }
  }
  const std::size_t nb = outputs.front().dim(0), n = outputs.front().dim(1);
  if (n != height * width) {
    throw ConfigError("merge_groups: " + std::to_string(n) + " rows cannot form a " + std::to_string(height) + "x" +
                      std::to_string(width) + " map");
  }
  Tensor cat = outputs.size() == 1 ? outputs.front() : ops::concat_channels(tape, outputs);
  const std::size_t c = cat.dim(2);
  Tensor projected = ops::matmul_nt(tape, ops::reshape(tape, cat, {nb * n, c}), wo);
  return ops::reshape(tape, projected, {nb, height, width, wo.dim(0)});
}

FasaResult fasa_forward(Tape& tape, const Tensor& x, const FasaConfig& cfg, const FasaParams& params, bool trace) {
  cfg.validate();
  if (x.rank() != 4 || x.dim(3) != cfg.channels) {
    throw ConfigError("fasa_forward: input " + to_string(x.shape()) + " does not match " +
                      std::to_string(cfg.channels) + " channels");
  }
  if (params.wq.size() != cfg.groups() || params.wk.size() != cfg.groups() || params.wv.size() != cfg.groups()) {
    throw ConfigError("fasa_forward: parameters built for a different group count");
  }
  const std::size_t height = x.dim(1), width = x.dim(2);
  const std::size_t m = cfg.sample_side;

  FasaResult result;
  const auto groups = split_groups(tape, x, cfg);
  for (std::size_t g = 0; g < cfg.groups(); ++g) {
    const std::size_t side = cfg.window_side(g);
    Tensor q = embed_queries(tape, groups[g], params.wq[g]);
    WindowPartition part = partition_windows(tape, groups[g], side, m);
    SampledWindows sampled = dilated_sample(tape, part, m, cfg.dilations[g]);
    auto [kw, vw] = embed_keys_values(tape, sampled.samples, params.wk[g], params.wv[g]);
    Tensor k = cross_window_fuse(tape, kw, cfg.fusion);
    Tensor v = cross_window_fuse(tape, vw, cfg.fusion);

    GroupTrace* tr = nullptr;
    if (trace) {
      result.traces.emplace_back();
      tr = &result.traces.back();
      tr->group = g;
      tr->window_side = side;
      tr->dilation = cfg.dilations[g];
      tr->windows_down = part.windows_down;
      tr->windows_across = part.windows_across;
      tr->map_rows = height;
      tr->map_cols = width;
      tr->grids = sampled.grids;
      tr->window_keys = kw;
      tr->keys = k;
      tr->values = v;
    }
    result.group_outputs.push_back(group_attention(tape, q, k, v, cfg.heads_per_group, tr));
  }
  result.output = merge_groups(tape, result.group_outputs, params.wo, height, width);
  return result;
}

}  // namespace favit
