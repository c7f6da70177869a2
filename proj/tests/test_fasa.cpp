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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "favit/checks.hpp"
#include "favit/error.hpp"
#include "favit/fasa.hpp"
#include "favit/ops.hpp"

namespace favit {
namespace {

FasaConfig stage_one_b0() {
  FasaConfig cfg;
  cfg.channels = 32;
  cfg.dilations = {1, 8};
  return cfg;
}

TEST(FasaConfig, WindowSidesFromDilations) {
  const auto cfg = stage_one_b0();
  EXPECT_EQ(cfg.groups(), 2u);
  EXPECT_EQ(cfg.group_channels(), 16u);
  EXPECT_EQ(cfg.window_side(0), 7u);
  EXPECT_EQ(cfg.window_side(1), 49u);
  EXPECT_EQ(cfg.keys_per_group(), 49u);
}

TEST(FasaConfig, Validation) {
  FasaConfig cfg = stage_one_b0();
  cfg.channels = 33;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = stage_one_b0();
  cfg.dilations = {1, 0};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = stage_one_b0();
  cfg.heads_per_group = 3;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = stage_one_b0();
  cfg.dilations.clear();
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(FasaConfig, DilationInversion) {
  EXPECT_EQ(dilation_for(49, 7), 8u);
  EXPECT_EQ(dilation_for(13, 7), 2u);
  EXPECT_THROW(dilation_for(10, 7), ConfigError);
}

TEST(FasaConfig, ParseFusion) {
  EXPECT_EQ(parse_fusion("max"), Fusion::kMax);
  EXPECT_EQ(parse_fusion("mean"), Fusion::kMean);
  EXPECT_THROW(parse_fusion("sum"), ConfigError);
}

TEST(Fasa, PartitionPadsToWholeWindows) {
  Tape tape(Tape::Mode::kInference);
  Tensor x = Tensor::full({1, 56, 56, 16}, 1.0);
  WindowPartition part = partition_windows(tape, x, 49, 7);
  EXPECT_EQ(part.windows_down, 2u);
  EXPECT_EQ(part.windows_across, 2u);
  EXPECT_EQ(part.padded.shape(), (Shape{1, 98, 98, 16}));
  EXPECT_EQ(part.origin(3), (GridOffset{49, 49}));
  EXPECT_THROW(partition_windows(tape, x, 5, 7), ConfigError);
}

TEST(Fasa, DilatedGridSpansTheWindow) {
  Tape tape(Tape::Mode::kInference);
  WindowPartition part = partition_windows(tape, Tensor({1, 56, 56, 1}), 49, 7);
  IndexGrid g = dilated_grid(part, 1, 7, 8);
  EXPECT_EQ(g.size(), 49u);
  EXPECT_EQ(g.offsets().front(), (GridOffset{0, 49}));
  EXPECT_EQ(g.offsets().back(), (GridOffset{48, 97}));
  EXPECT_THROW(dilated_grid(part, 0, 7, 7), ConfigError);
}

TEST(Fasa, KeysPerGroupIndependentOfWindowSide) {
  std::mt19937_64 rng(5);
  const auto cfg = stage_one_b0();
  ParamStore store(1);
  FasaParams p = FasaParams::create(store, "attn", cfg);
  Tensor x({1, 56, 56, 32});
  checks::fill_normal(x, rng);
  Tape tape(Tape::Mode::kInference);
  FasaResult r = fasa_forward(tape, x, cfg, p, true);
  ASSERT_EQ(r.traces.size(), 2u);
  EXPECT_EQ(r.traces[0].grids.size(), 64u);  // 8 x 8 windows of side 7
  EXPECT_EQ(r.traces[1].grids.size(), 4u);   // 2 x 2 windows of side 49
  for (const auto& tr : r.traces) {
    EXPECT_EQ(tr.keys.shape(), (Shape{1, 49, 16}));
    EXPECT_EQ(tr.attention.shape(), (Shape{1, 56 * 56, 49}));
  }
  EXPECT_EQ(r.output.shape(), x.shape());
}

TEST(Fasa, LongRangeGroupSamplesFarApart) {
  Tape tape(Tape::Mode::kInference);
  WindowPartition part = partition_windows(tape, Tensor({1, 56, 56, 1}), 49, 7);
  SampledWindows s = dilated_sample(tape, part, 7, 8);
  std::set<std::size_t> rows;
  for (const auto& g : s.grids)
    for (auto o : g.offsets()) rows.insert(o.row);
  // Rows 0, 8, ..., 48 in the first window row and 49, 57, ... in the second.
  EXPECT_EQ(rows.size(), 14u);
  EXPECT_EQ(*rows.rbegin(), 97u);
}

TEST(Fasa, SingleWindowEqualsDenseAttention) {
  std::mt19937_64 rng(9);
  FasaConfig cfg;
  cfg.channels = 6;
  cfg.sample_side = 5;
  ParamStore store(2);
  FasaParams p = FasaParams::create(store, "attn", cfg);
  for (auto* w : {&p.wq[0], &p.wk[0], &p.wv[0], &p.wo}) checks::fill_normal(*w, rng, 0.5);
  Tensor x({1, 5, 5, 6});
  checks::fill_normal(x, rng);
  Tape tape(Tape::Mode::kInference);
  Tensor got = fasa_forward(tape, x, cfg, p).output;
  // Dense attention through the kernel ops.
  Tensor flat = x.view({25, 6});
  Tensor q = ops::matmul_nt(tape, flat, p.wq[0]), k = ops::matmul_nt(tape, flat, p.wk[0]),
         v = ops::matmul_nt(tape, flat, p.wv[0]);
  Tensor a = ops::softmax_rows(tape, ops::scale(tape, ops::matmul_nt(tape, q, k), 1.0 / std::sqrt(6.0)));
  Tensor want = ops::matmul_nt(tape, ops::matmul(tape, a, v), p.wo);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Fasa, RejectsWrongChannels) {
  const auto cfg = stage_one_b0();
  ParamStore store(1);
  FasaParams p = FasaParams::create(store, "attn", cfg);
  Tape tape(Tape::Mode::kInference);
  EXPECT_THROW(fasa_forward(tape, Tensor({1, 8, 8, 16}), cfg, p), ConfigError);
}

TEST(Fasa, MergeRejectsRaggedGroups) {
  Tape tape(Tape::Mode::kInference);
  std::vector<Tensor> parts{Tensor({1, 4, 2}), Tensor({1, 3, 2})};
  EXPECT_THROW(merge_groups(tape, parts, Tensor({4, 4}), 2, 2), ConfigError);
}

TEST(PropertySuite, FasaScopePasses) {
  checks::CheckOptions opt;
  opt.trials = 20;
  for (const auto& r : checks::check_fasa(opt)) EXPECT_TRUE(r.pass) << checks::format_line(r) << r.counterexample;
}

}  // namespace
}  // namespace favit
