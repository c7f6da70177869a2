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
#include <vector>

#include "favit/error.hpp"
#include "favit/ops.hpp"

namespace favit {
namespace {

Tensor iota(Shape s, double start = 0.0, double step = 1.0) {
  Tensor t(std::move(s));
  for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = start + step * static_cast<double>(i);
  return t;
}

TEST(Ops, MatmulValuesAndMacs) {
  Tape tape(Tape::Mode::kInference);
  tape.enable_instrumentation();
  Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor b({3, 2}, {7, 8, 9, 10, 11, 12});
  Tensor c = ops::matmul(tape, a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 2}));
  EXPECT_EQ(c[0], 58);
  EXPECT_EQ(c[1], 64);
  EXPECT_EQ(c[2], 139);
  EXPECT_EQ(c[3], 154);
  EXPECT_EQ(tape.macs(), 12u);
  EXPECT_THROW(ops::matmul(tape, a, a), ConfigError);
}

TEST(Ops, MatmulNtUsesTransposedRight) {
  Tape tape(Tape::Mode::kInference);
  Tensor a({1, 2}, {1, 2});
  Tensor w({3, 2}, {1, 0, 0, 1, 1, 1});
  Tensor y = ops::matmul_nt(tape, a, w);
  EXPECT_EQ(y.shape(), (Shape{1, 3}));
  EXPECT_EQ(y[0], 1);
  EXPECT_EQ(y[1], 2);
  EXPECT_EQ(y[2], 3);
}

TEST(Ops, LargeMatmulMatchesNaive) {
  Tape tape(Tape::Mode::kInference);
  const std::size_t m = 13, k = 37, n = 601;
  Tensor a = iota({m, k}, -3.0, 0.01), b = iota({k, n}, 1.0, -0.003);
  Tensor c = ops::matmul(tape, a, b);
  for (std::size_t i = 0; i < m; i += 4)
    for (std::size_t j = 0; j < n; j += 37) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      EXPECT_NEAR(c[i * n + j], s, 1e-9);
    }
}

TEST(Ops, MacsUnavailableWithoutInstrumentation) {
  Tape tape;
  EXPECT_FALSE(tape.instrumented());
  EXPECT_THROW(tape.macs(), ContractError);
}

TEST(Ops, SoftmaxRowsSumToOne) {
  Tape tape(Tape::Mode::kInference);
  Tensor x({2, 3}, {1000, 1001, 1002, -5, 0, 5});
  Tensor y = ops::softmax_rows(tape, x);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 3; ++j) s += y[r * 3 + j];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  EXPECT_NEAR(y[2] / y[1], std::exp(1.0), 1e-12);
}

TEST(Ops, MaxFusionPicksLargestPerEntry) {
  Tape tape(Tape::Mode::kInference);
  // [b=1, w=3, p=1, c=2]
  Tensor s({1, 3, 1, 2}, {1, 5, 4, 2, 3, 6});
  Tensor y = ops::max_reduce_over_windows(tape, s);
  EXPECT_EQ(y.shape(), (Shape{1, 1, 2}));
  EXPECT_EQ(y[0], 4);
  EXPECT_EQ(y[1], 6);
  Tensor m = ops::mean_reduce_over_windows(tape, s);
  EXPECT_DOUBLE_EQ(m[0], 8.0 / 3.0);
  EXPECT_DOUBLE_EQ(m[1], 13.0 / 3.0);
}

TEST(Ops, MaxFusionGradientGoesToFirstMax) {
  Tape tape;
  Tensor s({1, 2, 1, 1}, {3, 3});
  tape.backward(ops::sum(tape, ops::max_reduce_over_windows(tape, s)));
  EXPECT_EQ(s.grad()[0], 1.0);
  EXPECT_EQ(s.grad()[1], 0.0);
}

TEST(Ops, FusionRejectsEmptyStacks) {
  Tape tape(Tape::Mode::kInference);
  EXPECT_THROW(ops::max_reduce_over_windows(tape, Tensor({2, 2})), ConfigError);
}

TEST(Ops, Conv2dShapeAndValue) {
  Tape tape(Tape::Mode::kInference);
  tape.enable_instrumentation();
  Tensor x = Tensor::full({1, 5, 5, 2}, 1.0);
  Tensor k = Tensor::full({3, 3, 2, 4}, 0.5);
  Tensor y = ops::conv2d(tape, x, k, 2, 1);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 3, 4}));
  // Corner sees a 2x2 patch of ones over two channels.
  EXPECT_DOUBLE_EQ(y[0], 4.0);
  // Centre sees the full 3x3 patch.
  EXPECT_DOUBLE_EQ(y[(1 * 3 + 1) * 4], 9.0);
  EXPECT_EQ(tape.macs(), 9u * 9u * 2u * 4u);
  EXPECT_THROW(ops::conv2d(tape, Tensor({1, 2, 2, 2}), Tensor({5, 5, 2, 1}), 1, 0), ConfigError);
}

TEST(Ops, LayerNormNormalizesLastAxis) {
  Tape tape(Tape::Mode::kInference);
  Tensor x({2, 4}, {1, 2, 3, 4, -10, 0, 10, 20});
  Tensor y = ops::layer_norm(tape, x, Tensor::full({4}, 1.0), Tensor({4}));
  for (std::size_t r = 0; r < 2; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < 4; ++j) mean += y[r * 4 + j] / 4.0;
    for (std::size_t j = 0; j < 4; ++j) var += (y[r * 4 + j] - mean) * (y[r * 4 + j] - mean) / 4.0;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(var, 1.0, 1e-5);
  }
}

TEST(Ops, GeluReferencePoints) {
  Tape tape(Tape::Mode::kInference);
  Tensor y = ops::gelu(tape, Tensor({3}, {0.0, 1.0, -1.0}));
  EXPECT_EQ(y[0], 0.0);
  EXPECT_NEAR(y[1], 0.8413447460685429, 1e-15);
  EXPECT_NEAR(y[2], -0.15865525393145707, 1e-15);
}

TEST(Ops, PadSpatialAddsZerosBottomRight) {
  Tape tape(Tape::Mode::kInference);
  Tensor x = Tensor::full({1, 2, 2, 1}, 1.0);
  Tensor y = ops::pad_spatial(tape, x, 3, 4);
  EXPECT_EQ(y.shape(), (Shape{1, 3, 4, 1}));
  double total = 0.0;
  for (double v : y.data()) total += v;
  EXPECT_EQ(total, 4.0);
  EXPECT_EQ(y[1], 1.0);
  EXPECT_EQ(y[2], 0.0);
}

TEST(Ops, GatherWindowsChecksGrids) {
  Tape tape(Tape::Mode::kInference);
  Tensor x = iota({1, 4, 4, 1});
  std::vector<IndexGrid> grids{IndexGrid::dilated(4, 4, {0, 0}, 2, 2), IndexGrid::dilated(4, 4, {1, 1}, 2, 2)};
  Tensor y = ops::gather_windows(tape, x, grids);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 4, 1}));
  EXPECT_EQ(y[0], 0);
  EXPECT_EQ(y[3], 10);
  EXPECT_EQ(y[4], 5);
  std::vector<IndexGrid> wrong{IndexGrid::full(3, 3)};
  EXPECT_THROW(ops::gather_windows(tape, x, wrong), IndexError);
  std::vector<IndexGrid> ragged{IndexGrid::full(4, 4), IndexGrid::dilated(4, 4, {0, 0}, 2, 1)};
  EXPECT_THROW(ops::gather_windows(tape, x, ragged), ConfigError);
}

TEST(Ops, HeadsRoundTrip) {
  Tape tape(Tape::Mode::kInference);
  Tensor x = iota({2, 3, 4});
  Tensor h = ops::split_heads(tape, x, 2);
  EXPECT_EQ(h.shape(), (Shape{4, 3, 2}));
  EXPECT_EQ(h[(1 * 3 + 0) * 2 + 0], 2);  // batch 0, head 1, token 0
  Tensor back = ops::merge_heads(tape, h, 2);
  EXPECT_EQ(back.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(back[i], x[i]);
}

TEST(Ops, CrossEntropyOfUniformLogits) {
  Tape tape(Tape::Mode::kInference);
  const std::vector<std::size_t> labels{0, 2};
  Tensor loss = ops::cross_entropy(tape, Tensor({2, 4}), labels);
  EXPECT_NEAR(loss.item(), std::log(4.0), 1e-15);
  const std::vector<std::size_t> bad{0, 4};
  EXPECT_THROW(ops::cross_entropy(tape, Tensor({2, 4}), bad), IndexError);
}

TEST(Ops, GlobalAvgPool) {
  Tape tape(Tape::Mode::kInference);
  Tensor y = ops::global_avg_pool(tape, iota({1, 2, 2, 2}));
  EXPECT_EQ(y.shape(), (Shape{1, 2}));
  EXPECT_DOUBLE_EQ(y[0], 3.0);
  EXPECT_DOUBLE_EQ(y[1], 4.0);
}

TEST(Ops, SliceAndConcatChannels) {
  Tape tape(Tape::Mode::kInference);
  Tensor x = iota({1, 1, 2, 4});
  Tensor a = ops::slice_channels(tape, x, 0, 1), b = ops::slice_channels(tape, x, 1, 3);
  EXPECT_EQ(b.shape(), (Shape{1, 1, 2, 3}));
  EXPECT_EQ(b[3], 5);
  std::vector<Tensor> parts{a, b};
  Tensor c = ops::concat_channels(tape, parts);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(c[i], x[i]);
  EXPECT_THROW(ops::slice_channels(tape, x, 3, 2), ConfigError);
}

}  // namespace
}  // namespace favit
