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

#include "favit/error.hpp"
#include "favit/tensor.hpp"

namespace favit {
namespace {

TEST(Tensor, ZeroFilledOnConstruction) {
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, RejectsZeroExtentAndMismatchedValues) {
  EXPECT_THROW(Tensor({2, 0}), ConfigError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0}), ConfigError);
}

TEST(Tensor, DimOutOfRange) {
  Tensor t({4});
  EXPECT_EQ(t.dim(0), 4u);
  EXPECT_THROW(t.dim(1), IndexError);
}

TEST(Tensor, ItemNeedsOneElement) {
  EXPECT_EQ(Tensor::scalar(2.5).item(), 2.5);
  EXPECT_THROW(Tensor({2}).item(), ContractError);
}

TEST(Tensor, CopiesShareNodeCloneDoesNot) {
  Tensor a = Tensor::full({3}, 1.0);
  Tensor b = a;
  Tensor c = a.clone();
  b.data()[0] = 7.0;
  EXPECT_EQ(a[0], 7.0);
  EXPECT_EQ(c[0], 1.0);
  EXPECT_TRUE(a.same_node(b));
  EXPECT_FALSE(a.same_node(c));
}

TEST(Tensor, ViewSharesStorageUnderNewShape) {
  Tensor a({2, 3}, {0, 1, 2, 3, 4, 5});
  Tensor v = a.view({3, 2});
  EXPECT_EQ(v.shape(), (Shape{3, 2}));
  v.data()[5] = -1.0;
  EXPECT_EQ(a[5], -1.0);
  EXPECT_FALSE(a.same_node(v));
  EXPECT_THROW(a.view({4, 2}), ConfigError);
}

TEST(Tensor, GradientAllocatedLazily) {
  Tensor a({2});
  EXPECT_FALSE(a.has_grad());
  a.mutable_grad()[1] = 3.0;
  EXPECT_TRUE(a.has_grad());
  EXPECT_EQ(a.grad()[0], 0.0);
  EXPECT_EQ(a.grad()[1], 3.0);
  a.zero_grad();
  EXPECT_FALSE(a.has_grad());
}

TEST(IndexGrid, DilatedOffsets) {
  IndexGrid g = IndexGrid::dilated(12, 12, {1, 2}, 3, 4);
  ASSERT_EQ(g.size(), 9u);
  EXPECT_EQ(g.offsets()[0], (GridOffset{1, 2}));
  EXPECT_EQ(g.offsets()[1], (GridOffset{1, 6}));
  EXPECT_EQ(g.offsets()[8], (GridOffset{9, 10}));
}

TEST(IndexGrid, ValidatesBoundsAndOrder) {
  EXPECT_THROW(IndexGrid(3, 3, {{0, 3}}), IndexError);
  EXPECT_THROW(IndexGrid(3, 3, {{1, 1}, {0, 2}}), ConfigError);
  EXPECT_THROW(IndexGrid(3, 3, {{1, 1}, {1, 1}}), ConfigError);
  EXPECT_NO_THROW(IndexGrid(3, 3, {{0, 2}, {1, 0}}));
  EXPECT_EQ(IndexGrid::full(2, 3).size(), 6u);
}

}  // namespace
}  // namespace favit
