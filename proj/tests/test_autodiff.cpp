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
#include <limits>
#include <random>
#include <vector>

#include "favit/checks.hpp"
#include "favit/error.hpp"
#include "favit/ops.hpp"
#include "favit/oracle.hpp"

namespace favit {
namespace {

Tensor random(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tensor t(std::move(s));
  checks::fill_normal(t, rng);
  return t;
}

TEST(Tape, InferenceRecordsNothing) {
  Tape tape(Tape::Mode::kInference);
  ops::add(tape, Tensor({2}), Tensor({2}));
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, BackwardNeedsScalarRecordedRoot) {
  Tape tape;
  Tensor a = random({3}, 1);
  Tensor s = ops::scale(tape, a, 2.0);
  EXPECT_THROW(tape.backward(s), ContractError);
  EXPECT_THROW(tape.backward(Tensor::scalar(1.0)), ContractError);
  tape.backward(ops::sum(tape, s));
  for (double g : a.grad()) EXPECT_EQ(g, 2.0);
}

TEST(Tape, GradientsAccumulateOverUses) {
  Tape tape;
  Tensor a = Tensor({2}, {1.0, 2.0});
  Tensor y = ops::mul(tape, a, a);  // a^2
  tape.backward(ops::sum(tape, ops::add(tape, y, a)));
  EXPECT_EQ(a.grad()[0], 3.0);
  EXPECT_EQ(a.grad()[1], 5.0);
}

TEST(Tape, ReshapeRoutesGradientToSource) {
  Tape tape;
  Tensor a = random({2, 3}, 2);
  Tensor r = ops::reshape(tape, a, {3, 2});
  tape.backward(ops::sum(tape, ops::scale(tape, r, -1.5)));
  for (double g : a.grad()) EXPECT_EQ(g, -1.5);
}

TEST(FiniteDifferences, MatmulChain) {
  Tensor a = random({3, 4}, 3), b = random({4, 5}, 4), w = random({2, 5}, 5);
  std::vector<Tensor> wrt{a, b, w};
  // Softmax rows sum to one, so weight the outputs unevenly.
  auto g = [&](Tape& tp) {
    Tensor y = ops::softmax_rows(tp, ops::matmul_nt(tp, ops::matmul(tp, a, b), w));
    return ops::sum(tp, ops::mul(tp, y, Tensor({3, 2}, {1, -2, 3, 0.5, -1, 2})));
  };
  const auto r = oracle::fd_check(g, wrt);
  EXPECT_TRUE(r.pass) << r.max_rel;
}

TEST(FiniteDifferences, ConvAndNorm) {
  Tensor x = random({1, 6, 6, 2}, 6), k = random({3, 3, 2, 3}, 7), gain = random({3}, 8), bias = random({3}, 9);
  std::vector<Tensor> wrt{x, k, gain, bias};
  auto f = [&](Tape& tp) {
    Tensor y = ops::layer_norm(tp, ops::conv2d(tp, x, k, 2, 1), gain, bias);
    return ops::sum(tp, ops::mul(tp, ops::gelu(tp, y), y));
  };
  const auto r = oracle::fd_check(f, wrt);
  EXPECT_TRUE(r.pass) << r.max_rel;
}

TEST(FiniteDifferences, CrossEntropy) {
  Tensor logits = random({4, 3}, 10);
  std::vector<Tensor> wrt{logits};
  const std::vector<std::size_t> labels{2, 0, 1, 1};
  const auto r = oracle::fd_check([&](Tape& tp) { return ops::cross_entropy(tp, logits, labels); }, wrt);
  EXPECT_TRUE(r.pass) << r.max_rel;
}

TEST(FiniteDifferences, RejectsNonFinite) {
  Tensor a = Tensor({1}, {1.0});
  std::vector<Tensor> wrt{a};
  auto f = [&](Tape& tp) { return ops::scale(tp, ops::sum(tp, a), std::numeric_limits<double>::infinity()); };
  EXPECT_THROW(oracle::fd_check(f, wrt), ContractError);
  EXPECT_THROW(oracle::fd_check(f, wrt, 0.0), ContractError);
}

TEST(PropertySuite, GradsScopePasses) {
  checks::CheckOptions opt;
  opt.trials = 5;
  for (const auto& r : checks::check_grads(opt)) EXPECT_TRUE(r.pass) << checks::format_line(r) << r.counterexample;
}

}  // namespace
}  // namespace favit
