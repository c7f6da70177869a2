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

#include "favit/checks.hpp"
#include "favit/error.hpp"
#include "favit/model.hpp"
#include "favit/ops.hpp"

namespace favit {
namespace {

TEST(Variants, TableValues) {
  const auto b0 = load_variant("B0");
  EXPECT_EQ(b0.stages[0].channels, 32u);
  EXPECT_EQ(b0.stages[0].mlp_ratio, 8u);
  EXPECT_EQ(b0.stages[0].dilations, (std::vector<std::size_t>{1, 8}));
  EXPECT_EQ(b0.stages[2].blocks, 6u);
  const auto b3 = load_variant("B3");
  EXPECT_EQ(b3.stages[2].blocks, 14u);
  EXPECT_EQ(b3.stages[3].channels, 768u);
  EXPECT_EQ(load_variant("B2").stages[2].blocks, 18u);
  EXPECT_THROW(load_variant("BX"), ConfigError);
}

TEST(Variants, JsonRoundTrip) {
  for (const auto& name : variant_names()) {
    const auto spec = load_variant(name);
    EXPECT_EQ(variant_from_json_text(variant_to_json_text(spec)), spec);
  }
}

TEST(Variants, JsonErrors) {
  EXPECT_THROW(variant_from_json_text("{"), FormatError);
  EXPECT_THROW(variant_from_json_text("{\"name\": \"x\"}"), FormatError);
  auto text = variant_to_json_text(load_variant("B0"));
  const auto pos = text.find("\"channels\": 32");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 14, "\"channels\": 33");
  EXPECT_THROW(variant_from_json_text(text), ConfigError);
}

TEST(Model, ParameterCountsNearTable) {
  const double table[] = {3e6, 13e6, 24e6, 48e6};
  const auto names = variant_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const double n = static_cast<double>(count_params(load_variant(names[i])));
    EXPECT_LT(std::abs(n - table[i]) / table[i], 0.15) << names[i] << " " << n;
  }
}

TEST(Model, ShapeOnlyCountMatchesBuiltModel) {
  const auto spec = load_variant("B0");
  EXPECT_EQ(count_params(spec), count_params(build_model(spec, 5)));
}

TEST(Model, PyramidExtents) {
  const auto spec = load_variant("B0");
  const auto params = build_model(spec, 3);
  std::mt19937_64 rng(1);
  Tensor image({2, 64, 96, 3});
  checks::fill_normal(image, rng);
  Tape tape(Tape::Mode::kInference);
  const auto r = favit_forward(tape, image, params, spec);
  EXPECT_EQ(r.pyramid[0].shape(), (Shape{2, 16, 24, 32}));
  EXPECT_EQ(r.pyramid[3].shape(), (Shape{2, 2, 3, 256}));
  EXPECT_EQ(r.logits.shape(), (Shape{2, 1000}));
  EXPECT_THROW(favit_forward(tape, Tensor({1, 40, 40, 3}), params, spec), ConfigError);
}

TEST(Model, TraceOfRequestedBlock) {
  const auto spec = load_variant("B0");
  const auto params = build_model(spec, 3);
  Tape tape(Tape::Mode::kInference);
  const auto r = favit_forward(tape, Tensor::full({1, 64, 64, 3}, 0.5), params, spec, BlockRef{1, 1});
  ASSERT_EQ(r.traces.size(), 2u);
  EXPECT_EQ(r.traces[1].dilation, 4u);
  EXPECT_EQ(r.traces[1].map_rows, 8u);
}

TEST(Model, TrainingStepReducesLoss) {
  VariantSpec spec = load_variant("B0");
  spec.num_classes = 2;
  auto params = build_model(spec, 5);
  std::mt19937_64 rng(2);
  Tensor images({4, 32, 32, 3});
  checks::fill_normal(images, rng);
  const std::vector<std::size_t> labels{0, 1, 1, 0};
  const auto first = sgd_step(params, spec, images, labels, 1e-3);
  StepStats last{};
  for (int i = 0; i < 3; ++i) last = sgd_step(params, spec, images, labels, 1e-3);
  EXPECT_LT(last.loss, first.loss);
}

TEST(PropertySuite, ModelScopePasses) {
  checks::CheckOptions opt;
  opt.trials = 10;
  for (const auto& r : checks::check_model(opt)) EXPECT_TRUE(r.pass) << checks::format_line(r) << r.counterexample;
}

}  // namespace
}  // namespace favit
