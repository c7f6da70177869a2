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

#include <random>
#include <sstream>

#include "favit/checks.hpp"
#include "favit/error.hpp"
#include "favit/flops.hpp"

namespace favit::flops {
namespace {

TEST(Formula, HandValues) {
  // 4 * 49 * 64^2 + 2 * 49^2 * 64
  EXPECT_EQ(formula_macs(Mechanism::kDenseSa, 49, 64), WideCount(802816 + 307328));
  // 4 * 3136 * 64^2 + 2 * 49 * 3136 * 64
  EXPECT_EQ(formula_macs(Mechanism::kFasa, 3136, 64, 7), WideCount(51380224 + 19668992));
  EXPECT_EQ(formula_macs(Mechanism::kWindowSa, 3136, 64, 7), formula_macs(Mechanism::kFasa, 3136, 64, 7));
  EXPECT_THROW(formula_macs(Mechanism::kFasa, 10, 10, 0), ConfigError);
  EXPECT_THROW(formula_macs(Mechanism::kFavitVariant, 10, 10, 7), ConfigError);
}

TEST(Formula, WideCountsDoNotOverflow) {
  const std::uint64_t n = 1ULL << 40;
  const WideCount f = formula_macs(Mechanism::kDenseSa, n, 1024);
  EXPECT_EQ(f, WideCount(4) * n * 1024 * 1024 + WideCount(2) * n * n * 1024);
  EXPECT_GT(f, WideCount(std::numeric_limits<std::uint64_t>::max()));
}

TEST(Formula, DegenerateEquality) {
  for (std::uint64_t m = 2; m <= 9; ++m)
    EXPECT_EQ(formula_macs(Mechanism::kDenseSa, m * m, 48), formula_macs(Mechanism::kFasa, m * m, 48, m));
}

TEST(Mechanism, Names) {
  for (auto m : {Mechanism::kDenseSa, Mechanism::kWindowSa, Mechanism::kFasa, Mechanism::kFavitVariant})
    EXPECT_EQ(parse_mechanism(mechanism_name(m)), m);
  EXPECT_THROW(parse_mechanism("swin"), ConfigError);
}

TEST(Measured, DenseAndWindowHitFormula) {
  std::mt19937_64 rng(3);
  Tensor x({1, 6, 6, 5}), w({5, 5});
  checks::fill_normal(x, rng);
  checks::fill_normal(w, rng);
  EXPECT_EQ(WideCount(measure_macs([&](Tape& t) { dense_attention(t, x, w, w, w, w); })),
            formula_macs(Mechanism::kDenseSa, 36, 5));
  EXPECT_EQ(WideCount(measure_macs([&](Tape& t) { window_attention(t, x, 3, w, w, w, w); })),
            formula_macs(Mechanism::kWindowSa, 36, 5, 3));
  Tape tape(Tape::Mode::kInference);
  EXPECT_THROW(window_attention(tape, x, 4, w, w, w, w), ConfigError);
}

TEST(Measured, WindowOfWholeMapIsDense) {
  std::mt19937_64 rng(4);
  Tensor x({1, 4, 4, 3}), wq({3, 3}), wk({3, 3}), wv({3, 3}), wo({3, 3});
  for (auto* t : {&x, &wq, &wk, &wv, &wo}) checks::fill_normal(*t, rng);
  Tape tape(Tape::Mode::kInference);
  Tensor a = dense_attention(tape, x, wq, wk, wv, wo), b = window_attention(tape, x, 4, wq, wk, wv, wo);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
}

TEST(Sweep, ValidatesSizes) {
  const auto spec = load_variant("B0");
  const std::vector<std::size_t> bad{224, 100};
  EXPECT_THROW(sweep(Mechanism::kFasa, spec, bad), ConfigError);
  EXPECT_THROW(sweep(Mechanism::kFasa, spec, std::vector<std::size_t>{}), ConfigError);
}

TEST(Sweep, CsvSortedAndDeterministic) {
  const auto spec = load_variant("B0");
  const std::vector<std::size_t> sizes{128, 64};
  std::ostringstream a, b;
  write_sweep_csv(a, sweep(Mechanism::kFasa, spec, sizes));
  write_sweep_csv(b, sweep(Mechanism::kFasa, spec, sizes));
  EXPECT_EQ(a.str(), b.str());
  std::istringstream lines(a.str());
  std::string header, first, second;
  std::getline(lines, header);
  std::getline(lines, first);
  std::getline(lines, second);
  EXPECT_EQ(header, "mechanism,size,N,C,M,formula_macs,measured_macs,wall_seconds");
  EXPECT_EQ(first.substr(0, 12), "fasa,64,256,");
  EXPECT_EQ(second.substr(0, 14), "fasa,128,1024,");
  EXPECT_EQ(first.back(), ',');  // no timing requested
}

TEST(Sweep, DenseBeyondLimitIsFormulaOnly) {
  const auto spec = load_variant("B0");
  SweepOptions opt;
  opt.dense_token_limit = 300;
  const auto rows = sweep(Mechanism::kDenseSa, spec, std::vector<std::size_t>{64, 96}, opt);
  EXPECT_TRUE(rows[0].measured_macs.has_value());
  EXPECT_FALSE(rows[1].measured_macs.has_value());
  EXPECT_EQ(WideCount(*rows[0].measured_macs), rows[0].formula_macs);
}

TEST(Sweep, TimingFillsWallSeconds) {
  SweepOptions opt;
  opt.timing = true;
  opt.repeats = 2;
  const auto rows = sweep(Mechanism::kFasa, load_variant("B0"), std::vector<std::size_t>{32}, opt);
  ASSERT_TRUE(rows[0].wall_seconds.has_value());
  EXPECT_GE(*rows[0].wall_seconds, 0.0);
}

TEST(Sweep, VariantMeasuredBelowFormula) {
  const auto spec = load_variant("B0");
  const auto rows = sweep(Mechanism::kFavitVariant, spec, std::vector<std::size_t>{224});
  EXPECT_EQ(rows[0].formula_macs, variant_formula_macs(spec, 224));
  EXPECT_LT(WideCount(*rows[0].measured_macs), rows[0].formula_macs);
}

TEST(Fit, LinearAndQuadratic) {
  const auto spec = load_variant("B2");
  const std::vector<std::size_t> sizes{224, 448, 896};
  SweepOptions opt;
  opt.dense_token_limit = 0;  // formula only
  const auto dense = sweep(Mechanism::kDenseSa, spec, sizes, opt);
  EXPECT_LT(fit_cost(dense, 2).relative_residual, 1e-9);
  EXPECT_GT(fit_cost(dense, 1).relative_residual, 1e-2);
  EXPECT_THROW(fit_cost(dense, 3), ConfigError);
}

}  // namespace
}  // namespace favit::flops
