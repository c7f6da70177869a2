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
#include "favit/oracle.hpp"

namespace favit {
namespace {

TEST(Oracle, SingleTokenAttentionReturnsValue) {
  Tensor x({1, 2}, {1.0, 2.0});
  Tensor wq({2, 2}, {1, 0, 0, 1}), wk({2, 2}, {0, 1, 1, 0}), wv({2, 2}, {2, 0, 0, 3});
  Tensor y = oracle::dense_sa(x, wq, wk, wv, 1.0);
  EXPECT_DOUBLE_EQ(y[0], 2.0);
  EXPECT_DOUBLE_EQ(y[1], 6.0);
}

TEST(Oracle, UniformScoresAverageValues) {
  Tensor x({3, 1}, {1.0, 2.0, 6.0});
  Tensor zero({1, 1}, {0.0}), one({1, 1}, {1.0});
  Tensor y = oracle::dense_sa(x, zero, zero, one, 1.0);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(y[i], 3.0);
}

TEST(Oracle, WindowNeedsDivisibleMap) {
  Tensor x({5, 5, 1}), w({1, 1}, {1.0});
  EXPECT_THROW(oracle::window_sa(x, 2, w, w, w, 1.0), ConfigError);
}

TEST(Oracle, WindowIsolatesTiles) {
  // With identity weights and a single channel, each output is a softmax
  // average of values inside its own tile only.
  Tensor x({2, 4, 1}, {0, 0, 100, 100, 0, 0, 100, 100});
  Tensor w({1, 1}, {1.0});
  Tensor y = oracle::window_sa(x, 2, w, w, w, 1.0);
  EXPECT_DOUBLE_EQ(y[0], 0.0);
  EXPECT_DOUBLE_EQ(y[2], 100.0);
}

TEST(Oracle, BruteForceMatchesPipelineWithPadding) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 10; ++t) {
    auto fc = checks::random_padded_case(rng, 11);
    ParamStore store(t);
    FasaParams p = FasaParams::create(store, "attn", fc.cfg);
    for (std::size_t g = 0; g < fc.cfg.groups(); ++g) {
      checks::fill_normal(p.wq[g], rng, 0.5);
      checks::fill_normal(p.wk[g], rng, 0.5);
      checks::fill_normal(p.wv[g], rng, 0.5);
    }
    checks::fill_normal(p.wo, rng, 0.5);
    Tensor x({fc.batch, fc.rows, fc.cols, fc.cfg.channels});
    checks::fill_normal(x, rng);
    Tape tape(Tape::Mode::kInference);
    const auto r = oracle::compare("padded", fasa_forward(tape, x, fc.cfg, p).output,
                                   oracle::brute_force_fasa(x, fc.cfg, p), 1e-10);
    EXPECT_TRUE(r.pass) << fc.to_json() << " " << r.max_abs;
  }
}

TEST(Oracle, CompareReportsWorstDifference) {
  Tensor a({3}, {1.0, 2.0, 3.0}), b({3}, {1.0, 2.5, 3.0});
  const auto r = oracle::compare("c", a, b, 0.1);
  EXPECT_FALSE(r.pass);
  EXPECT_DOUBLE_EQ(r.max_abs, 0.5);
  EXPECT_THROW(oracle::compare("c", a, Tensor({2}), 0.1), ConfigError);
}

TEST(Oracle, ReportsCsv) {
  std::vector<oracle::OracleReport> reports(1);
  reports[0].case_id = "x";
  reports[0].pass = true;
  std::ostringstream out;
  oracle::write_reports_csv(out, reports);
  EXPECT_EQ(out.str().substr(0, 27), "case,max_abs,max_rel,pass\nx");
}

TEST(PropertySuite, OraclesScopePasses) {
  checks::CheckOptions opt;
  opt.trials = 20;
  for (const auto& r : checks::check_oracles(opt)) EXPECT_TRUE(r.pass) << checks::format_line(r) << r.counterexample;
}

}  // namespace
}  // namespace favit
