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
#include <sstream>

#include "favit/attnmap.hpp"
#include "favit/checks.hpp"
#include "favit/error.hpp"

namespace favit::attnmap {
namespace {

std::vector<GroupTrace> run(const FasaConfig& cfg, std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamStore store(seed);
  FasaParams p = FasaParams::create(store, "attn", cfg);
  for (std::size_t g = 0; g < cfg.groups(); ++g) {
    checks::fill_normal(p.wq[g], rng);
    checks::fill_normal(p.wk[g], rng);
    checks::fill_normal(p.wv[g], rng);
  }
  Tensor x({1, rows, cols, cfg.channels});
  checks::fill_normal(x, rng);
  Tape tape(Tape::Mode::kInference);
  return fasa_forward(tape, x, cfg, p, true).traces;
}

double total(const GroupSpan& s) {
  double t = 0.0;
  for (double w : s.weights) t += w;
  return t;
}

TEST(Attnmap, MassIsConserved) {
  for (Fusion f : {Fusion::kMax, Fusion::kMean}) {
    FasaConfig cfg;
    cfg.channels = 8;
    cfg.dilations = {1, 3};
    cfg.sample_side = 3;
    cfg.fusion = f;
    const auto traces = run(cfg, 11, 9, 4);
    const auto spans = attribute(traces, f, 0, 5, 2);
    ASSERT_EQ(spans.size(), 2u);
    for (const auto& s : spans) {
      EXPECT_NEAR(total(s), 1.0, 1e-12);
      double k = 0.0;
      for (double w : s.key_weights) k += w;
      EXPECT_NEAR(k, 1.0, 1e-12);
      EXPECT_LE(s.mass_in_map(), 1.0 + 1e-12);
    }
  }
}

TEST(Attnmap, SingleWindowSupportIsWholeGrid) {
  FasaConfig cfg;
  cfg.channels = 4;
  cfg.sample_side = 5;
  const auto spans = attribute(run(cfg, 5, 5, 1), Fusion::kMax, 0, 2, 2);
  for (double w : spans[0].weights) EXPECT_GT(w, 0.0);
}

TEST(Attnmap, LongRangeGroupSupportIsStrided) {
  FasaConfig cfg;
  cfg.channels = 8;
  cfg.dilations = {1, 8};
  const auto spans = attribute(run(cfg, 56, 56, 2), Fusion::kMax, 0, 10, 20);
  const auto& far = spans[1];
  for (std::size_t r = 0; r < far.padded_rows; ++r)
    for (std::size_t c = 0; c < far.padded_cols; ++c) {
      if (far.weights[r * far.padded_cols + c] == 0.0) continue;
      EXPECT_EQ((r % 49) % 8, 0u);
      EXPECT_EQ((c % 49) % 8, 0u);
    }
}

TEST(Attnmap, MeanFusionSplitsEvenly) {
  FasaConfig cfg;
  cfg.channels = 2;
  cfg.sample_side = 2;
  cfg.fusion = Fusion::kMean;
  const auto spans = attribute(run(cfg, 4, 4, 3), Fusion::kMean, 0, 0, 0);
  const auto& s = spans[0];
  // Four windows; key k sits at the same offset in each, with equal credit.
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t r = k / 2, c = k % 2;
    EXPECT_NEAR(s.weights[r * 4 + c], s.key_weights[k] / 4.0, 1e-15);
    EXPECT_NEAR(s.weights[(r + 2) * 4 + c + 2], s.key_weights[k] / 4.0, 1e-15);
  }
}

TEST(Attnmap, QueryOutOfRange) {
  FasaConfig cfg;
  cfg.channels = 2;
  cfg.sample_side = 2;
  const auto traces = run(cfg, 4, 4, 3);
  EXPECT_THROW(attribute(traces, Fusion::kMax, 0, 4, 0), IndexError);
  EXPECT_THROW(attribute(traces, Fusion::kMax, 1, 0, 0), IndexError);
}

TEST(Attnmap, PgmAndCsvFormat) {
  FasaConfig cfg;
  cfg.channels = 2;
  cfg.sample_side = 2;
  const auto spans = attribute(run(cfg, 5, 3, 3), Fusion::kMax, 0, 1, 1);
  std::ostringstream pgm;
  write_pgm(pgm, spans[0]);
  const std::string bytes = pgm.str();
  ASSERT_EQ(bytes.substr(0, 11), "P5\n3 5\n255\n");
  EXPECT_EQ(bytes.size(), 11u + 15u);
  unsigned char peak = 0;
  for (std::size_t i = 11; i < bytes.size(); ++i) peak = std::max(peak, static_cast<unsigned char>(bytes[i]));
  EXPECT_EQ(peak, 255);
  std::ostringstream csv;
  write_csv(csv, spans, 1, 1);
  EXPECT_EQ(csv.str().substr(0, 42), "group,query_row,query_col,key_index,weight");
}

}  // namespace
}  // namespace favit::attnmap
