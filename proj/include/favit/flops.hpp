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

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "favit/model.hpp"
#include "favit/tape.hpp"
#include "favit/tensor.hpp"

namespace favit::flops {

using WideCount = boost::multiprecision::cpp_int;

enum class Mechanism { kDenseSa, kWindowSa, kFasa, kFavitVariant };

std::string_view mechanism_name(Mechanism m);
/// "dense_sa" | "window_sa" | "fasa" | "favit_variant"; ConfigError otherwise.
Mechanism parse_mechanism(std::string_view name);

/// Closed-form attention cost in multiply-accumulates:
///   dense_sa          4 N C^2 + 2 N^2 C
///   window_sa, fasa   4 N C^2 + 2 M^2 N C
/// favit_variant has no (N, C, M) form; use variant_formula_macs.
WideCount formula_macs(Mechanism m, std::uint64_t tokens, std::uint64_t channels, std::uint64_t sample_side = 0);

/// Whole-model closed form at a square input: convolutions, every block's
/// attention term plus its 2 E N C^2 MLP, and the classifier.
WideCount variant_formula_macs(const VariantSpec& spec, std::size_t image_side);

/// Runs `run` on a forward-only tape with instrumentation on and returns the
/// counted MACs.
std::uint64_t measure_macs(const std::function<void(Tape&)>& run);

/// Single-head dense attention with an output projection built from kernel
/// ops, so its instrumented count is comparable with fasa_forward.
/// x is [b, h, w, c]; weights are (out, in).
Tensor dense_attention(Tape& tape, const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                       const Tensor& wo);
/// dense_attention restricted to non-overlapping window x window tiles.
/// Forward only: the scatter back to raster order is not recorded.
Tensor window_attention(Tape& tape, const Tensor& x, std::size_t window, const Tensor& wq, const Tensor& wk,
                        const Tensor& wv, const Tensor& wo);

struct FlopReport {
  Mechanism mechanism = Mechanism::kFasa;
  std::size_t size = 0;           // input image side
  std::uint64_t tokens = 0;       // N at the measured resolution
  std::size_t channels = 0;
  std::size_t sample_side = 0;
  WideCount formula_macs;
  std::optional<std::uint64_t> measured_macs;
  std::optional<double> wall_seconds;
};

struct SweepOptions {
  std::size_t stage = 0;  // stage whose resolution and width the attention mechanisms use
  bool timing = false;    // best-of-`repeats` wall time on a monotonic clock
  std::size_t repeats = 5;
  std::uint64_t seed = 42;
  // Dense attention materializes N x N scores; above this only the formula is reported.
  std::uint64_t dense_token_limit = 4096;
};

/// One report per size, ascending. Attention mechanisms run a single layer
/// with the chosen stage's configuration at that stage's resolution
/// (size / 4 / 2^stage); favit_variant runs the whole model.
/// Throws ConfigError for sizes not divisible by 32 or an empty size list.
std::vector<FlopReport> sweep(Mechanism mechanism, const VariantSpec& spec, std::span<const std::size_t> sizes,
                              const SweepOptions& options = {});

/// Header "mechanism,size,N,C,M,formula_macs,measured_macs,wall_seconds";
/// unmeasured fields are left empty.
void write_sweep_csv(std::ostream& out, std::span<const FlopReport> reports);

struct PolynomialFit {
  std::vector<double> coefficients;  // lowest degree first
  double relative_residual = 0.0;    // RMS residual / mean |value|
};

/// Least-squares fit of cost against N (measured when available, formula
/// otherwise) with a polynomial of the given degree.
PolynomialFit fit_cost(std::span<const FlopReport> reports, std::size_t degree);

}  // namespace favit::flops
