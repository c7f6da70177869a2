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
#include <span>
#include <string>
#include <vector>

#include "favit/fasa.hpp"
#include "favit/tape.hpp"
#include "favit/tensor.hpp"

// Reference implementations written as plain index loops over raw values.
// None of them calls into favit::ops or the FaSA pipeline, so agreement with
// the production path is evidence rather than tautology.
namespace favit::oracle {

struct OracleReport {
  std::string case_id;
  double max_abs = 0.0;
  double max_rel = 0.0;
  double tolerance = 0.0;
  bool pass = false;
  std::vector<std::uint64_t> seeds;
};

/// Elementwise comparison; passes when max |a - b| < tolerance.
OracleReport compare(std::string case_id, const Tensor& actual, const Tensor& expected, double tolerance);

/// softmax(Q K^T / scale) V with Q = x Wq^T etc.; x is [N, C], weights
/// [C, C] stored (out, in).
Tensor dense_sa(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv, double scale);

/// dense_sa inside each non-overlapping window x window tile of a
/// [h, w, c] map. Throws ConfigError unless the window divides both extents.
Tensor window_sa(const Tensor& x, std::size_t window, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                 double scale);

/// Scalar-loop factorization self-attention over [b, h, w, c]. Positions
/// beyond the map inside the last row/column of windows read as zero.
Tensor brute_force_fasa(const Tensor& x, const FasaConfig& cfg, const FasaParams& params);

/// Builds the computation on the given tape and returns a scalar.
using ScalarFunction = std::function<Tensor(Tape&)>;

inline constexpr double kDefaultFdStep = 1e-5;
inline constexpr double kFdTolerance = 1e-4;
inline constexpr double kFdMinDenominator = 1e-8;
inline constexpr double kFdRelativeFloor = 1e-5;

/// Central differences (f(t+e) - f(t-e)) / 2e for every coordinate of every
/// tensor in `wrt`, compared with the reverse-mode gradient. The relative
/// error denominator is max(|analytic|, |numeric|, 1e-8, 1e-5 * G), G being
/// the largest |analytic| over all coordinates. Throws
/// ContractError when f evaluates to a non-finite value.
OracleReport fd_check(const ScalarFunction& f, std::span<Tensor> wrt, double step = kDefaultFdStep,
                      std::string case_id = "fd", double tolerance = kFdTolerance);

/// CSV with header "case,max_abs,max_rel,pass".
void write_reports_csv(std::ostream& out, std::span<const OracleReport> reports);

}  // namespace favit::oracle
