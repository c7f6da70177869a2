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

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "favit/fasa.hpp"
#include "favit/model.hpp"

namespace favit::checks {

struct PropertyResult {
  std::string name;
  bool pass = true;
  std::size_t trials = 0;
  std::string detail;          // deterministic summary, e.g. worst error seen
  std::string counterexample;  // JSON of the first failing trial, empty on pass
};

struct CheckOptions {
  std::uint64_t seed = 42;
  std::size_t trials = 100;
};

/// Key count, fusion symmetry, shift covariance, softmax rows, channel-slice
/// locality, MAC determinism, gather round trip.
std::vector<PropertyResult> check_fasa(const CheckOptions& options = {});
/// Pyramid shapes, residual identity, determinism, serialization, end-to-end gradients.
std::vector<PropertyResult> check_model(const CheckOptions& options = {});
/// Finite differences against reverse mode for kernel ops, FaSA, a block and a tiny model.
std::vector<PropertyResult> check_grads(const CheckOptions& options = {});
/// Reference-implementation agreement and the MAC counting laws.
std::vector<PropertyResult> check_oracles(const CheckOptions& options = {});

/// "fasa" | "model" | "grads" | "oracles" | "all"; ConfigError otherwise.
std::vector<PropertyResult> run_scope(std::string_view scope, const CheckOptions& options = {});

/// "PASS name trials=N detail" or "FAIL ...".
std::string format_line(const PropertyResult& result);

/// A small FaSA layer on a map that every window side divides.
struct FasaCase {
  FasaConfig cfg;
  std::size_t batch = 1;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::string to_json() const;
};

/// Map sides up to max_side, M in {2, 3}, one or two groups, either fusion.
FasaCase random_divisible_case(std::mt19937_64& rng, std::size_t max_side = 16);
/// Like random_divisible_case, but map sides are arbitrary so windows get padded.
FasaCase random_padded_case(std::mt19937_64& rng, std::size_t max_side = 16);

/// Tiny four-stage variant suitable for 32x32 inputs.
VariantSpec random_tiny_variant(std::mt19937_64& rng);

/// Overwrites every element with N(0, sigma^2) draws.
void fill_normal(Tensor& t, std::mt19937_64& rng, double sigma = 1.0);

/// Smallest gap between the largest and second largest value across the
/// window axis of a [b, w, p, c] stack; infinity with a single window.
double fusion_margin(const Tensor& stack);

}  // namespace favit::checks
