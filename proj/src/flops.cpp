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

#include "favit/flops.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

#include "favit/error.hpp"
#include "favit/fasa.hpp"
#include "favit/ops.hpp"
#include "favit/param_store.hpp"

namespace favit::flops {

std::string_view mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::kDenseSa:
      return "dense_sa";
    case Mechanism::kWindowSa:
      return "window_sa";
    case Mechanism::kFasa:
      return "fasa";
    case Mechanism::kFavitVariant:
      return "favit_variant";
  }
  return "unknown";
}

Mechanism parse_mechanism(std::string_view name) {
  for (auto m : {Mechanism::kDenseSa, Mechanism::kWindowSa, Mechanism::kFasa, Mechanism::kFavitVariant}) {
    if (mechanism_name(m) == name) return m;
  }
  throw ConfigError("unknown mechanism '" + std::string(name) + "' (dense_sa, window_sa, fasa, favit_variant)");
}

WideCount formula_macs(Mechanism m, std::uint64_t tokens, std::uint64_t channels, std::uint64_t sample_side) {
  const WideCount n = tokens;
  const WideCount c = channels;
  const WideCount projections = 4 * n * c * c;
  switch (m) {
    case Mechanism::kDenseSa:
      return projections + 2 * n * n * c;
    case Mechanism::kWindowSa:
    case Mechanism::kFasa: {
      if (sample_side == 0) throw ConfigError("formula_macs: sample side must be positive");
      const WideCount mm = WideCount(sample_side) * sample_side;
      return projections + 2 * mm * n * c;
    }
    case Mechanism::kFavitVariant:
      break;
  }
  throw ConfigError("formula_macs: favit_variant needs a variant spec");
}

namespace {

std::size_t stage_reduction(const VariantSpec& spec, std::size_t stage) {
  std::size_t r = spec.stages[0].patch_size;
  for (std::size_t s = 1; s <= stage; ++s) r *= spec.stages[s].patch_size;
  return r;
}

void require_sweep_size(const VariantSpec& spec, std::size_t size) {
  if (size == 0 || size % 32 != 0) {
    throw ConfigError("size " + std::to_string(size) + " is not a positive multiple of 32");
  }
  const std::size_t r = stage_reduction(spec, kStages - 1);
  if (size % r != 0) {
    throw ConfigError("size " + std::to_string(size) + " is not divisible by the total reduction " + std::to_string(r));
  }
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

}  // namespace

WideCount variant_formula_macs(const VariantSpec& spec, std::size_t image_side) {
  spec.validate();
  require_sweep_size(spec, image_side);
  const WideCount half = image_side / 2;
  const std::size_t c1 = spec.stages[0].channels;
  const std::size_t proj = spec.stages[0].patch_size / 2;
  WideCount total = half * half * 49 * 3 * c1;
  const WideCount first = image_side / spec.stages[0].patch_size;
  total += first * first * proj * proj * c1 * c1;
  for (std::size_t s = 0; s < kStages; ++s) {
    const auto& st = spec.stages[s];
    const std::uint64_t side = image_side / stage_reduction(spec, s);
    const std::uint64_t n = side * side;
    if (s > 0) {
      const std::size_t p = st.patch_size;
      total += WideCount(n) * p * p * spec.stages[s - 1].channels * st.channels;
    }
    const WideCount mlp = WideCount(2) * st.mlp_ratio * n * st.channels * st.channels;
    total += st.blocks * (formula_macs(Mechanism::kFasa, n, st.channels, spec.sample_side) + mlp);
  }
  total += WideCount(spec.stages[kStages - 1].channels) * spec.num_classes;
  return total;
}

std::uint64_t measure_macs(const std::function<void(Tape&)>& run) {
  Tape tape(Tape::Mode::kInference);
  tape.enable_instrumentation();
  run(tape);
  return tape.macs();
}

namespace {

// x [b, n, c] -> attention output [b, n, c] with a single head.
Tensor attend_tokens(Tape& tape, const Tensor& tokens, const Tensor& wq, const Tensor& wk, const Tensor& wv) {
  const std::size_t b = tokens.dim(0), n = tokens.dim(1), c = tokens.dim(2);
  Tensor flat = ops::reshape(tape, tokens, {b * n, c});
  Tensor q = ops::reshape(tape, ops::matmul_nt(tape, flat, wq), {b, n, c});
  Tensor k = ops::reshape(tape, ops::matmul_nt(tape, flat, wk), {b, n, c});
  Tensor v = ops::reshape(tape, ops::matmul_nt(tape, flat, wv), {b, n, c});
  Tensor scores = ops::scale(tape, ops::batched_matmul_nt(tape, q, k), 1.0 / std::sqrt(static_cast<double>(c)));
  return ops::batched_matmul(tape, ops::softmax_rows(tape, scores), v);
}

void require_map(const Tensor& x, const char* who) {
  if (x.rank() != 4) throw ConfigError(std::string(who) + ": expected [b,h,w,c], got " + to_string(x.shape()));
}

}  // namespace

Tensor dense_attention(Tape& tape, const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                       const Tensor& wo) {
  require_map(x, "dense_attention");
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor out = attend_tokens(tape, ops::reshape(tape, x, {b, h * w, c}), wq, wk, wv);
  Tensor proj = ops::matmul_nt(tape, ops::reshape(tape, out, {b * h * w, c}), wo);
  return ops::reshape(tape, proj, {b, h, w, c});
}

Tensor window_attention(Tape& tape, const Tensor& x, std::size_t window, const Tensor& wq, const Tensor& wk,
                        const Tensor& wv, const Tensor& wo) {
  require_map(x, "window_attention");
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw ConfigError("window_attention: " + std::to_string(h) + "x" + std::to_string(w) +
                      " map is not divisible by window " + std::to_string(window));
  }
  const std::size_t down = h / window, across = w / window;
  std::vector<IndexGrid> grids;
  grids.reserve(down * across);
  for (std::size_t i = 0; i < down; ++i) {
    for (std::size_t j = 0; j < across; ++j) {
      grids.push_back(IndexGrid::dilated(h, w, {i * window, j * window}, window, 1));
    }
  }
  // [b, windows, window^2, c] -> windows as batch entries
  Tensor tiles = ops::gather_windows(tape, x, grids);
  const std::size_t nw = grids.size(), p = window * window;
  Tensor out = attend_tokens(tape, ops::reshape(tape, tiles, {b * nw, p, c}), wq, wk, wv);
  Tensor proj = ops::matmul_nt(tape, ops::reshape(tape, out, {b * nw * p, c}), wo);
  // Scatter back to raster order.
  Tensor result({b, h, w, c});
  auto src = proj.data();
  auto dst = result.data();
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t wi = 0; wi < nw; ++wi) {
      const auto& offs = grids[wi].offsets();
      for (std::size_t pi = 0; pi < p; ++pi) {
        const double* s = &src[((bi * nw + wi) * p + pi) * c];
        double* d = &dst[((bi * h + offs[pi].row) * w + offs[pi].col) * c];
        std::copy(s, s + c, d);
      }
    }
  }
  return result;
}

std::vector<FlopReport> sweep(Mechanism mechanism, const VariantSpec& spec, std::span<const std::size_t> sizes,
                              const SweepOptions& options) {
  spec.validate();
  if (sizes.empty()) throw ConfigError("sweep: no sizes given");
  if (options.stage >= kStages) throw ConfigError("sweep: stage " + std::to_string(options.stage + 1) + " out of range");
  std::vector<std::size_t> ordered(sizes.begin(), sizes.end());
  std::sort(ordered.begin(), ordered.end());
  ordered.erase(std::unique(ordered.begin(), ordered.end()), ordered.end());
  for (auto s : ordered) require_sweep_size(spec, s);

  const auto& st = spec.stages[options.stage];
  const std::size_t c = st.channels;
  const std::size_t m = spec.sample_side;
  const FasaConfig cfg = stage_fasa_config(spec, options.stage);

  ParamStore store(options.seed);
  std::optional<FasaParams> fasa_params;
  Tensor wq, wk, wv, wo;
  std::optional<ModelParams> model;
  if (mechanism == Mechanism::kFasa) {
    fasa_params = FasaParams::create(store, "attn", cfg);
  } else if (mechanism == Mechanism::kFavitVariant) {
    model.emplace(build_model(spec, options.seed));
  } else {
    wq = store.add("wq", {c, c}, Init::kTruncatedNormal);
    wk = store.add("wk", {c, c}, Init::kTruncatedNormal);
    wv = store.add("wv", {c, c}, Init::kTruncatedNormal);
    wo = store.add("wo", {c, c}, Init::kTruncatedNormal);
  }

  std::vector<FlopReport> reports;
  std::mt19937_64 rng(options.seed);
  for (std::size_t size : ordered) {
    FlopReport r;
    r.mechanism = mechanism;
    r.size = size;
    r.sample_side = m;
    std::function<void(Tape&)> run;
    Tensor input;
    if (mechanism == Mechanism::kFavitVariant) {
      const std::size_t side = size / stage_reduction(spec, 0);
      r.tokens = static_cast<std::uint64_t>(side) * side;
      r.channels = spec.stages[0].channels;
      r.formula_macs = variant_formula_macs(spec, size);
      input = random_tensor({1, size, size, 3}, rng);
      run = [&](Tape& tape) { favit_forward(tape, input, *model, spec); };
    } else {
      const std::size_t side = size / stage_reduction(spec, options.stage);
      r.tokens = static_cast<std::uint64_t>(side) * side;
      r.channels = c;
      r.formula_macs = formula_macs(mechanism, r.tokens, c, m);
      const bool measurable = mechanism != Mechanism::kDenseSa || r.tokens <= options.dense_token_limit;
      if (measurable) {
        input = random_tensor({1, side, side, c}, rng);
        if (mechanism == Mechanism::kFasa) {
          run = [&](Tape& tape) { fasa_forward(tape, input, cfg, *fasa_params); };
        } else if (mechanism == Mechanism::kDenseSa) {
          run = [&](Tape& tape) { dense_attention(tape, input, wq, wk, wv, wo); };
        } else {
          run = [&](Tape& tape) { window_attention(tape, input, m, wq, wk, wv, wo); };
        }
      }
    }
    if (run) {
      r.measured_macs = measure_macs(run);
      if (options.timing) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < std::max<std::size_t>(options.repeats, 1); ++i) {
          Tape tape(Tape::Mode::kInference);
          const auto t0 = std::chrono::steady_clock::now();
          run(tape);
          const auto t1 = std::chrono::steady_clock::now();
          best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
        }
        r.wall_seconds = best;
      }
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

void write_sweep_csv(std::ostream& out, std::span<const FlopReport> reports) {
  out << "mechanism,size,N,C,M,formula_macs,measured_macs,wall_seconds\n";
  for (const auto& r : reports) {
    out << mechanism_name(r.mechanism) << ',' << r.size << ',' << r.tokens << ',' << r.channels << ','
        << r.sample_side << ',' << r.formula_macs.str() << ',';
    if (r.measured_macs) out << *r.measured_macs;
    out << ',';
    if (r.wall_seconds) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", *r.wall_seconds);
      out << buf;
    }
    out << '\n';
  }
}

PolynomialFit fit_cost(std::span<const FlopReport> reports, std::size_t degree) {
  const std::size_t terms = degree + 1;
  if (reports.size() < terms) {
    throw ConfigError("fit_cost: need at least " + std::to_string(terms) + " points for degree " +
                      std::to_string(degree));
  }
  // Normal equations on N scaled to [0, 1] to keep them well conditioned.
  double n_max = 0.0;
  for (const auto& r : reports) n_max = std::max(n_max, static_cast<double>(r.tokens));
  std::vector<double> xs, ys;
  for (const auto& r : reports) {
    xs.push_back(static_cast<double>(r.tokens) / n_max);
    ys.push_back(r.measured_macs ? static_cast<double>(*r.measured_macs) : r.formula_macs.convert_to<double>());
  }
  std::vector<double> a(terms * (terms + 1), 0.0);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<double> pw(terms, 1.0);
    for (std::size_t k = 1; k < terms; ++k) pw[k] = pw[k - 1] * xs[i];
    for (std::size_t r = 0; r < terms; ++r) {
      for (std::size_t k = 0; k < terms; ++k) a[r * (terms + 1) + k] += pw[r] * pw[k];
      a[r * (terms + 1) + terms] += pw[r] * ys[i];
    }
  }
  // Gaussian elimination with partial pivoting.
  for (std::size_t col = 0; col < terms; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < terms; ++r) {
      if (std::abs(a[r * (terms + 1) + col]) > std::abs(a[piv * (terms + 1) + col])) piv = r;
    }
    if (a[piv * (terms + 1) + col] == 0.0) throw ConfigError("fit_cost: degenerate sizes");
    for (std::size_t k = 0; k <= terms; ++k) std::swap(a[col * (terms + 1) + k], a[piv * (terms + 1) + k]);
    for (std::size_t r = 0; r < terms; ++r) {
      if (r == col) continue;
      const double f = a[r * (terms + 1) + col] / a[col * (terms + 1) + col];
      for (std::size_t k = col; k <= terms; ++k) a[r * (terms + 1) + k] -= f * a[col * (terms + 1) + k];
    }
  }
  PolynomialFit fit;
  double scale = 1.0;
  for (std::size_t k = 0; k < terms; ++k) {
    fit.coefficients.push_back(a[k * (terms + 1) + terms] / a[k * (terms + 1) + k] / scale);
    scale *= n_max;
  }
  double ss = 0.0, mean_abs = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double n = xs[i] * n_max;
    double pred = 0.0, pw = 1.0;
    for (double coef : fit.coefficients) {
      pred += coef * pw;
      pw *= n;
    }
    ss += (pred - ys[i]) * (pred - ys[i]);
    mean_abs += std::abs(ys[i]);
  }
  mean_abs /= static_cast<double>(ys.size());
  fit.relative_residual = mean_abs > 0.0 ? std::sqrt(ss / static_cast<double>(ys.size())) / mean_abs : 0.0;
  return fit;
}

}  // namespace favit::flops
