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

#include "favit/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include "favit/error.hpp"
#include "favit/flops.hpp"
#include "favit/ops.hpp"
#include "favit/oracle.hpp"
#include "favit/serialize.hpp"
#include "json.hpp"

namespace favit::checks {
namespace {

using nlohmann::json;

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  return std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double sigma = 1.0) {
  Tensor t(std::move(shape));
  fill_normal(t, rng, sigma);
  return t;
}

// Fixed pseudo-random weights so a tensor can be reduced to a scalar the
// same way on every evaluation.
Tensor probe(const Shape& shape) {
  Tensor t(shape);
  auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::sin(1.37 * static_cast<double>(i) + 0.41);
  return t;
}

Tensor probe_sum(Tape& tape, const Tensor& t) { return ops::sum(tape, ops::mul(tape, t, probe(t.shape()))); }

std::size_t lcm_all(const FasaConfig& cfg) {
  std::size_t l = 1;
  for (std::size_t g = 0; g < cfg.groups(); ++g) l = std::lcm(l, cfg.window_side(g));
  return l;
}

FasaConfig random_config(std::mt19937_64& rng, std::size_t max_lcm) {
  for (;;) {
    FasaConfig cfg;
    cfg.sample_side = pick(rng, 2, 3);
    const std::size_t groups = pick(rng, 1, 2);
    std::vector<std::size_t> rates{1, 2, 3};
    std::shuffle(rates.begin(), rates.end(), rng);
    rates.resize(groups);
    std::sort(rates.begin(), rates.end());
    cfg.dilations = rates;
    cfg.heads_per_group = pick(rng, 1, 2);
    cfg.channels = groups * cfg.heads_per_group * pick(rng, 1, 3);
    cfg.fusion = pick(rng, 0, 1) == 0 ? Fusion::kMax : Fusion::kMean;
    if (lcm_all(cfg) <= max_lcm) return cfg;
  }
}

FasaParams random_params(ParamStore& store, const FasaConfig& cfg, std::mt19937_64& rng, double sigma) {
  FasaParams p = FasaParams::create(store, "attn", cfg);
  for (auto& t : p.wq) fill_normal(t, rng, sigma);
  for (auto& t : p.wk) fill_normal(t, rng, sigma);
  for (auto& t : p.wv) fill_normal(t, rng, sigma);
  fill_normal(p.wo, rng, sigma);
  return p;
}

// Collects the first failure of a property.
struct Recorder {
  PropertyResult result;
  explicit Recorder(std::string name) { result.name = std::move(name); }
  void trial() { ++result.trials; }
  void fail(const json& example) {
    if (!result.pass) return;
    result.pass = false;
    result.counterexample = example.dump();
  }
};

Tensor roll(const Tensor& x, std::size_t axis, std::size_t shift) {
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Tensor out(x.shape());
  auto s = x.data();
  auto d = out.data();
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t col = 0; col < w; ++col) {
        const std::size_t sr = axis == 1 ? (r + shift) % h : r;
        const std::size_t sc = axis == 2 ? (col + shift) % w : col;
        std::copy_n(&s[((bi * h + sr) * w + sc) * c], c, &d[((bi * h + r) * w + col) * c]);
      }
  return out;
}

// ---------------------------------------------------------------- fasa

PropertyResult prop_key_count(const CheckOptions& o) {
  Recorder rec("fasa.key_count");
  std::mt19937_64 rng(o.seed ^ 0x1001);
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    FasaCase fc = t % 2 == 0 ? random_padded_case(rng, 20) : random_divisible_case(rng);
    ParamStore store(o.seed + t);
    FasaParams p = random_params(store, fc.cfg, rng, 0.5);
    Tensor x = random_tensor({fc.batch, fc.rows, fc.cols, fc.cfg.channels}, rng);
    Tape tape(Tape::Mode::kInference);
    FasaResult r = fasa_forward(tape, x, fc.cfg, p, true);
    const std::size_t mm = fc.cfg.keys_per_group(), c = fc.cfg.group_channels(), n = fc.rows * fc.cols;
    for (const auto& tr : r.traces) {
      const std::size_t s = fc.cfg.window_side(tr.group);
      const std::size_t windows = ((fc.rows + s - 1) / s) * ((fc.cols + s - 1) / s);
      const bool ok = tr.keys.shape() == Shape{fc.batch, mm, c} && tr.values.shape() == Shape{fc.batch, mm, c} &&
                      tr.attention.shape() == Shape{fc.batch, n, mm} && tr.grids.size() == windows;
      if (!ok) rec.fail({{"trial", t}, {"case", json::parse(fc.to_json())}, {"group", tr.group}});
    }
  }
  rec.result.detail = "keys per group = M^2";
  return rec.result;
}

PropertyResult prop_fusion_permutation(const CheckOptions& o) {
  Recorder rec("fasa.fusion_permutation");
  std::mt19937_64 rng(o.seed ^ 0x1002);
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    const std::size_t b = pick(rng, 1, 2), w = pick(rng, 1, 9), p = pick(rng, 1, 9), c = pick(rng, 1, 6);
    Tensor stack = random_tensor({b, w, p, c}, rng);
    std::vector<std::size_t> perm(w);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor permuted({b, w, p, c});
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t wi = 0; wi < w; ++wi)
        std::copy_n(&stack.data()[(bi * w + perm[wi]) * p * c], p * c, &permuted.data()[(bi * w + wi) * p * c]);
    Tape tape(Tape::Mode::kInference);
    for (Fusion f : {Fusion::kMax, Fusion::kMean}) {
      if (!bit_equal(cross_window_fuse(tape, stack, f), cross_window_fuse(tape, permuted, f))) {
        rec.fail({{"trial", t}, {"fusion", fusion_name(f)}, {"shape", {b, w, p, c}}, {"permutation", perm}});
      }
    }
  }
  rec.result.detail = "max and mean bit-identical";
  return rec.result;
}

PropertyResult prop_shift_covariance(const CheckOptions& o) {
  Recorder rec("fasa.shift_covariance");
  std::mt19937_64 rng(o.seed ^ 0x1003);
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    FasaConfig cfg;
    cfg.sample_side = pick(rng, 2, 3);
    cfg.dilations = {pick(rng, 1, 2)};
    cfg.heads_per_group = pick(rng, 1, 2);
    cfg.channels = cfg.heads_per_group * pick(rng, 1, 3);
    cfg.fusion = t % 2 == 0 ? Fusion::kMax : Fusion::kMean;
    const std::size_t s = cfg.window_side(0);
    const std::size_t rows = s * pick(rng, 2, 3), cols = s * pick(rng, 2, 3);
    const std::size_t axis = pick(rng, 1, 2);
    ParamStore store(o.seed + t);
    FasaParams p = random_params(store, cfg, rng, 0.5);
    Tensor x = random_tensor({1, rows, cols, cfg.channels}, rng);
    Tape tape(Tape::Mode::kInference);
    FasaResult a = fasa_forward(tape, x, cfg, p, true);
    FasaResult b = fasa_forward(tape, roll(x, axis, s), cfg, p, true);
    if (!bit_equal(a.traces[0].keys, b.traces[0].keys) || !bit_equal(a.traces[0].values, b.traces[0].values)) {
      rec.fail({{"trial", t},
                {"M", cfg.sample_side},
                {"dilation", cfg.dilations[0]},
                {"rows", rows},
                {"cols", cols},
                {"axis", axis == 1 ? "rows" : "cols"},
                {"fusion", fusion_name(cfg.fusion)}});
    }
  }
  rec.result.detail = "shift by S keeps fused K, V bit-identical";
  return rec.result;
}

PropertyResult prop_softmax_rows(const CheckOptions& o) {
  Recorder rec("fasa.softmax_rows");
  std::mt19937_64 rng(o.seed ^ 0x1004);
  double worst = 0.0;
  auto check_rows = [&](const Tensor& a, std::size_t t, const char* where) {
    const std::size_t cols = a.shape().back();
    for (std::size_t r = 0; r < a.size() / cols; ++r) {
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        const double v = a[r * cols + j];
        if (!(v >= 0.0 && v <= 1.0)) rec.fail({{"trial", t}, {"where", where}, {"row", r}, {"value", v}});
        s += v;
      }
      worst = std::max(worst, std::abs(s - 1.0));
      if (std::abs(s - 1.0) > 1e-12) rec.fail({{"trial", t}, {"where", where}, {"row", r}, {"sum", s}});
    }
  };
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    Tape tape(Tape::Mode::kInference);
    const double spread = std::pow(10.0, static_cast<double>(pick(rng, 0, 3)));
    check_rows(ops::softmax_rows(tape, random_tensor({pick(rng, 1, 5), pick(rng, 1, 40)}, rng, spread)), t,
               "softmax_rows");
    FasaCase fc = random_padded_case(rng, 12);
    ParamStore store(o.seed + t);
    FasaParams p = random_params(store, fc.cfg, rng, 1.0);
    FasaResult r = fasa_forward(tape, random_tensor({fc.batch, fc.rows, fc.cols, fc.cfg.channels}, rng), fc.cfg, p, true);
    for (const auto& tr : r.traces) check_rows(tr.head_attention, t, "fasa");
  }
  rec.result.detail = "max |row sum - 1| = " + sci(worst);
  return rec.result;
}

PropertyResult prop_channel_locality(const CheckOptions& o) {
  Recorder rec("fasa.channel_slice_locality");
  std::mt19937_64 rng(o.seed ^ 0x1005);
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    FasaCase fc = t % 2 == 0 ? random_padded_case(rng, 14) : random_divisible_case(rng);
    if (fc.cfg.groups() < 2) {
      fc.cfg.dilations = {1, 2};
      fc.cfg.channels = 2 * fc.cfg.heads_per_group * pick(rng, 1, 3);
    }
    ParamStore store(o.seed + t);
    FasaParams p = random_params(store, fc.cfg, rng, 0.5);
    Tensor x = random_tensor({fc.batch, fc.rows, fc.cols, fc.cfg.channels}, rng);
    const std::size_t j = pick(rng, 0, fc.cfg.groups() - 1);
    Tensor zeroed = x.clone();
    const std::size_t cg = fc.cfg.group_channels(), c = fc.cfg.channels;
    for (std::size_t pos = 0; pos < x.size() / c; ++pos)
      std::fill_n(&zeroed.data()[pos * c + j * cg], cg, 0.0);
    Tape tape(Tape::Mode::kInference);
    FasaResult a = fasa_forward(tape, x, fc.cfg, p);
    FasaResult b = fasa_forward(tape, zeroed, fc.cfg, p);
    for (std::size_t g = 0; g < fc.cfg.groups(); ++g) {
      const bool same = bit_equal(a.group_outputs[g], b.group_outputs[g]);
      if (same == (g == j)) {
        rec.fail({{"trial", t}, {"case", json::parse(fc.to_json())}, {"zeroed_group", j}, {"group", g}});
      }
    }
  }
  rec.result.detail = "only the zeroed group's output moves";
  return rec.result;
}

PropertyResult prop_mac_determinism(const CheckOptions& o) {
  Recorder rec("kernel.mac_determinism");
  std::mt19937_64 rng(o.seed ^ 0x1006);
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    FasaCase fc = random_padded_case(rng, 14);
    ParamStore store(o.seed + t);
    FasaParams p = random_params(store, fc.cfg, rng, 0.5);
    const Shape shape{fc.batch, fc.rows, fc.cols, fc.cfg.channels};
    Tensor x1 = random_tensor(shape, rng), x2 = random_tensor(shape, rng, 3.0);
    const auto m1 = flops::measure_macs([&](Tape& tape) { fasa_forward(tape, x1, fc.cfg, p); });
    const auto m2 = flops::measure_macs([&](Tape& tape) { fasa_forward(tape, x2, fc.cfg, p); });
    if (m1 != m2) rec.fail({{"trial", t}, {"case", json::parse(fc.to_json())}, {"macs", {m1, m2}}});
  }
  rec.result.detail = "same shapes, same count";
  return rec.result;
}

PropertyResult prop_gather_round_trip(const CheckOptions& o) {
  Recorder rec("kernel.gather_round_trip");
  std::mt19937_64 rng(o.seed ^ 0x1007);
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    const std::size_t h = pick(rng, 1, 9), w = pick(rng, 1, 9), c = pick(rng, 1, 4);
    std::vector<GridOffset> offs;
    std::bernoulli_distribution keep(0.4);
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t col = 0; col < w; ++col)
        if (keep(rng)) offs.push_back({r, col});
    if (offs.empty()) offs.push_back({h - 1, w - 1});
    IndexGrid grid(h, w, offs);
    Tensor x = random_tensor({1, h, w, c}, rng);
    Tape tape;
    tape.backward(ops::sum(tape, ops::gather(tape, x, grid)));
    std::vector<double> expected(x.size(), 0.0);
    for (auto off : offs) std::fill_n(&expected[(off.row * w + off.col) * c], c, 1.0);
    if (!std::ranges::equal(x.grad(), expected)) {
      rec.fail({{"trial", t}, {"map", {h, w, c}}, {"samples", offs.size()}});
    }
  }
  rec.result.detail = "each sampled source marked once";
  return rec.result;
}

// ---------------------------------------------------------------- model

PropertyResult prop_pyramid_shapes(const CheckOptions& o) {
  Recorder rec("model.pyramid_shapes");
  std::mt19937_64 rng(o.seed ^ 0x2001);
  for (const auto& name : variant_names()) {
    const VariantSpec spec = load_variant(name);
    const ModelParams m = build_model(spec, o.seed);
    for (std::size_t size : {32, 64}) {
      rec.trial();
      Tape tape(Tape::Mode::kInference);
      ForwardResult r = favit_forward(tape, random_tensor({1, size, size, 3}, rng), m, spec);
      for (std::size_t s = 0; s < kStages; ++s) {
        const std::size_t side = size >> (s + 2);
        if (r.pyramid[s].shape() != Shape{1, side, side, spec.stages[s].channels}) {
          rec.fail({{"variant", name}, {"size", size}, {"stage", s + 1}, {"shape", r.pyramid[s].shape()}});
        }
      }
      if (r.logits.shape() != Shape{1, spec.num_classes}) rec.fail({{"variant", name}, {"size", size}});
    }
  }
  rec.result.detail = "stage s extents = input / 2^(s+1)";
  return rec.result;
}

PropertyResult prop_residual_identity(const CheckOptions& o) {
  Recorder rec("model.residual_identity");
  std::mt19937_64 rng(o.seed ^ 0x2002);
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    FasaCase fc = random_padded_case(rng, 12);
    ParamStore store(o.seed + t);
    BlockParams bp = BlockParams::create(store, "block", fc.cfg, pick(rng, 1, 4));
    for (auto* v : {&bp.attn.wo, &bp.mlp_expand, &bp.mlp_contract}) std::ranges::fill(v->data(), 0.0);
    for (auto& w : bp.attn.wq) std::ranges::fill(w.data(), 0.0);
    for (auto& w : bp.attn.wk) std::ranges::fill(w.data(), 0.0);
    for (auto& w : bp.attn.wv) std::ranges::fill(w.data(), 0.0);
    Tensor x = random_tensor({fc.batch, fc.rows, fc.cols, fc.cfg.channels}, rng);
    Tape tape(Tape::Mode::kInference);
    if (!bit_equal(block_forward(tape, x, bp, fc.cfg), x)) {
      rec.fail({{"trial", t}, {"case", json::parse(fc.to_json())}});
    }
  }
  rec.result.detail = "zero weights give the identity";
  return rec.result;
}

PropertyResult prop_determinism(const CheckOptions& o) {
  Recorder rec("model.determinism");
  std::mt19937_64 rng(o.seed ^ 0x2003);
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    const VariantSpec spec = random_tiny_variant(rng);
    const std::uint64_t seed = rng();
    const ModelParams a = build_model(spec, seed), b = build_model(spec, seed);
    bool same = a.store.size() == b.store.size();
    for (std::size_t i = 0; same && i < a.store.size(); ++i) {
      same = a.store.entries()[i].first == b.store.entries()[i].first &&
             bit_equal(a.store.entries()[i].second, b.store.entries()[i].second);
    }
    Tensor image = random_tensor({1, 32, 32, 3}, rng);
    Tape tape(Tape::Mode::kInference);
    same = same && bit_equal(favit_forward(tape, image, a, spec).logits, favit_forward(tape, image, b, spec).logits);
    if (!same) rec.fail({{"trial", t}, {"seed", seed}, {"variant", json::parse(variant_to_json_text(spec))}});
  }
  rec.result.detail = "same seed, same bits";
  return rec.result;
}

PropertyResult prop_serialization(const CheckOptions& o) {
  Recorder rec("model.serialization_round_trip");
  std::mt19937_64 rng(o.seed ^ 0x2004);
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    const VariantSpec spec = random_tiny_variant(rng);
    const std::uint64_t seed = rng();
    const ModelParams src = build_model(spec, seed);
    ModelParams dst = build_model(spec, seed + 1);
    std::stringstream buf;
    write_weights(buf, src.store.entries());
    assign_weights(dst.store, read_weights(buf));
    Tensor image = random_tensor({1, 32, 32, 3}, rng);
    Tape tape(Tape::Mode::kInference);
    if (!bit_equal(favit_forward(tape, image, src, spec).logits, favit_forward(tape, image, dst, spec).logits)) {
      rec.fail({{"trial", t}, {"seed", seed}, {"variant", json::parse(variant_to_json_text(spec))}});
    }
  }
  rec.result.detail = "save, load, forward bit-identical";
  return rec.result;
}

PropertyResult prop_differentiability(const CheckOptions& o) {
  Recorder rec("model.differentiability");
  std::mt19937_64 rng(o.seed ^ 0x2005);
  const std::size_t trials = std::min<std::size_t>(o.trials, 20);
  for (std::size_t t = 0; t < trials; ++t) {
    rec.trial();
    const VariantSpec spec = random_tiny_variant(rng);
    ModelParams m = build_model(spec, rng());
    const std::size_t batch = pick(rng, 1, 3);
    Tensor images = random_tensor({batch, 32, 32, 3}, rng);
    std::vector<std::size_t> labels(batch);
    for (auto& l : labels) l = pick(rng, 0, spec.num_classes - 1);
    Tape tape;
    tape.backward(ops::cross_entropy(tape, favit_forward(tape, images, m, spec).logits, labels));
    for (const auto& [name, p] : m.store.entries()) {
      const bool finite = std::ranges::all_of(p.grad(), [](double g) { return std::isfinite(g); });
      const bool live = std::ranges::any_of(p.grad(), [](double g) { return g != 0.0; });
      if (!p.has_grad() || !finite || !live) {
        rec.fail({{"trial", t}, {"parameter", name}, {"finite", finite}, {"nonzero", live}});
      }
    }
  }
  rec.result.detail = "every parameter receives a finite nonzero gradient";
  return rec.result;
}

// ---------------------------------------------------------------- grads

// Resamples the input until every max fusion has a clear winner, so a step
// of size kDefaultFdStep cannot flip an argmax.
constexpr double kTieMargin = 1e-4;
constexpr int kMaxResamples = 1000;

void resample_until(const std::function<bool()>& clear, const std::function<void()>& redraw) {
  for (int i = 0; i < kMaxResamples; ++i) {
    if (clear()) return;
    redraw();
  }
  throw ContractError("could not draw an input free of fusion ties");
}

bool clear_of_ties(const Tensor& x, const FasaConfig& cfg, const FasaParams& p) {
  if (cfg.fusion != Fusion::kMax) return true;
  Tape tape(Tape::Mode::kInference);
  FasaResult r = fasa_forward(tape, x, cfg, p, true);
  for (const auto& tr : r.traces) {
    if (fusion_margin(tr.window_keys) < kTieMargin) return false;
  }
  // The trace keeps only the key stacks; rebuild the value stacks.
  const auto groups = split_groups(tape, x, cfg);
  for (std::size_t g = 0; g < cfg.groups(); ++g) {
    WindowPartition part = partition_windows(tape, groups[g], cfg.window_side(g), cfg.sample_side);
    SampledWindows s = dilated_sample(tape, part, cfg.sample_side, cfg.dilations[g]);
    auto [k, v] = embed_keys_values(tape, s.samples, p.wk[g], p.wv[g]);
    if (fusion_margin(v) < kTieMargin) return false;
  }
  return true;
}

void track(Recorder& rec, double& worst, const oracle::OracleReport& r, const json& example) {
  worst = std::max(worst, r.max_rel);
  if (!r.pass) {
    json e = example;
    e["case"] = r.case_id;
    e["max_rel"] = r.max_rel;
    e["max_abs"] = r.max_abs;
    rec.fail(e);
  }
}

PropertyResult prop_grad_kernel_ops(const CheckOptions& o) {
  Recorder rec("grads.kernel_ops");
  std::mt19937_64 rng(o.seed ^ 0x3001);
  double worst = 0.0;
  const std::size_t trials = std::min<std::size_t>(o.trials, 10);
  for (std::size_t t = 0; t < trials; ++t) {
    rec.trial();
    const json ex{{"trial", t}};
    {
      const std::size_t stride = pick(rng, 1, 2), pad = pick(rng, 0, 1);
      Tensor x = random_tensor({pick(rng, 1, 2), 5, 6, 2}, rng), k = random_tensor({3, 3, 2, 3}, rng),
             b = random_tensor({3}, rng);
      std::vector<Tensor> wrt{x, k, b};
      track(rec, worst,
            oracle::fd_check([&](Tape& tp) { return probe_sum(tp, ops::conv2d(tp, x, k, stride, pad, b)); }, wrt,
                             oracle::kDefaultFdStep, "conv2d"),
            ex);
    }
    {
      Tensor x = random_tensor({3, 5}, rng), g = random_tensor({5}, rng), b = random_tensor({5}, rng);
      std::vector<Tensor> wrt{x, g, b};
      track(rec, worst,
            oracle::fd_check([&](Tape& tp) { return probe_sum(tp, ops::layer_norm(tp, x, g, b)); }, wrt,
                             oracle::kDefaultFdStep, "layer_norm"),
            ex);
    }
    {
      Tensor x = random_tensor({4, 6}, rng, 2.0);
      std::vector<Tensor> wrt{x};
      track(rec, worst,
            oracle::fd_check([&](Tape& tp) { return probe_sum(tp, ops::gelu(tp, x)); }, wrt, oracle::kDefaultFdStep,
                             "gelu"),
            ex);
      track(rec, worst,
            oracle::fd_check([&](Tape& tp) { return probe_sum(tp, ops::softmax_rows(tp, x)); }, wrt,
                             oracle::kDefaultFdStep, "softmax_rows"),
            ex);
      const std::vector<std::size_t> labels{0, 5, 2, 3};
      track(rec, worst,
            oracle::fd_check([&](Tape& tp) { return ops::cross_entropy(tp, x, labels); }, wrt, oracle::kDefaultFdStep,
                             "cross_entropy"),
            ex);
    }
    {
      Tensor a = random_tensor({2, 3, 4}, rng), b = random_tensor({2, 5, 4}, rng), c = random_tensor({2, 4, 5}, rng);
      std::vector<Tensor> wrt{a, b, c};
      track(rec, worst,
            oracle::fd_check(
                [&](Tape& tp) {
                  Tensor s = ops::batched_matmul_nt(tp, a, b);
                  return probe_sum(tp, ops::batched_matmul(tp, ops::split_heads(tp, ops::merge_heads(tp, s, 1), 1),
                                                           ops::reshape(tp, c, {2, 5, 4})));
                },
                wrt, oracle::kDefaultFdStep, "batched_matmul"),
            ex);
    }
    {
      Tensor x = random_tensor({1, 4, 5, 4}, rng), bias = random_tensor({2}, rng);
      std::vector<Tensor> wrt{x, bias};
      track(rec, worst,
            oracle::fd_check(
                [&](Tape& tp) {
                  Tensor padded = ops::pad_spatial(tp, x, 6, 6);
                  Tensor lo = ops::slice_channels(tp, padded, 0, 2), hi = ops::slice_channels(tp, padded, 2, 2);
                  std::vector<Tensor> parts{ops::add_bias(tp, hi, bias), lo};
                  Tensor cat = ops::concat_channels(tp, parts);
                  Tensor heads = ops::merge_heads(tp, ops::split_heads(tp, ops::reshape(tp, cat, {1, 36, 4}), 2), 2);
                  return probe_sum(tp, ops::global_avg_pool(tp, ops::reshape(tp, heads, {1, 6, 6, 4})));
                },
                wrt, oracle::kDefaultFdStep, "pad_slice_concat_heads_pool"),
            ex);
    }
    {
      Tensor stack = random_tensor({2, 3, 4, 3}, rng);
      resample_until([&] { return fusion_margin(stack) >= kTieMargin; }, [&] { fill_normal(stack, rng); });
      std::vector<Tensor> wrt{stack};
      track(rec, worst,
            oracle::fd_check([&](Tape& tp) { return probe_sum(tp, ops::max_reduce_over_windows(tp, stack)); }, wrt,
                             oracle::kDefaultFdStep, "max_fusion"),
            ex);
      track(rec, worst,
            oracle::fd_check([&](Tape& tp) { return probe_sum(tp, ops::mean_reduce_over_windows(tp, stack)); }, wrt,
                             oracle::kDefaultFdStep, "mean_fusion"),
            ex);
    }
    {
      Tensor x = random_tensor({2, 5, 5, 2}, rng);
      std::vector<IndexGrid> grids{IndexGrid::dilated(5, 5, {0, 0}, 3, 2), IndexGrid::dilated(5, 5, {1, 1}, 3, 1)};
      std::vector<Tensor> wrt{x};
      track(rec, worst,
            oracle::fd_check([&](Tape& tp) { return probe_sum(tp, ops::gather_windows(tp, x, grids)); }, wrt,
                             oracle::kDefaultFdStep, "gather_windows"),
            ex);
    }
  }
  rec.result.detail = "max rel err = " + sci(worst);
  return rec.result;
}

PropertyResult prop_grad_fasa(const CheckOptions& o) {
  Recorder rec("grads.fasa_forward");
  std::mt19937_64 rng(o.seed ^ 0x3002);
  double worst = 0.0;
  const std::size_t trials = std::min<std::size_t>(o.trials, 20);
  for (std::size_t t = 0; t < trials; ++t) {
    rec.trial();
    FasaCase fc = random_divisible_case(rng, 6);
    ParamStore store(o.seed + t);
    FasaParams p = random_params(store, fc.cfg, rng, 0.5);
    Tensor x = random_tensor({fc.batch, fc.rows, fc.cols, fc.cfg.channels}, rng);
    resample_until([&] { return clear_of_ties(x, fc.cfg, p); }, [&] { fill_normal(x, rng); });
    std::vector<Tensor> wrt{x, p.wo};
    for (std::size_t g = 0; g < fc.cfg.groups(); ++g) {
      wrt.push_back(p.wq[g]);
      wrt.push_back(p.wk[g]);
      wrt.push_back(p.wv[g]);
    }
    track(rec, worst,
          oracle::fd_check([&](Tape& tp) { return probe_sum(tp, fasa_forward(tp, x, fc.cfg, p).output); }, wrt,
                           oracle::kDefaultFdStep, "fasa_forward"),
          {{"trial", t}, {"config", json::parse(fc.to_json())}});
  }
  rec.result.detail = "max rel err = " + sci(worst);
  return rec.result;
}

PropertyResult prop_grad_block(const CheckOptions& o) {
  Recorder rec("grads.block");
  std::mt19937_64 rng(o.seed ^ 0x3003);
  double worst = 0.0;
  const std::size_t trials = std::min<std::size_t>(o.trials, 10);
  for (std::size_t t = 0; t < trials; ++t) {
    rec.trial();
    // Layer norm over very few channels pins every position to the same
    // values, which ties every max fusion.
    FasaCase fc = random_divisible_case(rng, 6);
    while (fc.cfg.channels < 4) fc = random_divisible_case(rng, 6);
    ParamStore store(o.seed + t);
    BlockParams bp = BlockParams::create(store, "block", fc.cfg, 2);
    for (const auto& entry : store.entries()) {
      Tensor v = entry.second;
      fill_normal(v, rng, 0.5);
    }
    Tensor x = random_tensor({fc.batch, fc.rows, fc.cols, fc.cfg.channels}, rng);
    // The attention sees norm1(x); check ties on that input.
    auto normed = [&] {
      Tape tp(Tape::Mode::kInference);
      return ops::layer_norm(tp, x, bp.norm1_gain, bp.norm1_bias);
    };
    resample_until([&] { return clear_of_ties(normed(), fc.cfg, bp.attn); }, [&] { fill_normal(x, rng); });
    std::vector<Tensor> wrt{x};
    for (const auto& entry : store.entries()) wrt.push_back(entry.second);
    track(rec, worst,
          oracle::fd_check([&](Tape& tp) { return probe_sum(tp, block_forward(tp, x, bp, fc.cfg)); }, wrt,
                           oracle::kDefaultFdStep, "block"),
          {{"trial", t}, {"config", json::parse(fc.to_json())}});
  }
  rec.result.detail = "max rel err = " + sci(worst);
  return rec.result;
}

// ---------------------------------------------------------------- oracles

Tensor project_rows(const Tensor& x, const Tensor& w) {
  // x [n, c] times w^T, plain loops.
  const std::size_t n = x.dim(0), c = x.dim(1), o = w.dim(0);
  Tensor out({n, o});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < o; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < c; ++k) s += x[i * c + k] * w[j * c + k];
      out.data()[i * o + j] = s;
    }
  return out;
}

PropertyResult prop_dense_equivalence(const CheckOptions& o) {
  Recorder rec("oracles.dense_equivalence");
  std::mt19937_64 rng(o.seed ^ 0x4001);
  double worst = 0.0;
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    FasaConfig cfg;
    cfg.sample_side = 3 + 2 * (t % 3);
    cfg.channels = pick(rng, 1, 8);
    const std::size_t m = cfg.sample_side;
    ParamStore store(o.seed + t);
    FasaParams p = random_params(store, cfg, rng, 0.5);
    Tensor x = random_tensor({1, m, m, cfg.channels}, rng);
    Tape tape(Tape::Mode::kInference);
    Tensor got = fasa_forward(tape, x, cfg, p).output.view({m * m, cfg.channels});
    Tensor flat = x.view({m * m, cfg.channels});
    Tensor want = project_rows(
        oracle::dense_sa(flat, p.wq[0], p.wk[0], p.wv[0], std::sqrt(static_cast<double>(cfg.channels))), p.wo);
    const double d = max_abs_diff(got, want);
    worst = std::max(worst, d);
    if (!(d < 1e-10)) rec.fail({{"trial", t}, {"M", m}, {"channels", cfg.channels}, {"max_abs", d}});
  }
  rec.result.detail = "max |diff| = " + sci(worst);
  return rec.result;
}

PropertyResult prop_brute_force(const CheckOptions& o, bool padded) {
  Recorder rec(padded ? "oracles.brute_force_padded" : "oracles.brute_force");
  std::mt19937_64 rng(o.seed ^ (padded ? 0x4003 : 0x4002));
  double worst = 0.0;
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    FasaCase fc = padded ? random_padded_case(rng) : random_divisible_case(rng);
    ParamStore store(o.seed + t);
    FasaParams p = random_params(store, fc.cfg, rng, 0.5);
    Tensor x = random_tensor({fc.batch, fc.rows, fc.cols, fc.cfg.channels}, rng);
    Tape tape(Tape::Mode::kInference);
    const double d = max_abs_diff(fasa_forward(tape, x, fc.cfg, p).output, oracle::brute_force_fasa(x, fc.cfg, p));
    worst = std::max(worst, d);
    if (!(d < 1e-10)) rec.fail({{"trial", t}, {"case", json::parse(fc.to_json())}, {"max_abs", d}});
  }
  rec.result.detail = "max |diff| = " + sci(worst);
  return rec.result;
}

PropertyResult prop_window_dense(const CheckOptions& o) {
  Recorder rec("oracles.window_equals_dense");
  std::mt19937_64 rng(o.seed ^ 0x4004);
  double worst = 0.0;
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    const std::size_t side = pick(rng, 1, 8), c = pick(rng, 1, 6);
    Tensor x = random_tensor({side, side, c}, rng);
    Tensor wq = random_tensor({c, c}, rng, 0.5), wk = random_tensor({c, c}, rng, 0.5),
           wv = random_tensor({c, c}, rng, 0.5);
    const double scale = std::sqrt(static_cast<double>(c));
    Tensor win = oracle::window_sa(x, side, wq, wk, wv, scale);
    Tensor dense = oracle::dense_sa(x.view({side * side, c}), wq, wk, wv, scale);
    const double d = max_abs_diff(win.view({side * side, c}), dense);
    worst = std::max(worst, d);
    if (!(d < 1e-12)) rec.fail({{"trial", t}, {"side", side}, {"channels", c}, {"max_abs", d}});
  }
  rec.result.detail = "max |diff| = " + sci(worst);
  return rec.result;
}

PropertyResult prop_mac_laws(const CheckOptions& o) {
  Recorder rec("oracles.mac_counting");
  std::mt19937_64 rng(o.seed ^ 0x4005);
  using flops::Mechanism;
  for (std::size_t t = 0; t < o.trials; ++t) {
    rec.trial();
    // Dense and window attention hit their closed forms exactly.
    const std::size_t m = pick(rng, 2, 4), c = pick(rng, 1, 8);
    const std::size_t rows = m * pick(rng, 1, 3), cols = m * pick(rng, 1, 3);
    const std::uint64_t n = rows * cols;
    Tensor x = random_tensor({1, rows, cols, c}, rng);
    Tensor wq = random_tensor({c, c}, rng), wk = random_tensor({c, c}, rng), wv = random_tensor({c, c}, rng),
           wo = random_tensor({c, c}, rng);
    const auto dense = flops::measure_macs([&](Tape& tp) { flops::dense_attention(tp, x, wq, wk, wv, wo); });
    const auto window = flops::measure_macs([&](Tape& tp) { flops::window_attention(tp, x, m, wq, wk, wv, wo); });
    if (flops::WideCount(dense) != flops::formula_macs(Mechanism::kDenseSa, n, c)) {
      rec.fail({{"trial", t}, {"law", "dense exact"}, {"N", n}, {"C", c}, {"measured", dense}});
    }
    if (flops::WideCount(window) != flops::formula_macs(Mechanism::kWindowSa, n, c, m)) {
      rec.fail({{"trial", t}, {"law", "window exact"}, {"N", n}, {"C", c}, {"M", m}, {"measured", window}});
    }

    // FaSA stays under its bound on divisible maps; the gap is the query
    // grouping plus the keys and values that were never embedded.
    FasaCase fc = random_divisible_case(rng);
    ParamStore store(o.seed + t);
    FasaParams p = random_params(store, fc.cfg, rng, 0.5);
    Tensor xf = random_tensor({1, fc.rows, fc.cols, fc.cfg.channels}, rng);
    const auto fasa = flops::measure_macs([&](Tape& tp) { fasa_forward(tp, xf, fc.cfg, p); });
    const std::uint64_t nf = fc.rows * fc.cols, cf = fc.cfg.channels, cg = fc.cfg.group_channels();
    const std::uint64_t mm = fc.cfg.keys_per_group();
    const auto bound = flops::formula_macs(Mechanism::kFasa, nf, cf, fc.cfg.sample_side);
    // Full-width Q, K, V would cost 3 N C^2; grouped queries cost N C c' and
    // each group embeds only its sampled keys and values.
    flops::WideCount gap = 3 * flops::WideCount(nf) * cf * cf - flops::WideCount(nf) * cf * cg;
    for (std::size_t g = 0; g < fc.cfg.groups(); ++g) {
      const std::size_t s = fc.cfg.window_side(g);
      const std::uint64_t sampled = (fc.rows / s) * (fc.cols / s) * mm;
      gap -= 2 * flops::WideCount(sampled) * cg * cg;
    }
    if (flops::WideCount(fasa) > bound || bound - fasa != gap) {
      rec.fail({{"trial", t},
                {"law", "fasa bound"},
                {"case", json::parse(fc.to_json())},
                {"measured", fasa},
                {"bound", bound.str()},
                {"expected_gap", gap.str()}});
    }

    // Linear in N, and equal to dense at N = M^2.
    const std::uint64_t a = pick(rng, 2, 64);
    if (flops::formula_macs(Mechanism::kFasa, a * nf, cf, fc.cfg.sample_side) != a * bound) {
      rec.fail({{"trial", t}, {"law", "fasa linear"}, {"a", a}});
    }
    if (flops::formula_macs(Mechanism::kDenseSa, m * m, c) != flops::formula_macs(Mechanism::kFasa, m * m, c, m)) {
      rec.fail({{"trial", t}, {"law", "degenerate equality"}, {"M", m}, {"C", c}});
    }
  }
  rec.result.detail = "dense, window exact; fasa under bound";
  return rec.result;
}

PropertyResult prop_sweep_determinism(const CheckOptions& o) {
  Recorder rec("oracles.sweep_determinism");
  const VariantSpec spec = load_variant("B0");
  const std::vector<std::size_t> sizes{32, 64, 96};
  for (auto mech : {flops::Mechanism::kFasa, flops::Mechanism::kDenseSa, flops::Mechanism::kWindowSa}) {
    rec.trial();
    flops::SweepOptions opt;
    opt.seed = o.seed;
    // Window attention needs maps the window divides: stage 4 at 224 and 448.
    const bool window = mech == flops::Mechanism::kWindowSa;
    opt.stage = window ? 3 : 0;
    const std::vector<std::size_t> run_sizes = window ? std::vector<std::size_t>{224, 448} : sizes;
    std::ostringstream a, b;
    const auto ra = flops::sweep(mech, spec, run_sizes, opt);
    const auto rb = flops::sweep(mech, spec, run_sizes, opt);
    flops::write_sweep_csv(a, ra);
    flops::write_sweep_csv(b, rb);
    if (a.str() != b.str()) rec.fail({{"mechanism", flops::mechanism_name(mech)}});
  }
  rec.result.detail = "repeated sweeps give identical CSV";
  return rec.result;
}

}  // namespace

void fill_normal(Tensor& t, std::mt19937_64& rng, double sigma) {
  std::normal_distribution<double> dist(0.0, sigma);
  for (auto& v : t.data()) v = dist(rng);
}

double fusion_margin(const Tensor& stack) {
  if (stack.rank() != 4) throw ConfigError("fusion_margin: expected [b,w,p,c], got " + to_string(stack.shape()));
  const std::size_t b = stack.dim(0), w = stack.dim(1), p = stack.dim(2), c = stack.dim(3);
  double margin = std::numeric_limits<double>::infinity();
  if (w < 2) return margin;
  for (std::size_t bi = 0; bi < b; ++bi)
    for (std::size_t k = 0; k < p * c; ++k) {
      double top = -std::numeric_limits<double>::infinity(), second = top;
      for (std::size_t wi = 0; wi < w; ++wi) {
        const double v = stack[(bi * w + wi) * p * c + k];
        if (v > top) {
          second = top;
          top = v;
        } else if (v > second) {
          second = v;
        }
      }
      margin = std::min(margin, top - second);
    }
  return margin;
}

std::string FasaCase::to_json() const {
  json j{{"sample_side", cfg.sample_side},
         {"dilations", cfg.dilations},
         {"heads_per_group", cfg.heads_per_group},
         {"channels", cfg.channels},
         {"fusion", fusion_name(cfg.fusion)},
         {"batch", batch},
         {"rows", rows},
         {"cols", cols}};
  return j.dump();
}

FasaCase random_divisible_case(std::mt19937_64& rng, std::size_t max_side) {
  FasaCase fc;
  fc.cfg = random_config(rng, max_side);
  const std::size_t l = lcm_all(fc.cfg);
  fc.batch = pick(rng, 1, 2);
  fc.rows = l * pick(rng, 1, max_side / l);
  fc.cols = l * pick(rng, 1, max_side / l);
  return fc;
}

FasaCase random_padded_case(std::mt19937_64& rng, std::size_t max_side) {
  FasaCase fc;
  fc.cfg = random_config(rng, std::numeric_limits<std::size_t>::max());
  fc.batch = pick(rng, 1, 2);
  fc.rows = pick(rng, 1, max_side);
  fc.cols = pick(rng, 1, max_side);
  return fc;
}

VariantSpec random_tiny_variant(std::mt19937_64& rng) {
  VariantSpec spec;
  spec.name = "tiny";
  spec.sample_side = pick(rng, 2, 3);
  spec.fusion = pick(rng, 0, 1) == 0 ? Fusion::kMax : Fusion::kMean;
  spec.num_classes = pick(rng, 2, 4);
  const std::vector<std::vector<std::size_t>> rate_sets{{1}, {1, 2}, {1, 3}};
  for (std::size_t s = 0; s < kStages; ++s) {
    auto& st = spec.stages[s];
    st.patch_size = s == 0 ? 4 : 2;
    st.dilations = rate_sets[pick(rng, 0, s < 2 ? 2 : 0)];
    st.heads = pick(rng, 1, 2);
    // Two or more channels per head: layer norm over one channel has no input gradient.
    st.channels = st.dilations.size() * st.heads * pick(rng, 2, 3);
    st.mlp_ratio = pick(rng, 1, 2);
    st.blocks = pick(rng, 1, 2);
  }
  spec.validate();
  return spec;
}

std::vector<PropertyResult> check_fasa(const CheckOptions& o) {
  return {prop_key_count(o),     prop_fusion_permutation(o), prop_shift_covariance(o), prop_softmax_rows(o),
          prop_channel_locality(o), prop_mac_determinism(o),   prop_gather_round_trip(o)};
}

std::vector<PropertyResult> check_model(const CheckOptions& o) {
  return {prop_pyramid_shapes(o), prop_residual_identity(o), prop_determinism(o), prop_serialization(o),
          prop_differentiability(o)};
}

std::vector<PropertyResult> check_grads(const CheckOptions& o) {
  return {prop_grad_kernel_ops(o), prop_grad_fasa(o), prop_grad_block(o)};
}

std::vector<PropertyResult> check_oracles(const CheckOptions& o) {
  return {prop_dense_equivalence(o), prop_brute_force(o, false), prop_brute_force(o, true), prop_window_dense(o),
          prop_mac_laws(o),          prop_sweep_determinism(o)};
}

std::vector<PropertyResult> run_scope(std::string_view scope, const CheckOptions& o) {
  if (scope == "fasa") return check_fasa(o);
  if (scope == "model") return check_model(o);
  if (scope == "grads") return check_grads(o);
  if (scope == "oracles") return check_oracles(o);
  if (scope == "all") {
    std::vector<PropertyResult> all;
    for (auto part : {check_fasa(o), check_model(o), check_grads(o), check_oracles(o)}) {
      all.insert(all.end(), part.begin(), part.end());
    }
    return all;
  }
  throw ConfigError("unknown check scope '" + std::string(scope) + "' (fasa, model, grads, oracles, all)");
}

std::string format_line(const PropertyResult& r) {
  return std::string(r.pass ? "PASS " : "FAIL ") + r.name + " trials=" + std::to_string(r.trials) + " " + r.detail;
}

}  // namespace favit::checks
