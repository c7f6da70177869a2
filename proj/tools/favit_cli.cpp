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

#include <cmath>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "favit/attnmap.hpp"
#include "favit/checks.hpp"
#include "favit/error.hpp"
#include "favit/flops.hpp"
#include "favit/model.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kVerificationFailed = 1;
constexpr int kUsageError = 2;

// Table I parameter counts, in millions.
const std::map<std::string, double> kReferenceParams{{"B0", 3.0}, {"B1", 13.0}, {"B2", 24.0}, {"B3", 48.0}};
constexpr double kParamBand = 0.15;

struct ModelOptions {
  std::string variant = "B0";
  std::string config;
  std::string fusion;
  std::uint64_t seed = 42;
  std::string out = ".";

  favit::VariantSpec resolve() const {
    favit::VariantSpec spec = config.empty() ? favit::load_variant(variant) : favit::load_variant_file(config);
    if (!fusion.empty()) spec.fusion = favit::parse_fusion(fusion);
    spec.validate();
    return spec;
  }
  fs::path out_dir() const {
    fs::create_directories(out);
    return out;
  }
};

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  cmd->add_option("--variant", o.variant, "built-in variant: B0, B1, B2, B3");
  cmd->add_option("--config", o.config, "variant JSON file (overrides --variant)");
  cmd->add_option("--fusion", o.fusion, "cross-window fusion: max or mean");
  cmd->add_option("--seed", o.seed, "random seed");
  cmd->add_option("--out", o.out, "output directory");
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + "]";
}

int run_describe(const ModelOptions& o) {
  const auto spec = o.resolve();
  std::cout << spec.name << " sample_side=" << spec.sample_side << " fusion=" << favit::fusion_name(spec.fusion)
            << " classes=" << spec.num_classes << "\n";
  std::size_t reduction = 1;
  for (std::size_t s = 0; s < favit::kStages; ++s) {
    const auto& st = spec.stages[s];
    const auto cfg = favit::stage_fasa_config(spec, s);
    reduction *= st.patch_size;
    std::vector<std::size_t> sides;
    for (std::size_t g = 0; g < cfg.groups(); ++g) sides.push_back(cfg.window_side(g));
    std::cout << "stage " << s + 1 << ": P=" << st.patch_size << " C=" << st.channels << " H=" << st.heads
              << " E=" << st.mlp_ratio << " B=" << st.blocks << " D=" << join(st.dilations) << " S=" << join(sides)
              << " head_dim=" << cfg.head_dim() << " stride=" << reduction << "\n";
  }
  return kOk;
}

int run_paramcount(const ModelOptions& o) {
  const auto spec = o.resolve();
  const std::size_t count = favit::count_params(spec);
  std::cout << spec.name << " params=" << count;
  const auto ref = kReferenceParams.find(spec.name);
  if (!o.config.empty() || ref == kReferenceParams.end()) {
    std::cout << " (no reference count)\n";
    return kOk;
  }
  const double lo = ref->second * 1e6 * (1.0 - kParamBand), hi = ref->second * 1e6 * (1.0 + kParamBand);
  const bool pass = count >= lo && count <= hi;
  std::cout << " reference=" << ref->second << "M band=[" << std::llround(lo) << ","
            << std::llround(hi) << "] " << (pass ? "PASS" : "FAIL") << "\n";
  return pass ? kOk : kVerificationFailed;
}

int run_check(const std::string& scope, const ModelOptions& o) {
  favit::checks::CheckOptions opt;
  opt.seed = o.seed;
  const auto results = favit::checks::run_scope(scope, opt);
  const favit::checks::PropertyResult* first_failure = nullptr;
  for (const auto& r : results) {
    std::cout << favit::checks::format_line(r) << "\n";
    if (!r.pass && !first_failure) first_failure = &r;
  }
  if (!first_failure) return kOk;
  const fs::path path = o.out_dir() / "counterexample.json";
  std::ofstream(path) << "{\"property\":\"" << first_failure->name << "\",\"example\":" << first_failure->counterexample
                      << "}\n";
  std::cerr << "first counterexample written to " << path.string() << "\n";
  return kVerificationFailed;
}

struct BenchOptions {
  std::vector<std::size_t> sizes{224, 448, 896};
  std::string mechanism = "fasa";
  std::size_t stage = 1;
  bool timing = false;
};

int run_bench(const ModelOptions& o, const BenchOptions& b) {
  const auto spec = o.resolve();
  if (b.sizes.empty()) throw favit::ConfigError("bench: empty size list");
  if (b.stage < 1 || b.stage > favit::kStages) throw favit::ConfigError("bench: stage must be 1..4");
  const auto mech = favit::flops::parse_mechanism(b.mechanism);
  favit::flops::SweepOptions opt;
  opt.stage = b.stage - 1;
  opt.seed = o.seed;
  opt.timing = b.timing;
  const auto reports = favit::flops::sweep(mech, spec, b.sizes, opt);
  const fs::path path = o.out_dir() / ("bench_" + spec.name + "_" + b.mechanism + ".csv");
  {
    std::ofstream f(path, std::ios::binary);
    favit::flops::write_sweep_csv(f, reports);
  }
  std::cout << "wrote " << path.string() << " (" << reports.size() << " rows)\n";
  auto cost = [](const favit::flops::FlopReport& r) {
    return r.measured_macs ? static_cast<double>(*r.measured_macs) : r.formula_macs.convert_to<double>();
  };
  for (const auto& r : reports) {
    char line[160];
    std::snprintf(line, sizeof line, "size=%zu N=%llu cost/first=%.4f formula/first=%.4f%s", r.size,
                  static_cast<unsigned long long>(r.tokens), cost(r) / cost(reports.front()),
                  r.formula_macs.convert_to<double>() / reports.front().formula_macs.convert_to<double>(),
                  r.measured_macs ? "" : " (formula only)");
    std::cout << line << "\n";
  }
  const std::size_t degree = mech == favit::flops::Mechanism::kDenseSa ? 2 : 1;
  if (reports.size() > degree) {
    const auto fit = favit::flops::fit_cost(reports, degree);
    char line[96];
    std::snprintf(line, sizeof line, "degree-%zu fit relative residual=%.3e", degree, fit.relative_residual);
    std::cout << line << "\n";
  }
  return kOk;
}

// Binary PPM (P6, maxval 255) -> [1, h, w, 3] in [0, 1].
favit::Tensor read_ppm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw favit::ConfigError("cannot open image " + path.string());
  auto token = [&in]() {
    std::string t;
    while (in >> std::ws && in.peek() == '#') std::getline(in, t);
    in >> t;
    return t;
  };
  if (token() != "P6") throw favit::FormatError(path.string() + ": expected a binary PPM (P6)");
  std::size_t w = 0, h = 0, maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    throw favit::FormatError(path.string() + ": malformed PPM header");
  }
  if (maxval != 255 || w == 0 || h == 0) throw favit::FormatError(path.string() + ": only 8-bit PPM is supported");
  in.get();
  std::vector<unsigned char> bytes(w * h * 3);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw favit::FormatError(path.string() + ": truncated pixel data");
  }
  favit::Tensor img({1, h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data()[i] = bytes[i] / 255.0;
  return img;
}

struct AttnOptions {
  std::size_t stage = 1;
  std::vector<std::size_t> query;
  std::string image;
  std::size_t size = 224;
  bool trace = false;
};

int run_attnmap(const ModelOptions& o, const AttnOptions& a) {
  const auto spec = o.resolve();
  if (a.stage < 1 || a.stage > favit::kStages) throw favit::ConfigError("attnmap: stage must be 1..4");
  if (a.query.size() != 2) throw favit::ConfigError("attnmap: --query takes R,C");
  favit::Tensor image;
  if (a.image.empty()) {
    if (a.size == 0 || a.size % 32 != 0) throw favit::ConfigError("attnmap: --size must be a multiple of 32");
    std::mt19937_64 rng(o.seed);
    image = favit::Tensor({1, a.size, a.size, 3});
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& v : image.data()) v = u(rng);
  } else {
    image = read_ppm(a.image);
    if (image.dim(1) % 32 != 0 || image.dim(2) % 32 != 0) {
      throw favit::ConfigError("attnmap: image sides must be multiples of 32");
    }
  }
  const std::size_t s = a.stage - 1;
  const std::size_t rows = image.dim(1) >> (s + 2), cols = image.dim(2) >> (s + 2);
  if (a.query[0] >= rows || a.query[1] >= cols) {
    throw favit::IndexError("attnmap: query (" + std::to_string(a.query[0]) + "," + std::to_string(a.query[1]) +
                            ") outside the " + std::to_string(rows) + "x" + std::to_string(cols) + " stage map");
  }
  const auto params = favit::build_model(spec, o.seed);
  favit::Tape tape(favit::Tape::Mode::kInference);
  const auto result = favit::favit_forward(tape, image, params, spec, favit::BlockRef{s, 0});
  const auto spans = favit::attnmap::attribute(result.traces, spec.fusion, 0, a.query[0], a.query[1]);

  const fs::path dir = o.out_dir();
  const std::string stem = "attnmap_stage" + std::to_string(a.stage) + "_q" + std::to_string(a.query[0]) + "_" +
                           std::to_string(a.query[1]);
  {
    std::ofstream f(dir / (stem + ".csv"), std::ios::binary);
    favit::attnmap::write_csv(f, spans, a.query[0], a.query[1]);
  }
  for (const auto& span : spans) {
    const fs::path pgm = dir / (stem + "_group" + std::to_string(span.group) + ".pgm");
    std::ofstream f(pgm, std::ios::binary);
    favit::attnmap::write_pgm(f, span);
    std::size_t support = 0;
    for (std::size_t r = 0; r < span.rows; ++r)
      for (std::size_t c = 0; c < span.cols; ++c) support += span.weights[r * span.padded_cols + c] > 0.0;
    char line[200];
    std::snprintf(line, sizeof line, "group %zu: D=%zu S=%zu support=%zu mass_in_map=%.6f -> %s", span.group,
                  span.dilation, span.window_side, support, span.mass_in_map(), pgm.filename().string().c_str());
    std::cout << line << "\n";
  }
  if (a.trace) {
    std::ofstream f(dir / (stem + "_positions.csv"), std::ios::binary);
    f << "group,row,col,weight\n";
    for (const auto& span : spans) {
      for (std::size_t r = 0; r < span.padded_rows; ++r)
        for (std::size_t c = 0; c < span.padded_cols; ++c) {
          const double w = span.weights[r * span.padded_cols + c];
          if (w == 0.0) continue;
          char buf[48];
          std::snprintf(buf, sizeof buf, "%.17g", w);
          f << span.group << ',' << r << ',' << c << ',' << buf << '\n';
        }
    }
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FaViT reference implementation: build, verify, benchmark, visualize"};
  app.require_subcommand(1);

  ModelOptions model;
  std::string positional_variant;

  auto* describe = app.add_subcommand("describe", "print the per-stage configuration of a variant");
  describe->add_option("name", positional_variant, "variant name (same as --variant)");
  add_model_options(describe, model);

  auto* paramcount = app.add_subcommand("paramcount", "count parameters and compare with the reference size");
  paramcount->add_option("name", positional_variant, "variant name (same as --variant)");
  add_model_options(paramcount, model);

  std::string scope;
  auto* check = app.add_subcommand("check", "run property suites: fasa, model, grads, oracles, all");
  check->add_option("scope", scope, "suite to run")->required()->check(
      CLI::IsMember({"fasa", "model", "grads", "oracles", "all"}));
  add_model_options(check, model);

  BenchOptions bench_opt;
  auto* bench = app.add_subcommand("bench", "MAC sweep over input sizes, written as CSV");
  bench->add_option("name", positional_variant, "variant name (same as --variant)");
  add_model_options(bench, model);
  bench->add_option("--sizes", bench_opt.sizes, "comma-separated input sides (multiples of 32)")->delimiter(',');
  bench->add_option("--mechanism", bench_opt.mechanism, "fasa, dense_sa, window_sa or favit_variant");
  bench->add_option("--stage", bench_opt.stage, "stage whose width and resolution the attention uses (1-4)");
  bench->add_flag("--timing", bench_opt.timing, "also record best-of-5 wall time");

  AttnOptions attn_opt;
  auto* attn = app.add_subcommand("attnmap", "attention span of one query, as PGM maps and CSV");
  attn->add_option("name", positional_variant, "variant name (same as --variant)");
  add_model_options(attn, model);
  attn->add_option("--stage", attn_opt.stage, "stage (1-4); the first block of the stage is traced");
  attn->add_option("--query", attn_opt.query, "query position R,C in stage coordinates")->delimiter(',')->required();
  attn->add_option("--image", attn_opt.image, "binary PPM input (default: random image from --seed)");
  attn->add_option("--size", attn_opt.size, "side of the random input image");
  attn->add_flag("--trace", attn_opt.trace, "also write per-position attributed weights");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsageError;
  }
  if (!positional_variant.empty()) model.variant = positional_variant;

  try {
    if (*describe) return run_describe(model);
    if (*paramcount) return run_paramcount(model);
    if (*check) return run_check(scope, model);
    if (*bench) return run_bench(model, bench_opt);
    if (*attn) return run_attnmap(model, attn_opt);
  } catch (const favit::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const favit::IndexError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const favit::FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kVerificationFailed;
  }
  return kOk;
}
