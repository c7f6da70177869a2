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

#include "favit/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "favit/error.hpp"

namespace favit::oracle {

OracleReport compare(std::string case_id, const Tensor& actual, const Tensor& expected, double tolerance) {
  if (actual.shape() != expected.shape()) {
    throw ConfigError("compare: shapes " + to_string(actual.shape()) + " and " + to_string(expected.shape()));
  }
  OracleReport r;
  r.case_id = std::move(case_id);
  r.tolerance = tolerance;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const double diff = std::abs(actual[i] - expected[i]);
    const double denom = std::max({std::abs(actual[i]), std::abs(expected[i]), 1e-8});
    r.max_abs = std::max(r.max_abs, diff);
    r.max_rel = std::max(r.max_rel, diff / denom);
  }
  r.pass = r.max_abs < tolerance;
  return r;
}

namespace {

// Rows of x (n x c, row-major) times w^T where w is (out, in) = (c, c).
std::vector<double> project(const double* x, std::size_t n, std::size_t c, const double* w, std::size_t out) {
  std::vector<double> y(n * out, 0.0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < c; ++i) acc += w[o * c + i] * x[t * c + i];
      y[t * out + o] = acc;
    }
  return y;
}

// Attention of nq queries over nk keys, all with row stride `stride` and
// reading `d` columns starting at `col`. Writes into out rows (same layout).
void attend(const double* q, const double* k, const double* v, std::size_t nq, std::size_t nk, std::size_t stride,
            std::size_t col, std::size_t d, double scale, double* out) {
  std::vector<double> w(nk);
  for (std::size_t i = 0; i < nq; ++i) {
    double peak = -INFINITY;
    for (std::size_t j = 0; j < nk; ++j) {
      double s = 0.0;
      for (std::size_t e = 0; e < d; ++e) s += q[i * stride + col + e] * k[j * stride + col + e];
      w[j] = s / scale;
      peak = std::max(peak, w[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < nk; ++j) {
      w[j] = std::exp(w[j] - peak);
      z += w[j];
    }
    for (std::size_t e = 0; e < d; ++e) {
      double acc = 0.0;
      for (std::size_t j = 0; j < nk; ++j) acc += w[j] / z * v[j * stride + col + e];
      out[i * stride + col + e] = acc;
    }
  }
}

void require_square(const char* what, const Tensor& w, std::size_t c) {
  if (w.rank() != 2 || w.dim(0) != c || w.dim(1) != c) {
    throw ConfigError(std::string(what) + ": weight " + to_string(w.shape()) + " is not " + std::to_string(c) + "x" +
                      std::to_string(c));
  }
}

}  // namespace

Tensor dense_sa(const Tensor& x, const Tensor& wq, const Tensor& wk, const Tensor& wv, double scale) {
  if (x.rank() != 2) throw ConfigError("dense_sa: expected [N, C], got " + to_string(x.shape()));
  const std::size_t n = x.dim(0), c = x.dim(1);
  require_square("dense_sa", wq, c);
  require_square("dense_sa", wk, c);
  require_square("dense_sa", wv, c);
  const auto q = project(x.data().data(), n, c, wq.data().data(), c);
  const auto k = project(x.data().data(), n, c, wk.data().data(), c);
  const auto v = project(x.data().data(), n, c, wv.data().data(), c);
  Tensor out({n, c});
  attend(q.data(), k.data(), v.data(), n, n, c, 0, c, scale, out.data().data());
  return out;
}

Tensor window_sa(const Tensor& x, std::size_t window, const Tensor& wq, const Tensor& wk, const Tensor& wv,
                 double scale) {
  if (x.rank() != 3) throw ConfigError("window_sa: expected [h, w, c], got " + to_string(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw ConfigError("window_sa: window " + std::to_string(window) + " does not divide " + to_string(x.shape()));
  }
  Tensor out({h, w, c});
  std::vector<double> tile(window * window * c);
  for (std::size_t r0 = 0; r0 < h; r0 += window)
    for (std::size_t c0 = 0; c0 < w; c0 += window) {
      for (std::size_t r = 0; r < window; ++r)
        for (std::size_t cc = 0; cc < window; ++cc)
          for (std::size_t k = 0; k < c; ++k)
            tile[(r * window + cc) * c + k] = x[((r0 + r) * w + c0 + cc) * c + k];
      Tensor attended = dense_sa(Tensor({window * window, c}, tile), wq, wk, wv, scale);
      for (std::size_t r = 0; r < window; ++r)
        for (std::size_t cc = 0; cc < window; ++cc)
          for (std::size_t k = 0; k < c; ++k)
            out.data()[((r0 + r) * w + c0 + cc) * c + k] = attended[(r * window + cc) * c + k];
    }
  return out;
}

Tensor brute_force_fasa(const Tensor& x, const FasaConfig& cfg, const FasaParams& params) {
  cfg.validate();
  if (x.rank() != 4 || x.dim(3) != cfg.channels) {
    throw ConfigError("brute_force_fasa: input " + to_string(x.shape()) + " vs " + std::to_string(cfg.channels) +
                      " channels");
  }
  const std::size_t nb = x.dim(0), h = x.dim(1), w = x.dim(2), c = cfg.channels;
  const std::size_t n = h * w, cg = cfg.group_channels(), m = cfg.sample_side, p = m * m;
  const std::size_t heads = cfg.heads_per_group, d = cg / heads;
  Tensor out({nb, h, w, c});

  for (std::size_t b = 0; b < nb; ++b) {
    const double* xb = x.data().data() + b * n * c;
    std::vector<double> concat(n * c, 0.0);
    for (std::size_t g = 0; g < cfg.groups(); ++g) {
      const double* wq = params.wq[g].data().data();
      const double* wk = params.wk[g].data().data();
      const double* wv = params.wv[g].data().data();
      const std::size_t off = g * cg;
      const std::size_t dil = cfg.dilations[g];
      const std::size_t side = dil * (m - 1) + 1;
      const std::size_t wd = (h + side - 1) / side, wa = (w + side - 1) / side;

      std::vector<double> q(n * cg, 0.0);
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t o = 0; o < cg; ++o) {
          double acc = 0.0;
          for (std::size_t i = 0; i < cg; ++i) acc += wq[o * cg + i] * xb[t * c + off + i];
          q[t * cg + o] = acc;
        }

      // Embedded samples for every window, then fused across windows.
      const std::size_t nw = wd * wa;
      std::vector<double> kw(nw * p * cg), vw(nw * p * cg);
      for (std::size_t wr = 0; wr < wd; ++wr)
        for (std::size_t wc = 0; wc < wa; ++wc) {
          const std::size_t j = wr * wa + wc;
          for (std::size_t a = 0; a < m; ++a)
            for (std::size_t bb = 0; bb < m; ++bb) {
              const std::size_t row = wr * side + a * dil, col = wc * side + bb * dil;
              const std::size_t s = a * m + bb;
              for (std::size_t o = 0; o < cg; ++o) {
                double ak = 0.0, av = 0.0;
                if (row < h && col < w) {
                  for (std::size_t i = 0; i < cg; ++i) {
                    const double xv = xb[(row * w + col) * c + off + i];
                    ak += wk[o * cg + i] * xv;
                    av += wv[o * cg + i] * xv;
                  }
                }
                kw[(j * p + s) * cg + o] = ak;
                vw[(j * p + s) * cg + o] = av;
              }
            }
        }
      std::vector<double> k(p * cg), v(p * cg);
      for (std::size_t e = 0; e < p * cg; ++e) {
        double fk = kw[e], fv = vw[e];
        for (std::size_t j = 1; j < nw; ++j) {
          if (cfg.fusion == Fusion::kMax) {
            fk = std::max(fk, kw[j * p * cg + e]);
            fv = std::max(fv, vw[j * p * cg + e]);
          } else {
            fk += kw[j * p * cg + e];
            fv += vw[j * p * cg + e];
          }
        }
        if (cfg.fusion == Fusion::kMean) {
          fk /= static_cast<double>(nw);
          fv /= static_cast<double>(nw);
        }
        k[e] = fk;
        v[e] = fv;
      }

      std::vector<double> attended(n * cg);
      for (std::size_t hd = 0; hd < heads; ++hd)
        attend(q.data(), k.data(), v.data(), n, p, cg, hd * d, d, std::sqrt(static_cast<double>(d)),
               attended.data());
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t o = 0; o < cg; ++o) concat[t * c + off + o] = attended[t * cg + o];
    }
    const double* wo = params.wo.data().data();
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t o = 0; o < c; ++o) {
        double acc = 0.0;
        for (std::size_t i = 0; i < c; ++i) acc += wo[o * c + i] * concat[t * c + i];
        out.data()[(b * n + t) * c + o] = acc;
      }
  }
  return out;
}

OracleReport fd_check(const ScalarFunction& f, std::span<Tensor> wrt, double step, std::string case_id,
                      double tolerance) {
  if (!(step > 0.0)) throw ContractError("fd_check: step must be positive");
  for (auto& t : wrt) t.zero_grad();
  std::vector<std::vector<double>> analytic;
  {
    Tape tape;
    Tensor root = f(tape);
    if (!std::isfinite(root.item())) throw ContractError("fd_check: function value is not finite");
    tape.backward(root);
    for (auto& t : wrt) {
      analytic.emplace_back(t.size(), 0.0);
      if (t.has_grad()) std::ranges::copy(t.grad(), analytic.back().begin());
    }
  }
  auto evaluate = [&f]() {
    Tape tape(Tape::Mode::kInference);
    const double v = f(tape).item();
    if (!std::isfinite(v)) throw ContractError("fd_check: function value is not finite");
    return v;
  };

  // Central differences cannot resolve derivatives far below the largest
  // one: f carries round-off of order ulp(f), which the 2e division turns
  // into an absolute error floor. Judge such coordinates at that floor.
  double largest = 0.0;
  for (const auto& g : analytic)
    for (double v : g) largest = std::max(largest, std::abs(v));
  const double floor = std::max(kFdMinDenominator, kFdRelativeFloor * largest);

  OracleReport r;
  r.case_id = std::move(case_id);
  r.tolerance = tolerance;
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto data = wrt[ti].data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = evaluate();
      data[i] = saved - step;
      const double down = evaluate();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[ti][i];
      const double diff = std::abs(a - numeric);
      r.max_abs = std::max(r.max_abs, diff);
      r.max_rel = std::max(r.max_rel, diff / std::max({std::abs(a), std::abs(numeric), floor}));
    }
  }
  r.pass = r.max_rel < tolerance;
  return r;
}

void write_reports_csv(std::ostream& out, std::span<const OracleReport> reports) {
  out << "case,max_abs,max_rel,pass\n";
  for (const auto& r : reports) {
    out << r.case_id << ',' << std::setprecision(6) << std::scientific << r.max_abs << ',' << r.max_rel << ','
        << (r.pass ? "true" : "false") << '\n';
  }
  out << std::defaultfloat;
}

}  // namespace favit::oracle
