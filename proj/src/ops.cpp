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

#include "favit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "favit/error.hpp"
#include "gemm.hpp"

namespace favit::ops {

namespace {

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw ConfigError(op + ": incompatible shapes " + to_string(a) + " and " + to_string(b));
}

void require_rank(const std::string& op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw ConfigError(op + ": expected rank " + std::to_string(rank) + ", got shape " + to_string(t.shape()));
  }
}

// Leading extent product, i.e. the number of rows when the trailing axis is
// the channel axis.
std::size_t leading(const Tensor& t) { return t.rank() == 0 ? 1 : t.size() / t.shape().back(); }

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) shape_error("matmul", a.shape(), b.shape());
  Tensor out({m, n});
  gemm::nn(m, k, n, a.data().data(), b.data().data(), out.data().data(), false);
  tape.add_macs(static_cast<std::uint64_t>(m) * k * n);
  tape.record(out, [a, b, out, m, k, n]() mutable {
    if (!out.has_grad()) return;
    gemm::nt(m, n, k, out.grad().data(), b.data().data(), a.mutable_grad().data(), true);
    gemm::tn_accumulate(m, k, n, a.data().data(), out.grad().data(), b.mutable_grad().data());
  });
  return out;
}

Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("matmul_nt", a, 2);
  require_rank("matmul_nt", b, 2);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k) shape_error("matmul_nt", a.shape(), b.shape());
  Tensor out({m, n});
  gemm::nt(m, k, n, a.data().data(), b.data().data(), out.data().data(), false);
  tape.add_macs(static_cast<std::uint64_t>(m) * k * n);
  tape.record(out, [a, b, out, m, k, n]() mutable {
    if (!out.has_grad()) return;
    gemm::nn(m, n, k, out.grad().data(), b.data().data(), a.mutable_grad().data(), true);
    gemm::tn_accumulate(m, n, k, out.grad().data(), a.data().data(), b.mutable_grad().data());
  });
  return out;
}

Tensor batched_matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("batched_matmul", a, 3);
  require_rank("batched_matmul", b, 3);
  const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != g || b.dim(1) != k) shape_error("batched_matmul", a.shape(), b.shape());
  Tensor out({g, m, n});
  for (std::size_t i = 0; i < g; ++i) {
    gemm::nn(m, k, n, a.data().data() + i * m * k, b.data().data() + i * k * n, out.data().data() + i * m * n,
             false);
  }
  tape.add_macs(static_cast<std::uint64_t>(g) * m * k * n);
  tape.record(out, [a, b, out, g, m, k, n]() mutable {
    if (!out.has_grad()) return;
    auto da = a.mutable_grad();
    auto db = b.mutable_grad();
    for (std::size_t i = 0; i < g; ++i) {
      const double* dc = out.grad().data() + i * m * n;
      gemm::nt(m, n, k, dc, b.data().data() + i * k * n, da.data() + i * m * k, true);
      gemm::tn_accumulate(m, k, n, a.data().data() + i * m * k, dc, db.data() + i * k * n);
    }
  });
  return out;
}

Tensor batched_matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank("batched_matmul_nt", a, 3);
  require_rank("batched_matmul_nt", b, 3);
  const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(1);
  if (b.dim(0) != g || b.dim(2) != k) shape_error("batched_matmul_nt", a.shape(), b.shape());
  Tensor out({g, m, n});
  for (std::size_t i = 0; i < g; ++i) {
    gemm::nt(m, k, n, a.data().data() + i * m * k, b.data().data() + i * n * k, out.data().data() + i * m * n,
             false);
  }
  tape.add_macs(static_cast<std::uint64_t>(g) * m * k * n);
  tape.record(out, [a, b, out, g, m, k, n]() mutable {
    if (!out.has_grad()) return;
    auto da = a.mutable_grad();
    auto db = b.mutable_grad();
    for (std::size_t i = 0; i < g; ++i) {
      const double* dc = out.grad().data() + i * m * n;
      gemm::nn(m, n, k, dc, b.data().data() + i * n * k, da.data() + i * m * k, true);
      gemm::tn_accumulate(m, n, k, dc, a.data().data() + i * m * k, db.data() + i * n * k);
    }
  });
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a.shape(), b.shape());
  Tensor out(a.shape());
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  tape.record(out, [a, b, out]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto da = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    auto db = b.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
  });
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  Tensor out(a.shape());
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  tape.record(out, [a, b, out]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto da = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * b[i];
    auto db = b.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * a[i];
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out(a.shape());
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * factor;
  tape.record(out, [a, out, factor]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto da = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
  });
  return out;
}

Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias) {
  if (x.rank() == 0 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    shape_error("add_bias", x.shape(), bias.shape());
  }
  const std::size_t c = bias.size(), rows = leading(x);
  Tensor out(x.shape());
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) o[r * c + j] = x[r * c + j] + bias[j];
  tape.record(out, [x, bias, out, rows, c]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto dx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    auto db = bias.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) db[j] += g[r * c + j];
  });
  return out;
}

Tensor sum(Tape& tape, const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  Tensor out = Tensor::scalar(total);
  tape.record(out, [a, out]() mutable {
    if (!out.has_grad()) return;
    const double g = out.grad()[0];
    for (double& d : a.mutable_grad()) d += g;
  });
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  return scale(tape, sum(tape, a), 1.0 / static_cast<double>(a.size()));
}

Tensor reshape(Tape& tape, const Tensor& a, Shape shape) {
  Tensor out = a.view(std::move(shape));
  tape.record(out, [a, out]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto da = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
  });
  return out;
}

Tensor softmax_rows(Tape& tape, const Tensor& a) {
  if (a.rank() == 0) throw ConfigError("softmax_rows: scalar input");
  const std::size_t n = a.shape().back(), rows = leading(a);
  Tensor out(a.shape());
  auto y = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = a.data().data() + r * n;
    double* yr = y.data() + r * n;
    const double peak = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(x[j] - peak);
      total += yr[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < n; ++j) yr[j] *= inv;
  }
  tape.record(out, [a, out, rows, n]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto y = out.data();
    auto da = a.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) da[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
  return out;
}

namespace {

struct WindowLayout {
  Shape out_shape;
  std::size_t outer;
  std::size_t windows;
  std::size_t inner;
};

WindowLayout window_layout(const std::string& op, const Tensor& stack) {
  if (stack.rank() < 3) {
    throw ConfigError(op + ": expected [..., windows, points, channels], got " + to_string(stack.shape()));
  }
  const auto& s = stack.shape();
  const std::size_t w_axis = s.size() - 3;
  if (s[w_axis] == 0) throw ConfigError(op + ": empty fusion (zero windows)");
  WindowLayout l;
  l.out_shape = Shape(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(w_axis));
  l.out_shape.push_back(s[w_axis + 1]);
  l.out_shape.push_back(s[w_axis + 2]);
  l.windows = s[w_axis];
  l.inner = s[w_axis + 1] * s[w_axis + 2];
  l.outer = stack.size() / (l.windows * l.inner);
  return l;
}

}  // namespace

Tensor max_reduce_over_windows(Tape& tape, const Tensor& stack) {
  const auto l = window_layout("max_reduce_over_windows", stack);
  Tensor out(l.out_shape);
  std::vector<std::uint32_t> argmax(out.size());
  auto o = out.data();
  const auto x = stack.data();
  for (std::size_t b = 0; b < l.outer; ++b) {
    const double* base = x.data() + b * l.windows * l.inner;
    for (std::size_t i = 0; i < l.inner; ++i) {
      double best = base[i];
      std::uint32_t arg = 0;
      for (std::size_t w = 1; w < l.windows; ++w) {
        const double v = base[w * l.inner + i];
        if (v > best) {
          best = v;
          arg = static_cast<std::uint32_t>(w);
        }
      }
      o[b * l.inner + i] = best;
      argmax[b * l.inner + i] = arg;
    }
  }
  tape.record(out, [stack, out, l, argmax = std::move(argmax)]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto dx = stack.mutable_grad();
    for (std::size_t b = 0; b < l.outer; ++b)
      for (std::size_t i = 0; i < l.inner; ++i) {
        const std::size_t k = b * l.inner + i;
        dx[(b * l.windows + argmax[k]) * l.inner + i] += g[k];
      }
  });
  return out;
}

Tensor mean_reduce_over_windows(Tape& tape, const Tensor& stack) {
  const auto l = window_layout("mean_reduce_over_windows", stack);
  Tensor out(l.out_shape);
  auto o = out.data();
  const auto x = stack.data();
  std::vector<double> column(l.windows);
  const double inv = 1.0 / static_cast<double>(l.windows);
  for (std::size_t b = 0; b < l.outer; ++b) {
    const double* base = x.data() + b * l.windows * l.inner;
    for (std::size_t i = 0; i < l.inner; ++i) {
      for (std::size_t w = 0; w < l.windows; ++w) column[w] = base[w * l.inner + i];
      std::sort(column.begin(), column.end());
      double total = 0.0;
      for (double v : column) total += v;
      o[b * l.inner + i] = total * inv;
    }
  }
  tape.record(out, [stack, out, l, inv]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto dx = stack.mutable_grad();
    for (std::size_t b = 0; b < l.outer; ++b)
      for (std::size_t w = 0; w < l.windows; ++w)
        for (std::size_t i = 0; i < l.inner; ++i) dx[(b * l.windows + w) * l.inner + i] += g[b * l.inner + i] * inv;
  });
  return out;
}

Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& kernel, std::size_t stride, std::size_t pad,
              const std::optional<Tensor>& bias) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", kernel, 4);
  if (stride == 0) throw ConfigError("conv2d: stride must be positive");
  const std::size_t nb = x.dim(0), h = x.dim(1), w = x.dim(2), cin = x.dim(3);
  const std::size_t kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
  if (kernel.dim(2) != cin) shape_error("conv2d", x.shape(), kernel.shape());
  if (kh > h + 2 * pad || kw > w + 2 * pad) {
    throw ConfigError("conv2d: kernel " + to_string(kernel.shape()) + " larger than padded input " +
                      to_string(x.shape()) + " with pad " + std::to_string(pad));
  }
  if (bias && (bias->rank() != 1 || bias->dim(0) != cout)) shape_error("conv2d bias", kernel.shape(), bias->shape());
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;

  Tensor out({nb, oh, ow, cout});
  auto o = out.data();
  const auto xd = x.data();
  const auto kd = kernel.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double* orow = o.data() + ((b * oh + oy) * ow + ox) * cout;
        if (bias) std::copy(bias->data().begin(), bias->data().end(), orow);
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            const double* xin = xd.data() + ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * cin;
            const double* krow = kd.data() + (ky * kw + kx) * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
              const double v = xin[ci];
              const double* kc = krow + ci * cout;
              for (std::size_t co = 0; co < cout; ++co) orow[co] += v * kc[co];
            }
          }
        }
      }
  tape.add_macs(static_cast<std::uint64_t>(nb) * oh * ow * kh * kw * cin * cout);

  tape.record(out, [x, kernel, bias, out, nb, h, w, cin, kh, kw, cout, oh, ow, stride, pad]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    const auto xd = x.data();
    auto dx = x.mutable_grad();
    auto dk = kernel.mutable_grad();
    // Per-tap transposed kernel [kh,kw,cout,cin] so input adjoints are axpys.
    std::vector<double> kt(kernel.size());
    for (std::size_t tap = 0; tap < kh * kw; ++tap)
      gemm::transpose(cin, cout, kernel.data().data() + tap * cin * cout, kt.data() + tap * cin * cout);
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double* grow = g.data() + ((b * oh + oy) * ow + ox) * cout;
          for (std::size_t ky = 0; ky < kh; ++ky) {
            const std::ptrdiff_t iy =
                static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t ix =
                  static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t xoff =
                  ((b * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)) * cin;
              const std::size_t tap = (ky * kw + kx) * cin * cout;
              for (std::size_t ci = 0; ci < cin; ++ci) {
                const double v = xd[xoff + ci];
                double* dkc = dk.data() + tap + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) dkc[co] += v * grow[co];
              }
              double* dxi = dx.data() + xoff;
              for (std::size_t co = 0; co < cout; ++co) {
                const double gv = grow[co];
                const double* ktc = kt.data() + tap + co * cin;
                for (std::size_t ci = 0; ci < cin; ++ci) dxi[ci] += gv * ktc[ci];
              }
            }
          }
        }
    if (bias) {
      auto db = bias->mutable_grad();
      const std::size_t rows = g.size() / cout;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t co = 0; co < cout; ++co) db[co] += g[r * cout + co];
    }
  });
  return out;
}

Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias) {
  if (x.rank() == 0 || gain.rank() != 1 || gain.dim(0) != x.shape().back() || bias.shape() != gain.shape()) {
    shape_error("layer_norm", x.shape(), gain.shape());
  }
  const std::size_t c = gain.size(), rows = leading(x);
  Tensor out(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> rstd(rows);
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += xr[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(c);
    rstd[r] = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    for (std::size_t j = 0; j < c; ++j) {
      xhat[r * c + j] = (xr[j] - mu) * rstd[r];
      o[r * c + j] = xhat[r * c + j] * gain[j] + bias[j];
    }
  }
  tape.record(out, [x, gain, bias, out, rows, c, xhat = std::move(xhat), rstd = std::move(rstd)]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dx = x.mutable_grad();
    auto dg = gain.mutable_grad();
    auto db = bias.mutable_grad();
    std::vector<double> dxhat(c);
    for (std::size_t r = 0; r < rows; ++r) {
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        const double gj = g[r * c + j];
        dg[j] += gj * xhat[r * c + j];
        db[j] += gj;
        dxhat[j] = gj * gain[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * xhat[r * c + j];
      }
      mean_d /= static_cast<double>(c);
      mean_dx /= static_cast<double>(c);
      for (std::size_t j = 0; j < c; ++j)
        dx[r * c + j] += rstd[r] * (dxhat[j] - mean_d - xhat[r * c + j] * mean_dx);
    }
  });
  return out;
}

Tensor gelu(Tape& tape, const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double v = x[i];
    o[i] = v * 0.5 * std::erfc(-v / std::numbers::sqrt2);
  }
  tape.record(out, [x, out]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dx = x.mutable_grad();
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = x[i];
      const double cdf = 0.5 * std::erfc(-v / std::numbers::sqrt2);
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx[i] += g[i] * (cdf + v * pdf);
    }
  });
  return out;
}

Tensor gather(Tape& tape, const Tensor& x, const IndexGrid& grid) {
  Tensor stacked = gather_windows(tape, x, std::span<const IndexGrid>(&grid, 1));
  return reshape(tape, stacked, {x.dim(0), grid.size(), x.dim(3)});
}

Tensor gather_windows(Tape& tape, const Tensor& x, std::span<const IndexGrid> grids) {
  require_rank("gather_windows", x, 4);
  if (grids.empty()) throw ConfigError("gather_windows: no grids");
  const std::size_t nb = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t points = grids.front().size();
  for (const auto& grid : grids) {
    if (grid.rows() != h || grid.cols() != w) {
      throw IndexError("gather: grid over " + std::to_string(grid.rows()) + "x" + std::to_string(grid.cols()) +
                       " does not match map " + to_string(x.shape()));
    }
    if (grid.size() != points) throw ConfigError("gather_windows: grids differ in point count");
  }
  const std::size_t nw = grids.size();
  std::vector<std::size_t> source;
  source.reserve(nw * points);
  for (const auto& grid : grids)
    for (const auto& off : grid.offsets()) source.push_back(off.row * w + off.col);

  Tensor out({nb, nw, points, c});
  auto o = out.data();
  const auto xd = x.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t s = 0; s < source.size(); ++s)
      std::copy_n(xd.data() + (b * h * w + source[s]) * c, c, o.data() + (b * source.size() + s) * c);
  tape.record(out, [x, out, nb, h, w, c, source = std::move(source)]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dx = x.mutable_grad();
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t s = 0; s < source.size(); ++s) {
        double* dst = dx.data() + (b * h * w + source[s]) * c;
        const double* src = g.data() + (b * source.size() + s) * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
      }
  });
  return out;
}

Tensor pad_spatial(Tape& tape, const Tensor& x, std::size_t rows, std::size_t cols) {
  require_rank("pad_spatial", x, 4);
  const std::size_t nb = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (rows < h || cols < w) {
    throw ConfigError("pad_spatial: target " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " smaller than " + to_string(x.shape()));
  }
  if (rows == h && cols == w) return x;
  Tensor out({nb, rows, cols, c});
  auto o = out.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t r = 0; r < h; ++r)
      std::copy_n(x.data().data() + (b * h + r) * w * c, w * c, o.data() + (b * rows + r) * cols * c);
  tape.record(out, [x, out, nb, h, w, c, rows, cols]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dx = x.mutable_grad();
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t j = 0; j < w * c; ++j) dx[(b * h + r) * w * c + j] += g[(b * rows + r) * cols * c + j];
  });
  return out;
}

Tensor slice_channels(Tape& tape, const Tensor& x, std::size_t offset, std::size_t count) {
  if (x.rank() == 0 || count == 0 || offset + count > x.shape().back()) {
    throw ConfigError("slice_channels: [" + std::to_string(offset) + ", " + std::to_string(offset + count) +
                      ") outside " + to_string(x.shape()));
  }
  const std::size_t c = x.shape().back(), rows = leading(x);
  Shape shape = x.shape();
  shape.back() = count;
  Tensor out(shape);
  auto o = out.data();
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.data().data() + r * c + offset, count, o.data() + r * count);
  tape.record(out, [x, out, rows, c, offset, count]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dx = x.mutable_grad();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < count; ++j) dx[r * c + offset + j] += g[r * count + j];
  });
  return out;
}

Tensor concat_channels(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ConfigError("concat_channels: nothing to concatenate");
  const Tensor& first = parts.front();
  if (first.rank() == 0) throw ConfigError("concat_channels: scalar part");
  const std::size_t rows = leading(first);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != first.rank() || leading(p) != rows ||
        !std::equal(p.shape().begin(), p.shape().end() - 1, first.shape().begin())) {
      shape_error("concat_channels", first.shape(), p.shape());
    }
    total += p.shape().back();
  }
  Shape shape = first.shape();
  shape.back() = total;
  Tensor out(shape);
  auto o = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.shape().back();
    for (std::size_t r = 0; r < rows; ++r) std::copy_n(p.data().data() + r * c, c, o.data() + r * total + offset);
    offset += c;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  tape.record(out, [inputs = std::move(inputs), out, rows, total]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    std::size_t offset = 0;
    for (auto& p : inputs) {
      const std::size_t c = p.shape().back();
      auto dp = p.mutable_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) dp[r * c + j] += g[r * total + offset + j];
      offset += c;
    }
  });
  return out;
}

Tensor split_heads(Tape& tape, const Tensor& x, std::size_t heads) {
  require_rank("split_heads", x, 3);
  const std::size_t nb = x.dim(0), n = x.dim(1), c = x.dim(2);
  if (heads == 0 || c % heads != 0) {
    throw ConfigError("split_heads: " + std::to_string(c) + " channels not divisible into " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t d = c / heads;
  if (heads == 1) return reshape(tape, x, {nb, n, d});
  Tensor out({nb * heads, n, d});
  auto o = out.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t hd = 0; hd < heads; ++hd)
        std::copy_n(x.data().data() + (b * n + t) * c + hd * d, d, o.data() + ((b * heads + hd) * n + t) * d);
  tape.record(out, [x, out, nb, n, c, d, heads]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dx = x.mutable_grad();
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t t = 0; t < n; ++t)
        for (std::size_t hd = 0; hd < heads; ++hd)
          for (std::size_t e = 0; e < d; ++e) dx[(b * n + t) * c + hd * d + e] += g[((b * heads + hd) * n + t) * d + e];
  });
  return out;
}

Tensor merge_heads(Tape& tape, const Tensor& x, std::size_t heads) {
  require_rank("merge_heads", x, 3);
  if (heads == 0 || x.dim(0) % heads != 0) {
    throw ConfigError("merge_heads: leading extent " + std::to_string(x.dim(0)) + " not divisible by " +
                      std::to_string(heads));
  }
  const std::size_t nb = x.dim(0) / heads, n = x.dim(1), d = x.dim(2), c = heads * d;
  if (heads == 1) return reshape(tape, x, {nb, n, c});
  Tensor out({nb, n, c});
  auto o = out.data();
  for (std::size_t b = 0; b < nb; ++b)
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (std::size_t t = 0; t < n; ++t)
        std::copy_n(x.data().data() + ((b * heads + hd) * n + t) * d, d, o.data() + (b * n + t) * c + hd * d);
  tape.record(out, [x, out, nb, n, c, d, heads]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dx = x.mutable_grad();
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t hd = 0; hd < heads; ++hd)
        for (std::size_t t = 0; t < n; ++t)
          for (std::size_t e = 0; e < d; ++e) dx[((b * heads + hd) * n + t) * d + e] += g[(b * n + t) * c + hd * d + e];
  });
  return out;
}

Tensor global_avg_pool(Tape& tape, const Tensor& x) {
  require_rank("global_avg_pool", x, 4);
  const std::size_t nb = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor out({nb, c});
  auto o = out.data();
  const double inv = 1.0 / static_cast<double>(hw);
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t j = 0; j < c; ++j) o[b * c + j] += x[(b * hw + p) * c + j];
    for (std::size_t j = 0; j < c; ++j) o[b * c + j] *= inv;
  }
  tape.record(out, [x, out, nb, hw, c, inv]() mutable {
    if (!out.has_grad()) return;
    const auto g = out.grad();
    auto dx = x.mutable_grad();
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t p = 0; p < hw; ++p)
        for (std::size_t j = 0; j < c; ++j) dx[(b * hw + p) * c + j] += g[b * c + j] * inv;
  });
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, std::span<const std::size_t> labels) {
  require_rank("cross_entropy", logits, 2);
  const std::size_t nb = logits.dim(0), k = logits.dim(1);
  if (labels.size() != nb) {
    throw ConfigError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                      std::to_string(nb));
  }
  std::vector<double> probs(logits.size());
  double loss = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    if (labels[b] >= k) throw IndexError("cross_entropy: label " + std::to_string(labels[b]) + " >= " + std::to_string(k));
    const double* z = logits.data().data() + b * k;
    const double peak = *std::max_element(z, z + k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      probs[b * k + j] = std::exp(z[j] - peak);
      total += probs[b * k + j];
    }
    for (std::size_t j = 0; j < k; ++j) probs[b * k + j] /= total;
    loss += std::log(total) + peak - z[labels[b]];
  }
  Tensor out = Tensor::scalar(loss / static_cast<double>(nb));
  std::vector<std::size_t> targets(labels.begin(), labels.end());
  tape.record(out, [logits, out, nb, k, probs = std::move(probs), targets = std::move(targets)]() mutable {
    if (!out.has_grad()) return;
    const double g = out.grad()[0] / static_cast<double>(nb);
    auto dz = logits.mutable_grad();
    for (std::size_t b = 0; b < nb; ++b)
      for (std::size_t j = 0; j < k; ++j)
        dz[b * k + j] += g * (probs[b * k + j] - (j == targets[b] ? 1.0 : 0.0));
  });
  return out;
}

}  // namespace favit::ops
