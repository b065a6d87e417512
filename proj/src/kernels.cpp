#include "skelpose/kernels.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "skelpose/error.hpp"

namespace skelpose::kernels {

ConvGeometry make_conv_geometry(int batch, int in_channels, int in_h, int in_w, int out_channels,
                                int kernel, int stride, int pad) {
  if (stride < 1) throw ShapeError("conv stride must be >= 1");
  if (pad < 0) throw ShapeError("conv pad must be >= 0");
  if (kernel < 1) throw ShapeError("conv kernel must be >= 1");
  ConvGeometry g{batch, in_channels, in_h, in_w, out_channels, kernel, stride, pad, 0, 0};
  const int span_h = in_h + 2 * pad - kernel;
  const int span_w = in_w + 2 * pad - kernel;
  if (span_h < 0 || span_w < 0) {
    throw ShapeError("conv kernel " + std::to_string(kernel) + " larger than padded input");
  }
  g.out_h = span_h / stride + 1;
  g.out_w = span_w / stride + 1;
  return g;
}

namespace {

// Kernel tap range [lo, hi) that stays inside the input for output coordinate `o`.
struct TapRange {
  int lo;
  int hi;
};

std::vector<TapRange> taps_per_output(int in, int out, int kernel, int stride, int pad) {
  std::vector<TapRange> r(out);
  for (int o = 0; o < out; ++o) {
    const int base = o * stride - pad;
    r[o] = {std::max(0, -base), std::min(kernel, in - base)};
  }
  return r;
}

// Output coordinates o in [lo, hi) whose window reads tap k inside the input.
TapRange outputs_for_tap(int in, int out, int k, int stride, int pad) {
  int lo = 0;
  while (lo < out && lo * stride - pad + k < 0) ++lo;
  int hi = lo;
  while (hi < out && hi * stride - pad + k < in) ++hi;
  return {lo, hi};
}

inline size_t idx4(int a, int b, int c, int d, int nb, int nc, int nd) {
  return ((static_cast<size_t>(a) * nb + b) * nc + c) * nd + d;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const int K = g.kernel;
  const int S = g.stride;
  // One thread owns each (n, oc) output plane; every element sums its terms
  // in (ic, ky, kx) order.
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    for (int oc = 0; oc < g.out_channels; ++oc) {
      double* plane = &y[idx4(n, oc, 0, 0, g.out_channels, g.out_h, g.out_w)];
      std::fill(plane, plane + static_cast<size_t>(g.out_h) * g.out_w, 0.0);
      for (int ic = 0; ic < g.in_channels; ++ic) {
        const double* xp = &x[idx4(n, ic, 0, 0, g.in_channels, g.in_h, g.in_w)];
        const double* wk = &w[idx4(oc, ic, 0, 0, g.in_channels, K, K)];
        for (int ky = 0; ky < K; ++ky) {
          const TapRange ry = outputs_for_tap(g.in_h, g.out_h, ky, S, g.pad);
          for (int kx = 0; kx < K; ++kx) {
            const TapRange rx = outputs_for_tap(g.in_w, g.out_w, kx, S, g.pad);
            const double wv = wk[ky * K + kx];
            for (int oy = ry.lo; oy < ry.hi; ++oy) {
              const double* xrow = xp + static_cast<size_t>(oy * S - g.pad + ky) * g.in_w;
              double* yrow = plane + static_cast<size_t>(oy) * g.out_w;
              for (int ox = rx.lo; ox < rx.hi; ++ox) yrow[ox] += wv * xrow[ox * S - g.pad + kx];
            }
          }
        }
      }
      if (!bias.empty()) {
        for (int i = 0; i < g.out_h * g.out_w; ++i) plane[i] += bias[oc];
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_y,
                           std::span<const double> w, std::span<double> grad_x) {
  const int K = g.kernel;
  const auto rows = taps_per_output(g.in_h, g.out_h, K, g.stride, g.pad);
  const auto cols = taps_per_output(g.in_w, g.out_w, K, g.stride, g.pad);
  // One thread owns each (n, ic) input plane and scatters into it in the
  // same order as the serial reference.
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < g.batch; ++n) {
    for (int ic = 0; ic < g.in_channels; ++ic) {
      double* plane = &grad_x[idx4(n, ic, 0, 0, g.in_channels, g.in_h, g.in_w)];
      for (int oc = 0; oc < g.out_channels; ++oc) {
        const double* wk = &w[idx4(oc, ic, 0, 0, g.in_channels, K, K)];
        const double* gy = &grad_y[idx4(n, oc, 0, 0, g.out_channels, g.out_h, g.out_w)];
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy0 = oy * g.stride - g.pad;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix0 = ox * g.stride - g.pad;
            const double v = gy[oy * g.out_w + ox];
            const TapRange cx = cols[ox];
            for (int ky = rows[oy].lo; ky < rows[oy].hi; ++ky) {
              double* dst = plane + static_cast<size_t>(iy0 + ky) * g.in_w + ix0;
              const double* wrow = wk + ky * K;
              for (int kx = cx.lo; kx < cx.hi; ++kx) dst[kx] += wrow[kx] * v;
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> grad_y, std::span<double> grad_w,
                            std::span<double> grad_b) {
  const int K = g.kernel;
#pragma omp parallel for collapse(2) schedule(static)
  for (int oc = 0; oc < g.out_channels; ++oc) {
    for (int ic = 0; ic < g.in_channels; ++ic) {
      for (int ky = 0; ky < K; ++ky) {
        const TapRange ry = outputs_for_tap(g.in_h, g.out_h, ky, g.stride, g.pad);
        for (int kx = 0; kx < K; ++kx) {
          const TapRange rx = outputs_for_tap(g.in_w, g.out_w, kx, g.stride, g.pad);
          double acc = 0.0;
          for (int n = 0; n < g.batch; ++n) {
            for (int oy = ry.lo; oy < ry.hi; ++oy) {
              const int iy = oy * g.stride - g.pad + ky;
              const double* xrow = &x[idx4(n, ic, iy, 0, g.in_channels, g.in_h, g.in_w)];
              const double* grow = &grad_y[idx4(n, oc, oy, 0, g.out_channels, g.out_h, g.out_w)];
              for (int ox = rx.lo; ox < rx.hi; ++ox) {
                acc += xrow[ox * g.stride - g.pad + kx] * grow[ox];
              }
            }
          }
          grad_w[idx4(oc, ic, ky, kx, g.in_channels, K, K)] += acc;
        }
      }
    }
  }
  if (grad_b.empty()) return;
  for (int oc = 0; oc < g.out_channels; ++oc) {
    double acc = 0.0;
    for (int n = 0; n < g.batch; ++n) {
      const size_t base = idx4(n, oc, 0, 0, g.out_channels, g.out_h, g.out_w);
      for (int i = 0; i < g.out_h * g.out_w; ++i) acc += grad_y[base + i];
    }
    grad_b[oc] += acc;
  }
}

void linear_forward(int n, int in, int out, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int r = 0; r < n; ++r) {
    for (int o = 0; o < out; ++o) {
      double acc = 0.0;
      const double* xr = &x[static_cast<size_t>(r) * in];
      const double* wr = &w[static_cast<size_t>(o) * in];
      for (int i = 0; i < in; ++i) acc += wr[i] * xr[i];
      y[static_cast<size_t>(r) * out + o] = acc + (bias.empty() ? 0.0 : bias[o]);
    }
  }
}

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y) {
  const int K = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int oc = 0; oc < g.out_channels; ++oc)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          double acc = 0.0;
          for (int ic = 0; ic < g.in_channels; ++ic)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                acc += w[idx4(oc, ic, ky, kx, g.in_channels, K, K)] *
                       x[idx4(n, ic, iy, ix, g.in_channels, g.in_h, g.in_w)];
              }
          y[idx4(n, oc, oy, ox, g.out_channels, g.out_h, g.out_w)] =
              acc + (bias.empty() ? 0.0 : bias[oc]);
        }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_y,
                           std::span<const double> w, std::span<double> grad_x) {
  const int K = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int oc = 0; oc < g.out_channels; ++oc)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          const double gy = grad_y[idx4(n, oc, oy, ox, g.out_channels, g.out_h, g.out_w)];
          for (int ic = 0; ic < g.in_channels; ++ic)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                grad_x[idx4(n, ic, iy, ix, g.in_channels, g.in_h, g.in_w)] +=
                    w[idx4(oc, ic, ky, kx, g.in_channels, K, K)] * gy;
              }
        }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> grad_y, std::span<double> grad_w,
                            std::span<double> grad_b) {
  const int K = g.kernel;
  for (int n = 0; n < g.batch; ++n)
    for (int oc = 0; oc < g.out_channels; ++oc)
      for (int oy = 0; oy < g.out_h; ++oy)
        for (int ox = 0; ox < g.out_w; ++ox) {
          const double gy = grad_y[idx4(n, oc, oy, ox, g.out_channels, g.out_h, g.out_w)];
          if (!grad_b.empty()) grad_b[oc] += gy;
          for (int ic = 0; ic < g.in_channels; ++ic)
            for (int ky = 0; ky < K; ++ky)
              for (int kx = 0; kx < K; ++kx) {
                const int iy = oy * g.stride - g.pad + ky;
                const int ix = ox * g.stride - g.pad + kx;
                if (iy < 0 || iy >= g.in_h || ix < 0 || ix >= g.in_w) continue;
                grad_w[idx4(oc, ic, ky, kx, g.in_channels, K, K)] +=
                    x[idx4(n, ic, iy, ix, g.in_channels, g.in_h, g.in_w)] * gy;
              }
        }
}

}  // namespace reference

}  // namespace skelpose::kernels
