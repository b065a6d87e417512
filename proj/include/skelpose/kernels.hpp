#pragma once

#include <span>

// Dense convolution kernels on channel-major (N, C, H, W) f64 buffers.
//
// Production kernels parallelise with OpenMP over independent output
// elements; every output element is accumulated by a single thread in a fixed
// loop order, so results are bitwise identical for any thread count. The
// `reference` namespace holds naive serial versions (backward-input as a
// scatter) used only to cross-check in tests and benchmarks.
namespace skelpose::kernels {

struct ConvGeometry {
  int batch = 1;
  int in_channels = 1;
  int in_h = 1;
  int in_w = 1;
  int out_channels = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;
  int out_h = 1;
  int out_w = 1;

  size_t input_size() const { return static_cast<size_t>(batch) * in_channels * in_h * in_w; }
  size_t output_size() const { return static_cast<size_t>(batch) * out_channels * out_h * out_w; }
  size_t weight_size() const {
    return static_cast<size_t>(out_channels) * in_channels * kernel * kernel;
  }
};

// Output dims from the standard floor formula; ShapeError if they are < 1.
ConvGeometry make_conv_geometry(int batch, int in_channels, int in_h, int in_w, int out_channels,
                                int kernel, int stride, int pad);

// y = conv(x, w) + b. `bias` may be empty. Overwrites y.
void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
// grad_x += conv^T(grad_y, w).
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_y,
                           std::span<const double> w, std::span<double> grad_x);
// grad_w += x ⋆ grad_y; grad_b += Σ grad_y (grad_b may be empty).
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> grad_y, std::span<double> grad_w,
                            std::span<double> grad_b);

// y = x · wᵀ + b with x (n, in), w (out, in). Overwrites y.
void linear_forward(int n, int in, int out, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_y,
                           std::span<const double> w, std::span<double> grad_x);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> x,
                            std::span<const double> grad_y, std::span<double> grad_w,
                            std::span<double> grad_b);

}  // namespace reference

}  // namespace skelpose::kernels
