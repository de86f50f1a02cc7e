#pragma once

// Numeric kernels behind the autodiff ops. Each kernel exists twice: a plain
// serial reference (kept for testing and benchmarking) and an OpenMP version
// used by the tape. The OpenMP kernels partition work so that every output
// element is accumulated by exactly one thread in a fixed order, which keeps
// results independent of the thread count.

#include <cstddef>
#include <span>

namespace backdrop::kernels {

struct ConvGeometry {
  std::size_t in_channels = 0, in_h = 0, in_w = 0;
  std::size_t out_channels = 0, kernel_h = 0, kernel_w = 0;
  std::size_t stride = 1, padding = 0;

  std::size_t out_h() const { return (in_h + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * padding - kernel_w) / stride + 1; }
  std::size_t input_size() const { return in_channels * in_h * in_w; }
  std::size_t kernel_size() const { return out_channels * in_channels * kernel_h * kernel_w; }
  std::size_t output_size() const { return out_channels * out_h() * out_w(); }
};

namespace serial {

// out = conv(in, kernel); out is overwritten.
void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> kernel, std::span<double> out);
// d_in += conv_transpose(d_out, kernel)
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> d_out, std::span<double> d_in);
// d_kernel += correlate(in, d_out)
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> in,
                            std::span<const double> d_out, std::span<double> d_kernel);

// out[c] = sum_k x[k] * w[k, c] + b[c]; w is features x outputs, row-major.
void dense_forward(std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> out);
// d_x += w d_out; d_w += x d_out^T; d_b += d_out
void dense_backward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> d_out, std::span<double> d_x,
                    std::span<double> d_w, std::span<double> d_b);

}  // namespace serial

namespace omp {

void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> kernel, std::span<double> out);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> d_out, std::span<double> d_in);
void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> in,
                            std::span<const double> d_out, std::span<double> d_kernel);
void dense_forward(std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> out);
void dense_backward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> d_out, std::span<double> d_x,
                    std::span<double> d_w, std::span<double> d_b);

}  // namespace omp

/// Sets the OpenMP thread cap for the parallel kernels (no-op without OpenMP).
void set_num_threads(int n);
int max_threads();

}  // namespace backdrop::kernels
