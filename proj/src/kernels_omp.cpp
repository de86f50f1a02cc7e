#include "backdrop/kernels.hpp"

#include <algorithm>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace backdrop::kernels {

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(std::max(1, n));
#else
  (void)n;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace omp {

namespace {

struct Range {
  std::size_t lo, hi;  // half-open
};

// Output positions o whose source o*stride + k - padding lands inside [0, extent).
inline Range valid_outputs(std::size_t k, std::size_t padding, std::size_t stride,
                           std::size_t extent, std::size_t out_extent) {
  const long off = static_cast<long>(k) - static_cast<long>(padding);
  const long s = static_cast<long>(stride);
  long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  long hi_incl = (static_cast<long>(extent) - 1 - off);
  if (hi_incl < 0) return {0, 0};
  hi_incl /= s;
  hi_incl = std::min<long>(hi_incl, static_cast<long>(out_extent) - 1);
  if (hi_incl < lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi_incl + 1)};
}

// Small problems are not worth a parallel region.
constexpr std::size_t kParallelThreshold = 1 << 14;

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> kernel, std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long n_co = static_cast<long>(g.out_channels);
  const bool par = g.output_size() * g.in_channels * g.kernel_h * g.kernel_w > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (long co_i = 0; co_i < n_co; ++co_i) {
    const auto co = static_cast<std::size_t>(co_i);
    double* plane = out.data() + co * oh * ow;
    std::fill(plane, plane + oh * ow, 0.0);
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      const double* src = in.data() + ci * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const Range ry = valid_outputs(ky, g.padding, g.stride, g.in_h, oh);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const Range rx = valid_outputs(kx, g.padding, g.stride, g.in_w, ow);
          const double w = kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const double* row = src + (oy * g.stride + ky - g.padding) * g.in_w;
            double* dst = plane + oy * ow;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) dst[ox] += w * row[ox * g.stride + kx - g.padding];
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> d_out, std::span<double> d_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long n_ci = static_cast<long>(g.in_channels);
  const bool par = g.output_size() * g.in_channels * g.kernel_h * g.kernel_w > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (long ci_i = 0; ci_i < n_ci; ++ci_i) {
    const auto ci = static_cast<std::size_t>(ci_i);
    double* dst_plane = d_in.data() + ci * g.in_h * g.in_w;
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const double* go = d_out.data() + co * oh * ow;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const Range ry = valid_outputs(ky, g.padding, g.stride, g.in_h, oh);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const Range rx = valid_outputs(kx, g.padding, g.stride, g.in_w, ow);
          const double w = kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            double* row = dst_plane + (oy * g.stride + ky - g.padding) * g.in_w;
            const double* src = go + oy * ow;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) row[ox * g.stride + kx - g.padding] += w * src[ox];
          }
        }
      }
    }
  }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> in,
                            std::span<const double> d_out, std::span<double> d_kernel) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const long n_co = static_cast<long>(g.out_channels);
  const bool par = g.output_size() * g.in_channels * g.kernel_h * g.kernel_w > kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (long co_i = 0; co_i < n_co; ++co_i) {
    const auto co = static_cast<std::size_t>(co_i);
    const double* go = d_out.data() + co * oh * ow;
    for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
      const double* src = in.data() + ci * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
        const Range ry = valid_outputs(ky, g.padding, g.stride, g.in_h, oh);
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const Range rx = valid_outputs(kx, g.padding, g.stride, g.in_w, ow);
          double acc = 0.0;
          for (std::size_t oy = ry.lo; oy < ry.hi; ++oy) {
            const double* row = src + (oy * g.stride + ky - g.padding) * g.in_w;
            const double* grow = go + oy * ow;
            for (std::size_t ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * row[ox * g.stride + kx - g.padding];
          }
          d_kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] += acc;
        }
      }
    }
  }
}

void dense_forward(std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> out) {
  const std::size_t n_out = out.size();
  const long n = static_cast<long>(n_out);
#pragma omp parallel for schedule(static) if (x.size() * n_out > kParallelThreshold)
  for (long ci = 0; ci < n; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * w[k * n_out + c];
    out[c] = acc + b[c];
  }
}

void dense_backward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> d_out, std::span<double> d_x,
                    std::span<double> d_w, std::span<double> d_b) {
  const std::size_t n_out = d_out.size();
  const long n_k = static_cast<long>(x.size());
#pragma omp parallel for schedule(static) if (x.size() * n_out > kParallelThreshold)
  for (long ki = 0; ki < n_k; ++ki) {
    const auto k = static_cast<std::size_t>(ki);
    double acc = 0.0;
    for (std::size_t c = 0; c < n_out; ++c) {
      acc += w[k * n_out + c] * d_out[c];
      if (!d_w.empty()) d_w[k * n_out + c] += x[k] * d_out[c];
    }
    if (!d_x.empty()) d_x[k] += acc;
  }
  if (!d_b.empty())
    for (std::size_t c = 0; c < n_out; ++c) d_b[c] += d_out[c];
}

}  // namespace omp
}  // namespace backdrop::kernels
