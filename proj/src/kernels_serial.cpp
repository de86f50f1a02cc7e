#include "backdrop/kernels.hpp"

namespace backdrop::kernels::serial {

namespace {
// Padded-coordinate lookup; returns false outside the input.
inline bool source_index(const ConvGeometry& g, std::size_t o, std::size_t k, std::size_t extent,
                         std::size_t& src) {
  const auto pos = static_cast<long>(o * g.stride + k) - static_cast<long>(g.padding);
  if (pos < 0 || pos >= static_cast<long>(extent)) return false;
  src = static_cast<std::size_t>(pos);
  return true;
}
}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> in,
                    std::span<const double> kernel, std::span<double> out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ci = 0; ci < g.in_channels; ++ci)
          for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
            for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
              std::size_t iy, ix;
              if (!source_index(g, oy, ky, g.in_h, iy) || !source_index(g, ox, kx, g.in_w, ix))
                continue;
              acc += in[(ci * g.in_h + iy) * g.in_w + ix] *
                     kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
            }
        out[(co * oh + oy) * ow + ox] = acc;
      }
}

// Summation order per destination element matches the OpenMP kernels, so the
// two agree bitwise.
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> kernel,
                           std::span<const double> d_out, std::span<double> d_in) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          const double w = kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx];
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              std::size_t iy, ix;
              if (!source_index(g, oy, ky, g.in_h, iy) || !source_index(g, ox, kx, g.in_w, ix))
                continue;
              d_in[(ci * g.in_h + iy) * g.in_w + ix] += w * d_out[(co * oh + oy) * ow + ox];
            }
        }
}

void conv2d_backward_kernel(const ConvGeometry& g, std::span<const double> in,
                            std::span<const double> d_out, std::span<double> d_kernel) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t co = 0; co < g.out_channels; ++co)
    for (std::size_t ci = 0; ci < g.in_channels; ++ci)
      for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < oh; ++oy)
            for (std::size_t ox = 0; ox < ow; ++ox) {
              std::size_t iy, ix;
              if (!source_index(g, oy, ky, g.in_h, iy) || !source_index(g, ox, kx, g.in_w, ix))
                continue;
              acc += d_out[(co * oh + oy) * ow + ox] * in[(ci * g.in_h + iy) * g.in_w + ix];
            }
          d_kernel[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] += acc;
        }
}

void dense_forward(std::span<const double> x, std::span<const double> w,
                   std::span<const double> b, std::span<double> out) {
  const std::size_t n_out = out.size();
  for (std::size_t c = 0; c < n_out; ++c) {
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) acc += x[k] * w[k * n_out + c];
    out[c] = acc + b[c];
  }
}

void dense_backward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> d_out, std::span<double> d_x,
                    std::span<double> d_w, std::span<double> d_b) {
  const std::size_t n_out = d_out.size();
  for (std::size_t k = 0; k < x.size(); ++k)
    for (std::size_t c = 0; c < n_out; ++c) {
      if (!d_x.empty()) d_x[k] += w[k * n_out + c] * d_out[c];
      if (!d_w.empty()) d_w[k * n_out + c] += x[k] * d_out[c];
    }
  if (!d_b.empty())
    for (std::size_t c = 0; c < n_out; ++c) d_b[c] += d_out[c];
}

}  // namespace backdrop::kernels::serial
