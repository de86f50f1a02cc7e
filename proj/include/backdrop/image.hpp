#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "backdrop/tensor.hpp"

namespace backdrop {

/// Planar (CHW) image with pixel values in [0,1].
struct Image {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), pixels(c * h * w, fill) {}

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
  Tensor to_tensor() const;

  bool operator==(const Image&) const = default;
};

/// Bilinear resize with corner-aligned sampling (corners map to corners).
Image resize_bilinear(const Image& img, std::size_t h, std::size_t w);
/// Same sampling rule on a single-channel grid.
std::vector<double> resize_grid(const std::vector<double>& grid, std::size_t h, std::size_t w,
                                std::size_t out_h, std::size_t out_w);

/// Counter-clockwise rotation about the image centre; zero fill outside.
Image rotate(const Image& img, double degrees);
Image hflip(const Image& img);
/// Crops [y, y+h) x [x, x+w).
Image crop(const Image& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w);
Image invert_colors(const Image& img);
/// 1 -> 3 channels by replication, 3 -> 1 by luma (0.299, 0.587, 0.114).
Image convert_channels(const Image& img, std::size_t channels);
void clamp01(Image& img);

/// Binary PGM (P5) for one channel, PPM (P6) for three; 8-bit.
void write_pnm(const Image& img, const std::filesystem::path& path);
Image read_pnm(const std::filesystem::path& path);

}  // namespace backdrop
