#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "backdrop/model.hpp"
#include "backdrop/tensor.hpp"

namespace backdrop {

/// M_c(x,y) = sum_k w_k^c f_k(x,y) over the last feature map, together with
/// the class score it aggregates to: S_c = mean(M_c) + b_c.
struct CamMap {
  std::size_t class_index = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major [height, width]
  double bias = 0.0;
  double score = 0.0;

  double mean() const;
  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

CamMap compute_cam(const Tensor& features, const HeadWeights& head, std::size_t class_index);

/// Bilinear upsampling, corner-aligned; output stays within [min, max] of the map.
std::vector<double> upsample_cam(const CamMap& cam, std::size_t target_h, std::size_t target_w);

/// Non-negative factorization A ~= W H of the K x (h*w) feature unfolding.
struct Factorization {
  std::size_t rank = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor basis;     // W: [K, rank]
  Tensor loadings;  // H: [rank, h*w]
  /// Frobenius error ||A - WH|| after each iteration.
  std::vector<double> error_trace;
};

struct NmfOptions {
  std::size_t rank = 4;
  std::size_t iterations = 200;
  double epsilon = 1e-12;
};

/// Lee-Seung multiplicative updates from a seeded uniform (0,1] start.
/// Negative feature values are clamped to zero first.
Factorization dff(const Tensor& features, const NmfOptions& options, std::uint64_t seed);

struct DffResult {
  Factorization factors;
  std::vector<std::size_t> concept_class;    // per concept
  std::vector<std::size_t> cell_assignment;  // per spatial cell
  double coverage = 0.0;
};

/// Assigns each concept the class argmax_c sum_k w_k^c W[k,j] and each cell its
/// dominant concept, then reports the fraction of cells attributed to
/// `target`. With `mask_background` the head's last output is treated as the
/// background slot and never chosen.
DffResult coverage(const Factorization& factors, const HeadWeights& head, std::size_t target,
                   bool mask_background);

/// Lowest index wins ties.
std::size_t argmax(const std::vector<double>& v, std::size_t limit);

// ---- heatmap export ----

/// 8-bit P5 image, per-map min-max normalization recorded in a header comment.
void write_heatmap_pgm(const std::vector<double>& grid, std::size_t h, std::size_t w,
                       const std::filesystem::path& path);
/// RGB PNG through a fixed blue-cyan-yellow-red ramp.
void write_heatmap_png(const std::vector<double>& grid, std::size_t h, std::size_t w,
                       const std::filesystem::path& path);

}  // namespace backdrop
