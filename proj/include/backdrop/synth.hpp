#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "backdrop/dataset.hpp"

namespace backdrop {

/// Shapes on textured backgrounds where texture tracks the label at a chosen
/// rate. An item of class y sits on its "home" texture (y mod num_textures)
/// with probability rho, otherwise on a texture drawn uniformly from all of
/// them. rho = 0 therefore makes texture independent of the label.
struct ConfoundSpec {
  std::size_t num_classes = 2;
  std::vector<std::string> shapes;  // one per class; defaults applied when empty
  std::size_t num_textures = 4;
  double rho_train = 0.95;
  double rho_test = 0.0;
  std::size_t train_count = 4000;
  std::size_t test_count = 2000;
  std::size_t background_count = 1000;
  double noise = 0.1;              // additive uniform amplitude
  std::size_t resolution = 28;
  std::size_t channels = 1;
  double shape_scale_min = 0.22;   // shape radius as a fraction of the side
  double shape_scale_max = 0.32;
  double foreground_level = 0.85;  // shape intensity
  double texture_contrast = 0.35;  // texture peak-to-peak amplitude

  void validate() const;
};

struct ConfoundBundle {
  Dataset train;
  Dataset test;
  Dataset background_pool;  // texture-only, labeled BACKGROUND
  std::vector<std::size_t> train_textures;
  std::vector<std::size_t> test_textures;
  std::vector<std::size_t> pool_textures;
  /// Pixels with nonzero foreground coverage, per pool image (always 0).
  std::vector<std::size_t> pool_foreground_pixels;
};

std::vector<std::string> available_shapes();

/// Anti-aliased coverage mask in [0,1] for a named shape centred at (cy, cx).
std::vector<double> shape_mask(const std::string& shape, std::size_t size, double cy, double cx,
                               double radius, double angle);

/// Texture pattern in [0,1], side x side.
std::vector<double> texture_pattern(std::size_t texture, std::size_t size, double phase_y,
                                    double phase_x);

ConfoundBundle generate_confounded(const ConfoundSpec& spec, std::uint64_t seed);

}  // namespace backdrop
