#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "backdrop/dataset.hpp"

namespace backdrop {

/// Named collection of candidate background images. `source_labels` on each
/// item drive label-based exclusion; `label` drives per-class sampling.
struct SourcePool {
  std::string id;
  Dataset items;
};

/// Loads a pool from a dataset directory (manifest.tsv), a plain directory of
/// PGM/PPM files with an optional labels.tsv (path <TAB> comma-separated
/// labels), or an IDX pair given as "images.idx,labels.idx".
SourcePool load_pool(const std::string& id, const std::string& location);

struct SourceRequest {
  std::string pool;
  std::optional<std::size_t> count;      // total draws; all eligible when unset
  std::optional<std::size_t> per_class;  // draws per source label instead
};

enum class TransformKind { resize, center_crop, random_crop, invert, patches };

struct TransformSpec {
  TransformKind kind = TransformKind::resize;
  double fraction = 1.0;       // crop side as a fraction of the image side
  double probability = 1.0;    // invert: chance per image
  bool keep_original = false;  // invert: emit the original alongside
  std::size_t height = 0, width = 0;       // resize
  std::size_t patch = 0, stride = 0;       // patches; stride 0 means patch
};

struct MonochromeSpec {
  std::size_t count = 0;
  std::uint64_t palette_seed = 0;
};

struct BackgroundSpec {
  std::vector<SourceRequest> sources;
  std::vector<TransformSpec> transforms;
  MonochromeSpec monochrome;
  std::set<std::string> excluded_labels;
  std::size_t target_size = 0;
  std::size_t channels = 1, height = 28, width = 28;
  bool allow_duplicates = false;

  void validate() const;
};

/// Builds exactly `target_size` BACKGROUND items at the output resolution.
/// Output order follows (pool id, item index), with monochromes last.
Dataset assemble(const BackgroundSpec& spec, const std::vector<SourcePool>& pools,
                 std::uint64_t seed);

/// Single-colour image; `color` holds one value per output channel.
Image make_monochrome_image(const std::vector<double>& color, std::size_t channels,
                            std::size_t height, std::size_t width);
/// `count` single-colour images with pairwise-distinct 8-bit colours drawn from the seed.
std::vector<Image> make_monochrome(std::size_t count, std::size_t channels, std::size_t height,
                                   std::size_t width, std::uint64_t palette_seed);

/// Non-overlapping grid when stride equals patch.
std::vector<Image> extract_patches(const Image& img, std::size_t patch, std::size_t stride);

struct SizeRange {
  std::size_t lo = 0;
  std::size_t hi = 0;
};

/// Recommended background size: from one class's share to the whole training set.
SizeRange size_heuristic(std::size_t train_size, std::size_t num_classes);

}  // namespace backdrop
