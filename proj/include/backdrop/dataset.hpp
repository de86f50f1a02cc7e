#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "backdrop/image.hpp"
#include "backdrop/model.hpp"

namespace backdrop {

/// Label carried by background items until they are materialized as class N_c.
inline constexpr int kBackgroundLabel = -1;

struct LabeledImage {
  Image image;
  int label = 0;
  std::string source;                      // e.g. "pool:item" or generator tag
  std::vector<std::string> source_labels;  // labels attached to the source item
  std::vector<std::string> transforms;     // applied transform chain, in order
};

/// Items with class labels in [0, N_c) or kBackgroundLabel. `class_names`
/// lists the N_c target classes only; when `has_background` is set, the
/// background occupies class index N_c at training time.
struct Dataset {
  std::vector<LabeledImage> items;
  std::vector<std::string> class_names;
  bool has_background = false;
  /// Per-task output slots after a multitask merge (empty otherwise).
  std::vector<LabelRange> task_ranges;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
  std::size_t num_target_classes() const { return class_names.size(); }
  /// N_c, plus one when a background class is present.
  std::size_t num_classes() const { return class_names.size() + (has_background ? 1 : 0); }
  /// Training index: the label, or N_c for background items.
  std::size_t class_index(const LabeledImage& item) const;
  std::size_t class_index(std::size_t i) const { return class_index(items[i]); }

  /// Throws std::invalid_argument when an invariant is broken.
  void validate() const;
};

// ---- IDX (MNIST family) ----

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
void write_idx(const Dataset& ds, const std::filesystem::path& images,
               const std::filesystem::path& labels);

// ---- directory + manifest ----

/// Writes `dir/manifest.tsv` and `dir/images/NNNNNN.pgm|ppm`. Manifest field
/// order: path, label, class, source, source_labels, transforms.
void write_dataset_dir(const Dataset& ds, const std::filesystem::path& dir);
Dataset read_dataset_dir(const std::filesystem::path& dir);

// ---- splits ----

struct Split {
  Dataset train;
  Dataset val;
  std::vector<std::size_t> train_indices;  // ascending positions in the input
  std::vector<std::size_t> val_indices;
  /// Stable digest of the index partition.
  std::uint64_t hash() const;
};

/// Stratified split; per-class train counts are floors of fraction*m_c with
/// the remainder of round(fraction*m) handed to the largest fractional parts.
Split split_train_val(const Dataset& ds, double fraction, std::uint64_t seed);

// ---- augmentation ----

struct AugmentSpec {
  double max_rotation_deg = 0.0;
  double crop_scale_min = 1.0;
  double crop_scale_max = 1.0;
  double hflip_p = 0.0;

  bool identity() const {
    return max_rotation_deg == 0.0 && crop_scale_min == 1.0 && crop_scale_max == 1.0 &&
           hflip_p == 0.0;
  }
};

Image augment(const Image& img, const AugmentSpec& spec, std::uint64_t seed);

// ---- composition ----

Dataset append_background(const Dataset& ds, const Dataset& background);
Dataset merge_for_multitask(const std::vector<Dataset>& datasets);

}  // namespace backdrop
