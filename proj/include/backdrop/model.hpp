#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "backdrop/autodiff.hpp"
#include "backdrop/tensor.hpp"

namespace backdrop {

enum class HeadMode { baseline, background, multitask };

std::string to_string(HeadMode m);
HeadMode head_mode_from_string(const std::string& s);

struct ConvBlockSpec {
  std::size_t channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;

  bool operator==(const ConvBlockSpec&) const = default;
};

struct LabelRange {
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Convolution stack -> global average pool -> one fully connected head.
struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t in_h = 28;
  std::size_t in_w = 28;
  std::vector<ConvBlockSpec> blocks;
  HeadMode head_mode = HeadMode::baseline;
  /// One entry per task. Baseline and background use exactly one entry (N_c);
  /// multitask lists the class count of every merged dataset.
  std::vector<std::size_t> task_classes;

  std::size_t feature_channels() const;
  std::size_t num_target_classes() const;  // N_c of the first (or only) task
  std::size_t num_outputs() const;
  /// Output slots owned by each task, in order.
  std::vector<LabelRange> task_ranges() const;
  /// Spatial extent of the last feature map; zero if the stack collapses.
  std::pair<std::size_t, std::size_t> feature_extent() const;

  /// Three ReLU conv blocks, the first two with stride 2, K = 32.
  static ModelConfig desk_default(std::size_t in_channels, std::size_t h, std::size_t w,
                                  std::size_t num_classes, HeadMode mode = HeadMode::baseline);

  bool operator==(const ModelConfig&) const = default;
};

/// w_k^c stored as a [K, num_outputs] row-major matrix plus one bias per output.
struct HeadWeights {
  Tensor weight;
  Tensor bias;

  std::size_t features() const { return weight.shape.at(0); }
  std::size_t outputs() const { return weight.shape.at(1); }
  double w(std::size_t k, std::size_t c) const { return weight.values[k * outputs() + c]; }
};

struct Model {
  ModelConfig config;
  std::vector<Tensor> conv;       // [Cout, Cin, k, k] per block
  std::vector<Tensor> conv_bias;  // [Cout] per block, zero at init
  HeadWeights head;

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<Tensor*> head_parameters();
  void zero_grad();
};

struct ForwardResult {
  Tensor features;  // [K, h, w], post-ReLU
  Tensor logits;    // [num_outputs]
};

struct ParameterCount {
  std::size_t total = 0;
  std::size_t head = 0;
};

Model build_model(const ModelConfig& config, std::uint64_t seed);

ForwardResult forward(const Model& model, const Tensor& image);

ParameterCount parameter_count(const Model& model);

/// Tape handles for one model instance; used by the training loop.
struct ModelVars {
  std::vector<Var> conv;
  std::vector<Var> conv_bias;
  Var head_weight;
  Var head_bias;
  std::vector<Var> all() const;
};

ModelVars bind_parameters(Tape& tape, Model& model, bool trainable_conv = true);

/// Records the forward pass of one image; returns (features, logits).
std::pair<Var, Var> forward_on_tape(Tape& tape, const Model& model, const ModelVars& vars,
                                    const Tensor& image);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace backdrop
