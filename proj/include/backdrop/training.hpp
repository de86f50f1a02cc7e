#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "backdrop/dataset.hpp"
#include "backdrop/model.hpp"

namespace backdrop {

struct LrStage {
  std::size_t epochs = 1;
  double lr = 0.01;
};

struct RunConfig {
  HeadMode mode = HeadMode::baseline;
  double lr = 0.05;
  std::size_t epochs = 5;
  /// When non-empty, replaces (epochs, lr) by consecutive stages.
  std::vector<LrStage> schedule;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1;
  double lambda_l1 = 0.0;
  AugmentSpec augment;
  bool eval_mask_background = true;
  bool freeze_conv = false;

  std::size_t total_epochs() const;
  double lr_for_epoch(std::size_t epoch) const;  // 0-based
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double lr = 0.0;
  std::size_t steps = 0;
  double train_loss = 0.0;  // mean objective over the epoch's steps
  double train_accuracy = 0.0;
  std::optional<double> val_accuracy;
  std::optional<double> val_empirical_error;
};

struct Metrics {
  std::size_t count = 0;
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;  // NaN for classes absent from the data
  double empirical_error = 0.0;            // mean per-sample cross-entropy
  std::vector<double> per_sample_loss;
  std::vector<std::size_t> predictions;
  std::vector<EpochRecord> loss_history;
  std::optional<double> coverage;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  /// Objective of every optimizer step, evaluated before the update.
  std::vector<double> step_losses;
  std::size_t steps = 0;
};

/// Prediction rule at test time: argmax over the first `num_target` logits
/// when masking a background slot, else over all logits; ties go low.
std::size_t predict(std::span<const double> logits, std::size_t num_target, bool mask_background);

/// Numerically stable -log softmax(logits)[label].
double cross_entropy(std::span<const double> logits, std::size_t label);

/// Mean cross-entropy of the batch plus lambda * sum |w| over all parameters.
/// Gradients are accumulated into the model's parameter buffers.
double batch_objective(Model& model, const Dataset& ds, std::span<const std::size_t> batch,
                       const RunConfig& config, std::uint64_t augment_seed_base,
                       std::size_t* correct = nullptr);

/// Model head must match the dataset's class arrangement (baseline N_c,
/// background N_c + 1, multitask sum over task ranges).
void check_head_matches(const Model& model, const Dataset& ds, HeadMode mode);

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainHistory train(Model& model, const Dataset& train_set, const RunConfig& config,
                   const Dataset* validation = nullptr, const EpochCallback& on_epoch = {});

/// `task` restricts prediction to one multitask label range.
Metrics evaluate(const Model& model, const Dataset& ds, bool mask_background,
                 std::optional<LabelRange> task = std::nullopt);

}  // namespace backdrop
