#include "backdrop/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "backdrop/autodiff.hpp"
#include "backdrop/rng.hpp"

namespace backdrop {

std::size_t RunConfig::total_epochs() const {
  if (schedule.empty()) return epochs;
  std::size_t n = 0;
  for (const auto& s : schedule) n += s.epochs;
  return n;
}

double RunConfig::lr_for_epoch(std::size_t epoch) const {
  if (schedule.empty()) return lr;
  std::size_t start = 0;
  for (const auto& s : schedule) {
    if (epoch < start + s.epochs) return s.lr;
    start += s.epochs;
  }
  return schedule.back().lr;
}

void RunConfig::validate() const {
  if (schedule.empty() && !(lr > 0)) throw std::invalid_argument("run: lr must be positive");
  for (const auto& s : schedule)
    if (!(s.lr > 0) || s.epochs == 0)
      throw std::invalid_argument("run: schedule stages need positive lr and epochs");
  if (batch_size == 0) throw std::invalid_argument("run: batch_size must be positive");
  if (lambda_l1 < 0) throw std::invalid_argument("run: lambda_l1 must be nonnegative");
}

std::size_t predict(std::span<const double> logits, std::size_t num_target, bool mask_background) {
  const std::size_t limit = mask_background ? std::min(num_target, logits.size()) : logits.size();
  if (limit == 0) throw std::invalid_argument("predict: no logits to choose from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < limit; ++i)
    if (logits[i] > logits[best]) best = i;
  return best;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw std::invalid_argument("cross_entropy: label out of range");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return std::log(s) + m - logits[label];
}

void check_head_matches(const Model& model, const Dataset& ds, HeadMode mode) {
  const auto& cfg = model.config;
  if (cfg.head_mode != mode)
    throw std::invalid_argument("model head is " + to_string(cfg.head_mode) + " but run mode is " +
                                to_string(mode));
  if (mode == HeadMode::background && !ds.has_background)
    throw std::invalid_argument("background mode requires a dataset with a background class");
  if (mode != HeadMode::background && ds.has_background)
    throw std::invalid_argument(to_string(mode) + " mode cannot train on background items");
  if (mode == HeadMode::multitask) {
    const auto ranges = cfg.task_ranges();
    bool ok = ranges.size() == ds.task_ranges.size();
    for (std::size_t i = 0; ok && i < ranges.size(); ++i)
      ok = ranges[i].offset == ds.task_ranges[i].offset && ranges[i].count == ds.task_ranges[i].count;
    if (!ok) throw std::invalid_argument("multitask head ranges do not match the merged dataset");
  }
  if (cfg.num_outputs() != ds.num_classes())
    throw std::invalid_argument("head has " + std::to_string(cfg.num_outputs()) +
                                " outputs but dataset has " + std::to_string(ds.num_classes()) +
                                " classes");
}

double batch_objective(Model& model, const Dataset& ds, std::span<const std::size_t> batch,
                       const RunConfig& config, std::uint64_t augment_seed_base,
                       std::size_t* correct) {
  Tape tape;
  const ModelVars vars = bind_parameters(tape, model, !config.freeze_conv);
  std::vector<Var> losses;
  losses.reserve(batch.size());
  std::size_t hits = 0;
  for (std::size_t idx : batch) {
    const auto& item = ds.items[idx];
    const Image img = config.augment.identity()
                          ? item.image
                          : augment(item.image, config.augment, derive_seed(augment_seed_base, idx));
    auto [feat, logits] = forward_on_tape(tape, model, vars, img.to_tensor());
    const std::size_t label = ds.class_index(item);
    const auto& z = tape.value(logits).values;
    if (predict(z, z.size(), false) == label) ++hits;
    losses.push_back(tape.softmax_cross_entropy(logits, label));
  }
  Var objective = tape.scaled_sum(losses, 1.0 / static_cast<double>(batch.size()));
  if (config.lambda_l1 > 0) {
    const auto all = vars.all();
    objective = tape.add(objective, tape.l1_penalty(all, config.lambda_l1));
  }
  tape.backward(objective);
  if (correct) *correct += hits;
  return tape.value(objective).values[0];
}

TrainHistory train(Model& model, const Dataset& train_set, const RunConfig& config,
                   const Dataset* validation, const EpochCallback& on_epoch) {
  config.validate();
  train_set.validate();
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  check_head_matches(model, train_set, config.mode);

  TrainHistory hist;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(config.seed, 0x73687566));
  const std::size_t total = config.total_epochs();
  for (std::size_t epoch = 0; epoch < total; ++epoch) {
    const double lr = config.lr_for_epoch(epoch);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const std::uint64_t aug_base = derive_seed(config.seed, 0x617567, epoch);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> batch(order.data() + start, end - start);
      model.zero_grad();
      const double obj = batch_objective(model, train_set, batch, config, aug_base, &correct);
      std::vector<Tensor*> params =
          config.freeze_conv ? model.head_parameters() : model.parameters();
      sgd_step(params, lr);
      hist.step_losses.push_back(obj);
      loss_sum += obj;
      ++rec.steps;
      ++hist.steps;
    }
    rec.train_loss = loss_sum / static_cast<double>(rec.steps);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    if (validation && !validation->empty()) {
      const Metrics vm = evaluate(model, *validation, config.eval_mask_background);
      rec.val_accuracy = vm.accuracy;
      rec.val_empirical_error = vm.empirical_error;
    }
    if (on_epoch) on_epoch(rec);
    hist.epochs.push_back(rec);
  }
  return hist;
}

Metrics evaluate(const Model& model, const Dataset& ds, bool mask_background,
                 std::optional<LabelRange> task) {
  Metrics m;
  m.count = ds.size();
  const std::size_t n_classes = task ? task->count : ds.num_classes();
  std::vector<std::size_t> per_total(n_classes, 0), per_hit(n_classes, 0);
  const bool has_bg_slot = model.config.head_mode == HeadMode::background;
  const std::size_t n_target = model.config.num_target_classes();
  std::size_t hits = 0;
  double loss_sum = 0.0;
  m.per_sample_loss.reserve(ds.size());
  m.predictions.reserve(ds.size());
  for (const auto& item : ds.items) {
    const ForwardResult fr = forward(model, item.image.to_tensor());
    const auto& z = fr.logits.values;
    std::size_t label = ds.class_index(item);
    std::size_t pred;
    double loss;
    if (task) {
      if (task->offset + task->count > z.size())
        throw std::invalid_argument("evaluate: task range exceeds model outputs");
      std::span<const double> slice(z.data() + task->offset, task->count);
      pred = predict(slice, task->count, false);
      loss = cross_entropy(z, task->offset + label);
    } else {
      pred = predict(z, n_target, mask_background && has_bg_slot);
      loss = cross_entropy(z, label);
    }
    m.per_sample_loss.push_back(loss);
    m.predictions.push_back(pred);
    loss_sum += loss;
    if (label < n_classes) ++per_total[label];
    if (pred == label) {
      ++hits;
      if (label < n_classes) ++per_hit[label];
    }
  }
  if (!ds.empty()) {
    m.accuracy = static_cast<double>(hits) / static_cast<double>(ds.size());
    m.empirical_error = loss_sum / static_cast<double>(ds.size());
  }
  m.per_class_accuracy.resize(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c)
    m.per_class_accuracy[c] = per_total[c] ? static_cast<double>(per_hit[c]) / static_cast<double>(per_total[c])
                                           : std::numeric_limits<double>::quiet_NaN();
  return m;
}

}  // namespace backdrop
