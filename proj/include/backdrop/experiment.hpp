#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "backdrop/cam.hpp"
#include "backdrop/dataset.hpp"
#include "backdrop/model.hpp"
#include "backdrop/training.hpp"

namespace backdrop {

/// Data shared by every (regime, seed) cell of a comparison.
struct ExperimentBundle {
  std::string name = "dataset";
  Dataset train_pool;  // split 90/10 per seed
  Dataset test;
  Dataset background_pool;              // used by the background regime
  std::optional<Dataset> auxiliary;     // second task for the multitask regime
};

struct RegimeSpec {
  std::string name;
  RunConfig run;  // run.mode selects the head arrangement
};

struct CompareOptions {
  ModelConfig model;  // input shape and conv stack; head fields are filled per regime
  std::vector<std::uint64_t> seeds;
  std::vector<RegimeSpec> regimes;
  double train_fraction = 0.9;
  /// Background items drawn from the pool; 0 uses the lower end of the
  /// size heuristic (training-set size / N_c).
  std::size_t background_size = 0;
  NmfOptions nmf;
  std::size_t coverage_samples = 200;  // test images used for DFF coverage
  std::size_t workers = 1;
};

struct EpochRow {
  std::string dataset;
  std::string regime;
  std::uint64_t seed = 0;
  EpochRecord record;
  // Filled on the final epoch row of a run.
  std::optional<double> test_accuracy;
  std::optional<double> test_coverage;
};

struct CellResult {
  std::string regime;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double empirical_error = 0.0;
  double coverage = 0.0;
  std::uint64_t split_hash = 0;
  std::vector<EpochRow> epochs;
};

struct RegimeSummary {
  std::string regime;
  std::size_t runs = 0;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;  // sample standard deviation
  double coverage_mean = 0.0;
  double coverage_std = 0.0;
};

struct Comparison {
  std::vector<CellResult> cells;  // sorted by (regime, seed)
  std::vector<RegimeSummary> summaries;
};

/// Mean DFF coverage of each image's true class over the first `samples` items.
double mean_coverage(const Model& model, const Dataset& ds, const NmfOptions& nmf,
                     std::size_t samples, std::uint64_t seed);

/// Trains and evaluates one regime for one seed.
CellResult run_cell(const ExperimentBundle& bundle, const CompareOptions& options,
                    const RegimeSpec& regime, std::uint64_t seed, Model* trained = nullptr);

Comparison compare_regimes(const ExperimentBundle& bundle, const CompareOptions& options);

std::vector<RegimeSummary> summarize(const std::vector<CellResult>& cells);

// ---- CSV / text output ----

/// Columns: dataset, regime, seed, epoch, lr, steps, train_loss, train_accuracy,
/// val_accuracy, val_empirical_error, test_accuracy, test_coverage.
void write_metrics_csv_header(std::ostream& os);
void write_metrics_csv_row(std::ostream& os, const EpochRow& row);
/// Columns: regime, seed, accuracy, coverage; then one `summary` row per
/// regime holding mean±std.
void write_comparison_csv(std::ostream& os, const Comparison& cmp);
void write_comparison_table(std::ostream& os, const Comparison& cmp);

}  // namespace backdrop
