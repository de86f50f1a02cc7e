#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "backdrop/background.hpp"
#include "backdrop/cam.hpp"
#include "backdrop/experiment.hpp"
#include "backdrop/synth.hpp"

namespace backdrop {

/// Configuration problem tied to a JSON field path such as "run[1].lr".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Either a dataset directory (manifest.tsv) or an IDX image/label pair.
struct DataSource {
  std::filesystem::path dir;
  std::filesystem::path images;
  std::filesystem::path labels;

  bool is_idx() const { return !images.empty(); }
  Dataset load() const;
};

struct DatasetSection {
  std::string name = "synthetic";
  std::optional<ConfoundSpec> synthetic;
  std::optional<DataSource> train;  // split into train/val per seed
  std::optional<DataSource> test;
  std::optional<DataSource> background;  // overrides the synthetic pool
  std::optional<DataSource> auxiliary;
  std::optional<ConfoundSpec> auxiliary_synthetic;
};

/// Resolved experiment description. Every field has a default, so `{}` is a
/// valid config describing the synthetic confound comparison.
struct ExperimentConfig {
  DatasetSection dataset;
  std::vector<ConvBlockSpec> blocks;  // empty: desk default stack
  std::vector<RegimeSpec> regimes;
  std::uint64_t seed = 1;             // data generation
  std::vector<std::uint64_t> seeds;   // one training run per entry
  double train_fraction = 0.9;
  std::size_t background_size = 0;
  NmfOptions dff;
  std::size_t coverage_samples = 200;
  std::string output;

  const RegimeSpec& regime(const std::string& name) const;
  nlohmann::json to_json() const;
};

ExperimentConfig default_experiment_config();

/// Strict parse: unknown keys, wrong types and missing paths raise ConfigError.
/// A reproducibility record is accepted too; its resolved config is used.
ExperimentConfig parse_experiment_config(const nlohmann::json& j, bool check_paths = true);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

ConfoundSpec parse_confound_spec(const nlohmann::json& j, const std::string& field);
nlohmann::json confound_to_json(const ConfoundSpec& spec);
nlohmann::json run_to_json(const RunConfig& run);

/// Pools plus the assembly recipe of a build-background spec file.
struct BackgroundJob {
  std::vector<std::pair<std::string, std::string>> pools;  // id, location
  BackgroundSpec spec;
  std::uint64_t seed = 1;
};

BackgroundJob parse_background_job(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                   bool check_paths = true);
nlohmann::json background_job_to_json(const BackgroundJob& job);

/// Loads or generates every dataset the experiment needs.
ExperimentBundle load_bundle(const ExperimentConfig& config);

/// Reads a JSON file, reporting syntax errors as ConfigError on "<file>".
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace backdrop
