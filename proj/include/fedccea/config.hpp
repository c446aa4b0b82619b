#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedccea/aam.hpp"
#include "fedccea/baselines.hpp"
#include "fedccea/datasets.hpp"
#include "fedccea/fl_engine.hpp"

namespace fedccea {

struct SyntheticSource {
  int classes = 6;
  int per_class = 800;
  int dim = 16;
  double spread = 0.2;
  int test_size = 600;

  bool operator==(const SyntheticSource&) const = default;
};

struct IdxSource {
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;
  std::optional<int> classes;  // inferred from the labels when absent

  bool operator==(const IdxSource&) const = default;
};

struct DatasetConfig {
  std::optional<SyntheticSource> synthetic;
  std::optional<IdxSource> idx;

  bool operator==(const DatasetConfig&) const = default;
};

struct PartitionConfig {
  int n_clients = 8;
  std::optional<int> classes_per_client;  // absent means IID
  int samples_per_client = 300;

  bool operator==(const PartitionConfig&) const = default;
};

struct NoiseConfig {
  NoiseKind kind = NoiseKind::label;
  double client_fraction = 0.2;
  double sample_fraction = 0.4;
  int pattern_block = 0;

  bool operator==(const NoiseConfig&) const = default;
};

struct FLSettings {
  int rounds = 10;
  int local_epochs = 1;
  int batch_size = 32;
  double lr = 0.01;
  std::vector<int> hidden = {32};

  bool operator==(const FLSettings&) const = default;
};

struct AAMSettings {
  double lr = 0.01;
  int max_epochs = 500;
  int batch_size = 32;
  double val_fraction = 0.1;
  int patience = 20;
  double min_improvement = 1e-4;
  int hidden = kDefaultAamHidden;

  bool operator==(const AAMSettings&) const = default;
};

struct BaselineSettings {
  std::vector<std::string> methods = {"loo", "tmc"};
  std::size_t tmc_permutations = 100;
  double tmc_truncation = 0.01;
  double tmc_convergence = 1e-3;

  bool operator==(const BaselineSettings&) const = default;
};

struct ExperimentSettings {
  std::vector<std::string> studies = {"skewness", "zero_exclusion", "removal", "partial", "cost"};
  std::vector<std::string> methods = {"fedccea", "loo", "tmc"};
  std::vector<double> fractions = {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  // Retrain seeds; empty means the single Base seed.
  std::vector<std::uint64_t> seeds;
  std::vector<int> cost_grid = {4, 8};

  bool operator==(const ExperimentSettings&) const = default;
};

struct RunConfig {
  DatasetConfig dataset;
  PartitionConfig partition;
  std::optional<NoiseConfig> noise;
  FLSettings fl;
  int simulations = 100;
  AAMSettings aam;
  BaselineSettings baselines;
  ExperimentSettings experiments;
  std::string output_dir = "out";
  std::uint64_t seed = 0;

  bool operator==(const RunConfig&) const = default;
};

// Strict parse: unknown keys, wrong types and invariant violations raise
// ConfigError naming the dotted path of the offending key.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

// Every field written explicitly, keys in a fixed order.
std::string config_to_json(const RunConfig& config);

// 16 hex digits over the resolved config without output_dir.
std::string config_hash(const RunConfig& config);

// Sub-seeds for each pipeline stage, derived from the master seed.
std::uint64_t stage_seed(const RunConfig& config, const char* stage);

FLConfig make_fl_config(const RunConfig& config, int input_dim, int classes);

}  // namespace fedccea
