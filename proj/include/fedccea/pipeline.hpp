#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fedccea/config.hpp"
#include "fedccea/datasets.hpp"
#include "fedccea/fl_engine.hpp"
#include "fedccea/simulator.hpp"

namespace fedccea {

// Artifact locations, all prefixed by the config hash.
struct ArtifactPaths {
  std::string tag;
  std::filesystem::path dir;
  std::filesystem::path config;
  std::filesystem::path partitions;
  std::filesystem::path store;
  std::filesystem::path aam;
  std::filesystem::path report;
  std::filesystem::path baseline_values;
  std::filesystem::path baseline_diagnostics;
};

ArtifactPaths artifact_paths(const RunConfig& config);

struct PreparedData {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<ClientPartition> clients;
  FLConfig fl;
  StoreFingerprint fingerprint;
};

// Loads or generates the dataset, partitions it and injects noise. Fully
// determined by the config.
PreparedData prepare_data(const RunConfig& config);

enum class Stage { simulate, train_aam, value, baseline, experiment, all };

Stage stage_from_string(const std::string& name);
const char* to_string(Stage stage);

// Runs one stage (or all, in order) and returns the files it wrote. The
// resolved config is echoed first.
std::vector<std::filesystem::path> run_stage(Stage stage, const RunConfig& config, std::ostream& log);

// Exit codes.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDependency = 3;
constexpr int kExitRuntime = 4;

// run_stage with errors mapped to exit codes and reported on `err`.
int dispatch(const std::string& subcommand, const RunConfig& config, std::ostream& log,
             std::ostream& err);

}  // namespace fedccea
