#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedccea/fl_engine.hpp"
#include "fedccea/rng.hpp"

namespace fedccea {

// n i.i.d. proportions on the open interval (0, 1).
std::vector<double> sample_proportions(int n, RngStream& rng);

struct SizeSample {
  std::vector<double> p;
  std::vector<std::size_t> d;  // floor(|D_i| * p_i)
  std::vector<double> x;       // d / mean(|D_i|)
};

SizeSample scale_sizes(std::span<const std::size_t> sizes, std::span<const double> p);

struct SimRecord {
  int sim = 0;    // 1-based
  int round = 0;  // 1-based
  std::vector<double> x;
  double acc = 0.0;

  friend bool operator==(const SimRecord&, const SimRecord&) = default;
};

struct StoreFingerprint {
  int n_clients = 0;
  int rounds = 0;
  int simulations = 0;
  std::uint64_t master_seed = 0;
  std::uint64_t dataset_hash = 0;

  friend bool operator==(const StoreFingerprint&, const StoreFingerprint&) = default;
};

struct SimStore {
  StoreFingerprint fingerprint;
  std::vector<SimRecord> records;  // ordered by (sim, round)

  // Exactly S*R records with dense, ordered (sim, round) pairs.
  void validate() const;

  friend bool operator==(const SimStore&, const SimStore&) = default;
};

// One R-round simulation from a freshly initialized global model. The init
// is seeded by cfg.seed, as in train_federated, so every simulation starts
// from the same model; the size proportions come from rng.
std::vector<SimRecord> run_simulation(std::span<const ClientPartition> clients,
                                      const LabeledDataset& test, const FLConfig& cfg, int sim_id,
                                      const RngStream& rng);

// Stream for simulation s (1-based).
RngStream simulation_stream(std::uint64_t master_seed, int sim_id);

// S independent simulations. Simulations may run on worker threads
// (threads == 0 picks the hardware concurrency); the store order is always
// (sim, round).
SimStore run_all(std::span<const ClientPartition> clients, const LabeledDataset& test,
                 const FLConfig& cfg, int simulations, std::uint64_t master_seed,
                 RunCounter* counter = nullptr, unsigned threads = 0);

// JSON lines: a header with the fingerprint, then one record per line.
// Reals use 17 significant digits.
void persist_store(const SimStore& store, const std::filesystem::path& path);

struct LoadedStore {
  SimStore store;
  std::vector<std::string> warnings;
};

// Fingerprint differences against `expected` become warnings, not errors.
LoadedStore load_store(const std::filesystem::path& path,
                       const std::optional<StoreFingerprint>& expected = std::nullopt);

}  // namespace fedccea
