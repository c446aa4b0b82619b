#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "fedccea/datasets.hpp"
#include "fedccea/nn.hpp"

namespace fedccea {

struct FLConfig {
  int n_clients = 2;
  int rounds = 1;
  int local_epochs = 1;
  int batch_size = 32;
  double lr = 0.01;
  nn::MLPSpec model;
  std::uint64_t seed = 0;

  void validate() const;
  nn::SgdOptions sgd() const { return {local_epochs, batch_size, lr}; }
};

struct RoundOutcome {
  nn::MLPParams global;
  double accuracy = 0.0;
};

// Counts complete federated training runs (one per simulation or per
// retrain). Shared between threads.
struct RunCounter {
  std::atomic<std::size_t> runs{0};
  void add() noexcept { runs.fetch_add(1, std::memory_order_relaxed); }
  std::size_t value() const noexcept { return runs.load(std::memory_order_relaxed); }
};

// Trains a copy of the global model on the first `samples` rows of the
// client's fixed-order data. samples == 0 returns the global unchanged.
nn::MLPParams local_update(const nn::MLPParams& global, const ClientPartition& client,
                           std::size_t samples, const FLConfig& cfg);

// Size-weighted mean of the local parameters. Throws DegenerateRoundError
// when every size is zero.
nn::MLPParams fed_avg(std::span<const nn::MLPParams> locals, std::span<const std::size_t> sizes);

// One FedAvg round followed by evaluation on the shared test set. An
// all-zero size vector carries the previous global forward.
RoundOutcome run_round(const nn::MLPParams& global, std::span<const ClientPartition> clients,
                       std::span<const std::size_t> sizes, const LabeledDataset& test,
                       const FLConfig& cfg);

// Per-round size vectors, or every client at full size each round.
class SizeSchedule {
 public:
  static SizeSchedule full() { return SizeSchedule(); }
  static SizeSchedule per_round(std::vector<std::vector<std::size_t>> sizes) {
    SizeSchedule s;
    s.rounds_ = std::move(sizes);
    s.full_ = false;
    return s;
  }

  bool is_full() const noexcept { return full_; }
  const std::vector<std::vector<std::size_t>>& rounds() const noexcept { return rounds_; }

 private:
  SizeSchedule() = default;
  std::vector<std::vector<std::size_t>> rounds_;
  bool full_ = true;
};

struct TrainTrace {
  double final_accuracy = 0.0;
  std::vector<double> round_accuracies;
  nn::MLPParams final_params;
};

// Fresh init from cfg.seed, then cfg.rounds rounds. The client list may be
// any subset of the federation; the initial model depends only on
// (cfg.model, cfg.seed).
TrainTrace train_federated(std::span<const ClientPartition> clients, const SizeSchedule& schedule,
                           const LabeledDataset& test, const FLConfig& cfg,
                           RunCounter* counter = nullptr);

// Accuracy of the seeded initial model, i.e. of training with no clients.
double initial_accuracy(const LabeledDataset& test, const FLConfig& cfg);

}  // namespace fedccea
