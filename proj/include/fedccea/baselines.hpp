#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "fedccea/fl_engine.hpp"

namespace fedccea {

// Coalition utility with a memo cache keyed by the sorted member list.
// Thread-safe: concurrent misses on the same subset may both compute, the
// first stored value wins.
class UtilityFn {
 public:
  using Evaluator = std::function<double(const std::vector<int>& sorted_members)>;

  UtilityFn(int n_clients, Evaluator evaluator);

  int n_clients() const noexcept { return n_; }

  double operator()(std::vector<int> members);

  // Distinct subsets evaluated so far (cache misses), with and without the
  // empty coalition.
  std::size_t evaluations() const;
  std::size_t nonempty_evaluations() const;

 private:
  int n_;
  Evaluator evaluator_;
  mutable std::mutex mutex_;
  std::map<std::vector<int>, double> cache_;
};

// U(S) = final test accuracy of FedAvg over clients S at full size with the
// seeded initial model; U(empty) = accuracy of that initial model. Retrains
// are counted on `counter` when given.
UtilityFn federated_utility(std::vector<ClientPartition> clients, LabeledDataset test, FLConfig cfg,
                            std::shared_ptr<RunCounter> counter = nullptr);

enum class ValuationMethod { loo, tmc, exact };

const char* to_string(ValuationMethod method);

struct ValuationResult {
  ValuationMethod method = ValuationMethod::loo;
  std::vector<double> values;
  std::size_t permutations = 0;
  std::size_t truncations = 0;
  std::size_t utility_evaluations = 0;
};

ValuationResult loo_values(UtilityFn& utility, int n_clients);

constexpr int kMaxExactShapleyClients = 8;

ValuationResult exact_shapley(UtilityFn& utility, int n_clients);

struct TmcOptions {
  std::size_t max_permutations = 100;
  // A permutation stops scanning once |U(prefix) - U(all)| < this value.
  // Zero disables truncation.
  double truncation_tolerance = 0.01;
  // Stop once no estimate moved by this much over the last 10 permutations.
  double convergence_tolerance = 1e-3;
  std::uint64_t seed = 0;
};

ValuationResult tmc_shapley(UtilityFn& utility, int n_clients, const TmcOptions& options);

// client_id,value,method
void write_valuation_csv(const std::vector<ValuationResult>& results, const std::filesystem::path& path);
std::vector<ValuationResult> read_valuation_csv(const std::filesystem::path& path);
void write_valuation_diagnostics(const std::vector<ValuationResult>& results,
                                 const std::filesystem::path& path);

}  // namespace fedccea
