#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedccea/baselines.hpp"
#include "fedccea/fl_engine.hpp"

namespace fedccea {

// (method name, per-client CCI), in presentation order.
using MethodCci = std::vector<std::pair<std::string, std::vector<double>>>;

// Mean absolute difference over all ordered pairs, divided by twice the
// mean. Zero for a uniform vector and for an all-zero vector.
double gini(std::span<const double> values);

struct CciStats {
  std::string method;
  double min = 0.0;
  double max = 0.0;
  double gini = 0.0;
  std::size_t zero_count = 0;
};

struct SkewnessReport {
  std::vector<CciStats> stats;
  MethodCci cci;
};

SkewnessReport skewness_report(const MethodCci& cci_by_method);

struct ZeroExclusionEntry {
  std::string method;
  std::vector<int> excluded;
  std::optional<double> accuracy;  // empty when every client was excluded
  bool degenerate = false;
};

struct ZeroExclusionResult {
  double base = 0.0;
  std::vector<ZeroExclusionEntry> entries;
};

// Retrain without each method's zero-CCI clients, using the Base seed.
ZeroExclusionResult zero_exclusion_retrain(const MethodCci& cci_by_method,
                                           std::span<const ClientPartition> clients,
                                           const LabeledDataset& test, const FLConfig& cfg);

enum class RemovalDirection { least_first, most_first };

const char* to_string(RemovalDirection direction);

struct CurvePoint {
  double fraction = 0.0;
  double accuracy = 0.0;
};

struct RemovalCurve {
  RemovalDirection direction = RemovalDirection::least_first;
  std::vector<CurvePoint> points;
};

struct RemovalCurves {
  RemovalCurve least_first;
  RemovalCurve most_first;
};

// Fractions must be ascending, inside [0, 1) and start at 0.
void validate_fractions(std::span<const double> fractions);

// floor(fraction * n) with a small guard against representation error.
std::size_t removal_count(double fraction, std::size_t n);

// `rank` lists client ids from highest to lowest contribution. Each point
// retrains from the Base seed without floor(f * n) clients taken from the
// low end (least_first) or the high end (most_first).
RemovalCurves client_removal_curves(std::span<const int> rank,
                                    std::span<const ClientPartition> clients,
                                    const LabeledDataset& test, const FLConfig& cfg,
                                    std::span<const double> fractions);

struct ParticipationCurves {
  RemovalCurves full;
  RemovalCurves partial;
};

// Per-round size schedule for the partial-participation study: fresh
// proportions each round, clients ranked by x_i * quality_i that round, and
// the `excluded` lowest (least_first) or highest (most_first) set to zero.
std::vector<std::vector<std::size_t>> partial_schedule(std::span<const double> quality,
                                                       std::span<const std::size_t> sizes,
                                                       int rounds, std::size_t excluded,
                                                       RemovalDirection direction,
                                                       std::uint64_t seed);

ParticipationCurves partial_participation_curves(std::span<const double> quality,
                                                 std::span<const ClientPartition> clients,
                                                 const LabeledDataset& test, const FLConfig& cfg,
                                                 std::span<const double> fractions,
                                                 std::uint64_t seed);

struct CostRow {
  std::string method;
  int n_clients = 0;
  std::size_t fl_runs = 0;
};

struct CostSetup {
  // Builds an n-client federation.
  std::function<std::vector<ClientPartition>(int n)> make_clients;
  LabeledDataset test;
  FLConfig cfg;  // n_clients is overridden per grid point
  int simulations = 1;
  std::uint64_t master_seed = 0;
  TmcOptions tmc;
  std::vector<std::string> methods = {"fedccea", "loo", "tmc"};
};

// Runs each method at each grid size with instrumented counters and
// reports the number of complete federated training runs.
std::vector<CostRow> cost_report(const CostSetup& setup, std::span<const int> n_grid);

struct RemovalRow {
  std::string method;
  RemovalDirection direction = RemovalDirection::least_first;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

struct PartialRow {
  std::string mode;  // "full" or "partial"
  RemovalDirection direction = RemovalDirection::least_first;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
};

struct ExperimentResults {
  std::string tag;  // file-name prefix, derived from the config hash
  std::optional<SkewnessReport> skewness;
  std::optional<ZeroExclusionResult> zero_exclusion;
  std::vector<RemovalRow> removal;
  std::vector<PartialRow> partial;
  std::vector<CostRow> cost;
};

void append_removal_rows(std::vector<RemovalRow>& rows, const std::string& method,
                         const RemovalCurves& curves, std::uint64_t seed);
void append_partial_rows(std::vector<PartialRow>& rows, const ParticipationCurves& curves,
                         std::uint64_t seed);

// One CSV and one SVG chart per experiment present in `results`. Returns
// the written paths in a fixed order.
std::vector<std::filesystem::path> emit_outputs(const ExperimentResults& results,
                                                const std::filesystem::path& out_dir);

}  // namespace fedccea
