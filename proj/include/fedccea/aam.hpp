#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "fedccea/rng.hpp"
#include "fedccea/simulator.hpp"

namespace fedccea {

// Zero-padded size history for one logged round: psi is n x R, columns
// 1..round hold x_1..x_round of that simulation, later columns are zero.
struct AAMInput {
  Eigen::MatrixXd psi;
  double target = 0.0;
  int sim = 0;
  int round = 0;
};

std::vector<AAMInput> build_inputs(const SimStore& store, int n_clients, int rounds);

// Accuracy Approximation Model. The first layer applies one non-negative
// weight vector (the per-client quality) to every round column; a sigmoid
// follows, then a linear hidden layer and a linear scalar output.
struct AAMParams {
  Eigen::VectorXd quality;      // n, kept >= 0
  Eigen::MatrixXd fc1_weights;  // hidden x R
  Eigen::VectorXd fc1_bias;     // hidden
  Eigen::VectorXd out_weights;  // hidden
  double out_bias = 0.0;

  int n_clients() const { return static_cast<int>(quality.size()); }
  int rounds() const { return static_cast<int>(fc1_weights.cols()); }
  int hidden() const { return static_cast<int>(fc1_weights.rows()); }
  bool all_finite() const;

  friend bool operator==(const AAMParams& a, const AAMParams& b);
};

constexpr int kDefaultAamHidden = 10;

// quality ~ U(0, 0.1); dense layers Glorot-uniform with zero biases.
AAMParams init_aam(int n_clients, int rounds, int hidden, RngStream& rng);

double aam_forward(const AAMParams& params, const Eigen::MatrixXd& psi);

struct AAMGradient {
  double loss = 0.0;  // mean squared error
  AAMParams gradient;
};

AAMGradient aam_mse_gradient(const AAMParams& params, std::span<const AAMInput> batch);

struct AAMTrainOptions {
  double lr = 0.01;
  int max_epochs = 500;
  int batch_size = 32;
  double val_fraction = 0.1;
  int patience = 20;
  double min_improvement = 1e-4;
  int hidden = kDefaultAamHidden;
  std::uint64_t seed = 0;
};

struct AAMFit {
  AAMParams params;     // parameters at the best validation MAE
  double heldout_mae = 0.0;
  double initial_mae = 0.0;
  int epochs_run = 0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
};

// Mini-batch SGD on MSE. The quality vector is projected onto the
// non-negative orthant after every update. Stops at max_epochs or when the
// validation MAE has not improved by min_improvement for `patience` epochs.
AAMFit train_aam(std::span<const AAMInput> inputs, const AAMTrainOptions& options);

Eigen::VectorXd extract_quality(const AAMParams& params);

std::vector<double> contribution_values(std::span<const double> quality,
                                        std::span<const double> sizes);

struct CciResult {
  std::vector<double> clamped;
  std::vector<double> cci;
  bool degenerate = false;  // every clamped value was zero
};

CciResult compute_cci(std::span<const double> values);

// Client ids ordered by descending value; equal values keep ascending id.
std::vector<int> rank_descending(std::span<const double> values);

struct ContributionReport {
  std::vector<double> values;
  std::vector<double> clamped;
  std::vector<double> cci;
  std::vector<int> rank;
  bool degenerate = false;
};

ContributionReport make_report(std::span<const double> values);

// x_i = |D_i| / mean |D|.
std::vector<double> full_scaled_sizes(std::span<const std::size_t> sizes);

void export_aam(const AAMFit& fit, const StoreFingerprint& fingerprint,
                const std::filesystem::path& path);

struct LoadedAAM {
  AAMParams params;
  double heldout_mae = 0.0;
  StoreFingerprint fingerprint;
};

LoadedAAM load_aam(const std::filesystem::path& path);

// client_id,v,v_clamped,cci,rank (rank is 1-based position).
void write_report_csv(const ContributionReport& report, const std::filesystem::path& path);
ContributionReport read_report_csv(const std::filesystem::path& path);

}  // namespace fedccea
