#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Core>

#include "fedccea/labeled_dataset.hpp"
#include "fedccea/rng.hpp"

namespace fedccea::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Layer widths from input to output. Hidden layers use ReLU, the output
// layer is a softmax over classes.
class MLPSpec {
 public:
  MLPSpec() = default;
  explicit MLPSpec(std::vector<int> layer_sizes);

  const std::vector<int>& layer_sizes() const noexcept { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int num_classes() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }

  friend bool operator==(const MLPSpec&, const MLPSpec&) = default;

 private:
  std::vector<int> sizes_;
};

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out

  friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
    return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
           a.bias.size() == b.bias.size() && a.weights == b.weights && a.bias == b.bias;
  }
};

struct MLPParams {
  std::vector<DenseLayer> layers;

  std::size_t parameter_count() const;
  bool all_finite() const;
  bool same_shape(const MLPParams& other) const;

  // this += scale * other
  void axpy(double scale, const MLPParams& other);
  MLPParams zeros_like() const;

  friend bool operator==(const MLPParams&, const MLPParams&) = default;
};

// Glorot-uniform weights, zero biases. Draw order: layer by layer, weights
// in row-major order.
MLPParams init_mlp(const MLPSpec& spec, RngStream& rng);

// Class probabilities, one row per sample.
RowMatrix forward(const MLPParams& params, const Eigen::Ref<const RowMatrix>& batch);

struct LossGradient {
  double loss = 0.0;  // mean cross-entropy over the batch
  MLPParams gradient;
};

LossGradient cross_entropy_gradient(const MLPParams& params, const DataView& batch);

struct SgdOptions {
  int epochs = 1;
  int batch_size = 32;
  double lr = 0.01;
};

// Mini-batch SGD over the samples in stored order. The final short batch
// is kept.
MLPParams sgd_train(MLPParams params, const DataView& data, const SgdOptions& options);

// Index of the largest entry; ties go to the lowest index.
int argmax_row(const Eigen::Ref<const RowMatrix>& probs, Eigen::Index row);

double evaluate_accuracy(const MLPParams& params, const DataView& test);

}  // namespace fedccea::nn
