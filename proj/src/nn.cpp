#include "fedccea/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedccea/errors.hpp"

namespace fedccea::nn {

MLPSpec::MLPSpec(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw PreconditionError("MLPSpec needs at least input and output sizes");
  for (int s : sizes_) {
    if (s < 1) throw PreconditionError("MLPSpec layer sizes must be positive");
  }
}

std::size_t MLPParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& l : layers) total += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return total;
}

bool MLPParams::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weights.allFinite() && l.bias.allFinite();
  });
}

bool MLPParams::same_shape(const MLPParams& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& a = layers[k];
    const auto& b = other.layers[k];
    if (a.weights.rows() != b.weights.rows() || a.weights.cols() != b.weights.cols() ||
        a.bias.size() != b.bias.size()) {
      return false;
    }
  }
  return true;
}

void MLPParams::axpy(double scale, const MLPParams& other) {
  if (!same_shape(other)) throw ShapeError("axpy on parameters of different shapes");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    layers[k].weights.noalias() += scale * other.layers[k].weights;
    layers[k].bias.noalias() += scale * other.layers[k].bias;
  }
}

MLPParams MLPParams::zeros_like() const {
  MLPParams out;
  out.layers.reserve(layers.size());
  for (const auto& l : layers) {
    out.layers.push_back({Matrix::Zero(l.weights.rows(), l.weights.cols()), Vector::Zero(l.bias.size())});
  }
  return out;
}

MLPParams init_mlp(const MLPSpec& spec, RngStream& rng) {
  const auto& sizes = spec.layer_sizes();
  MLPParams params;
  params.layers.reserve(spec.num_layers());
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const int fan_in = sizes[k];
    const int fan_out = sizes[k + 1];
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    DenseLayer layer{Matrix(fan_out, fan_in), Vector::Zero(fan_out)};
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = rng.uniform(-a, a);
    }
    params.layers.push_back(std::move(layer));
  }
  return params;
}

namespace {

void check_input(const MLPParams& params, Eigen::Index cols) {
  if (params.layers.empty()) throw ShapeError("empty network");
  if (params.layers.front().weights.cols() != cols) {
    throw ShapeError("batch has " + std::to_string(cols) + " columns, network expects " +
                     std::to_string(params.layers.front().weights.cols()));
  }
}

// Row-wise softmax in place.
void softmax_rows(RowMatrix& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    auto row = z.row(i);
    const double m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
}

}  // namespace

RowMatrix forward(const MLPParams& params, const Eigen::Ref<const RowMatrix>& batch) {
  check_input(params, batch.cols());
  RowMatrix a = batch;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    const auto& layer = params.layers[k];
    RowMatrix z = a * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    if (k + 1 < params.layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  softmax_rows(a);
  return a;
}

LossGradient cross_entropy_gradient(const MLPParams& params, const DataView& batch) {
  if (batch.empty()) throw PreconditionError("gradient of an empty batch");
  const auto x = batch.feature_map();
  check_input(params, x.cols());
  const std::size_t depth = params.layers.size();
  const auto n = static_cast<double>(batch.size());

  // activations[k] is the input to layer k.
  std::vector<RowMatrix> activations;
  activations.reserve(depth + 1);
  activations.emplace_back(x);
  for (std::size_t k = 0; k < depth; ++k) {
    const auto& layer = params.layers[k];
    RowMatrix z = activations.back() * layer.weights.transpose();
    z.rowwise() += layer.bias.transpose();
    if (k + 1 < depth) z = z.cwiseMax(0.0);
    activations.push_back(std::move(z));
  }
  RowMatrix& probs = activations.back();
  softmax_rows(probs);

  LossGradient out;
  out.gradient = params.zeros_like();
  RowMatrix delta = probs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int y = batch.labels[i];
    const auto row = static_cast<Eigen::Index>(i);
    out.loss -= std::log(std::max(probs(row, y), 1e-300));
    delta(row, y) -= 1.0;
  }
  out.loss /= n;
  delta /= n;

  for (std::size_t k = depth; k-- > 0;) {
    const RowMatrix& input = activations[k];
    auto& g = out.gradient.layers[k];
    g.weights.noalias() = delta.transpose() * input;
    g.bias = delta.colwise().sum().transpose();
    if (k > 0) {
      RowMatrix back = delta * params.layers[k].weights;
      // input is the ReLU output of layer k-1; its derivative is the mask input > 0.
      delta = (input.array() > 0.0).select(back, 0.0);
    }
  }
  return out;
}

MLPParams sgd_train(MLPParams params, const DataView& data, const SgdOptions& options) {
  if (data.empty()) throw PreconditionError("sgd_train on an empty dataset");
  if (options.epochs < 1) throw PreconditionError("sgd_train needs epochs >= 1");
  if (options.batch_size < 1) throw PreconditionError("sgd_train needs batch_size >= 1");
  const auto batch = static_cast<std::size_t>(options.batch_size);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (std::size_t start = 0; start < data.size(); start += batch) {
      const std::size_t count = std::min(batch, data.size() - start);
      const auto step = cross_entropy_gradient(params, data.slice(start, count));
      params.axpy(-options.lr, step.gradient);
    }
  }
  return params;
}

int argmax_row(const Eigen::Ref<const RowMatrix>& probs, Eigen::Index row) {
  int best = 0;
  for (Eigen::Index c = 1; c < probs.cols(); ++c) {
    if (probs(row, c) > probs(row, best)) best = static_cast<int>(c);
  }
  return best;
}

double evaluate_accuracy(const MLPParams& params, const DataView& test) {
  if (test.empty()) throw PreconditionError("evaluate_accuracy on an empty test set");
  const RowMatrix probs = forward(params, test.feature_map());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (argmax_row(probs, static_cast<Eigen::Index>(i)) == test.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace fedccea::nn
