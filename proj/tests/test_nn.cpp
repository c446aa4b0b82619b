#include <gtest/gtest.h>

#include <cmath>

#include "fedccea/datasets.hpp"
#include "fedccea/errors.hpp"
#include "fedccea/nn.hpp"
#include "oracles.hpp"

using namespace fedccea;

namespace {

LabeledDataset random_dataset(oracle::Gen& g, int rows, int dim, int classes) {
  RowMatrix x(rows, dim);
  std::vector<int> y(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < dim; ++c) x(r, c) = g.real(0.0, 1.0);
    y[static_cast<std::size_t>(r)] = g.integer(0, classes - 1);
  }
  return LabeledDataset(std::move(x), std::move(y), classes);
}

std::vector<std::vector<double>> rows_of(const LabeledDataset& d) {
  std::vector<std::vector<double>> out;
  for (Eigen::Index r = 0; r < d.features().rows(); ++r) {
    out.emplace_back(d.features().row(r).data(), d.features().row(r).data() + d.features().cols());
  }
  return out;
}

nn::MLPParams zero_net(const nn::MLPSpec& spec) {
  RngStream rng(0);
  return nn::init_mlp(spec, rng).zeros_like();
}

}  // namespace

TEST(MLPSpec, RejectsShortOrEmptyLayers) {
  EXPECT_THROW(nn::MLPSpec({4}), PreconditionError);
  EXPECT_THROW(nn::MLPSpec({4, 0, 2}), PreconditionError);
  EXPECT_NO_THROW(nn::MLPSpec({4, 2}));
}

TEST(InitMlp, SameSeedGivesIdenticalParams) {
  const nn::MLPSpec spec({2, 3, 2});
  RngStream a(7), b(7);
  EXPECT_EQ(nn::init_mlp(spec, a), nn::init_mlp(spec, b));
}

TEST(InitMlp, BiasesAreZeroAndWeightsWithinGlorotBound) {
  const nn::MLPSpec spec({16, 32, 8, 6});
  RngStream rng(3);
  const auto p = nn::init_mlp(spec, rng);
  ASSERT_EQ(p.layers.size(), 3u);
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const auto& layer = p.layers[l];
    const int in = spec.layer_sizes()[l];
    const int out = spec.layer_sizes()[l + 1];
    EXPECT_EQ(layer.weights.rows(), out);
    EXPECT_EQ(layer.weights.cols(), in);
    EXPECT_TRUE(layer.bias.isZero(0.0));
    const double a = std::sqrt(6.0 / (in + out));
    EXPECT_LE(layer.weights.cwiseAbs().maxCoeff(), a);
  }
}

TEST(InitMlp, DifferentSeedsGiveDifferentWeights) {
  const nn::MLPSpec spec({4, 5});
  RngStream a(1), b(2);
  EXPECT_NE(nn::init_mlp(spec, a).layers[0].weights, nn::init_mlp(spec, b).layers[0].weights);
}

TEST(Forward, ZeroNetworkIsUniform) {
  const nn::MLPSpec spec({3, 4, 5});
  const auto p = zero_net(spec);
  RowMatrix x = RowMatrix::Random(6, 3);
  const auto probs = nn::forward(p, x);
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    for (Eigen::Index c = 0; c < probs.cols(); ++c) EXPECT_DOUBLE_EQ(probs(r, c), 0.2);
  }
}

TEST(Forward, IdentityNetworkFollowsLargestFeature) {
  const nn::MLPSpec spec({3, 3});
  auto p = zero_net(spec);
  p.layers[0].weights = Eigen::MatrixXd::Identity(3, 3);
  RowMatrix x(1, 3);
  x << 0.1, 0.7, 0.2;
  const auto probs = nn::forward(p, x);
  // softmax by hand
  const double z = std::exp(0.1) + std::exp(0.7) + std::exp(0.2);
  EXPECT_NEAR(probs(0, 1), std::exp(0.7) / z, 1e-15);
  EXPECT_EQ(nn::argmax_row(probs, 0), 1);
}

TEST(Forward, RowsSumToOne) {
  oracle::Gen g(11);
  for (int trial = 0; trial < 20; ++trial) {
    const nn::MLPSpec spec({g.integer(1, 6), g.integer(1, 8), g.integer(2, 5)});
    RngStream rng(static_cast<std::uint64_t>(trial));
    auto p = nn::init_mlp(spec, rng);
    for (double* v : oracle::flat(p)) *v *= 4.0;  // push logits apart
    RowMatrix x(7, spec.input_dim());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = g.real(-3.0, 3.0);
    }
    const auto probs = nn::forward(p, x);
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      EXPECT_NEAR(probs.row(r).sum(), 1.0, 1e-9);
      EXPECT_GE(probs.row(r).minCoeff(), 0.0);
    }
  }
}

TEST(Forward, ColumnMismatchIsShapeError) {
  const auto p = zero_net(nn::MLPSpec({3, 2}));
  RowMatrix x(2, 4);
  x.setZero();
  EXPECT_THROW(nn::forward(p, x), ShapeError);
}

TEST(CrossEntropyGradient, MatchesFiniteDifferences) {
  oracle::Gen g(2024);
  const double eps = 1e-5;
  for (int trial = 0; trial < 24; ++trial) {
    std::vector<int> sizes{g.integer(2, 6)};
    const int hidden = g.integer(0, 2);
    for (int h = 0; h < hidden; ++h) sizes.push_back(g.integer(2, 7));
    sizes.push_back(g.integer(2, 5));
    const nn::MLPSpec spec(sizes);
    RngStream rng(static_cast<std::uint64_t>(100 + trial));
    auto p = nn::init_mlp(spec, rng);
    for (auto& layer : p.layers) {
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = g.real(-0.2, 0.2);
    }
    const auto data = random_dataset(g, 10, spec.input_dim(), spec.num_classes());
    const auto rows = rows_of(data);
    const std::vector<int> labels(data.labels().begin(), data.labels().end());

    const auto analytic = nn::cross_entropy_gradient(p, data.view());
    EXPECT_NEAR(analytic.loss, oracle::mlp_loss(p, rows, labels), 1e-12);
    auto grad = analytic.gradient;
    const auto g_flat = oracle::flat(grad);
    auto probe = p;
    const auto p_flat = oracle::flat(probe);
    double worst = 0.0;
    for (std::size_t k = 0; k < p_flat.size(); ++k) {
      const double saved = *p_flat[k];
      *p_flat[k] = saved + eps;
      const double up = oracle::mlp_loss(probe, rows, labels);
      *p_flat[k] = saved - eps;
      const double down = oracle::mlp_loss(probe, rows, labels);
      *p_flat[k] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double denom = std::max({std::abs(numeric), std::abs(*g_flat[k]), 1e-6});
      worst = std::max(worst, std::abs(numeric - *g_flat[k]) / denom);
    }
    EXPECT_LT(worst, 1e-4) << "trial " << trial;
  }
}

TEST(SgdTrain, ZeroLearningRateLeavesParamsUnchanged) {
  oracle::Gen g(5);
  const auto data = random_dataset(g, 40, 3, 2);
  RngStream rng(1);
  const auto p = nn::init_mlp(nn::MLPSpec({3, 4, 2}), rng);
  EXPECT_EQ(nn::sgd_train(p, data.view(), {2, 8, 0.0}), p);
}

TEST(SgdTrain, RejectsEmptyDataAndZeroEpochs) {
  oracle::Gen g(5);
  const auto data = random_dataset(g, 10, 3, 2);
  RngStream rng(1);
  const auto p = nn::init_mlp(nn::MLPSpec({3, 2}), rng);
  EXPECT_THROW(nn::sgd_train(p, data.view().prefix(0), {1, 4, 0.1}), PreconditionError);
  EXPECT_THROW(nn::sgd_train(p, data.view(), {0, 4, 0.1}), PreconditionError);
  EXPECT_THROW(nn::sgd_train(p, data.view(), {1, 0, 0.1}), PreconditionError);
}

TEST(SgdTrain, IsDeterministic) {
  oracle::Gen g(8);
  const auto data = random_dataset(g, 50, 4, 3);
  RngStream r1(9), r2(9);
  const auto a = nn::sgd_train(nn::init_mlp(nn::MLPSpec({4, 6, 3}), r1), data.view(), {3, 7, 0.1});
  const auto b = nn::sgd_train(nn::init_mlp(nn::MLPSpec({4, 6, 3}), r2), data.view(), {3, 7, 0.1});
  EXPECT_EQ(a, b);
}

TEST(SgdTrain, OneEpochEqualsManualBatchSteps) {
  // Batches in stored order with the short tail kept: 10 samples, B = 4
  // gives steps over [0,4), [4,8), [8,10).
  oracle::Gen g(12);
  const auto data = random_dataset(g, 10, 3, 2);
  RngStream rng(4);
  const auto p0 = nn::init_mlp(nn::MLPSpec({3, 4, 2}), rng);
  auto manual = p0;
  for (auto [start, count] : {std::pair<std::size_t, std::size_t>{0, 4}, {4, 4}, {8, 2}}) {
    const auto step = nn::cross_entropy_gradient(manual, data.view().slice(start, count));
    manual.axpy(-0.05, step.gradient);
  }
  EXPECT_EQ(nn::sgd_train(p0, data.view(), {1, 4, 0.05}), manual);
}

TEST(SgdTrain, LearnsSeparableBlobs) {
  // Two well-separated 2-D blobs, 200 samples.
  RngStream noise(21);
  RowMatrix x(200, 2);
  std::vector<int> y(200);
  for (int i = 0; i < 200; ++i) {
    const int label = i % 2;
    y[static_cast<std::size_t>(i)] = label;
    x(i, 0) = (label ? 0.8 : 0.2) + 0.05 * noise.normal();
    x(i, 1) = (label ? 0.2 : 0.8) + 0.05 * noise.normal();
  }
  const LabeledDataset data(std::move(x), std::move(y), 2);
  RngStream rng(3);
  auto p = nn::init_mlp(nn::MLPSpec({2, 2}), rng);
  for (int epoch = 0; epoch < 50; ++epoch) p = nn::sgd_train(p, data.view(), {1, 32, 0.1});
  EXPECT_GE(nn::evaluate_accuracy(p, data.view()), 0.95);
}

TEST(EvaluateAccuracy, ZeroNetworkOnBalancedSetIsOneOverC) {
  const int classes = 4;
  RowMatrix x(40, 3);
  x.setConstant(0.5);
  std::vector<int> y(40);
  for (int i = 0; i < 40; ++i) y[static_cast<std::size_t>(i)] = i % classes;
  const LabeledDataset data(std::move(x), std::move(y), classes);
  const auto p = zero_net(nn::MLPSpec({3, 5, classes}));
  EXPECT_DOUBLE_EQ(nn::evaluate_accuracy(p, data.view()), 0.25);
}

TEST(EvaluateAccuracy, ForcedCorrectPredictorScoresOne) {
  // One-hot features and an identity layer predict the label exactly.
  RowMatrix x = RowMatrix::Zero(9, 3);
  std::vector<int> y(9);
  for (int i = 0; i < 9; ++i) {
    y[static_cast<std::size_t>(i)] = i % 3;
    x(i, i % 3) = 1.0;
  }
  const LabeledDataset data(std::move(x), std::move(y), 3);
  auto p = zero_net(nn::MLPSpec({3, 3}));
  p.layers[0].weights = Eigen::MatrixXd::Identity(3, 3);
  EXPECT_DOUBLE_EQ(nn::evaluate_accuracy(p, data.view()), 1.0);
}

TEST(EvaluateAccuracy, MatchesBruteForceRecount) {
  oracle::Gen g(31);
  for (int trial = 0; trial < 10; ++trial) {
    const auto data = random_dataset(g, 60, 4, 3);
    RngStream rng(static_cast<std::uint64_t>(trial));
    const auto p = nn::init_mlp(nn::MLPSpec({4, 5, 3}), rng);
    const auto probs = nn::forward(p, data.features());
    int correct = 0;
    for (Eigen::Index r = 0; r < probs.rows(); ++r) {
      int best = 0;
      for (int c = 1; c < 3; ++c) {
        if (probs(r, c) > probs(r, best)) best = c;
      }
      correct += best == data.labels()[static_cast<std::size_t>(r)];
    }
    const double acc = nn::evaluate_accuracy(p, data.view());
    EXPECT_DOUBLE_EQ(acc, correct / 60.0);
    EXPECT_GE(acc, 0.0);
    EXPECT_LE(acc, 1.0);
  }
}

TEST(EvaluateAccuracy, EmptyTestSetIsPreconditionError) {
  oracle::Gen g(1);
  const auto data = random_dataset(g, 5, 2, 2);
  const auto p = zero_net(nn::MLPSpec({2, 2}));
  EXPECT_THROW(nn::evaluate_accuracy(p, data.view().prefix(0)), PreconditionError);
}

TEST(ArgmaxRow, TiesGoToLowestIndex) {
  RowMatrix probs(1, 4);
  probs << 0.1, 0.4, 0.4, 0.1;
  EXPECT_EQ(nn::argmax_row(probs, 0), 1);
}

TEST(Rng, StreamsAreReproducibleAndChildrenIndependent) {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  RngStream root(42);
  EXPECT_NE(root.child("x").seed(), root.child("y").seed());
  EXPECT_EQ(root.child("x").seed(), RngStream(42).child("x").seed());
}

TEST(Rng, KnownFirstDraw) {
  // SplitMix64 reference: seed 0, first output.
  RngStream r(0);
  EXPECT_EQ(r.next_u64(), 0xe220a8397b1dcdafULL);
}

TEST(Rng, UniformMomentsAndRanges) {
  RngStream r(5);
  double sum = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform_open();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.01);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
}
