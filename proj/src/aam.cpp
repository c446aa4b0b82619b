#include "fedccea/aam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedccea/errors.hpp"
#include "fedccea/format.hpp"

namespace fedccea {

std::vector<AAMInput> build_inputs(const SimStore& store, int n_clients, int rounds) {
  const auto& fp = store.fingerprint;
  if (fp.n_clients != n_clients || fp.rounds != rounds) {
    throw ConsistencyError("store shape (n=" + std::to_string(fp.n_clients) + ", R=" +
                           std::to_string(fp.rounds) + ") does not match requested (n=" +
                           std::to_string(n_clients) + ", R=" + std::to_string(rounds) + ")");
  }
  store.validate();

  std::vector<AAMInput> inputs;
  inputs.reserve(store.records.size());
  const auto R = static_cast<std::size_t>(rounds);
  for (std::size_t start = 0; start < store.records.size(); start += R) {
    Eigen::MatrixXd running = Eigen::MatrixXd::Zero(n_clients, rounds);
    for (std::size_t r = 0; r < R; ++r) {
      const auto& rec = store.records[start + r];
      running.col(static_cast<Eigen::Index>(r)) =
          Eigen::Map<const Eigen::VectorXd>(rec.x.data(), n_clients);
      inputs.push_back({running, rec.acc, rec.sim, rec.round});
    }
  }
  return inputs;
}

bool AAMParams::all_finite() const {
  return quality.allFinite() && fc1_weights.allFinite() && fc1_bias.allFinite() &&
         out_weights.allFinite() && std::isfinite(out_bias);
}

bool operator==(const AAMParams& a, const AAMParams& b) {
  auto same = [](const auto& x, const auto& y) {
    return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
  };
  return same(a.quality, b.quality) && same(a.fc1_weights, b.fc1_weights) &&
         same(a.fc1_bias, b.fc1_bias) && same(a.out_weights, b.out_weights) &&
         a.out_bias == b.out_bias;
}

AAMParams init_aam(int n_clients, int rounds, int hidden, RngStream& rng) {
  if (n_clients < 1 || rounds < 1 || hidden < 1) throw PreconditionError("init_aam: sizes must be positive");
  AAMParams p;
  p.quality.resize(n_clients);
  for (int i = 0; i < n_clients; ++i) p.quality(i) = rng.uniform(0.0, 0.1);
  const double a1 = std::sqrt(6.0 / static_cast<double>(rounds + hidden));
  p.fc1_weights.resize(hidden, rounds);
  for (int h = 0; h < hidden; ++h) {
    for (int r = 0; r < rounds; ++r) p.fc1_weights(h, r) = rng.uniform(-a1, a1);
  }
  p.fc1_bias = Eigen::VectorXd::Zero(hidden);
  const double a2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
  p.out_weights.resize(hidden);
  for (int h = 0; h < hidden; ++h) p.out_weights(h) = rng.uniform(-a2, a2);
  // With omega >= 0 the head must start increasing in total round value,
  // otherwise projection pins omega at zero before the head can turn around.
  if ((p.fc1_weights.transpose() * p.out_weights).sum() < 0.0) p.out_weights = -p.out_weights;
  p.out_bias = 0.0;
  return p;
}

namespace {

void check_psi(const AAMParams& params, const Eigen::MatrixXd& psi) {
  if (psi.rows() != params.quality.size() || psi.cols() != params.fc1_weights.cols()) {
    throw ShapeError("AAM input is " + std::to_string(psi.rows()) + "x" + std::to_string(psi.cols()) +
                     ", model expects " + std::to_string(params.quality.size()) + "x" +
                     std::to_string(params.fc1_weights.cols()));
  }
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return (1.0 + (-x.array()).exp()).inverse().matrix();
}

}  // namespace

double aam_forward(const AAMParams& params, const Eigen::MatrixXd& psi) {
  check_psi(params, psi);
  const Eigen::VectorXd round_totals = psi.transpose() * params.quality;
  const Eigen::VectorXd h = sigmoid(round_totals);
  const Eigen::VectorXd z = params.fc1_weights * h + params.fc1_bias;
  return params.out_weights.dot(z) + params.out_bias;
}

AAMGradient aam_mse_gradient(const AAMParams& params, std::span<const AAMInput> batch) {
  if (batch.empty()) throw PreconditionError("aam_mse_gradient on an empty batch");
  AAMGradient out;
  auto& g = out.gradient;
  g.quality = Eigen::VectorXd::Zero(params.quality.size());
  g.fc1_weights = Eigen::MatrixXd::Zero(params.fc1_weights.rows(), params.fc1_weights.cols());
  g.fc1_bias = Eigen::VectorXd::Zero(params.fc1_bias.size());
  g.out_weights = Eigen::VectorXd::Zero(params.out_weights.size());
  g.out_bias = 0.0;

  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& in : batch) {
    check_psi(params, in.psi);
    const Eigen::VectorXd round_totals = in.psi.transpose() * params.quality;
    const Eigen::VectorXd h = sigmoid(round_totals);
    const Eigen::VectorXd z = params.fc1_weights * h + params.fc1_bias;
    const double err = params.out_weights.dot(z) + params.out_bias - in.target;
    out.loss += err * err * scale;

    const double dy = 2.0 * err * scale;
    g.out_weights += dy * z;
    g.out_bias += dy;
    const Eigen::VectorXd dz = dy * params.out_weights;
    g.fc1_weights.noalias() += dz * h.transpose();
    g.fc1_bias += dz;
    const Eigen::VectorXd dh = params.fc1_weights.transpose() * dz;
    const Eigen::VectorXd dx = (dh.array() * h.array() * (1.0 - h.array())).matrix();
    g.quality.noalias() += in.psi * dx;
  }
  return out;
}

namespace {

void sgd_step(AAMParams& p, const AAMParams& g, double lr) {
  p.quality -= lr * g.quality;
  p.quality = p.quality.cwiseMax(0.0);
  p.fc1_weights -= lr * g.fc1_weights;
  p.fc1_bias -= lr * g.fc1_bias;
  p.out_weights -= lr * g.out_weights;
  p.out_bias -= lr * g.out_bias;
}

double mean_abs_error(const AAMParams& p, std::span<const AAMInput> inputs,
                      std::span<const std::size_t> which) {
  double total = 0.0;
  for (std::size_t k : which) total += std::abs(aam_forward(p, inputs[k].psi) - inputs[k].target);
  return total / static_cast<double>(which.size());
}

}  // namespace

AAMFit train_aam(std::span<const AAMInput> inputs, const AAMTrainOptions& options) {
  if (inputs.size() < 10) throw PreconditionError("train_aam needs at least 10 inputs");
  if (!(options.lr >= 0.0)) throw PreconditionError("train_aam: lr must be non-negative");
  if (options.max_epochs < 0 || options.batch_size < 1 || options.patience < 1) {
    throw PreconditionError("train_aam: invalid epoch, batch or patience setting");
  }
  if (!(options.val_fraction >= 0.0 && options.val_fraction < 1.0)) {
    throw PreconditionError("train_aam: val_fraction must lie in [0, 1)");
  }
  const auto n = static_cast<int>(inputs.front().psi.rows());
  const auto R = static_cast<int>(inputs.front().psi.cols());

  const RngStream root(options.seed);
  RngStream init_rng = root.child("init");
  RngStream split_rng = root.child("split");
  RngStream order_rng = root.child("order");

  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), 0);
  split_rng.shuffle(std::span<std::size_t>(order));
  std::size_t n_val = static_cast<std::size_t>(
      std::lround(options.val_fraction * static_cast<double>(inputs.size())));
  if (options.val_fraction > 0.0) n_val = std::max<std::size_t>(n_val, 1);
  n_val = std::min(n_val, inputs.size() - 1);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  // Without a validation split the training MAE drives early stopping.
  const std::span<const std::size_t> monitor = val.empty() ? std::span<const std::size_t>(train)
                                                           : std::span<const std::size_t>(val);

  AAMFit fit;
  fit.train_size = train.size();
  fit.val_size = val.size();
  AAMParams params = init_aam(n, R, options.hidden, init_rng);
  // Centre the initial predictions on the mean training target so early
  // updates fit the size signal rather than the offset.
  double offset = 0.0;
  for (std::size_t k : train) offset += inputs[k].target - aam_forward(params, inputs[k].psi);
  params.out_bias += offset / static_cast<double>(train.size());
  fit.params = params;
  fit.initial_mae = mean_abs_error(params, inputs, monitor);
  fit.heldout_mae = fit.initial_mae;

  const auto batch = static_cast<std::size_t>(options.batch_size);
  std::vector<AAMInput> staged;
  staged.reserve(batch);
  int stale = 0;
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(train));
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t end = std::min(train.size(), start + batch);
      staged.clear();
      for (std::size_t k = start; k < end; ++k) staged.push_back(inputs[train[k]]);
      const auto step = aam_mse_gradient(params, staged);
      sgd_step(params, step.gradient, options.lr);
    }
    ++fit.epochs_run;
    const double mae = mean_abs_error(params, inputs, monitor);
    if (mae < fit.heldout_mae - options.min_improvement) {
      fit.heldout_mae = mae;
      fit.params = params;
      stale = 0;
    } else if (++stale >= options.patience) {
      break;
    }
  }
  return fit;
}

Eigen::VectorXd extract_quality(const AAMParams& params) { return params.quality; }

std::vector<double> contribution_values(std::span<const double> quality,
                                        std::span<const double> sizes) {
  if (quality.size() != sizes.size()) {
    throw ShapeError("contribution_values: quality has " + std::to_string(quality.size()) +
                     " entries, sizes has " + std::to_string(sizes.size()));
  }
  std::vector<double> v(quality.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = sizes[i] * quality[i];
  return v;
}

CciResult compute_cci(std::span<const double> values) {
  if (values.empty()) throw PreconditionError("compute_cci needs at least one value");
  CciResult out;
  out.clamped.resize(values.size());
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out.clamped[i] = values[i] > 0.0 ? values[i] : 0.0;
    total += out.clamped[i];
  }
  out.cci.assign(values.size(), 0.0);
  if (total <= 0.0) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < values.size(); ++i) out.cci[i] = out.clamped[i] / total;
  return out;
}

std::vector<int> rank_descending(std::span<const double> values) {
  std::vector<int> rank(values.size());
  std::iota(rank.begin(), rank.end(), 0);
  std::stable_sort(rank.begin(), rank.end(), [&](int a, int b) {
    return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
  });
  return rank;
}

ContributionReport make_report(std::span<const double> values) {
  auto cci = compute_cci(values);
  ContributionReport report;
  report.values.assign(values.begin(), values.end());
  report.clamped = std::move(cci.clamped);
  report.cci = std::move(cci.cci);
  report.degenerate = cci.degenerate;
  report.rank = rank_descending(values);
  return report;
}

std::vector<double> full_scaled_sizes(std::span<const std::size_t> sizes) {
  std::vector<double> p(sizes.size(), 1.0);
  return scale_sizes(sizes, p).x;
}

namespace {

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  out << '[';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << (i ? "," : "") << format_real(v(i));
  out << ']';
}

Eigen::VectorXd read_vector(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void export_aam(const AAMFit& fit, const StoreFingerprint& fp, const std::filesystem::path& path) {
  const auto& p = fit.params;
  std::ostringstream out;
  out << "{\n  \"format\": \"fedccea-aam\",\n  \"n\": " << p.n_clients() << ",\n  \"R\": " << p.rounds()
      << ",\n  \"hidden\": " << p.hidden() << ",\n  \"quality\": ";
  write_vector(out, p.quality);
  out << ",\n  \"fc1\": {\"weights\": [";
  for (Eigen::Index h = 0; h < p.fc1_weights.rows(); ++h) {
    out << (h ? "," : "");
    write_vector(out, p.fc1_weights.row(h).transpose());
  }
  out << "], \"bias\": ";
  write_vector(out, p.fc1_bias);
  out << "},\n  \"out\": {\"weights\": ";
  write_vector(out, p.out_weights);
  out << ", \"bias\": " << format_real(p.out_bias) << "},\n  \"heldout_mae\": "
      << format_real(fit.heldout_mae) << ",\n  \"epochs_run\": " << fit.epochs_run
      << ",\n  \"fingerprint\": {\"n\": " << fp.n_clients << ", \"R\": " << fp.rounds
      << ", \"S\": " << fp.simulations << ", \"master_seed\": " << fp.master_seed
      << ", \"dataset_hash\": \"" << hex64(fp.dataset_hash) << "\"}\n}\n";
  write_text_file(path, out.str());
}

LoadedAAM load_aam(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "fedccea-aam") throw FormatError("not an AAM export: " + path.string());
    LoadedAAM out;
    auto& p = out.params;
    p.quality = read_vector(j.at("quality"));
    const auto& rows = j.at("fc1").at("weights");
    const int R = j.at("R").get<int>();
    p.fc1_weights.resize(static_cast<Eigen::Index>(rows.size()), R);
    for (std::size_t h = 0; h < rows.size(); ++h) {
      const auto row = read_vector(rows[h]);
      if (row.size() != R) throw FormatError("AAM fc1 row has wrong length in " + path.string());
      p.fc1_weights.row(static_cast<Eigen::Index>(h)) = row.transpose();
    }
    p.fc1_bias = read_vector(j.at("fc1").at("bias"));
    p.out_weights = read_vector(j.at("out").at("weights"));
    p.out_bias = j.at("out").at("bias").get<double>();
    if (p.quality.size() != j.at("n").get<int>() || p.fc1_bias.size() != p.fc1_weights.rows() ||
        p.out_weights.size() != p.fc1_weights.rows()) {
      throw FormatError("inconsistent AAM shapes in " + path.string());
    }
    out.heldout_mae = j.at("heldout_mae").get<double>();
    const auto& fp = j.at("fingerprint");
    out.fingerprint = {fp.at("n").get<int>(), fp.at("R").get<int>(), fp.at("S").get<int>(),
                       fp.at("master_seed").get<std::uint64_t>(),
                       std::stoull(fp.at("dataset_hash").get<std::string>(), nullptr, 16)};
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed AAM export " + path.string() + ": " + e.what());
  }
}

void write_report_csv(const ContributionReport& report, const std::filesystem::path& path) {
  std::vector<int> position(report.rank.size());
  for (std::size_t k = 0; k < report.rank.size(); ++k) position[static_cast<std::size_t>(report.rank[k])] = static_cast<int>(k) + 1;
  std::ostringstream out;
  out << "client_id,v,v_clamped,cci,rank\n";
  for (std::size_t i = 0; i < report.values.size(); ++i) {
    out << i << ',' << format_real(report.values[i]) << ',' << format_real(report.clamped[i]) << ','
        << format_real(report.cci[i]) << ',' << position[i] << '\n';
  }
  write_text_file(path, out.str());
}

ContributionReport read_report_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "client_id,v,v_clamped,cci,rank") {
    throw FormatError("unexpected contribution report header in " + path.string());
  }
  std::vector<double> values;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5 || std::stoul(cells[0]) != values.size()) {
      throw FormatError("malformed contribution report row in " + path.string());
    }
    values.push_back(std::stod(cells[1]));
  }
  return make_report(values);
}

}  // namespace fedccea
