#include "fedccea/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>

#include "fedccea/aam.hpp"
#include "fedccea/charts.hpp"
#include "fedccea/errors.hpp"
#include "fedccea/format.hpp"
#include "fedccea/simulator.hpp"

namespace fedccea {

double gini(std::span<const double> values) {
  if (values.empty()) return 0.0;
  const double total = std::accumulate(values.begin(), values.end(), 0.0);
  if (total <= 0.0) return 0.0;
  double diff = 0.0;
  for (double a : values) {
    for (double b : values) diff += std::abs(a - b);
  }
  return diff / (2.0 * static_cast<double>(values.size()) * total);
}

SkewnessReport skewness_report(const MethodCci& cci_by_method) {
  SkewnessReport report;
  report.cci = cci_by_method;
  for (const auto& [method, cci] : cci_by_method) {
    if (cci.empty()) throw PreconditionError("skewness_report: empty CCI vector for " + method);
    CciStats s;
    s.method = method;
    s.min = *std::min_element(cci.begin(), cci.end());
    s.max = *std::max_element(cci.begin(), cci.end());
    s.gini = gini(cci);
    s.zero_count = static_cast<std::size_t>(std::count(cci.begin(), cci.end(), 0.0));
    report.stats.push_back(s);
  }
  return report;
}

namespace {

std::vector<ClientPartition> without(std::span<const ClientPartition> clients,
                                     const std::vector<int>& excluded) {
  std::vector<ClientPartition> kept;
  for (const auto& c : clients) {
    if (std::find(excluded.begin(), excluded.end(), c.client_id) == excluded.end()) kept.push_back(c);
  }
  return kept;
}

}  // namespace

ZeroExclusionResult zero_exclusion_retrain(const MethodCci& cci_by_method,
                                           std::span<const ClientPartition> clients,
                                           const LabeledDataset& test, const FLConfig& cfg) {
  ZeroExclusionResult out;
  out.base = train_federated(clients, SizeSchedule::full(), test, cfg).final_accuracy;
  for (const auto& [method, cci] : cci_by_method) {
    if (cci.size() != clients.size()) throw ShapeError("zero_exclusion_retrain: CCI length mismatch for " + method);
    ZeroExclusionEntry entry;
    entry.method = method;
    for (std::size_t i = 0; i < cci.size(); ++i) {
      if (cci[i] == 0.0) entry.excluded.push_back(clients[i].client_id);
    }
    if (entry.excluded.size() == clients.size()) {
      entry.degenerate = true;
    } else if (entry.excluded.empty()) {
      entry.accuracy = out.base;
    } else {
      const auto kept = without(clients, entry.excluded);
      entry.accuracy = train_federated(kept, SizeSchedule::full(), test, cfg).final_accuracy;
    }
    out.entries.push_back(std::move(entry));
  }
  return out;
}

const char* to_string(RemovalDirection direction) {
  return direction == RemovalDirection::least_first ? "least_first" : "most_first";
}

void validate_fractions(std::span<const double> fractions) {
  if (fractions.empty() || fractions.front() != 0.0) {
    throw PreconditionError("removal fractions must start at 0");
  }
  for (std::size_t k = 0; k < fractions.size(); ++k) {
    if (!(fractions[k] >= 0.0 && fractions[k] < 1.0)) throw PreconditionError("removal fractions must lie in [0, 1)");
    if (k > 0 && !(fractions[k] > fractions[k - 1])) throw PreconditionError("removal fractions must be ascending");
  }
}

std::size_t removal_count(double fraction, std::size_t n) {
  return static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
}

RemovalCurves client_removal_curves(std::span<const int> rank,
                                    std::span<const ClientPartition> clients,
                                    const LabeledDataset& test, const FLConfig& cfg,
                                    std::span<const double> fractions) {
  validate_fractions(fractions);
  const std::size_t n = clients.size();
  if (rank.size() != n) throw ShapeError("client_removal_curves: rank length differs from client count");

  RemovalCurves out;
  out.least_first.direction = RemovalDirection::least_first;
  out.most_first.direction = RemovalDirection::most_first;
  // Identical excluded sets give identical retrains; reuse them.
  std::map<std::vector<int>, double> done;
  auto accuracy_without = [&](std::vector<int> excluded) {
    std::sort(excluded.begin(), excluded.end());
    if (auto it = done.find(excluded); it != done.end()) return it->second;
    const auto kept = without(clients, excluded);
    const double acc = train_federated(kept, SizeSchedule::full(), test, cfg).final_accuracy;
    done.emplace(excluded, acc);
    return acc;
  };
  for (double f : fractions) {
    const std::size_t k = removal_count(f, n);
    if (k >= n) throw CapacityError("removal fraction " + format_real(f) + " removes every client");
    std::vector<int> lowest, highest;
    for (std::size_t j = 0; j < k; ++j) {
      lowest.push_back(clients[static_cast<std::size_t>(rank[n - 1 - j])].client_id);
      highest.push_back(clients[static_cast<std::size_t>(rank[j])].client_id);
    }
    out.least_first.points.push_back({f, accuracy_without(lowest)});
    out.most_first.points.push_back({f, accuracy_without(highest)});
  }
  return out;
}

std::vector<std::vector<std::size_t>> partial_schedule(std::span<const double> quality,
                                                       std::span<const std::size_t> sizes,
                                                       int rounds, std::size_t excluded,
                                                       RemovalDirection direction,
                                                       std::uint64_t seed) {
  if (quality.size() != sizes.size()) throw ShapeError("partial_schedule: quality and sizes differ in length");
  if (excluded >= sizes.size()) throw CapacityError("partial_schedule would exclude every client");
  RngStream rng = RngStream(seed).child("partial-sizes");
  std::vector<std::vector<std::size_t>> schedule;
  schedule.reserve(static_cast<std::size_t>(rounds));
  for (int r = 0; r < rounds; ++r) {
    const auto p = sample_proportions(static_cast<int>(sizes.size()), rng);
    auto sample = scale_sizes(sizes, p);
    const auto values = contribution_values(quality, sample.x);
    const auto rank = rank_descending(values);
    for (std::size_t j = 0; j < excluded; ++j) {
      const int victim = direction == RemovalDirection::least_first ? rank[rank.size() - 1 - j] : rank[j];
      sample.d[static_cast<std::size_t>(victim)] = 0;
    }
    schedule.push_back(std::move(sample.d));
  }
  return schedule;
}

ParticipationCurves partial_participation_curves(std::span<const double> quality,
                                                 std::span<const ClientPartition> clients,
                                                 const LabeledDataset& test, const FLConfig& cfg,
                                                 std::span<const double> fractions,
                                                 std::uint64_t seed) {
  validate_fractions(fractions);
  if (quality.size() != clients.size()) throw ShapeError("partial_participation_curves: quality length mismatch");
  const auto sizes = client_sizes(clients);

  ParticipationCurves out;
  const auto full_values = contribution_values(quality, full_scaled_sizes(sizes));
  out.full = client_removal_curves(rank_descending(full_values), clients, test, cfg, fractions);

  out.partial.least_first.direction = RemovalDirection::least_first;
  out.partial.most_first.direction = RemovalDirection::most_first;
  for (double f : fractions) {
    const std::size_t k = removal_count(f, clients.size());
    for (auto* curve : {&out.partial.least_first, &out.partial.most_first}) {
      auto schedule = partial_schedule(quality, sizes, cfg.rounds, k, curve->direction, seed);
      const double acc =
          train_federated(clients, SizeSchedule::per_round(std::move(schedule)), test, cfg).final_accuracy;
      curve->points.push_back({f, acc});
    }
  }
  return out;
}

std::vector<CostRow> cost_report(const CostSetup& setup, std::span<const int> n_grid) {
  std::vector<CostRow> rows;
  for (int n : n_grid) {
    FLConfig cfg = setup.cfg;
    cfg.n_clients = n;
    const auto clients = setup.make_clients(n);
    if (clients.size() != static_cast<std::size_t>(n)) throw ShapeError("cost_report: client factory returned the wrong count");
    for (const auto& method : setup.methods) {
      auto counter = std::make_shared<RunCounter>();
      if (method == "fedccea") {
        run_all(clients, setup.test, cfg, setup.simulations, setup.master_seed, counter.get());
      } else if (method == "loo") {
        auto utility = federated_utility(clients, setup.test, cfg, counter);
        loo_values(utility, n);
      } else if (method == "tmc") {
        auto utility = federated_utility(clients, setup.test, cfg, counter);
        tmc_shapley(utility, n, setup.tmc);
      } else {
        throw PreconditionError("cost_report: unknown method '" + method + "'");
      }
      rows.push_back({method, n, counter->value()});
    }
  }
  return rows;
}

void append_removal_rows(std::vector<RemovalRow>& rows, const std::string& method,
                         const RemovalCurves& curves, std::uint64_t seed) {
  for (const auto* curve : {&curves.least_first, &curves.most_first}) {
    for (const auto& p : curve->points) rows.push_back({method, curve->direction, p.fraction, seed, p.accuracy});
  }
}

void append_partial_rows(std::vector<PartialRow>& rows, const ParticipationCurves& curves,
                         std::uint64_t seed) {
  for (const auto& [mode, set] : {std::pair{"full", &curves.full}, std::pair{"partial", &curves.partial}}) {
    for (const auto* curve : {&set->least_first, &set->most_first}) {
      for (const auto& p : curve->points) rows.push_back({mode, curve->direction, p.fraction, seed, p.accuracy});
    }
  }
}

namespace {

// Mean accuracy per fraction for one (group, direction) series.
template <typename Row, typename Key>
std::vector<charts::Series> mean_series(const std::vector<Row>& rows, Key key) {
  std::map<std::pair<std::string, int>, std::map<double, std::pair<double, int>>> grouped;
  std::vector<std::pair<std::string, int>> order;
  for (const auto& r : rows) {
    const std::pair<std::string, int> id{key(r), static_cast<int>(r.direction)};
    if (!grouped.contains(id)) order.push_back(id);
    auto& cell = grouped[id][r.fraction];
    cell.first += r.accuracy;
    cell.second += 1;
  }
  std::vector<charts::Series> series;
  for (const auto& id : order) {
    charts::Series s;
    const auto dir = static_cast<RemovalDirection>(id.second);
    s.label = id.first + (dir == RemovalDirection::least_first ? " least" : " most");
    s.dashed = dir == RemovalDirection::most_first;
    for (const auto& [f, cell] : grouped[id]) s.points.emplace_back(f, cell.first / cell.second);
    series.push_back(std::move(s));
  }
  return series;
}

}  // namespace

std::vector<std::filesystem::path> emit_outputs(const ExperimentResults& results,
                                                const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw Error("cannot create output directory " + out_dir.string());
  }
  std::vector<std::filesystem::path> written;
  auto emit = [&](const std::string& name, const std::string& text) {
    const auto path = out_dir / (results.tag + "_" + name);
    write_text_file(path, text);
    written.push_back(path);
  };

  if (results.skewness) {
    const auto& sk = *results.skewness;
    std::ostringstream csv;
    csv << "method,client_id,cci\n";
    charts::BarChart chart{"Client contribution index", "client", "CCI", {}, {}, std::nullopt};
    for (const auto& [method, cci] : sk.cci) {
      for (std::size_t i = 0; i < cci.size(); ++i) csv << method << ',' << i << ',' << format_real(cci[i]) << '\n';
      chart.series.emplace_back(method, cci);
      if (chart.categories.size() < cci.size()) {
        chart.categories.clear();
        for (std::size_t i = 0; i < cci.size(); ++i) chart.categories.push_back(std::to_string(i));
      }
    }
    if (!chart.categories.empty()) chart.reference = 1.0 / static_cast<double>(chart.categories.size());
    emit("skewness.csv", csv.str());
    emit("skewness.svg", charts::render_svg(chart));
  }

  if (results.zero_exclusion) {
    const auto& ze = *results.zero_exclusion;
    std::ostringstream csv;
    csv << "method,excluded,accuracy\n";
    csv << "base,0," << format_real(ze.base) << '\n';
    charts::BarChart chart{"Accuracy after excluding zero contributors", "method", "accuracy",
                           {"base"}, {}, std::nullopt};
    std::vector<double> bars{ze.base};
    for (const auto& e : ze.entries) {
      csv << e.method << ',' << e.excluded.size() << ',' << (e.accuracy ? format_real(*e.accuracy) : "nan") << '\n';
      chart.categories.push_back(e.method);
      bars.push_back(e.accuracy.value_or(0.0));
    }
    chart.series.emplace_back("accuracy", bars);
    emit("zero_exclusion.csv", csv.str());
    emit("zero_exclusion.svg", charts::render_svg(chart));
  }

  if (!results.removal.empty()) {
    std::ostringstream csv;
    csv << "method,direction,fraction,seed,accuracy\n";
    for (const auto& r : results.removal) {
      csv << r.method << ',' << to_string(r.direction) << ',' << format_real(r.fraction) << ',' << r.seed
          << ',' << format_real(r.accuracy) << '\n';
    }
    charts::LineChart chart{"Client removal", "fraction removed", "test accuracy",
                            mean_series(results.removal, [](const RemovalRow& r) { return r.method; })};
    emit("removal.csv", csv.str());
    emit("removal.svg", charts::render_svg(chart));
  }

  if (!results.partial.empty()) {
    std::ostringstream csv;
    csv << "mode,direction,fraction,seed,accuracy\n";
    for (const auto& r : results.partial) {
      csv << r.mode << ',' << to_string(r.direction) << ',' << format_real(r.fraction) << ',' << r.seed
          << ',' << format_real(r.accuracy) << '\n';
    }
    charts::LineChart chart{"Client removal under partial participation", "fraction removed per round",
                            "test accuracy",
                            mean_series(results.partial, [](const PartialRow& r) { return r.mode; })};
    emit("partial.csv", csv.str());
    emit("partial.svg", charts::render_svg(chart));
  }

  if (!results.cost.empty()) {
    std::ostringstream csv;
    csv << "method,n,fl_runs\n";
    std::map<std::string, std::vector<std::pair<double, double>>> lines;
    std::vector<std::string> order;
    for (const auto& r : results.cost) {
      csv << r.method << ',' << r.n_clients << ',' << r.fl_runs << '\n';
      if (!lines.contains(r.method)) order.push_back(r.method);
      lines[r.method].emplace_back(r.n_clients, static_cast<double>(r.fl_runs));
    }
    charts::LineChart chart{"Federated training runs per evaluation", "clients", "training runs", {}};
    for (const auto& m : order) chart.series.push_back({m, lines[m], false});
    emit("cost.csv", csv.str());
    emit("cost.svg", charts::render_svg(chart));
  }
  return written;
}

}  // namespace fedccea
