// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedccea/aam.hpp"
#include "fedccea/baselines.hpp"
#include "fedccea/config.hpp"
#include "fedccea/experiments.hpp"
#include "fedccea/pipeline.hpp"
#include "fedccea/simulator.hpp"
#include "oracles.hpp"

using namespace fedccea;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

fs::path config_dir() { return fs::path(FEDCCEA_CONFIG_DIR); }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fedccea_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunConfig load(const std::string& file, const std::string& out, std::uint64_t seed) {
  auto c = parse_config(config_dir() / file);
  c.output_dir = scratch(out + "_" + std::to_string(seed)).string();
  c.seed = seed;
  return c;
}

// ---------------------------------------------------------------------------

double mlp_worst_rel_error(oracle::Gen& g) {
  std::vector<int> sizes{g.integer(2, 6)};
  for (int h = g.integer(0, 2); h > 0; --h) sizes.push_back(g.integer(2, 7));
  sizes.push_back(g.integer(2, 5));
  const nn::MLPSpec spec(sizes);
  RngStream rng(g.next());
  auto p = nn::init_mlp(spec, rng);
  for (auto& layer : p.layers) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = g.real(-0.2, 0.2);
  }
  RowMatrix x(10, spec.input_dim());
  std::vector<int> y(10);
  std::vector<std::vector<double>> rows(10);
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < spec.input_dim(); ++c) {
      x(r, c) = g.real(0.0, 1.0);
      rows[static_cast<std::size_t>(r)].push_back(x(r, c));
    }
    y[static_cast<std::size_t>(r)] = g.integer(0, spec.num_classes() - 1);
  }
  const LabeledDataset data(x, y, spec.num_classes());
  auto grad = nn::cross_entropy_gradient(p, data.view()).gradient;
  const auto analytic = oracle::flat(grad);
  const auto params = oracle::flat(p);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = *params[k];
    *params[k] = saved + 1e-5;
    const double up = oracle::mlp_loss(p, rows, y);
    *params[k] = saved - 1e-5;
    const double down = oracle::mlp_loss(p, rows, y);
    *params[k] = saved;
    const double numeric = (up - down) / 2e-5;
    worst = std::max(worst, std::abs(numeric - *analytic[k]) /
                                std::max({std::abs(numeric), std::abs(*analytic[k]), 1e-6}));
  }
  return worst;
}

double aam_worst_rel_error(oracle::Gen& g) {
  const int n = g.integer(1, 6), R = g.integer(1, 6);
  RngStream rng(g.next());
  auto p = init_aam(n, R, g.integer(1, 10), rng);
  for (double* v : oracle::flat(p)) *v = g.real(-1.0, 1.0);
  for (Eigen::Index i = 0; i < p.quality.size(); ++i) p.quality(i) = g.real(0.0, 1.0);
  std::vector<AAMInput> batch;
  for (int b = 0; b < 6; ++b) {
    AAMInput in;
    in.round = g.integer(1, R);
    in.psi = Eigen::MatrixXd::Zero(n, R);
    for (int r = 0; r < in.round; ++r) {
      for (int i = 0; i < n; ++i) in.psi(i, r) = g.real(0.0, 1.5);
    }
    in.target = g.real(0.0, 1.0);
    batch.push_back(in);
  }
  auto grad = aam_mse_gradient(p, batch).gradient;
  const auto analytic = oracle::flat(grad);
  const auto params = oracle::flat(p);
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = *params[k];
    *params[k] = saved + 1e-5;
    const double up = oracle::aam_loss(p, batch);
    *params[k] = saved - 1e-5;
    const double down = oracle::aam_loss(p, batch);
    *params[k] = saved;
    const double numeric = (up - down) / 2e-5;
    worst = std::max(worst, std::abs(numeric - *analytic[k]) /
                                std::max({std::abs(numeric), std::abs(*analytic[k]), 1e-6}));
  }
  return worst;
}

Outcome numerical_core() {
  const auto t0 = Clock::now();
  oracle::Gen g(1);
  double mlp = 0.0, aam = 0.0;
  for (int k = 0; k < 25; ++k) mlp = std::max(mlp, mlp_worst_rel_error(g));
  for (int k = 0; k < 25; ++k) aam = std::max(aam, aam_worst_rel_error(g));
  const double secs = seconds_since(t0);
  return {mlp < 1e-4 && aam < 1e-4 && secs < 10.0,
          fmt("25 MLP + 25 AAM configs, max rel err MLP %.2e AAM %.2e, %.2fs", mlp, aam, secs)};
}

// ---------------------------------------------------------------------------

double max_abs_diff(nn::MLPParams a, nn::MLPParams b) {
  const auto fa = oracle::flat(a);
  const auto fb = oracle::flat(b);
  double worst = 0.0;
  for (std::size_t k = 0; k < fa.size(); ++k) worst = std::max(worst, std::abs(*fa[k] - *fb[k]));
  return worst;
}

Outcome fedavg_exactness() {
  oracle::Gen g(2);
  double worst_mean = 0.0, worst_perm = 0.0, worst_zero = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const nn::MLPSpec spec({g.integer(1, 4), g.integer(1, 5), g.integer(2, 3)});
    const int n = g.integer(2, 6);
    std::vector<nn::MLPParams> locals;
    std::vector<std::size_t> d;
    for (int i = 0; i < n; ++i) {
      RngStream rng(g.next());
      auto p = nn::init_mlp(spec, rng);
      for (double* v : oracle::flat(p)) *v = g.real(-2.0, 2.0);
      locals.push_back(p);
      d.push_back(static_cast<std::size_t>(g.integer(0, 50)));
    }
    d[static_cast<std::size_t>(g.integer(0, n - 1))] += 1;
    const auto agg = fed_avg(locals, d);

    auto brute = locals[0];
    auto bf = oracle::flat(brute);
    std::vector<std::vector<double*>> lf;
    for (auto& l : locals) lf.push_back(oracle::flat(l));
    double total = 0.0;
    for (auto di : d) total += static_cast<double>(di);
    for (std::size_t k = 0; k < bf.size(); ++k) {
      long double acc = 0.0L;
      for (std::size_t i = 0; i < locals.size(); ++i) acc += static_cast<long double>(d[i]) * *lf[i][k];
      *bf[k] = static_cast<double>(acc / total);
    }
    worst_mean = std::max(worst_mean, max_abs_diff(agg, brute));

    std::vector<nn::MLPParams> pl(locals.rbegin(), locals.rend());
    std::vector<std::size_t> pd(d.rbegin(), d.rend());
    worst_perm = std::max(worst_perm, max_abs_diff(fed_avg(pl, pd), agg));

    auto zl = locals;
    auto zd = d;
    zl.push_back(locals[0]);
    for (double* v : oracle::flat(zl.back())) *v = g.real(-5.0, 5.0);
    zd.push_back(0);
    worst_zero = std::max(worst_zero, max_abs_diff(fed_avg(zl, zd), agg));
  }
  return {worst_mean <= 1e-12 && worst_perm <= 1e-12 && worst_zero <= 1e-12,
          fmt("100 fixtures, max |agg - mean| %.1e, permutation %.1e, zero-size %.1e", worst_mean, worst_perm,
              worst_zero)};
}

// ---------------------------------------------------------------------------

Outcome size_and_cci_suite() {
  int failures = 0;
  auto check = [&](bool ok) { failures += ok ? 0 : 1; };

  {
    const std::vector<std::size_t> s{100, 300};
    const auto r = scale_sizes(s, std::vector<double>{0.5, 0.5});
    check(r.d == std::vector<std::size_t>{50, 150} && r.x == std::vector<double>{0.25, 0.75});
    const std::vector<std::size_t> same{300, 300, 300};
    const auto ones = scale_sizes(same, std::vector<double>{1.0, 1.0, 1.0});
    check(ones.x == std::vector<double>{1.0, 1.0, 1.0});
    const auto tiny = scale_sizes(same, std::vector<double>{1e-9, 1.0, 1.0});
    check(tiny.d[0] == 0 && tiny.x[0] == 0.0);
  }
  check(contribution_values(std::vector<double>{0.3}, std::vector<double>{1.0}) == std::vector<double>{0.3});
  check(contribution_values(std::vector<double>{0.3}, std::vector<double>{0.0}) == std::vector<double>{0.0});
  {
    const auto v = contribution_values(std::vector<double>{0.4, 0.2}, std::vector<double>{0.25, 0.75});
    check(v[0] == 0.25 * 0.4 && v[1] == 0.75 * 0.2);
  }
  check(compute_cci(std::vector<double>{2, 2}).cci == std::vector<double>{0.5, 0.5});
  check(compute_cci(std::vector<double>{-1, 3}).cci == std::vector<double>{0.0, 1.0});
  check(compute_cci(std::vector<double>{1, 2, 1}).cci == std::vector<double>{0.25, 0.5, 0.25});

  oracle::Gen g(3);
  double worst_sum = 0.0, worst_scale = 0.0;
  for (int t = 0; t < 500; ++t) {
    std::vector<double> v;
    for (int i = g.integer(1, 12); i > 0; --i) v.push_back(g.real(-1.0, 2.0));
    v[0] = std::abs(v[0]) + 1e-3;
    const auto a = compute_cci(v);
    double sum = 0.0;
    for (double c : a.cci) sum += c;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    const double k = g.real(1e-3, 1e3);
    for (double& x : v) x *= k;
    const auto b = compute_cci(v);
    for (std::size_t i = 0; i < v.size(); ++i) worst_scale = std::max(worst_scale, std::abs(a.cci[i] - b.cci[i]));
  }
  return {failures == 0 && worst_sum <= 1e-12 && worst_scale <= 1e-12,
          fmt("%.0f example failures, max |sum - 1| %.1e, max rescaling drift %.1e", failures, worst_sum,
              worst_scale)};
}

// ---------------------------------------------------------------------------

Outcome zero_padding_contract() {
  oracle::Gen g(4);
  std::size_t checked = 0, bad_padding = 0, leaked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = g.integer(1, 8), R = g.integer(2, 10), S = g.integer(1, 4);
    SimStore store;
    store.fingerprint = {n, R, S, 0, 0};
    for (int s = 1; s <= S; ++s) {
      for (int r = 1; r <= R; ++r) {
        SimRecord rec{s, r, {}, g.real(0.0, 1.0)};
        for (int i = 0; i < n; ++i) rec.x.push_back(g.real(0.01, 1.5));
        store.records.push_back(rec);
      }
    }
    const auto inputs = build_inputs(store, n, R);
    for (const auto& in : inputs) {
      int zero_cols = 0;
      for (int c = 0; c < R; ++c) zero_cols += (in.psi.col(c).array() == 0.0).all() ? 1 : 0;
      bad_padding += zero_cols == R - in.round ? 0 : 1;
      ++checked;
    }
    RngStream rng(g.next());
    auto p = init_aam(n, R, 10, rng);
    for (double* v : oracle::flat(p)) *v = g.real(-1.0, 1.0);
    for (Eigen::Index i = 0; i < p.quality.size(); ++i) p.quality(i) = g.real(0.0, 1.0);
    // Probe: rewriting the rounds after r in the history must leave the
    // round-r prediction unchanged.
    auto probe = store;
    const int r = g.integer(1, R - 1);
    for (auto& rec : probe.records) {
      if (rec.round > r) {
        for (double& x : rec.x) x = g.real(0.0, 5.0);
      }
    }
    const auto probed = build_inputs(probe, n, R);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      if (inputs[k].round <= r && aam_forward(p, inputs[k].psi) != aam_forward(p, probed[k].psi)) ++leaked;
    }
  }
  return {bad_padding == 0 && leaked == 0,
          fmt("%.0f inputs, %.0f with wrong padding, %.0f predictions moved by later rounds",
              static_cast<double>(checked), static_cast<double>(bad_padding), static_cast<double>(leaked))};
}

// ---------------------------------------------------------------------------

// simulate, train-aam and value through the pipeline for one master seed.
struct DeskRun {
  RunConfig config;
  PreparedData data;
  double heldout_mae = 0.0;
  std::vector<double> quality;
  ContributionReport report;
};

DeskRun run_desk(const std::string& file, std::uint64_t seed) {
  DeskRun run;
  run.config = load(file, fs::path(file).stem().string(), seed);
  std::ostringstream log;
  for (Stage s : {Stage::simulate, Stage::train_aam, Stage::value}) run_stage(s, run.config, log);
  const auto paths = artifact_paths(run.config);
  const auto aam = load_aam(paths.aam);
  run.heldout_mae = aam.heldout_mae;
  const auto q = extract_quality(aam.params);
  run.quality.assign(q.data(), q.data() + q.size());
  run.report = read_report_csv(paths.report);
  run.data = prepare_data(run.config);
  return run;
}

Outcome aam_fit() {
  const auto t0 = Clock::now();
  const auto run = run_desk("desk.json", 0);
  const double secs = seconds_since(t0);
  return {run.heldout_mae <= 0.05 && secs < 300.0,
          fmt("held-out MAE %.4f, %.1fs for simulate + train-aam", run.heldout_mae, secs)};
}

constexpr int kSeeds = 5;

std::vector<DeskRun>& noisy_runs() {
  static std::vector<DeskRun> runs = [] {
    std::vector<DeskRun> out;
    for (int s = 0; s < kSeeds; ++s) out.push_back(run_desk("desk_noisy.json", static_cast<std::uint64_t>(s)));
    return out;
  }();
  return runs;
}

Outcome noisy_detection() {
  int hits = 0;
  std::string placements;
  for (const auto& run : noisy_runs()) {
    const auto& rank = run.report.rank;
    int noisy = 0, in_bottom = 0;
    for (std::size_t pos = 0; pos < rank.size(); ++pos) {
      if (!run.data.clients[static_cast<std::size_t>(rank[pos])].noisy()) continue;
      ++noisy;
      if (pos + 3 >= rank.size()) ++in_bottom;
      placements += std::to_string(pos + 1) + (noisy == 2 ? " " : ",");
    }
    hits += noisy == 2 && in_bottom == 2 ? 1 : 0;
  }
  return {hits >= 4, fmt("both noisy clients in bottom 3 for %.0f of 5 seeds", hits) +
                         " (noisy rank positions per seed: " + placements.substr(0, placements.size() - 1) +
                         ")"};
}

Outcome removal_separation() {
  double gap = 0.0;
  bool base_exact = true;
  for (const auto& run : noisy_runs()) {
    const auto& d = run.data;
    const std::vector<double> fractions{0.0, 0.125, 0.25};
    const auto curves = client_removal_curves(run.report.rank, d.clients, d.test, d.fl, fractions);
    const double base = train_federated(d.clients, SizeSchedule::full(), d.test, d.fl).final_accuracy;
    base_exact = base_exact && curves.least_first.points[0].accuracy == base &&
                 curves.most_first.points[0].accuracy == base;
    for (std::size_t k = 1; k < 3; ++k) {
      gap += (curves.least_first.points[k].accuracy - curves.most_first.points[k].accuracy) / 2.0;
    }
  }
  gap /= kSeeds;
  return {gap >= 0.02 && base_exact,
          fmt("least-first minus most-first at {0.125, 0.25}: %+.4f (need >= 0.02); f=0 equals Base: ", gap) +
              (base_exact ? "yes" : "no")};
}

Outcome partial_robustness() {
  double least = 0.0, most = 0.0;
  for (const auto& run : noisy_runs()) {
    const auto& d = run.data;
    const std::vector<double> fractions{0.0, 0.25};
    const auto seed = derive_seed(stage_seed(run.config, "partial"), d.fl.seed);
    const auto curves = partial_participation_curves(run.quality, d.clients, d.test, d.fl, fractions, seed);
    least += curves.partial.least_first.points[1].accuracy / kSeeds;
    most += curves.partial.most_first.points[1].accuracy / kSeeds;
  }
  return {least >= most, fmt("mean accuracy at 0.25: least-first %.4f, most-first %.4f", least, most)};
}

// ---------------------------------------------------------------------------

std::vector<double> random_table(oracle::Gen& g, int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (double& v : w) v = g.real(0.0, 0.3);
  const double syn = g.real(-0.05, 0.05);
  std::vector<double> table(1u << n);
  for (std::uint32_t m = 0; m < table.size(); ++m) {
    double u = 0.1;
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if (m & (1u << i)) {
        u += w[static_cast<std::size_t>(i)];
        ++count;
      }
    }
    table[m] = u + syn * count * (count - 1) / 2.0;
  }
  return table;
}

UtilityFn table_utility(int n, const std::vector<double>& table) {
  return UtilityFn(n, [table](const std::vector<int>& m) { return table[oracle::mask_of(m)]; });
}

Outcome shapley_oracle() {
  const auto t0 = Clock::now();
  oracle::Gen g(9);
  double axiom = 0.0;
  for (int trial = 0; trial < 30; ++trial) {
    const int n = g.integer(3, 7);
    auto table = random_table(g, n);
    // Player 0 is null; players 1 and 2 are symmetric.
    for (std::uint32_t m = 0; m < table.size(); ++m) {
      if (m & 1u) table[m] = table[m & ~1u];
    }
    for (std::uint32_t m = 0; m < table.size(); ++m) {
      if ((m & 2u) && !(m & 4u)) table[m] = table[(m & ~2u) | 4u];
    }
    auto u = table_utility(n, table);
    const auto phi = exact_shapley(u, n).values;
    double sum = 0.0;
    for (double p : phi) sum += p;
    axiom = std::max({axiom, std::abs(sum - (table.back() - table[0])), std::abs(phi[0]), std::abs(phi[1] - phi[2])});
  }
  double err = 0.0;
  int count = 0;
  for (int game = 0; game < 5; ++game) {
    const auto table = random_table(g, 5);
    auto exact_u = table_utility(5, table);
    const auto exact = exact_shapley(exact_u, 5).values;
    auto u = table_utility(5, table);
    TmcOptions o;
    o.max_permutations = 500;
    o.truncation_tolerance = 0.0;
    o.convergence_tolerance = std::numeric_limits<double>::min();
    o.seed = static_cast<std::uint64_t>(game);
    const auto est = tmc_shapley(u, 5, o).values;
    for (std::size_t i = 0; i < 5; ++i) {
      err += std::abs(est[i] - exact[i]);
      ++count;
    }
  }
  err /= count;
  const double secs = seconds_since(t0);
  return {axiom <= 1e-9 && err <= 0.02 && secs < 60.0,
          fmt("axiom residual %.1e, TMC mean |error| %.4f at T=500, %.2fs", axiom, err, secs)};
}

// ---------------------------------------------------------------------------

Outcome cost_accounting() {
  const auto config = load("desk.json", "cost", 0);
  const auto data = prepare_data(config);
  CostSetup setup;
  setup.make_clients = [&config](int n) {
    auto c = config;
    c.partition.n_clients = n;
    return prepare_data(c).clients;
  };
  setup.test = data.test;
  setup.cfg = data.fl;
  setup.simulations = config.simulations;
  setup.master_seed = data.fingerprint.master_seed;
  setup.tmc = {config.baselines.tmc_permutations, config.baselines.tmc_truncation,
               config.baselines.tmc_convergence, stage_seed(config, "tmc")};
  const std::vector<int> grid{4, 8};
  const auto rows = cost_report(setup, grid);
  bool ok = true;
  std::map<std::string, std::vector<std::size_t>> by_method;
  std::string detail;
  for (const auto& r : rows) {
    by_method[r.method].push_back(r.fl_runs);
    const auto n = static_cast<std::size_t>(r.n_clients);
    if (r.method == "fedccea") ok = ok && r.fl_runs == static_cast<std::size_t>(config.simulations);
    if (r.method == "loo") ok = ok && r.fl_runs == n + 1;
    if (r.method == "tmc") ok = ok && r.fl_runs <= config.baselines.tmc_permutations * n;
    detail += r.method + "@" + std::to_string(r.n_clients) + "=" + std::to_string(r.fl_runs) + " ";
  }
  const auto& f = by_method["fedccea"];
  ok = ok && f.size() == 2 && f[0] == f[1] && by_method["loo"].size() == 2 && by_method["tmc"].size() == 2;
  detail.pop_back();
  return {ok, "training runs " + detail};
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> artifacts_of(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    std::ifstream in(entry.path(), std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    out[entry.path().filename().string()] = s.str();
  }
  return out;
}

Outcome determinism() {
  // Both runs write to the same directory so the echoed configs match too.
  std::map<std::string, std::string> first, second;
  for (auto* target : {&first, &second}) {
    auto config = load("desk_noisy.json", "determinism", 0);
    std::ostringstream log;
    run_stage(Stage::all, config, log);
    *target = artifacts_of(config.output_dir);
  }
  std::size_t differing = 0;
  bool has_core = false;
  for (const auto& [name, bytes] : first) {
    auto it = second.find(name);
    if (it == second.end() || it->second != bytes) ++differing;
    has_core = has_core || name.ends_with("_store.jsonl");
  }
  const bool same_set = first.size() == second.size();
  return {differing == 0 && same_set && has_core && first.size() >= 8,
          fmt("%.0f artifacts per run, %.0f differing", static_cast<double>(first.size()),
              static_cast<double>(differing))};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 numerical core", numerical_core},
      {"2 fedavg exactness", fedavg_exactness},
      {"3 size scaling and cci", size_and_cci_suite},
      {"4 zero padding", zero_padding_contract},
      {"5 aam fit", aam_fit},
      {"6 noisy detection", noisy_detection},
      {"7 removal separation", removal_separation},
      {"8 partial participation", partial_robustness},
      {"9 shapley oracle", shapley_oracle},
      {"10 cost accounting", cost_accounting},
      {"11 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("%s criterion %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
