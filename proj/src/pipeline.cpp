#include "fedccea/pipeline.hpp"

#include <algorithm>
#include <map>
#include <ostream>

#include "fedccea/aam.hpp"
#include "fedccea/baselines.hpp"
#include "fedccea/errors.hpp"
#include "fedccea/experiments.hpp"
#include "fedccea/format.hpp"
#include "fedccea/rng.hpp"

namespace fedccea {

namespace fs = std::filesystem;

ArtifactPaths artifact_paths(const RunConfig& config) {
  ArtifactPaths p;
  p.tag = config_hash(config);
  p.dir = config.output_dir;
  auto at = [&](const char* name) { return p.dir / (p.tag + "_" + name); };
  p.config = at("config.json");
  p.partitions = at("partitions.json");
  p.store = at("store.jsonl");
  p.aam = at("aam.json");
  p.report = at("fedccea_report.csv");
  p.baseline_values = at("baseline_values.csv");
  p.baseline_diagnostics = at("baseline_diagnostics.json");
  return p;
}

namespace {

std::vector<ClientPartition> make_clients(const RunConfig& config, const LabeledDataset& train,
                                          int n_clients) {
  PartitionSpec spec;
  spec.n_clients = n_clients;
  spec.classes_per_client = config.partition.classes_per_client;
  spec.samples_per_client = config.partition.samples_per_client;
  spec.seed = stage_seed(config, "partition");
  auto clients = partition(train, spec);
  if (config.noise) {
    NoiseSpec noise;
    noise.kind = config.noise->kind;
    noise.client_fraction = config.noise->client_fraction;
    noise.sample_fraction = config.noise->sample_fraction;
    noise.pattern_block = config.noise->pattern_block;
    noise.seed = stage_seed(config, "noise");
    clients = inject_noise(std::move(clients), noise);
  }
  return clients;
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::exists(path)) throw DependencyError("missing " + std::string(what) + " " + path.string());
}

bool contains(const std::vector<std::string>& names, const std::string& name) {
  return std::find(names.begin(), names.end(), name) != names.end();
}

ValuationMethod method_from_name(const std::string& name) {
  if (name == "loo") return ValuationMethod::loo;
  if (name == "tmc") return ValuationMethod::tmc;
  if (name == "exact") return ValuationMethod::exact;
  throw PreconditionError("unknown valuation method '" + name + "'");
}

std::vector<fs::path> stage_simulate(const RunConfig& config, const ArtifactPaths& paths,
                                     std::ostream& log) {
  const auto data = prepare_data(config);
  write_partition_manifest(data.clients, paths.partitions);
  const auto store = run_all(data.clients, data.test, data.fl, config.simulations,
                             data.fingerprint.master_seed);
  persist_store(store, paths.store);
  log << "simulate: " << store.records.size() << " records -> " << paths.store.string() << "\n";
  return {paths.partitions, paths.store};
}

std::vector<fs::path> stage_train_aam(const RunConfig& config, const ArtifactPaths& paths,
                                      std::ostream& log) {
  require_file(paths.store, "simulation store");
  const auto data = prepare_data(config);
  const auto loaded = load_store(paths.store, data.fingerprint);
  for (const auto& w : loaded.warnings) log << "warning: " << w << "\n";
  const auto& fp = loaded.store.fingerprint;
  const auto inputs = build_inputs(loaded.store, fp.n_clients, fp.rounds);
  AAMTrainOptions options;
  options.lr = config.aam.lr;
  options.max_epochs = config.aam.max_epochs;
  options.batch_size = config.aam.batch_size;
  options.val_fraction = config.aam.val_fraction;
  options.patience = config.aam.patience;
  options.min_improvement = config.aam.min_improvement;
  options.hidden = config.aam.hidden;
  options.seed = stage_seed(config, "aam");
  const auto fit = train_aam(inputs, options);
  export_aam(fit, fp, paths.aam);
  log << "train-aam: held-out MAE " << format_real(fit.heldout_mae) << " after " << fit.epochs_run
      << " epochs -> " << paths.aam.string() << "\n";
  return {paths.aam};
}

std::vector<fs::path> stage_value(const RunConfig& config, const ArtifactPaths& paths,
                                  std::ostream& log) {
  require_file(paths.aam, "AAM export");
  const auto aam = load_aam(paths.aam);
  const auto data = prepare_data(config);
  const auto sizes = client_sizes(data.clients);
  if (static_cast<std::size_t>(aam.params.n_clients()) != sizes.size()) {
    throw ConsistencyError("AAM export has " + std::to_string(aam.params.n_clients()) +
                           " clients, config has " + std::to_string(sizes.size()));
  }
  const auto q = extract_quality(aam.params);
  const std::vector<double> quality(q.data(), q.data() + q.size());
  const auto report = make_report(contribution_values(quality, full_scaled_sizes(sizes)));
  write_report_csv(report, paths.report);
  if (report.degenerate) log << "warning: every contribution value is non-positive\n";
  log << "value: report -> " << paths.report.string() << "\n";
  return {paths.report};
}

std::vector<fs::path> stage_baseline(const RunConfig& config, const ArtifactPaths& paths,
                                     std::ostream& log) {
  const auto data = prepare_data(config);
  const int n = config.partition.n_clients;
  auto utility = federated_utility(data.clients, data.test, data.fl);
  std::vector<ValuationResult> results;
  for (const auto& name : config.baselines.methods) {
    switch (method_from_name(name)) {
      case ValuationMethod::loo:
        results.push_back(loo_values(utility, n));
        break;
      case ValuationMethod::exact:
        results.push_back(exact_shapley(utility, n));
        break;
      case ValuationMethod::tmc: {
        TmcOptions options;
        options.max_permutations = config.baselines.tmc_permutations;
        options.truncation_tolerance = config.baselines.tmc_truncation;
        options.convergence_tolerance = config.baselines.tmc_convergence;
        options.seed = stage_seed(config, "tmc");
        results.push_back(tmc_shapley(utility, n, options));
        break;
      }
    }
  }
  write_valuation_csv(results, paths.baseline_values);
  write_valuation_diagnostics(results, paths.baseline_diagnostics);
  log << "baseline: " << results.size() << " methods, " << utility.nonempty_evaluations()
      << " retrains -> " << paths.baseline_values.string() << "\n";
  return {paths.baseline_values, paths.baseline_diagnostics};
}

// Per-method values and ranks needed by the experiment stage.
struct MethodValues {
  std::string method;
  std::vector<double> values;
  std::vector<double> cci;
  std::vector<int> rank;
};

std::vector<MethodValues> gather_methods(const RunConfig& config, const ArtifactPaths& paths) {
  std::vector<MethodValues> out;
  std::map<std::string, std::vector<double>> baseline;
  const bool needs_baseline = std::any_of(config.experiments.methods.begin(), config.experiments.methods.end(),
                                          [](const std::string& m) { return m != "fedccea"; });
  if (needs_baseline) {
    require_file(paths.baseline_values, "baseline values");
    for (auto& r : read_valuation_csv(paths.baseline_values)) baseline[to_string(r.method)] = std::move(r.values);
  }
  for (const auto& method : config.experiments.methods) {
    MethodValues m;
    m.method = method;
    if (method == "fedccea") {
      require_file(paths.report, "contribution report");
      const auto report = read_report_csv(paths.report);
      m.values = report.values;
      m.cci = report.cci;
      m.rank = report.rank;
    } else {
      const auto it = baseline.find(method);
      if (it == baseline.end()) {
        throw DependencyError("baseline values " + paths.baseline_values.string() + " lack method " + method);
      }
      m.values = it->second;
      m.cci = compute_cci(m.values).cci;
      m.rank = rank_descending(m.values);
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<fs::path> stage_experiment(const RunConfig& config, const ArtifactPaths& paths,
                                       std::ostream& log) {
  const auto& ex = config.experiments;
  const auto methods = gather_methods(config, paths);
  const bool partial = contains(ex.studies, "partial");
  std::vector<double> quality;
  if (partial) {
    require_file(paths.aam, "AAM export");
    const auto q = extract_quality(load_aam(paths.aam).params);
    quality.assign(q.data(), q.data() + q.size());
  }
  const auto data = prepare_data(config);
  std::vector<std::uint64_t> seeds = ex.seeds;
  if (seeds.empty()) seeds.push_back(data.fl.seed);

  MethodCci cci;
  for (const auto& m : methods) cci.emplace_back(m.method, m.cci);

  ExperimentResults results;
  results.tag = paths.tag;
  if (contains(ex.studies, "skewness")) results.skewness = skewness_report(cci);
  if (contains(ex.studies, "zero_exclusion")) {
    FLConfig base = data.fl;
    base.seed = seeds.front();
    results.zero_exclusion = zero_exclusion_retrain(cci, data.clients, data.test, base);
  }
  for (std::uint64_t seed : seeds) {
    FLConfig cfg = data.fl;
    cfg.seed = seed;
    if (contains(ex.studies, "removal")) {
      for (const auto& m : methods) {
        const auto curves = client_removal_curves(m.rank, data.clients, data.test, cfg, ex.fractions);
        append_removal_rows(results.removal, m.method, curves, seed);
      }
    }
    if (partial) {
      const auto curves = partial_participation_curves(quality, data.clients, data.test, cfg, ex.fractions,
                                                       derive_seed(stage_seed(config, "partial"), seed));
      append_partial_rows(results.partial, curves, seed);
    }
  }
  if (contains(ex.studies, "cost")) {
    CostSetup setup;
    setup.make_clients = [&](int n) { return make_clients(config, data.train, n); };
    setup.test = data.test;
    setup.cfg = data.fl;
    setup.simulations = config.simulations;
    setup.master_seed = data.fingerprint.master_seed;
    setup.tmc.max_permutations = config.baselines.tmc_permutations;
    setup.tmc.truncation_tolerance = config.baselines.tmc_truncation;
    setup.tmc.convergence_tolerance = config.baselines.tmc_convergence;
    setup.tmc.seed = stage_seed(config, "tmc");
    setup.methods.clear();
    for (const auto* name : {"fedccea", "loo", "tmc"}) {
      if (contains(ex.methods, name)) setup.methods.emplace_back(name);
    }
    results.cost = cost_report(setup, ex.cost_grid);
  }
  auto written = emit_outputs(results, paths.dir);
  log << "experiment: " << written.size() << " files -> " << paths.dir.string() << "\n";
  return written;
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) {
  PreparedData out;
  if (config.dataset.synthetic) {
    const auto& s = *config.dataset.synthetic;
    const auto all = generate_synthetic(s.classes, s.per_class, s.dim, s.spread, stage_seed(config, "data"));
    auto split = split_tail(all, static_cast<std::size_t>(s.test_size));
    out.train = std::move(split.first);
    out.test = std::move(split.second);
  } else if (config.dataset.idx) {
    const auto& s = *config.dataset.idx;
    out.train = load_idx(s.train_images, s.train_labels, s.classes);
    out.test = load_idx(s.test_images, s.test_labels, s.classes);
    if (out.train.dim() != out.test.dim()) {
      throw ConsistencyError("train and test images differ in size");
    }
    if (out.train.num_classes() != out.test.num_classes()) {
      // Inferred class counts can differ when one split lacks the top label.
      const int classes = std::max(out.train.num_classes(), out.test.num_classes());
      out.train = load_idx(s.train_images, s.train_labels, classes);
      out.test = load_idx(s.test_images, s.test_labels, classes);
    }
  } else {
    throw ConfigError("dataset: no source configured");
  }
  out.clients = make_clients(config, out.train, config.partition.n_clients);
  out.fl = make_fl_config(config, static_cast<int>(out.train.dim()), out.train.num_classes());
  out.fingerprint.n_clients = config.partition.n_clients;
  out.fingerprint.rounds = config.fl.rounds;
  out.fingerprint.simulations = config.simulations;
  out.fingerprint.master_seed = stage_seed(config, "simulate");
  out.fingerprint.dataset_hash = partitions_fingerprint(out.clients, out.test);
  return out;
}

Stage stage_from_string(const std::string& name) {
  if (name == "simulate") return Stage::simulate;
  if (name == "train-aam") return Stage::train_aam;
  if (name == "value") return Stage::value;
  if (name == "baseline") return Stage::baseline;
  if (name == "experiment") return Stage::experiment;
  if (name == "all") return Stage::all;
  throw ConfigError("unknown subcommand '" + name + "'");
}

const char* to_string(Stage stage) {
  switch (stage) {
    case Stage::simulate: return "simulate";
    case Stage::train_aam: return "train-aam";
    case Stage::value: return "value";
    case Stage::baseline: return "baseline";
    case Stage::experiment: return "experiment";
    case Stage::all: return "all";
  }
  return "?";
}

std::vector<fs::path> run_stage(Stage stage, const RunConfig& config, std::ostream& log) {
  const auto paths = artifact_paths(config);
  std::error_code ec;
  fs::create_directories(paths.dir, ec);
  if (ec || !fs::is_directory(paths.dir)) throw Error("cannot create output directory " + paths.dir.string());
  write_text_file(paths.config, config_to_json(config));
  std::vector<fs::path> written{paths.config};
  auto append = [&](std::vector<fs::path> files) { written.insert(written.end(), files.begin(), files.end()); };
  switch (stage) {
    case Stage::simulate: append(stage_simulate(config, paths, log)); break;
    case Stage::train_aam: append(stage_train_aam(config, paths, log)); break;
    case Stage::value: append(stage_value(config, paths, log)); break;
    case Stage::baseline: append(stage_baseline(config, paths, log)); break;
    case Stage::experiment: append(stage_experiment(config, paths, log)); break;
    case Stage::all:
      append(stage_simulate(config, paths, log));
      append(stage_train_aam(config, paths, log));
      append(stage_value(config, paths, log));
      if (!config.baselines.methods.empty()) append(stage_baseline(config, paths, log));
      append(stage_experiment(config, paths, log));
      break;
  }
  return written;
}

int dispatch(const std::string& subcommand, const RunConfig& config, std::ostream& log,
             std::ostream& err) {
  try {
    run_stage(stage_from_string(subcommand), config, log);
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DependencyError& e) {
    err << "dependency error: " << e.what() << "\n";
    return kExitDependency;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace fedccea
