#include "fedccea/config.hpp"

#include <algorithm>
#include <set>

#include <nlohmann/json.hpp>

#include "fedccea/errors.hpp"
#include "fedccea/experiments.hpp"
#include "fedccea/format.hpp"
#include "fedccea/rng.hpp"

namespace fedccea {

namespace {

using nlohmann::json;
using ordered = nlohmann::ordered_json;

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

// Walks one JSON object, remembering which keys were read so leftovers can
// be reported as unknown.
class ObjectReader {
 public:
  ObjectReader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) {
      throw ConfigError((path_.empty() ? std::string("config") : path_) + ": expected an object");
    }
  }

  bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return node_.at(key);
  }

  std::string path(const std::string& key) const { return join(path_, key); }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    out = convert<T>(node_.at(key), path(key));
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& out) {
    seen_.insert(key);
    if (!node_.contains(key)) return;
    if (node_.at(key).is_null()) {
      out.reset();
      return;
    }
    out = convert<T>(node_.at(key), path(key));
  }

  void finish() const {
    for (const auto& item : node_.items()) {
      if (!seen_.contains(item.key())) throw ConfigError("unknown key " + path(item.key()));
    }
  }

  template <typename T>
  static T convert(const json& value, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!value.is_boolean()) throw ConfigError(where + ": expected a boolean");
      return value.get<bool>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!value.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
      return value.get<std::uint64_t>();
    } else if constexpr (std::is_same_v<T, std::size_t>) {
      if (!value.is_number_unsigned()) throw ConfigError(where + ": expected a non-negative integer");
      return value.get<std::size_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!value.is_number_integer()) throw ConfigError(where + ": expected an integer");
      const auto wide = value.get<std::int64_t>();
      if (wide < std::numeric_limits<T>::min() || wide > std::numeric_limits<T>::max()) {
        throw ConfigError(where + ": integer out of range");
      }
      return static_cast<T>(wide);
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!value.is_number()) throw ConfigError(where + ": expected a number");
      return value.get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!value.is_string()) throw ConfigError(where + ": expected a string");
      return value.get<std::string>();
    } else {
      if (!value.is_array()) throw ConfigError(where + ": expected an array");
      T out;
      for (std::size_t k = 0; k < value.size(); ++k) {
        out.push_back(convert<typename T::value_type>(value[k], where + "[" + std::to_string(k) + "]"));
      }
      return out;
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& where, const std::string& what) {
  if (!ok) throw ConfigError(where + ": " + what);
}

SyntheticSource read_synthetic(const json& node, const std::string& path) {
  ObjectReader r(node, path);
  SyntheticSource s;
  r.read("classes", s.classes);
  r.read("per_class", s.per_class);
  r.read("dim", s.dim);
  r.read("spread", s.spread);
  r.read("test_size", s.test_size);
  r.finish();
  require(s.classes >= 2, r.path("classes"), "must be at least 2");
  require(s.per_class >= 1, r.path("per_class"), "must be positive");
  require(s.dim >= 2, r.path("dim"), "must be at least 2");
  require(s.spread >= 0.0, r.path("spread"), "must be non-negative");
  require(s.test_size >= 1 && s.test_size < s.classes * s.per_class, r.path("test_size"),
          "must be positive and smaller than classes * per_class");
  return s;
}

IdxSource read_idx(const json& node, const std::string& path) {
  ObjectReader r(node, path);
  IdxSource s;
  r.read("train_images", s.train_images);
  r.read("train_labels", s.train_labels);
  r.read("test_images", s.test_images);
  r.read("test_labels", s.test_labels);
  r.read("classes", s.classes);
  r.finish();
  for (const auto* key : {"train_images", "train_labels", "test_images", "test_labels"}) {
    require(r.has(key), r.path(key), "required");
  }
  if (s.classes) require(*s.classes >= 2, r.path("classes"), "must be at least 2");
  return s;
}

std::optional<int> known_classes(const DatasetConfig& d) {
  if (d.synthetic) return d.synthetic->classes;
  if (d.idx) return d.idx->classes;
  return std::nullopt;
}

NoiseConfig noise_preset(const std::string& name, const std::string& where) {
  // Presets follow the noise settings matrix: 20% of clients affected.
  if (name == "label40") return {NoiseKind::label, 0.2, 0.4, 0};
  if (name == "label20") return {NoiseKind::label, 0.2, 0.2, 0};
  if (name == "label10") return {NoiseKind::label, 0.2, 0.1, 0};
  if (name == "sample20") return {NoiseKind::pattern, 0.2, 0.2, 0};
  throw ConfigError(where + ": unknown noise preset '" + name + "'");
}

std::optional<NoiseConfig> read_noise(const json& node, const std::string& path) {
  if (node.is_null()) return std::nullopt;
  if (node.is_string()) {
    const auto name = node.get<std::string>();
    if (name == "none") return std::nullopt;
    return noise_preset(name, path);
  }
  ObjectReader r(node, path);
  NoiseConfig n;
  std::string kind = to_string(n.kind);
  r.read("kind", kind);
  r.read("client_fraction", n.client_fraction);
  r.read("sample_fraction", n.sample_fraction);
  r.read("pattern_block", n.pattern_block);
  r.finish();
  try {
    n.kind = noise_kind_from_string(kind);
  } catch (const Error&) {
    throw ConfigError(r.path("kind") + ": unknown noise kind '" + kind + "'");
  }
  if (n.kind == NoiseKind::none) return std::nullopt;
  require(n.client_fraction >= 0.0 && n.client_fraction <= 1.0, r.path("client_fraction"),
          "must lie in [0, 1]");
  require(n.sample_fraction >= 0.0 && n.sample_fraction <= 1.0, r.path("sample_fraction"),
          "must lie in [0, 1]");
  require(n.pattern_block >= 0, r.path("pattern_block"), "must be non-negative");
  return n;
}

void check_names(const std::vector<std::string>& names, const std::set<std::string>& allowed,
                 const std::string& where) {
  for (const auto& name : names) {
    require(allowed.contains(name), where, "unknown entry '" + name + "'");
  }
  std::set<std::string> unique(names.begin(), names.end());
  require(unique.size() == names.size(), where, "duplicate entries");
}

RunConfig read_config(const json& root) {
  ObjectReader top(root, "");
  RunConfig c;

  require(top.has("dataset"), "dataset", "required");
  {
    ObjectReader r(top.raw("dataset"), "dataset");
    if (r.has("synthetic")) c.dataset.synthetic = read_synthetic(r.raw("synthetic"), r.path("synthetic"));
    if (r.has("idx")) c.dataset.idx = read_idx(r.raw("idx"), r.path("idx"));
    r.finish();
    require(c.dataset.synthetic.has_value() != c.dataset.idx.has_value(), "dataset",
            "exactly one of synthetic or idx is required");
  }

  if (top.has("partition")) {
    ObjectReader r(top.raw("partition"), "partition");
    r.read("n_clients", c.partition.n_clients);
    r.read("classes_per_client", c.partition.classes_per_client);
    r.read("samples_per_client", c.partition.samples_per_client);
    if (r.has("distribution")) {
      require(!r.has("classes_per_client"), r.path("distribution"),
              "conflicts with classes_per_client");
      const auto name = ObjectReader::convert<std::string>(r.raw("distribution"), r.path("distribution"));
      const auto classes = known_classes(c.dataset);
      if (name == "iid") {
        c.partition.classes_per_client.reset();
      } else if (name == "weak_noniid" || name == "strong_noniid") {
        require(classes.has_value(), r.path("distribution"), "needs the dataset class count");
        c.partition.classes_per_client = name == "weak_noniid" ? *classes / 2 : 2;
      } else {
        throw ConfigError(r.path("distribution") + ": unknown distribution '" + name + "'");
      }
    }
    r.finish();
    require(c.partition.n_clients >= 2, r.path("n_clients"), "must be at least 2");
    require(c.partition.samples_per_client >= 1, r.path("samples_per_client"), "must be positive");
    if (c.partition.classes_per_client) {
      require(*c.partition.classes_per_client >= 1, r.path("classes_per_client"), "must be positive");
      if (const auto classes = known_classes(c.dataset)) {
        require(*c.partition.classes_per_client <= *classes, r.path("classes_per_client"),
                "exceeds the class count");
      }
    }
  }

  if (root.contains("noise")) c.noise = read_noise(top.raw("noise"), "noise");

  if (top.has("fl")) {
    ObjectReader r(top.raw("fl"), "fl");
    r.read("rounds", c.fl.rounds);
    r.read("local_epochs", c.fl.local_epochs);
    r.read("batch_size", c.fl.batch_size);
    r.read("lr", c.fl.lr);
    r.read("hidden", c.fl.hidden);
    r.finish();
    require(c.fl.rounds >= 1, r.path("rounds"), "must be positive");
    require(c.fl.local_epochs >= 1, r.path("local_epochs"), "must be positive");
    require(c.fl.batch_size >= 1, r.path("batch_size"), "must be positive");
    require(c.fl.lr > 0.0, r.path("lr"), "must be positive");
    for (int h : c.fl.hidden) require(h >= 1, r.path("hidden"), "layer sizes must be positive");
  }

  top.read("simulations", c.simulations);
  require(c.simulations >= 1, "simulations", "must be positive");

  if (top.has("aam")) {
    ObjectReader r(top.raw("aam"), "aam");
    r.read("lr", c.aam.lr);
    r.read("max_epochs", c.aam.max_epochs);
    r.read("batch_size", c.aam.batch_size);
    r.read("val_fraction", c.aam.val_fraction);
    r.read("patience", c.aam.patience);
    r.read("min_improvement", c.aam.min_improvement);
    r.read("hidden", c.aam.hidden);
    r.finish();
    require(c.aam.lr >= 0.0, r.path("lr"), "must be non-negative");
    require(c.aam.max_epochs >= 0, r.path("max_epochs"), "must be non-negative");
    require(c.aam.batch_size >= 1, r.path("batch_size"), "must be positive");
    require(c.aam.val_fraction >= 0.0 && c.aam.val_fraction < 1.0, r.path("val_fraction"),
            "must lie in [0, 1)");
    require(c.aam.patience >= 1, r.path("patience"), "must be positive");
    require(c.aam.min_improvement >= 0.0, r.path("min_improvement"), "must be non-negative");
    require(c.aam.hidden >= 1, r.path("hidden"), "must be positive");
  }

  if (top.has("baselines")) {
    ObjectReader r(top.raw("baselines"), "baselines");
    r.read("methods", c.baselines.methods);
    if (r.has("tmc")) {
      ObjectReader t(r.raw("tmc"), r.path("tmc"));
      t.read("max_permutations", c.baselines.tmc_permutations);
      t.read("truncation_tolerance", c.baselines.tmc_truncation);
      t.read("convergence_tolerance", c.baselines.tmc_convergence);
      t.finish();
      require(c.baselines.tmc_permutations >= 1, t.path("max_permutations"), "must be positive");
      require(c.baselines.tmc_truncation >= 0.0, t.path("truncation_tolerance"), "must be non-negative");
      require(c.baselines.tmc_convergence >= 0.0, t.path("convergence_tolerance"),
              "must be non-negative");
    }
    r.finish();
    check_names(c.baselines.methods, {"loo", "tmc", "exact"}, r.path("methods"));
  }

  if (top.has("experiments")) {
    ObjectReader r(top.raw("experiments"), "experiments");
    r.read("studies", c.experiments.studies);
    r.read("methods", c.experiments.methods);
    r.read("fractions", c.experiments.fractions);
    r.read("seeds", c.experiments.seeds);
    r.read("cost_grid", c.experiments.cost_grid);
    r.finish();
    check_names(c.experiments.studies, {"skewness", "zero_exclusion", "removal", "partial", "cost"},
                r.path("studies"));
    check_names(c.experiments.methods, {"fedccea", "loo", "tmc", "exact"}, r.path("methods"));
    try {
      validate_fractions(c.experiments.fractions);
    } catch (const Error& e) {
      throw ConfigError(r.path("fractions") + ": " + e.what());
    }
    for (int n : c.experiments.cost_grid) require(n >= 2, r.path("cost_grid"), "sizes must be at least 2");
  }

  top.read("output_dir", c.output_dir);
  top.read("seed", c.seed);
  top.finish();
  return c;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return read_config(root);
}

RunConfig parse_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const DependencyError&) {
    throw ConfigError("config file not found: " + path.string());
  }
  return parse_config_text(text);
}

std::string config_to_json(const RunConfig& c) {
  ordered root;
  ordered dataset = ordered::object();
  if (c.dataset.synthetic) {
    const auto& s = *c.dataset.synthetic;
    dataset["synthetic"] = {{"classes", s.classes},     {"per_class", s.per_class},
                            {"dim", s.dim},             {"spread", s.spread},
                            {"test_size", s.test_size}};
  }
  if (c.dataset.idx) {
    const auto& s = *c.dataset.idx;
    ordered idx = {{"train_images", s.train_images},
                   {"train_labels", s.train_labels},
                   {"test_images", s.test_images},
                   {"test_labels", s.test_labels}};
    idx["classes"] = s.classes ? ordered(*s.classes) : ordered(nullptr);
    dataset["idx"] = idx;
  }
  root["dataset"] = dataset;

  ordered partition = {{"n_clients", c.partition.n_clients}};
  partition["classes_per_client"] =
      c.partition.classes_per_client ? ordered(*c.partition.classes_per_client) : ordered(nullptr);
  partition["samples_per_client"] = c.partition.samples_per_client;
  root["partition"] = partition;

  if (c.noise) {
    root["noise"] = {{"kind", to_string(c.noise->kind)},
                     {"client_fraction", c.noise->client_fraction},
                     {"sample_fraction", c.noise->sample_fraction},
                     {"pattern_block", c.noise->pattern_block}};
  } else {
    root["noise"] = nullptr;
  }

  root["fl"] = {{"rounds", c.fl.rounds},
                {"local_epochs", c.fl.local_epochs},
                {"batch_size", c.fl.batch_size},
                {"lr", c.fl.lr},
                {"hidden", c.fl.hidden}};
  root["simulations"] = c.simulations;
  root["aam"] = {{"lr", c.aam.lr},
                 {"max_epochs", c.aam.max_epochs},
                 {"batch_size", c.aam.batch_size},
                 {"val_fraction", c.aam.val_fraction},
                 {"patience", c.aam.patience},
                 {"min_improvement", c.aam.min_improvement},
                 {"hidden", c.aam.hidden}};
  root["baselines"] = {{"methods", c.baselines.methods},
                       {"tmc",
                        {{"max_permutations", c.baselines.tmc_permutations},
                         {"truncation_tolerance", c.baselines.tmc_truncation},
                         {"convergence_tolerance", c.baselines.tmc_convergence}}}};
  root["experiments"] = {{"studies", c.experiments.studies},
                         {"methods", c.experiments.methods},
                         {"fractions", c.experiments.fractions},
                         {"seeds", c.experiments.seeds},
                         {"cost_grid", c.experiments.cost_grid}};
  root["output_dir"] = c.output_dir;
  root["seed"] = c.seed;
  return root.dump(2) + "\n";
}

std::string config_hash(const RunConfig& config) {
  RunConfig copy = config;
  copy.output_dir.clear();
  return hex64(hash_tag(config_to_json(copy)));
}

std::uint64_t stage_seed(const RunConfig& config, const char* stage) {
  return derive_seed(config.seed, hash_tag(stage));
}

FLConfig make_fl_config(const RunConfig& config, int input_dim, int classes) {
  std::vector<int> layers{input_dim};
  layers.insert(layers.end(), config.fl.hidden.begin(), config.fl.hidden.end());
  layers.push_back(classes);
  FLConfig cfg;
  cfg.n_clients = config.partition.n_clients;
  cfg.rounds = config.fl.rounds;
  cfg.local_epochs = config.fl.local_epochs;
  cfg.batch_size = config.fl.batch_size;
  cfg.lr = config.fl.lr;
  cfg.model = nn::MLPSpec(std::move(layers));
  cfg.seed = stage_seed(config, "fl");
  return cfg;
}

}  // namespace fedccea
