#include "fedccea/simulator.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedccea/errors.hpp"
#include "fedccea/format.hpp"
#include "fedccea/parallel.hpp"

namespace fedccea {

std::vector<double> sample_proportions(int n, RngStream& rng) {
  if (n < 1) throw PreconditionError("sample_proportions needs n >= 1");
  std::vector<double> p(static_cast<std::size_t>(n));
  for (auto& v : p) v = rng.uniform_open();
  return p;
}

SizeSample scale_sizes(std::span<const std::size_t> sizes, std::span<const double> p) {
  if (sizes.size() != p.size()) throw ShapeError("scale_sizes: sizes and proportions differ in length");
  if (sizes.empty()) throw PreconditionError("scale_sizes needs at least one client");
  double total = 0.0;
  for (std::size_t s : sizes) {
    if (s == 0) throw PreconditionError("scale_sizes: client sizes must be positive");
    total += static_cast<double>(s);
  }
  const double standard = total / static_cast<double>(sizes.size());

  SizeSample out;
  out.p.assign(p.begin(), p.end());
  out.d.resize(sizes.size());
  out.x.resize(sizes.size());
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) throw PreconditionError("scale_sizes: proportion outside [0, 1]");
    out.d[i] = static_cast<std::size_t>(std::floor(static_cast<double>(sizes[i]) * p[i]));
    out.x[i] = static_cast<double>(out.d[i]) / standard;
  }
  return out;
}

RngStream simulation_stream(std::uint64_t master_seed, int sim_id) {
  return RngStream(derive_seed(master_seed, static_cast<std::uint64_t>(sim_id)));
}

std::vector<SimRecord> run_simulation(std::span<const ClientPartition> clients,
                                      const LabeledDataset& test, const FLConfig& cfg, int sim_id,
                                      const RngStream& rng) {
  cfg.validate();
  if (clients.size() != static_cast<std::size_t>(cfg.n_clients)) {
    throw ShapeError("run_simulation: config expects " + std::to_string(cfg.n_clients) +
                     " clients, got " + std::to_string(clients.size()));
  }
  // Every simulation restarts from the same seeded model, so records differ
  // only through the sampled sizes.
  RngStream init_rng = RngStream(cfg.seed).child("init");
  RngStream size_rng = rng.child("sizes");
  const auto sizes = client_sizes(clients);

  nn::MLPParams global = nn::init_mlp(cfg.model, init_rng);
  std::vector<SimRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int r = 1; r <= cfg.rounds; ++r) {
    const auto p = sample_proportions(cfg.n_clients, size_rng);
    auto sample = scale_sizes(sizes, p);
    auto outcome = run_round(global, clients, sample.d, test, cfg);
    global = std::move(outcome.global);
    records.push_back({sim_id, r, std::move(sample.x), outcome.accuracy});
  }
  return records;
}

SimStore run_all(std::span<const ClientPartition> clients, const LabeledDataset& test,
                 const FLConfig& cfg, int simulations, std::uint64_t master_seed,
                 RunCounter* counter, unsigned threads) {
  if (simulations < 1) throw PreconditionError("run_all needs at least one simulation");
  cfg.validate();
  std::vector<std::vector<SimRecord>> per_sim(static_cast<std::size_t>(simulations));
  parallel_for(per_sim.size(), threads, [&](std::size_t k) {
    const int s = static_cast<int>(k) + 1;
    per_sim[k] = run_simulation(clients, test, cfg, s, simulation_stream(master_seed, s));
    if (counter != nullptr) counter->add();
  });

  SimStore store;
  store.fingerprint = {cfg.n_clients, cfg.rounds, simulations, master_seed,
                       partitions_fingerprint(clients, test)};
  store.records.reserve(static_cast<std::size_t>(simulations) * static_cast<std::size_t>(cfg.rounds));
  for (auto& sim : per_sim) {
    for (auto& rec : sim) store.records.push_back(std::move(rec));
  }
  return store;
}

void SimStore::validate() const {
  const auto& fp = fingerprint;
  const auto expected = static_cast<std::size_t>(fp.simulations) * static_cast<std::size_t>(fp.rounds);
  if (records.size() != expected) {
    throw ConsistencyError("store holds " + std::to_string(records.size()) + " records, expected " +
                           std::to_string(expected));
  }
  std::size_t k = 0;
  for (int s = 1; s <= fp.simulations; ++s) {
    for (int r = 1; r <= fp.rounds; ++r, ++k) {
      const auto& rec = records[k];
      if (rec.sim != s || rec.round != r) {
        throw ConsistencyError("store record " + std::to_string(k) + " is (s=" + std::to_string(rec.sim) +
                               ", r=" + std::to_string(rec.round) + "), expected (s=" +
                               std::to_string(s) + ", r=" + std::to_string(r) + ")");
      }
      if (rec.x.size() != static_cast<std::size_t>(fp.n_clients)) {
        throw ConsistencyError("store record " + std::to_string(k) + " has wrong x length");
      }
      if (!(rec.acc >= 0.0 && rec.acc <= 1.0)) {
        throw ConsistencyError("store record " + std::to_string(k) + " accuracy outside [0, 1]");
      }
    }
  }
}

void persist_store(const SimStore& store, const std::filesystem::path& path) {
  const auto& fp = store.fingerprint;
  std::ostringstream out;
  out << "{\"format\":\"fedccea-simstore\",\"version\":1,\"n\":" << fp.n_clients
      << ",\"R\":" << fp.rounds << ",\"S\":" << fp.simulations
      << ",\"master_seed\":" << fp.master_seed << ",\"dataset_hash\":\"" << hex64(fp.dataset_hash)
      << "\"}\n";
  for (const auto& rec : store.records) {
    out << "{\"s\":" << rec.sim << ",\"r\":" << rec.round << ",\"x\":[";
    for (std::size_t i = 0; i < rec.x.size(); ++i) {
      if (i > 0) out << ',';
      out << format_real(rec.x[i]);
    }
    out << "],\"acc\":" << format_real(rec.acc) << "}\n";
  }
  write_text_file(path, out.str());
}

LoadedStore load_store(const std::filesystem::path& path,
                       const std::optional<StoreFingerprint>& expected) {
  std::ifstream in(path);
  if (!in) throw DependencyError("missing simulation store " + path.string());

  LoadedStore loaded;
  std::string line;
  std::size_t line_no = 0;
  try {
    if (!std::getline(in, line)) throw FormatError("empty simulation store " + path.string());
    ++line_no;
    const auto header = nlohmann::json::parse(line);
    if (header.at("format").get<std::string>() != "fedccea-simstore") {
      throw FormatError("not a simulation store: " + path.string());
    }
    auto& fp = loaded.store.fingerprint;
    fp.n_clients = header.at("n").get<int>();
    fp.rounds = header.at("R").get<int>();
    fp.simulations = header.at("S").get<int>();
    fp.master_seed = header.at("master_seed").get<std::uint64_t>();
    fp.dataset_hash = std::stoull(header.at("dataset_hash").get<std::string>(), nullptr, 16);

    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      SimRecord rec;
      rec.sim = j.at("s").get<int>();
      rec.round = j.at("r").get<int>();
      rec.x = j.at("x").get<std::vector<double>>();
      rec.acc = j.at("acc").get<double>();
      loaded.store.records.push_back(std::move(rec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed simulation store " + path.string() + " at line " +
                      std::to_string(line_no) + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw FormatError("malformed dataset hash in " + path.string());
  }
  try {
    loaded.store.validate();
  } catch (const ConsistencyError& e) {
    throw FormatError("simulation store " + path.string() + " is incomplete: " + e.what());
  }

  if (expected && !(*expected == loaded.store.fingerprint)) {
    const auto& a = *expected;
    const auto& b = loaded.store.fingerprint;
    std::ostringstream w;
    w << "simulation store " << path.string() << " was produced by a different configuration:";
    if (a.n_clients != b.n_clients) w << " n " << b.n_clients << " vs " << a.n_clients << ';';
    if (a.rounds != b.rounds) w << " R " << b.rounds << " vs " << a.rounds << ';';
    if (a.simulations != b.simulations) w << " S " << b.simulations << " vs " << a.simulations << ';';
    if (a.master_seed != b.master_seed) w << " master_seed differs;";
    if (a.dataset_hash != b.dataset_hash) w << " dataset hash differs;";
    loaded.warnings.push_back(w.str());
  }
  return loaded;
}

}  // namespace fedccea
