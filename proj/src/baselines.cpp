#include "fedccea/baselines.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fedccea/errors.hpp"
#include "fedccea/format.hpp"
#include "fedccea/rng.hpp"

namespace fedccea {

UtilityFn::UtilityFn(int n_clients, Evaluator evaluator)
    : n_(n_clients), evaluator_(std::move(evaluator)) {
  if (n_ < 1) throw PreconditionError("UtilityFn needs at least one client");
  if (!evaluator_) throw PreconditionError("UtilityFn needs an evaluator");
}

double UtilityFn::operator()(std::vector<int> members) {
  std::sort(members.begin(), members.end());
  members.erase(std::unique(members.begin(), members.end()), members.end());
  for (int m : members) {
    if (m < 0 || m >= n_) throw PreconditionError("coalition member " + std::to_string(m) + " out of range");
  }
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(members); it != cache_.end()) return it->second;
  }
  const double value = evaluator_(members);
  std::lock_guard lock(mutex_);
  return cache_.emplace(std::move(members), value).first->second;
}

std::size_t UtilityFn::evaluations() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

std::size_t UtilityFn::nonempty_evaluations() const {
  std::lock_guard lock(mutex_);
  return cache_.size() - cache_.count(std::vector<int>{});
}

UtilityFn federated_utility(std::vector<ClientPartition> clients, LabeledDataset test, FLConfig cfg,
                            std::shared_ptr<RunCounter> counter) {
  const int n = static_cast<int>(clients.size());
  auto shared_clients = std::make_shared<const std::vector<ClientPartition>>(std::move(clients));
  auto shared_test = std::make_shared<const LabeledDataset>(std::move(test));
  return UtilityFn(n, [shared_clients, shared_test, cfg, counter](const std::vector<int>& members) {
    if (members.empty()) return initial_accuracy(*shared_test, cfg);
    std::vector<ClientPartition> chosen;
    chosen.reserve(members.size());
    for (int m : members) chosen.push_back((*shared_clients)[static_cast<std::size_t>(m)]);
    return train_federated(chosen, SizeSchedule::full(), *shared_test, cfg, counter.get()).final_accuracy;
  });
}

const char* to_string(ValuationMethod method) {
  switch (method) {
    case ValuationMethod::loo: return "loo";
    case ValuationMethod::tmc: return "tmc";
    case ValuationMethod::exact: return "exact";
  }
  return "loo";
}

namespace {

std::vector<int> everyone(int n) {
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  return all;
}

ValuationMethod method_from_string(const std::string& name) {
  if (name == "loo") return ValuationMethod::loo;
  if (name == "tmc") return ValuationMethod::tmc;
  if (name == "exact") return ValuationMethod::exact;
  throw FormatError("unknown valuation method '" + name + "'");
}

}  // namespace

ValuationResult loo_values(UtilityFn& utility, int n_clients) {
  if (n_clients < 2) throw PreconditionError("loo_values needs at least 2 clients");
  const std::size_t before = utility.evaluations();
  ValuationResult out;
  out.method = ValuationMethod::loo;
  const auto all = everyone(n_clients);
  const double full = utility(all);
  out.values.resize(static_cast<std::size_t>(n_clients));
  for (int i = 0; i < n_clients; ++i) {
    auto rest = all;
    rest.erase(rest.begin() + i);
    out.values[static_cast<std::size_t>(i)] = full - utility(rest);
  }
  out.utility_evaluations = utility.evaluations() - before;
  return out;
}

ValuationResult exact_shapley(UtilityFn& utility, int n_clients) {
  if (n_clients < 1) throw PreconditionError("exact_shapley needs at least one client");
  if (n_clients > kMaxExactShapleyClients) {
    throw CapacityError("exact_shapley enumerates 2^n coalitions; n = " + std::to_string(n_clients) +
                        " exceeds the limit of " + std::to_string(kMaxExactShapleyClients));
  }
  const std::size_t before = utility.evaluations();
  const auto n = static_cast<std::size_t>(n_clients);
  const std::size_t masks = std::size_t{1} << n;
  std::vector<double> u(masks);
  for (std::size_t mask = 0; mask < masks; ++mask) {
    std::vector<int> members;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::size_t{1} << i)) members.push_back(static_cast<int>(i));
    }
    u[mask] = utility(members);
  }
  // weight[s] = s! (n - s - 1)! / n!
  std::vector<double> weight(n);
  for (std::size_t s = 0; s < n; ++s) {
    double w = 1.0 / static_cast<double>(n);
    for (std::size_t k = 1; k <= s; ++k) w *= static_cast<double>(k) / static_cast<double>(n - k);
    weight[s] = w;
  }
  ValuationResult out;
  out.method = ValuationMethod::exact;
  out.values.assign(n, 0.0);
  for (std::size_t mask = 0; mask < masks; ++mask) {
    const auto size = static_cast<std::size_t>(std::popcount(mask));
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t bit = std::size_t{1} << i;
      if (mask & bit) continue;
      out.values[i] += weight[size] * (u[mask | bit] - u[mask]);
    }
  }
  out.utility_evaluations = utility.evaluations() - before;
  return out;
}

ValuationResult tmc_shapley(UtilityFn& utility, int n_clients, const TmcOptions& options) {
  if (n_clients < 1) throw PreconditionError("tmc_shapley needs at least one client");
  if (options.max_permutations < 1) throw PreconditionError("tmc_shapley needs at least one permutation");
  if (!(options.truncation_tolerance >= 0.0) || !(options.convergence_tolerance > 0.0)) {
    throw PreconditionError("tmc_shapley tolerances must be positive");
  }
  constexpr std::size_t kWindow = 10;
  const std::size_t before = utility.evaluations();
  const auto n = static_cast<std::size_t>(n_clients);
  RngStream rng = RngStream(options.seed).child("permutations");

  const double full = utility(everyone(n_clients));
  const double empty = utility({});

  ValuationResult out;
  out.method = ValuationMethod::tmc;
  out.values.assign(n, 0.0);
  std::deque<double> recent;  // largest per-client change of each recent permutation
  std::vector<int> perm = everyone(n_clients);
  std::vector<double> marginal(n);
  for (std::size_t t = 1; t <= options.max_permutations; ++t) {
    rng.shuffle(std::span<int>(perm));
    std::fill(marginal.begin(), marginal.end(), 0.0);
    std::vector<int> prefix;
    double previous = empty;
    for (std::size_t j = 0; j < n; ++j) {
      const int client = perm[j];
      prefix.push_back(client);
      const double current = utility(prefix);
      marginal[static_cast<std::size_t>(client)] = current - previous;
      previous = current;
      if (j + 1 < n && std::abs(current - full) < options.truncation_tolerance) {
        ++out.truncations;
        break;
      }
    }
    const double td = static_cast<double>(t);
    double step = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double updated = ((td - 1.0) * out.values[i] + marginal[i]) / td;
      step = std::max(step, std::abs(updated - out.values[i]));
      out.values[i] = updated;
    }
    out.permutations = t;
    recent.push_back(step);
    if (recent.size() > kWindow) recent.pop_front();
    if (recent.size() == kWindow && *std::max_element(recent.begin(), recent.end()) < options.convergence_tolerance) {
      break;
    }
  }
  out.utility_evaluations = utility.evaluations() - before;
  return out;
}

void write_valuation_csv(const std::vector<ValuationResult>& results, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "client_id,value,method\n";
  for (const auto& r : results) {
    for (std::size_t i = 0; i < r.values.size(); ++i) {
      out << i << ',' << format_real(r.values[i]) << ',' << to_string(r.method) << '\n';
    }
  }
  write_text_file(path, out.str());
}

std::vector<ValuationResult> read_valuation_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line) || line != "client_id,value,method") {
    throw FormatError("unexpected valuation header in " + path.string());
  }
  std::vector<ValuationResult> results;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos) throw FormatError("malformed valuation row in " + path.string());
    const auto method = method_from_string(line.substr(c2 + 1));
    const auto id = std::stoul(line.substr(0, c1));
    if (results.empty() || results.back().method != method) {
      results.push_back({});
      results.back().method = method;
    }
    if (id != results.back().values.size()) throw FormatError("valuation rows out of order in " + path.string());
    results.back().values.push_back(std::stod(line.substr(c1 + 1, c2 - c1 - 1)));
  }
  return results;
}

void write_valuation_diagnostics(const std::vector<ValuationResult>& results,
                                 const std::filesystem::path& path) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : results) {
    j.push_back({{"method", to_string(r.method)},
                 {"permutations", r.permutations},
                 {"truncations", r.truncations},
                 {"utility_evaluations", r.utility_evaluations}});
  }
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace fedccea
