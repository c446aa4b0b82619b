#include "fedccea/fl_engine.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "fedccea/errors.hpp"

namespace fedccea {

void FLConfig::validate() const {
  if (n_clients < 2) throw PreconditionError("FLConfig: n_clients must be >= 2");
  if (rounds < 1) throw PreconditionError("FLConfig: rounds must be >= 1");
  if (local_epochs < 1) throw PreconditionError("FLConfig: local_epochs must be >= 1");
  if (batch_size < 1) throw PreconditionError("FLConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw PreconditionError("FLConfig: lr must be > 0");
  if (model.layer_sizes().size() < 2) throw PreconditionError("FLConfig: model spec missing");
}

nn::MLPParams local_update(const nn::MLPParams& global, const ClientPartition& client,
                           std::size_t samples, const FLConfig& cfg) {
  if (samples > client.size()) {
    throw SizeError("client " + std::to_string(client.client_id) + " asked for " +
                    std::to_string(samples) + " samples but holds " +
                    std::to_string(client.size()));
  }
  if (samples == 0) return global;
  return nn::sgd_train(global, client.dataset.view().prefix(samples), cfg.sgd());
}

nn::MLPParams fed_avg(std::span<const nn::MLPParams> locals, std::span<const std::size_t> sizes) {
  if (locals.size() != sizes.size()) {
    throw ShapeError("fed_avg: " + std::to_string(locals.size()) + " models but " +
                     std::to_string(sizes.size()) + " sizes");
  }
  const double total = std::accumulate(sizes.begin(), sizes.end(), 0.0,
                                       [](double acc, std::size_t d) { return acc + static_cast<double>(d); });
  if (total <= 0.0) throw DegenerateRoundError("fed_avg: all client sizes are zero");

  nn::MLPParams out;
  for (std::size_t i = 0; i < locals.size(); ++i) {
    if (sizes[i] == 0) continue;
    if (out.layers.empty()) {
      out = locals[i].zeros_like();
    } else if (!out.same_shape(locals[i])) {
      throw ShapeError("fed_avg: local models differ in shape");
    }
    out.axpy(static_cast<double>(sizes[i]) / total, locals[i]);
  }
  return out;
}

RoundOutcome run_round(const nn::MLPParams& global, std::span<const ClientPartition> clients,
                       std::span<const std::size_t> sizes, const LabeledDataset& test,
                       const FLConfig& cfg) {
  if (clients.size() != sizes.size()) {
    throw ShapeError("run_round: " + std::to_string(clients.size()) + " clients but " +
                     std::to_string(sizes.size()) + " sizes");
  }
  const bool any = std::any_of(sizes.begin(), sizes.end(), [](std::size_t d) { return d > 0; });
  if (!any) return {global, nn::evaluate_accuracy(global, test.view())};

  std::vector<nn::MLPParams> locals;
  locals.reserve(clients.size());
  for (std::size_t i = 0; i < clients.size(); ++i) {
    locals.push_back(local_update(global, clients[i], sizes[i], cfg));
  }
  RoundOutcome out;
  out.global = fed_avg(locals, sizes);
  out.accuracy = nn::evaluate_accuracy(out.global, test.view());
  return out;
}

namespace {

nn::MLPParams seeded_init(const FLConfig& cfg) {
  RngStream rng = RngStream(cfg.seed).child("init");
  return nn::init_mlp(cfg.model, rng);
}

}  // namespace

double initial_accuracy(const LabeledDataset& test, const FLConfig& cfg) {
  return nn::evaluate_accuracy(seeded_init(cfg), test.view());
}

TrainTrace train_federated(std::span<const ClientPartition> clients, const SizeSchedule& schedule,
                           const LabeledDataset& test, const FLConfig& cfg, RunCounter* counter) {
  if (clients.empty()) throw PreconditionError("train_federated needs at least one client");
  if (cfg.rounds < 1) throw PreconditionError("train_federated needs rounds >= 1");
  if (!schedule.is_full() && schedule.rounds().size() != static_cast<std::size_t>(cfg.rounds)) {
    throw ShapeError("size schedule has " + std::to_string(schedule.rounds().size()) +
                     " rounds, config has " + std::to_string(cfg.rounds));
  }
  const auto full_sizes = client_sizes(clients);

  TrainTrace trace;
  trace.final_params = seeded_init(cfg);
  trace.round_accuracies.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int r = 0; r < cfg.rounds; ++r) {
    const auto& sizes = schedule.is_full() ? full_sizes : schedule.rounds()[static_cast<std::size_t>(r)];
    auto outcome = run_round(trace.final_params, clients, sizes, test, cfg);
    trace.final_params = std::move(outcome.global);
    trace.round_accuracies.push_back(outcome.accuracy);
  }
  trace.final_accuracy = trace.round_accuracies.back();
  if (counter != nullptr) counter->add();
  return trace;
}

}  // namespace fedccea
