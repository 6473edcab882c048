#include "clusmfl/federation.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <numeric>
#include <string>

#include <omp.h>

#include "clusmfl/kernels.hpp"
#include "clusmfl/optim.hpp"
#include "clusmfl/random.hpp"

namespace clusmfl {

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::kClusMfl:
      return "clusmfl";
    case Method::kFedAvg:
      return "fedavg";
    case Method::kFedProx:
      return "fedprox";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "clusmfl") return Method::kClusMfl;
  if (name == "fedavg") return Method::kFedAvg;
  if (name == "fedprox") return Method::kFedProx;
  throw ConfigError("unknown method '" + std::string(name) + "'");
}

ClientState ClientState::make(std::size_t id, std::vector<Instance> data) {
  ClientState c;
  c.id = id;
  c.n = data.size();
  for (const auto& inst : data) {
    c.n_pet += inst.pet ? 1 : 0;
    c.n_mri += inst.mri ? 1 : 0;
  }
  c.data = std::move(data);
  return c;
}

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& x) {
  acc.total += x.total;
  acc.ce += x.ce;
  acc.ctr += x.ctr;
  acc.mc += x.mc;
  acc.mc_covered += x.mc_covered;
  acc.mc_skipped += x.mc_skipped;
}

void scale(LossBreakdown& acc, double s) {
  acc.total *= s;
  acc.ce *= s;
  acc.ctr *= s;
  acc.mc *= s;
}

ObjectiveTerms objective_for(const FederationConfig& config) {
  if (config.method != Method::kClusMfl) return {true, false, false};
  return {true, config.flags.ctr, config.flags.mc};
}

}  // namespace

LocalUpdate local_train(const ClientState& client, const MultimodalModel& global,
                        const ClusterPool* pool, const FederationConfig& config, double lr,
                        std::uint64_t stream_seed) {
  LocalUpdate up;
  up.client_id = client.id;
  up.params = global;
  up.n = client.n;
  up.n_pet = client.n_pet;
  up.n_mri = client.n_mri;
  if (client.data.empty()) {
    up.skipped = true;
    return up;
  }

  const ObjectiveTerms terms = objective_for(config);
  const bool prox = config.method == Method::kFedProx;
  const std::vector<double> anchor = flatten(global);
  std::vector<double> params = anchor;
  AdamState adam(params.size());
  Rng rng(stream_seed);

  const std::size_t n = client.data.size();
  const std::size_t bs = config.batch_size == 0 ? n : std::min(config.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<Instance> minibatch;
  std::size_t steps = 0;

  for (std::size_t epoch = 0; epoch < config.local_epochs; ++epoch) {
    if (bs < n) std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t stop = std::min(n, start + bs);
      std::span<const Instance> batch;
      if (bs == n) {
        batch = client.data;
      } else {
        minibatch.clear();
        for (std::size_t k = start; k < stop; ++k) minibatch.push_back(client.data[order[k]]);
        batch = minibatch;
      }
      LossResult res = overall_loss(up.params, batch, pool, config.loss, terms);
      if (prox) {
        double sq = 0.0;
        for (std::size_t i = 0; i < params.size(); ++i) {
          sq += (params[i] - anchor[i]) * (params[i] - anchor[i]);
        }
        res.parts.total += 0.5 * config.mu_prox * sq;
      }
      adam_step(params, flatten(res.grads), adam, lr);
      if (prox) {
        // Adam rescales gradients, so a proximal gradient would only steer the
        // step direction. The (mu/2)|w - anchor|^2 term is applied as an exact
        // proximal step instead: large mu pins w to the anchor, mu = 0 is Adam.
        const double shrink = 1.0 / (1.0 + lr * config.mu_prox);
        for (std::size_t i = 0; i < params.size(); ++i) {
          params[i] = anchor[i] + (params[i] - anchor[i]) * shrink;
        }
      }
      assign_flat(up.params, params);
      accumulate(up.loss, res.parts);
      ++steps;
    }
  }
  if (steps > 0) {
    scale(up.loss, 1.0 / static_cast<double>(steps));
    // Every epoch visits each instance once, so this is the per-epoch count.
    up.loss.mc_covered /= config.local_epochs;
    up.loss.mc_skipped /= config.local_epochs;
  }
  return up;
}

AggregationWeights maa_weights(std::span<const LocalUpdate> locals) {
  AggregationWeights w;
  double tot_pet = 0, tot_mri = 0, tot = 0;
  for (const auto& l : locals) {
    tot_pet += static_cast<double>(l.n_pet);
    tot_mri += static_cast<double>(l.n_mri);
    tot += static_cast<double>(l.n);
  }
  if (tot == 0) throw ProtocolError("aggregate: no client holds any data");
  w.pet_defined = tot_pet > 0;
  w.mri_defined = tot_mri > 0;
  for (const auto& l : locals) {
    w.pet.push_back(w.pet_defined ? static_cast<double>(l.n_pet) / tot_pet : 0.0);
    w.mri.push_back(w.mri_defined ? static_cast<double>(l.n_mri) / tot_mri : 0.0);
    w.classifier.push_back(static_cast<double>(l.n) / tot);
  }
  return w;
}

namespace {

MlpParams average_module(std::span<const LocalUpdate> locals, std::span<const double> weights,
                         MlpParams const& (*module)(const MultimodalModel&)) {
  std::vector<std::vector<double>> flat;
  flat.reserve(locals.size());
  for (const auto& l : locals) flat.push_back(flatten(module(l.params)));
  std::vector<std::span<const double>> views(flat.begin(), flat.end());
  std::vector<double> out(flat.front().size());
  kernels::weighted_sum(views, weights, out);
  MlpParams result = module(locals.front().params);
  assign_flat(result, out);
  return result;
}

const MlpParams& pet_of(const MultimodalModel& m) { return m.enc_pet; }
const MlpParams& mri_of(const MultimodalModel& m) { return m.enc_mri; }
const MlpParams& clf_of(const MultimodalModel& m) { return m.classifier; }

}  // namespace

MultimodalModel maa_aggregate(std::span<const LocalUpdate> locals,
                              const MultimodalModel& previous) {
  if (locals.empty()) throw ProtocolError("aggregate: no clients");
  const AggregationWeights w = maa_weights(locals);
  MultimodalModel out = previous;
  if (w.pet_defined) out.enc_pet = average_module(locals, w.pet, pet_of);
  if (w.mri_defined) out.enc_mri = average_module(locals, w.mri, mri_of);
  out.classifier = average_module(locals, w.classifier, clf_of);
  return out;
}

MultimodalModel uniform_aggregate(std::span<const LocalUpdate> locals) {
  if (locals.empty()) throw ProtocolError("aggregate: no clients");
  const AggregationWeights w = maa_weights(locals);
  MultimodalModel out = locals.front().params;
  out.enc_pet = average_module(locals, w.classifier, pet_of);
  out.enc_mri = average_module(locals, w.classifier, mri_of);
  out.classifier = average_module(locals, w.classifier, clf_of);
  return out;
}

Simulation::Simulation(FederationConfig config, std::vector<ClientState> clients,
                       std::vector<Instance> test, MultimodalModel initial,
                       std::size_t num_classes)
    : config_(config),
      clients_(std::move(clients)),
      test_(std::move(test)),
      global_(std::move(initial)),
      num_classes_(num_classes) {
  if (clients_.empty()) throw ProtocolError("Simulation: no clients");
  if (test_.empty()) throw InvalidInput("Simulation: empty test set");
  config_.loss.validate();
  global_.validate();
}

ClusterPool Simulation::build_pool() const {
  const std::size_t n = clients_.size();
  std::vector<LocalClusters> locals(n);
  std::vector<std::exception_ptr> errors(n);
  const int workers = static_cast<int>(std::max<std::size_t>(1, config_.workers));
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto c = static_cast<std::size_t>(i);
    try {
      locals[c] = compute_local_clusters(global_, clients_[c].data, clients_[c].id,
                                         num_classes_, config_.finch_level);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return assemble_global_pool(locals, num_classes_, global_.embed_dim);
}

RoundMetrics Simulation::run_round() {
  if (round_ >= config_.rounds) throw ProtocolError("Simulation: all rounds already run");
  const auto t0 = std::chrono::steady_clock::now();
  ++round_;
  const double lr = cosine_lr({config_.lr, config_.rounds, config_.min_lr}, round_ - 1);

  pool_ = config_.builds_pool() ? build_pool() : ClusterPool(num_classes_, global_.embed_dim);
  const ClusterPool* pool = config_.builds_pool() ? &pool_ : nullptr;

  const std::size_t n = clients_.size();
  std::vector<LocalUpdate> updates(n);
  std::vector<std::exception_ptr> errors(n);
  const int workers = static_cast<int>(std::max<std::size_t>(1, config_.workers));
#pragma omp parallel for schedule(dynamic) num_threads(workers)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    const auto c = static_cast<std::size_t>(i);
    try {
      const std::uint64_t stream = mix_seed({config_.seed, round_, clients_[c].id});
      updates[c] = local_train(clients_[c], global_, pool, config_, lr, stream);
    } catch (...) {
      errors[c] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  global_ = config_.uses_maa() ? maa_aggregate(updates, global_) : uniform_aggregate(updates);

  RoundMetrics rm;
  rm.round = round_;
  rm.lr = lr;
  std::size_t active = 0;
  for (const auto& u : updates) {
    if (u.skipped) continue;
    accumulate(rm.train_loss, u.loss);
    ++active;
  }
  if (active > 0) scale(rm.train_loss, 1.0 / static_cast<double>(active));
  rm.eval = evaluate(global_, test_);
  rm.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rm;
}

}  // namespace clusmfl
