#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "clusmfl/cluster_pool.hpp"
#include "clusmfl/instance.hpp"
#include "clusmfl/losses.hpp"
#include "clusmfl/metrics.hpp"
#include "clusmfl/model.hpp"

namespace clusmfl {

enum class Method { kClusMfl, kFedAvg, kFedProx };

std::string_view to_string(Method m) noexcept;
Method parse_method(std::string_view name);  // throws ConfigError

// Ablation switches; only consulted for Method::kClusMfl.
struct AblationFlags {
  bool maa = true;  // modality-aware aggregation
  bool ctr = true;  // contrastive alignment term
  bool mc = true;   // modality completion term

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct FederationConfig {
  Method method = Method::kClusMfl;
  AblationFlags flags;
  std::size_t rounds = 30;
  std::size_t local_epochs = 10;
  double lr = 0.01;
  double min_lr = 0.0;
  LossWeights loss;
  double mu_prox = 0.01;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t finch_level = 0;
  std::size_t workers = 1;
  std::uint64_t seed = 0;

  bool builds_pool() const {
    return method == Method::kClusMfl && (flags.ctr || flags.mc);
  }
  bool uses_maa() const { return method == Method::kClusMfl && flags.maa; }
};

struct ClientState {
  std::size_t id = 0;
  std::vector<Instance> data;
  std::size_t n = 0;
  std::size_t n_pet = 0;  // instances carrying PET
  std::size_t n_mri = 0;  // instances carrying MRI

  static ClientState make(std::size_t id, std::vector<Instance> data);
};

struct LocalUpdate {
  std::size_t client_id = 0;
  MultimodalModel params;
  std::size_t n = 0;
  std::size_t n_pet = 0;
  std::size_t n_mri = 0;
  LossBreakdown loss;  // mean over the round's optimizer steps; MC counts per epoch
  bool skipped = false;
};

// Starts from `global`, runs the configured local epochs with Adam at `lr`.
// `pool` may be null when the objective does not need it. Minibatch order is
// drawn from `stream_seed`.
LocalUpdate local_train(const ClientState& client, const MultimodalModel& global,
                        const ClusterPool* pool, const FederationConfig& config, double lr,
                        std::uint64_t stream_seed);

struct AggregationWeights {
  std::vector<double> pet;         // per client, encoder f_P
  std::vector<double> mri;         // per client, encoder f_M
  std::vector<double> classifier;  // per client, classifier g
  bool pet_defined = true;         // false when no client has PET data
  bool mri_defined = true;
};

AggregationWeights maa_weights(std::span<const LocalUpdate> locals);

// Per-module weighted average: encoders by modality counts, classifier by
// instance counts. An encoder no client trained keeps `previous`.
// Throws ProtocolError if every client is empty.
MultimodalModel maa_aggregate(std::span<const LocalUpdate> locals,
                              const MultimodalModel& previous);

// Every module weighted by n_i.
MultimodalModel uniform_aggregate(std::span<const LocalUpdate> locals);

struct RoundMetrics {
  std::size_t fold = 0;
  std::size_t round = 0;
  double wall_ms = 0.0;
  EvalResult eval;
  LossBreakdown train_loss;  // mean over participating clients; MC counts summed
  double lr = 0.0;
};

// Server plus clients for one fold. Each round: broadcast, (ClusMFL) build
// the cluster pool, train clients in parallel, aggregate, evaluate.
class Simulation {
 public:
  Simulation(FederationConfig config, std::vector<ClientState> clients,
             std::vector<Instance> test, MultimodalModel initial, std::size_t num_classes);

  RoundMetrics run_round();

  const MultimodalModel& global_model() const noexcept { return global_; }
  std::size_t round() const noexcept { return round_; }
  const std::vector<ClientState>& clients() const noexcept { return clients_; }
  const FederationConfig& config() const noexcept { return config_; }
  // Pool used in the most recent round (empty if none was built).
  const ClusterPool& last_pool() const noexcept { return pool_; }

  // Pool the clients would build from the current global model.
  ClusterPool build_pool() const;

 private:
  FederationConfig config_;
  std::vector<ClientState> clients_;
  std::vector<Instance> test_;
  MultimodalModel global_;
  std::size_t num_classes_;
  std::size_t round_ = 0;
  ClusterPool pool_;
};

}  // namespace clusmfl
