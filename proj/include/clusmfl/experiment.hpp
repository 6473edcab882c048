#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "clusmfl/data.hpp"
#include "clusmfl/federation.hpp"
#include "clusmfl/metrics.hpp"
#include "clusmfl/model.hpp"

namespace clusmfl {

struct ExperimentConfig {
  std::uint64_t seed = 0;
  Method method = Method::kClusMfl;
  AblationFlags flags;
  std::size_t clients = 10;
  std::size_t rounds = 30;
  std::size_t local_epochs = 10;
  double lr = 0.01;
  double min_lr = 0.0;
  double tau = 0.1;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double mu_prox = 0.01;
  double alpha = 0.4;  // PET-only and MRI-only client share, each
  double beta = 0.2;   // PET-only and MRI-only instance share on multimodal clients, each
  std::string data_path;  // empty = synthetic
  SyntheticSpec synthetic;
  std::size_t cv_k = 5;
  std::size_t folds = 5;  // folds actually run, from fold 0
  SplitReading split = SplitReading::kCrossValidation;
  std::size_t hidden_dim = 64;
  std::size_t embed_dim = 32;
  std::size_t classifier_hidden = 32;
  std::size_t batch_size = 0;  // 0 = full batch
  std::size_t finch_level = 0;
  std::size_t workers = 1;
  bool record_time = true;  // false writes wall_ms = 0 for byte-reproducible output

  // Throws ConfigError.
  void validate() const;
  FederationConfig federation() const;
};

// Seeds derived from the master seed for one fold's randomness.
struct FoldSeeds {
  std::uint64_t split;
  std::uint64_t test_mix;
  std::uint64_t partition;
  std::uint64_t model;
  std::uint64_t training;
};
FoldSeeds fold_seeds(std::uint64_t master, std::size_t fold);

// Everything a fold's simulation needs, built deterministically from the
// config: data split, test modality mix, client partition, initial model.
struct FoldSetup {
  std::vector<ClientState> clients;
  std::vector<Instance> test;
  MultimodalModel initial;
  std::size_t num_classes = 0;
};

std::vector<Instance> load_dataset(const ExperimentConfig& config);
std::vector<FoldSetup> prepare_folds(const ExperimentConfig& config,
                                     const std::vector<Instance>& data);
Simulation make_simulation(const ExperimentConfig& config, FoldSetup setup, std::size_t fold);

// Where a run writes. Any stream may be null.
struct RunSinks {
  std::ostream* rounds = nullptr;  // rounds.csv rows (header written by caller)
  std::ostream* losses = nullptr;  // losses.csv rows
  std::filesystem::path checkpoint_dir;  // empty = no checkpoints
  std::filesystem::path pool_dir;        // empty = no pool dumps
};

struct ExperimentResult {
  std::vector<std::vector<RoundMetrics>> rounds;  // [fold][round]
  std::vector<EvalResult> final_eval;             // last round of each fold
};

ExperimentResult run_experiment(const ExperimentConfig& config, const RunSinks& sinks = {});

inline constexpr const char* kRoundsHeader =
    "fold,round,wall_ms,test_loss,accuracy,precision_w,recall_macro,f1_w,auc_w";
inline constexpr const char* kLossesHeader = "fold,round,lr,total,ce,ctr,mc,mc_covered,mc_skipped";
inline constexpr const char* kSummaryHeader = "method,alpha,beta,maa,ctr,mc,metric,mean,sd";

void write_round_row(std::ostream& out, const RoundMetrics& rm, bool record_time);
void write_loss_row(std::ostream& out, const RoundMetrics& rm);

struct MetricSummary {
  std::string metric;
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation, 0 for a single fold
};

std::vector<MetricSummary> summarize(const std::vector<EvalResult>& finals);
void write_summary_rows(std::ostream& out, const ExperimentConfig& config,
                        const std::vector<MetricSummary>& rows);

// Shortest round-trip text for a double.
std::string format_double(double v);

// Runs the config and writes rounds.csv, losses.csv and (optionally)
// checkpoints into `dir`; returns the summary rows.
std::vector<MetricSummary> run_to_directory(const ExperimentConfig& config,
                                            const std::filesystem::path& dir,
                                            bool checkpoints = false, bool dump_pools = false);

// The seven flag combinations of the component ablation, in report order:
// MAA; CTR; MC; CTR+MC; MAA+MC; MAA+CTR; MAA+CTR+MC.
std::vector<AblationFlags> ablation_grid();
std::string flags_tag(const AblationFlags& flags);

}  // namespace clusmfl
