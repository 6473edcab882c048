#include "clusmfl/experiment.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>

#include "clusmfl/errors.hpp"
#include "clusmfl/random.hpp"

namespace clusmfl {

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(clients > 0, "clients must be positive");
  require(rounds > 0, "rounds must be positive");
  require(local_epochs > 0, "local_epochs must be positive");
  require(lr > 0.0, "lr must be positive");
  require(min_lr >= 0.0 && min_lr <= lr, "min_lr must lie in [0, lr]");
  require(tau > 0.0, "tau must be positive");
  require(lambda1 >= 0.0 && lambda2 >= 0.0, "lambda1 and lambda2 must be non-negative");
  require(mu_prox >= 0.0, "mu_prox must be non-negative");
  require(alpha >= 0.0 && alpha <= 1.0 && 2.0 * alpha <= 1.0 + 1e-12,
          "alpha must lie in [0, 0.5] (alpha1 + alpha2 <= 1)");
  require(beta >= 0.0 && beta <= 1.0 && 2.0 * beta <= 1.0 + 1e-12,
          "beta must lie in [0, 0.5] (beta1 + beta2 <= 1)");
  require(cv_k >= 2, "cv_k must be at least 2");
  require(folds > 0 && folds <= cv_k, "folds must lie in [1, cv_k]");
  require(hidden_dim > 0 && embed_dim > 0 && classifier_hidden > 0,
          "layer widths must be positive");
  require(workers > 0, "workers must be positive");
  if (data_path.empty()) {
    try {
      synthetic.validate();
    } catch (const InvalidInput& e) {
      throw ConfigError(e.what());
    }
  }
}

FederationConfig ExperimentConfig::federation() const {
  FederationConfig f;
  f.method = method;
  f.flags = flags;
  f.rounds = rounds;
  f.local_epochs = local_epochs;
  f.lr = lr;
  f.min_lr = min_lr;
  f.loss = {lambda1, lambda2, tau};
  f.mu_prox = mu_prox;
  f.batch_size = batch_size;
  f.finch_level = finch_level;
  f.workers = workers;
  f.seed = seed;
  return f;
}

FoldSeeds fold_seeds(std::uint64_t master, std::size_t fold) {
  return {mix_seed({master, 1}), mix_seed({master, 2, fold}), mix_seed({master, 3, fold}),
          mix_seed({master, 4, fold}), mix_seed({master, 5, fold})};
}

std::vector<Instance> load_dataset(const ExperimentConfig& config) {
  if (!config.data_path.empty()) return load_csv(config.data_path);
  SyntheticSpec spec = config.synthetic;
  spec.seed = config.seed;
  return generate_synthetic(spec);
}

std::vector<FoldSetup> prepare_folds(const ExperimentConfig& config,
                                     const std::vector<Instance>& data) {
  const std::size_t classes = num_classes_of(data);
  const std::size_t dim = feature_dim_of(data);
  const auto folds = stratified_folds(data, config.cv_k, fold_seeds(config.seed, 0).split,
                                      config.split);
  const ModelDims dims{dim, config.hidden_dim, config.embed_dim, config.classifier_hidden,
                       classes};
  std::vector<FoldSetup> out;
  for (std::size_t f = 0; f < config.folds; ++f) {
    const FoldSeeds seeds = fold_seeds(config.seed, f);
    FoldSetup setup;
    setup.num_classes = classes;
    setup.test = apply_test_modality_mix(folds[f].test, seeds.test_mix);
    auto shards = partition_clients(
        folds[f].train, PartitionSpec::symmetric(config.clients, config.alpha, config.beta),
        seeds.partition);
    for (std::size_t c = 0; c < shards.size(); ++c) {
      setup.clients.push_back(ClientState::make(c, std::move(shards[c])));
    }
    Rng rng(seeds.model);
    setup.initial = make_model(dims, rng);
    out.push_back(std::move(setup));
  }
  return out;
}

Simulation make_simulation(const ExperimentConfig& config, FoldSetup setup, std::size_t fold) {
  FederationConfig fed = config.federation();
  fed.seed = fold_seeds(config.seed, fold).training;
  return Simulation(fed, std::move(setup.clients), std::move(setup.test),
                    std::move(setup.initial), setup.num_classes);
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

void write_round_row(std::ostream& out, const RoundMetrics& rm, bool record_time) {
  const auto& e = rm.eval;
  out << rm.fold << ',' << rm.round << ',' << format_double(record_time ? rm.wall_ms : 0.0)
      << ',' << format_double(e.loss) << ',' << format_double(e.accuracy) << ','
      << format_double(e.precision_weighted) << ',' << format_double(e.recall_macro) << ','
      << format_double(e.f1_weighted) << ',' << format_double(e.auc_weighted) << '\n';
}

void write_loss_row(std::ostream& out, const RoundMetrics& rm) {
  const auto& l = rm.train_loss;
  out << rm.fold << ',' << rm.round << ',' << format_double(rm.lr) << ','
      << format_double(l.total) << ',' << format_double(l.ce) << ',' << format_double(l.ctr)
      << ',' << format_double(l.mc) << ',' << l.mc_covered << ',' << l.mc_skipped << '\n';
}

ExperimentResult run_experiment(const ExperimentConfig& config, const RunSinks& sinks) {
  config.validate();
  const auto data = load_dataset(config);
  auto setups = prepare_folds(config, data);
  ExperimentResult result;
  for (std::size_t f = 0; f < setups.size(); ++f) {
    Simulation sim = make_simulation(config, std::move(setups[f]), f);
    std::vector<RoundMetrics> rounds;
    for (std::size_t r = 0; r < config.rounds; ++r) {
      RoundMetrics rm = sim.run_round();
      rm.fold = f;
      if (sinks.rounds) {
        write_round_row(*sinks.rounds, rm, config.record_time);
        sinks.rounds->flush();
      }
      if (sinks.losses) {
        write_loss_row(*sinks.losses, rm);
        sinks.losses->flush();
      }
      const std::string stem = "fold" + std::to_string(f) + "_round" + std::to_string(rm.round);
      if (!sinks.checkpoint_dir.empty()) {
        save_checkpoint(sim.global_model(), sinks.checkpoint_dir / ("global_" + stem + ".json"));
      }
      if (!sinks.pool_dir.empty() && config.federation().builds_pool()) {
        std::ofstream pool_out(sinks.pool_dir / ("pool_" + stem + ".csv"), std::ios::binary);
        if (!pool_out) throw std::runtime_error("cannot write pool dump");
        write_pool_csv(pool_out, sim.last_pool());
      }
      rounds.push_back(rm);
    }
    result.final_eval.push_back(rounds.back().eval);
    result.rounds.push_back(std::move(rounds));
  }
  return result;
}

std::vector<MetricSummary> summarize(const std::vector<EvalResult>& finals) {
  struct Field {
    const char* name;
    double EvalResult::*member;
  };
  static constexpr Field kFields[] = {{"accuracy", &EvalResult::accuracy},
                                      {"precision_w", &EvalResult::precision_weighted},
                                      {"recall_macro", &EvalResult::recall_macro},
                                      {"f1_w", &EvalResult::f1_weighted},
                                      {"auc_w", &EvalResult::auc_weighted}};
  std::vector<MetricSummary> out;
  const double n = static_cast<double>(finals.size());
  for (const auto& field : kFields) {
    MetricSummary s;
    s.metric = field.name;
    if (!finals.empty()) {
      for (const auto& e : finals) s.mean += e.*field.member;
      s.mean /= n;
      if (finals.size() > 1) {
        double ss = 0.0;
        for (const auto& e : finals) ss += (e.*field.member - s.mean) * (e.*field.member - s.mean);
        s.sd = std::sqrt(ss / (n - 1.0));
      }
    }
    out.push_back(s);
  }
  return out;
}

void write_summary_rows(std::ostream& out, const ExperimentConfig& config,
                        const std::vector<MetricSummary>& rows) {
  const bool clus = config.method == Method::kClusMfl;
  for (const auto& r : rows) {
    out << to_string(config.method) << ',' << format_double(config.alpha) << ','
        << format_double(config.beta) << ',' << (clus && config.flags.maa) << ','
        << (clus && config.flags.ctr) << ',' << (clus && config.flags.mc) << ',' << r.metric
        << ',' << format_double(r.mean) << ',' << format_double(r.sd) << '\n';
  }
}

std::vector<MetricSummary> run_to_directory(const ExperimentConfig& config,
                                            const std::filesystem::path& dir, bool checkpoints,
                                            bool dump_pools) {
  std::filesystem::create_directories(dir);
  std::ofstream rounds(dir / "rounds.csv", std::ios::binary);
  std::ofstream losses(dir / "losses.csv", std::ios::binary);
  if (!rounds || !losses) throw std::runtime_error("cannot write into " + dir.string());
  rounds << kRoundsHeader << '\n';
  losses << kLossesHeader << '\n';
  RunSinks sinks;
  sinks.rounds = &rounds;
  sinks.losses = &losses;
  if (checkpoints) {
    sinks.checkpoint_dir = dir / "checkpoints";
    std::filesystem::create_directories(sinks.checkpoint_dir);
  }
  if (dump_pools) {
    sinks.pool_dir = dir / "pools";
    std::filesystem::create_directories(sinks.pool_dir);
  }
  const ExperimentResult res = run_experiment(config, sinks);
  return summarize(res.final_eval);
}

std::vector<AblationFlags> ablation_grid() {
  return {{true, false, false}, {false, true, false}, {false, false, true},
          {false, true, true},  {true, false, true},  {true, true, false},
          {true, true, true}};
}

std::string flags_tag(const AblationFlags& flags) {
  std::string tag;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!tag.empty()) tag += '+';
    tag += name;
  };
  add(flags.maa, "maa");
  add(flags.ctr, "ctr");
  add(flags.mc, "mc");
  return tag.empty() ? "none" : tag;
}

}  // namespace clusmfl
