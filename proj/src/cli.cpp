#include "clusmfl/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "clusmfl/cluster_pool.hpp"
#include "clusmfl/data.hpp"
#include "clusmfl/errors.hpp"
#include "clusmfl/experiment.hpp"
#include "clusmfl/finch.hpp"

namespace clusmfl {
namespace {

namespace fs = std::filesystem;

// Command-line view of an experiment. Method, alpha and beta are lists so
// `run` can sweep a grid; the other subcommands use the first entry.
struct ExperimentOptions {
  ExperimentConfig config;
  std::vector<std::string> methods = {"clusmfl"};
  std::vector<double> alphas = {0.4};
  std::vector<double> betas = {0.2};
  std::string split = "cv";
  std::string out = "results";
};

void add_experiment_options(CLI::App* app, ExperimentOptions& o, bool grid) {
  auto& c = o.config;
  app->set_config("--config", "", "Flat key=value config file; command-line flags win");
  app->add_option("--seed", c.seed, "Master seed");
  if (grid) {
    app->add_option("--method", o.methods, "clusmfl, fedavg or fedprox (comma list sweeps)")
        ->delimiter(',');
    app->add_option("--alpha", o.alphas, "Unimodal client share per modality (comma list)")
        ->delimiter(',');
    app->add_option("--beta", o.betas, "Unimodal instance share per modality (comma list)")
        ->delimiter(',');
  } else {
    app->add_option("--alpha", o.alphas, "Unimodal client share per modality")
        ->expected(1);
    app->add_option("--beta", o.betas, "Unimodal instance share per modality")->expected(1);
  }
  app->add_option("--maa", c.flags.maa, "Modality-aware aggregation (ClusMFL)");
  app->add_option("--ctr", c.flags.ctr, "Contrastive alignment term (ClusMFL)");
  app->add_option("--mc", c.flags.mc, "Modality completion term (ClusMFL)");
  app->add_option("--clients", c.clients, "Number of clients");
  app->add_option("--rounds", c.rounds, "Communication rounds");
  app->add_option("--local-epochs", c.local_epochs, "Local epochs per round");
  app->add_option("--lr", c.lr, "Initial Adam learning rate");
  app->add_option("--min-lr", c.min_lr, "Learning rate at the end of the cosine schedule");
  app->add_option("--tau", c.tau, "Contrastive temperature");
  app->add_option("--lambda1", c.lambda1, "Weight of the contrastive term");
  app->add_option("--lambda2", c.lambda2, "Weight of the modality completion term");
  app->add_option("--mu-prox", c.mu_prox, "FedProx proximal coefficient");
  app->add_option("--data", c.data_path, "Dataset CSV; synthetic data when empty");
  app->add_option("--class-counts", c.synthetic.class_counts, "Synthetic class sizes")
      ->delimiter(',');
  app->add_option("--feature-dim", c.synthetic.feature_dim, "Synthetic features per modality");
  app->add_option("--separation", c.synthetic.separation, "Synthetic class separation");
  app->add_option("--noise", c.synthetic.noise, "Synthetic noise scale");
  app->add_option("--coupling", c.synthetic.coupling, "Synthetic PET/MRI noise correlation");
  app->add_option("--cv-k", c.cv_k, "Number of cross-validation folds");
  app->add_option("--folds", c.folds, "Folds actually run");
  app->add_option("--split", o.split, "cv (k-fold) or literal (one 1:4 test:train split)")
      ->check(CLI::IsMember({"cv", "literal"}));
  app->add_option("--hidden-dim", c.hidden_dim, "Encoder hidden width");
  app->add_option("--embed-dim", c.embed_dim, "Embedding width per modality");
  app->add_option("--classifier-hidden", c.classifier_hidden, "Classifier hidden width");
  app->add_option("--batch-size", c.batch_size, "Local minibatch size; 0 = full batch");
  app->add_option("--finch-level", c.finch_level, "FINCH hierarchy level used for the pool");
  app->add_option("--workers", c.workers, "Client training threads");
  app->add_option("--record-time", c.record_time, "Write measured wall_ms (0 when false)");
}

ExperimentConfig resolve(const ExperimentOptions& o, const std::string& method, double alpha,
                         double beta) {
  ExperimentConfig c = o.config;
  c.method = parse_method(method);
  c.alpha = alpha;
  c.beta = beta;
  c.split = o.split == "literal" ? SplitReading::kLiteral : SplitReading::kCrossValidation;
  if (c.split == SplitReading::kLiteral) c.folds = 1;
  c.validate();
  return c;
}

void write_config_echo(const CLI::App* app, const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "config.ini", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "config.ini").string());
  out << app->config_to_str(true, false);
}

std::ofstream open_summary(const fs::path& dir) {
  fs::create_directories(dir);
  std::ofstream out(dir / "summary.csv", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (dir / "summary.csv").string());
  out << kSummaryHeader << '\n';
  return out;
}

std::string cell_name(const std::string& method, double alpha, double beta) {
  return method + "_a" + format_double(alpha) + "_b" + format_double(beta);
}

int cmd_run(const CLI::App* app, const ExperimentOptions& o, bool checkpoints, bool pools) {
  std::vector<ExperimentConfig> cells;
  std::vector<std::string> names;
  for (const auto& m : o.methods) {
    for (double a : o.alphas) {
      for (double b : o.betas) {
        cells.push_back(resolve(o, m, a, b));
        names.push_back(cell_name(m, a, b));
      }
    }
  }
  const fs::path root = o.out;
  write_config_echo(app, root);
  auto summary = open_summary(root);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const fs::path dir = cells.size() == 1 ? root : root / names[i];
    std::cerr << "running " << names[i] << '\n';
    const auto rows = run_to_directory(cells[i], dir, checkpoints, pools);
    write_summary_rows(summary, cells[i], rows);
    summary.flush();
  }
  return 0;
}

int cmd_ablate(const CLI::App* app, const ExperimentOptions& o) {
  const ExperimentConfig base = resolve(o, "clusmfl", o.alphas.front(), o.betas.front());
  const fs::path root = o.out;
  write_config_echo(app, root);
  auto summary = open_summary(root);
  for (const auto& flags : ablation_grid()) {
    ExperimentConfig c = base;
    c.flags = flags;
    const std::string tag = flags_tag(flags);
    std::cerr << "running ablation " << tag << '\n';
    const auto rows = run_to_directory(c, root / ("ablation_" + tag));
    write_summary_rows(summary, c, rows);
    summary.flush();
  }
  return 0;
}

int cmd_pool_dump(const ExperimentOptions& o, std::size_t round, std::size_t fold,
                  const std::string& output) {
  ExperimentConfig c = resolve(o, o.methods.front(), o.alphas.front(), o.betas.front());
  if (!c.federation().builds_pool()) {
    throw ConfigError("pool-dump needs method clusmfl with ctr or mc enabled");
  }
  if (round < 1 || round > c.rounds) throw ConfigError("round must lie in [1, rounds]");
  if (fold >= c.folds) throw ConfigError("fold must be below folds");
  const auto data = load_dataset(c);
  auto setups = prepare_folds(c, data);
  Simulation sim = make_simulation(c, std::move(setups[fold]), fold);
  for (std::size_t r = 0; r < round; ++r) sim.run_round();
  if (output.empty()) {
    write_pool_csv(std::cout, sim.last_pool());
  } else {
    std::ofstream out(output, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + output);
    write_pool_csv(out, sim.last_pool());
  }
  return 0;
}

// Plain numeric CSV, one point per line; a first line that does not parse
// as numbers is taken as a header.
Matrix read_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  Matrix points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    bool ok = true;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      const char* first = cell.data();
      const char* last = first + cell.size();
      while (first < last && *first == ' ') ++first;
      const auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last) {
        ok = false;
        break;
      }
      row.push_back(v);
    }
    if (!ok) {
      if (line_no == 1) continue;
      throw ParseError("non-numeric value", line_no);
    }
    if (!points.empty() && row.size() != points.cols()) {
      throw ParseError("row width differs from the first row", line_no);
    }
    points.append_row(row);
  }
  return points;
}

int cmd_cluster_debug(const std::string& input, std::size_t level, bool all_levels) {
  const Matrix points = read_points(input);
  const FinchResult res = finch_partition(points, level);
  if (all_levels) {
    std::cout << "point";
    for (std::size_t l = 0; l < res.hierarchy.size(); ++l) std::cout << ",level" << l;
    std::cout << '\n';
    for (std::size_t i = 0; i < points.rows(); ++i) {
      std::cout << i;
      for (const auto& part : res.hierarchy) std::cout << ',' << part[i];
      std::cout << '\n';
    }
  } else {
    std::cout << "point,cluster\n";
    for (std::size_t i = 0; i < points.rows(); ++i) {
      std::cout << i << ',' << res.assignments[i] << '\n';
    }
  }
  return 0;
}

int cmd_gen_data(const ExperimentOptions& o, const std::string& output) {
  SyntheticSpec spec = o.config.synthetic;
  spec.seed = o.config.seed;
  try {
    spec.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  save_csv(output, generate_synthetic(spec), spec.feature_dim);
  return 0;
}

}  // namespace

// CLI11 only reads config files attached to the top-level app, so a
// subcommand's --config file is expanded into `--key=value` arguments here.
// Keys already given on the command line are skipped, so flags win.
// Unknown keys then fail parsing like any unknown flag.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::string file;
  std::size_t at = args.size();
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      file = args[i + 1];
      at = i;
    } else if (args[i].rfind("--config=", 0) == 0) {
      file = args[i].substr(9);
      at = i;
    }
  }
  if (at == args.size() || args.empty()) return args;

  std::vector<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i].rfind("--", 0) == 0) given.push_back(args[i].substr(2, args[i].find('=') - 2));
  }
  const std::string& sub = args.front();
  std::vector<std::string> extra;
  for (const auto& item : CLI::ConfigINI().from_file(file)) {
    if (item.name == "++" || item.name == "--" || item.name == "config") continue;
    if (!item.parents.empty() && !(item.parents.size() == 1 && item.parents[0] == sub)) continue;
    if (std::find(given.begin(), given.end(), item.name) != given.end()) continue;
    std::string value;
    for (const auto& in : item.inputs) value += (value.empty() ? "" : ",") + in;
    // The config echo writes unset list options as a quoted "[a, b]".
    if (value.size() >= 2 && value.front() == '[' && value.back() == ']') {
      std::string bare;
      for (char ch : value.substr(1, value.size() - 2)) {
        if (ch != ' ') bare += ch;
      }
      value = bare;
    }
    if (value.empty()) continue;  // "--key=" would swallow the next argument
    extra.push_back("--" + item.name + "=" + value);
  }
  args.insert(args.begin() + 1, extra.begin(), extra.end());
  return args;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"ClusMFL multimodal federated learning simulator"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  ExperimentOptions opts;
  bool checkpoints = false;
  bool dump_pools = false;
  auto* run = app.add_subcommand("run", "Run one configuration or a method x alpha x beta grid");
  add_experiment_options(run, opts, true);
  run->add_option("--out", opts.out, "Output directory");
  run->add_flag("--checkpoint", checkpoints, "Save the global model after every round");
  run->add_flag("--dump-pools", dump_pools, "Save every round's cluster pool");

  auto* ablate = app.add_subcommand("ablate", "Run the seven MAA/CTR/MC combinations");
  add_experiment_options(ablate, opts, false);
  ablate->add_option("--out", opts.out, "Output directory");

  std::string gen_output;
  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset CSV");
  gen->add_option("--seed", opts.config.seed, "Generator seed");
  gen->add_option("--class-counts", opts.config.synthetic.class_counts, "Class sizes")
      ->delimiter(',');
  gen->add_option("--feature-dim", opts.config.synthetic.feature_dim, "Features per modality");
  gen->add_option("--separation", opts.config.synthetic.separation, "Class separation");
  gen->add_option("--noise", opts.config.synthetic.noise, "Noise scale");
  gen->add_option("--coupling", opts.config.synthetic.coupling, "PET/MRI noise correlation");
  gen->add_option("--output", gen_output, "Output CSV")->required();

  std::string cluster_input;
  std::size_t cluster_level = 0;
  bool all_levels = false;
  auto* cluster = app.add_subcommand("cluster-debug", "Run FINCH on a numeric CSV of points");
  cluster->add_option("--input", cluster_input, "Points CSV, one row per point")->required();
  cluster->add_option("--level", cluster_level, "Hierarchy level to print");
  cluster->add_flag("--all-levels", all_levels, "Print every level of the hierarchy");

  std::size_t pool_round = 1;
  std::size_t pool_fold = 0;
  std::string pool_output;
  auto* pool = app.add_subcommand("pool-dump", "Print the cluster pool of one round");
  add_experiment_options(pool, opts, true);
  pool->add_option("--round", pool_round, "Round whose pool is dumped (1-based)");
  pool->add_option("--fold", pool_fold, "Fold (0-based)");
  pool->add_option("--output", pool_output, "Output CSV; stdout when empty");

  try {
    std::vector<std::string> args(argv + std::min(argc, 1), argv + argc);
    args = expand_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(run, opts, checkpoints, dump_pools);
    if (*ablate) return cmd_ablate(ablate, opts);
    if (*gen) return cmd_gen_data(opts, gen_output);
    if (*cluster) return cmd_cluster_debug(cluster_input, cluster_level, all_levels);
    if (*pool) return cmd_pool_dump(opts, pool_round, pool_fold, pool_output);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace clusmfl
