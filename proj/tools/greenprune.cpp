#include "greenprune/archspec.hpp"
#include "greenprune/checkpoint.hpp"
#include "greenprune/energy.hpp"
#include "greenprune/error.hpp"
#include "greenprune/harness.hpp"
#include "greenprune/pruner.hpp"
#include "greenprune/synthdata.hpp"
#include "greenprune/train.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>

using namespace greenprune;
namespace fs = std::filesystem;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure(fmt::format("cannot write '{}'", path.string()));
  out << text;
}

void log_line(const std::string& line) { std::cerr << line << std::endl; }

struct Global {
  std::string config_path;
  std::uint64_t seed = 0;
  CLI::Option* seed_opt = nullptr;

  ExperimentConfig config() const {
    ExperimentConfig c = config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path);
    if (seed_opt->count() > 0) c.seed = seed;
    return c;
  }
};

// ---------------------------------------------------------------- analyze-energy

struct EnergyArgs {
  std::string arch;
  std::string csv;
};

void cmd_analyze_energy(const Global& g, const EnergyArgs& a) {
  const auto cfg = g.config();
  const auto arch = resolve_arch(a.arch.empty() ? cfg.arch : a.arch);
  const auto report = network_energy(arch, cfg.energy);
  std::set<int> prunable;
  for (int id : prunable_layers(arch)) prunable.insert(id);
  std::map<int, double> prob;
  if (!prunable.empty())
    for (const auto& p : selection_probs(report, prunable)) prob[p.layer_id] = p.p;

  std::string csv = "layer,kind,flops,e_flops_j,mem_bytes,e_access_j,e_total_j,share,prunable,selection_prob\n";
  fmt::print("{:>5} {:<12} {:>12} {:>12} {:>12} {:>12} {:>7} {:>8}\n", "layer", "kind", "flops", "mem bytes",
             "E_total (J)", "E_access (J)", "share", "P_select");
  for (const auto& l : report.per_layer) {
    const double share = report.network_total > 0.0 ? l.e_total / report.network_total : 0.0;
    const bool is_prunable = prunable.count(l.layer_id) > 0;
    const std::string p = is_prunable ? fmt::format("{:.4f}", prob[l.layer_id]) : "-";
    fmt::print("{:>5} {:<12} {:>12} {:>12} {:>12.4e} {:>12.4e} {:>7.4f} {:>8}\n", l.layer_id, to_string(l.kind),
               l.flops, l.mem_bytes, l.e_total, l.e_access, share, p);
    csv += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", l.layer_id, to_string(l.kind), l.flops, l.e_flops,
                       l.mem_bytes, l.e_access, l.e_total, share, is_prunable ? "true" : "false",
                       is_prunable ? fmt::format("{}", prob[l.layer_id]) : "");
  }
  fmt::print("network total: {:.6e} J, prunable filters: {}\n", report.network_total, prunable_filter_count(arch));
  if (!a.csv.empty()) write_file(a.csv, csv);
}

// ---------------------------------------------------------------- prune

struct PruneArgs {
  std::string arch;
  double epsilon = 0.5;
  std::int64_t min_filters = 1;
  std::string out;
  std::string plan;
};

void cmd_prune(const Global& g, const PruneArgs& a) {
  const auto cfg = g.config();
  const auto arch = resolve_arch(a.arch.empty() ? cfg.arch : a.arch);
  PruningConfig pc;
  pc.epsilon = a.epsilon;
  pc.min_filters = a.min_filters;
  pc.seed = cfg.seed;
  pc.constants = cfg.energy;
  const auto result = prune_at_init(arch, pc);
  const double before = network_energy(arch, cfg.energy).network_total;
  const double after = network_energy(result.arch, cfg.energy).network_total;

  fmt::print("removed {} of {} prunable filters (quota {})\n", result.plan.removals.size(),
             prunable_filter_count(arch), result.plan.quota);
  fmt::print("{:>5} {:>9} {:>8} {:>8} {:>9}\n", "layer", "original", "removed", "kept", "removed%");
  for (const auto& row : summarize(result.plan))
    fmt::print("{:>5} {:>9} {:>8} {:>8} {:>8.1f}%\n", row.layer_id, row.original, row.removed, row.original - row.removed,
               row.percent_removed);
  fmt::print("energy: {:.6e} J -> {:.6e} J ({:.1f}% of unpruned)\n", before, after, 100.0 * after / before);

  if (!a.out.empty()) write_file(a.out, serialize_arch(result.arch));
  if (!a.plan.empty()) {
    std::string csv = "iteration,layer,filter\n";
    for (const auto& r : result.plan.removals) csv += fmt::format("{},{},{}\n", r.iteration, r.layer_id, r.filter_index);
    write_file(a.plan, csv);
  }
}

// ---------------------------------------------------------------- gen-data

struct GenArgs {
  std::string out;
  int n = -1;
  double hard_fraction = -1.0;
  int image_size = -1;
};

void cmd_gen_data(const Global& g, const GenArgs& a) {
  const auto cfg = g.config();
  SyntheticConfig dc = cfg.data;
  dc.seed = cfg.seed;
  if (a.n >= 0) dc.n_samples = a.n;
  if (a.hard_fraction >= 0.0) dc.hard_fraction = a.hard_fraction;
  if (a.image_size >= 0) dc.image_size = a.image_size;
  const auto data = generate(dc);
  save_dataset(data, a.out);
  fmt::print("wrote {} samples ({} hard) to {}\n", data.size(), filter_stratum(data, Stratum::Hard).size(), a.out);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string arch;
  std::string data;
  std::string out;
  std::string loss;
  int epochs = -1;
  double lr = -1.0;
  int batch_size = -1;
  int warmup = -1;
  bool easy_only = false;
};

void cmd_train(const Global& g, const TrainArgs& a) {
  const auto cfg = g.config();
  const auto arch = resolve_arch(a.arch.empty() ? cfg.arch : a.arch);
  const LossKind loss = a.loss.empty() ? LossKind::Uncertainty : loss_kind_from_string(a.loss);
  TrainConfig tc = loss == LossKind::SquaredError ? cfg.baseline_train : cfg.pruned_train;
  tc.loss = loss;
  tc.seed = cfg.seed;
  if (a.epochs >= 0) tc.epochs = a.epochs;
  if (a.lr >= 0.0) tc.learning_rate = a.lr;
  if (a.batch_size >= 0) tc.batch_size = a.batch_size;
  if (a.warmup >= 0) tc.sigma_warmup_epochs = a.warmup;
  tc.check();

  auto data = load_dataset(a.data, arch.input.height);
  if (a.easy_only) data = filter_stratum(data, Stratum::Easy);
  const auto result = train(build_from_arch(arch, kCategoryCount, cfg.seed), data, tc, [](const EpochStats& s) {
    log_line(fmt::format("epoch {:>4}  lr {:.6f}  loss {:.5f}", s.epoch, s.learning_rate, s.loss));
  });
  save_checkpoint(result.model, a.out);
  fmt::print("saved {} ({} parameters)\n", a.out, result.model.parameter_count());
}

// ---------------------------------------------------------------- sweep / report

struct SweepArgs {
  std::string out;
  bool epsilon_only = false;
  bool threshold_only = false;
  bool svg = false;
};

void cmd_sweep(const Global& g, const SweepArgs& a) {
  auto cfg = g.config();
  if (!a.out.empty()) cfg.output_dir = a.out;
  if (a.svg) cfg.write_svg = true;
  cfg.check();
  if (!a.threshold_only) run_epsilon_sweep(cfg, log_line);
  if (!a.epsilon_only) run_threshold_sweep(cfg);
  std::cout << report(cfg.output_dir);
}

void cmd_report(const Global& g, const std::string& dir) {
  std::cout << report(dir.empty() ? g.config().output_dir : fs::path(dir));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-aware pruning at initialization with uncertainty-routed hybrid inference"};
  app.require_subcommand(1);
  app.fallthrough();
  Global g;
  app.add_option("--config", g.config_path, "JSON experiment config supplying defaults")->check(CLI::ExistingFile);
  g.seed_opt = app.add_option("--seed", g.seed, "Seed for every random choice (overrides the config)");

  EnergyArgs energy_args;
  auto* energy = app.add_subcommand("analyze-energy", "Per-layer analytical energy and pruning probabilities");
  energy->add_option("--arch", energy_args.arch, "Reference name (vgg-tiny, res-tiny) or architecture file");
  energy->add_option("--csv", energy_args.csv, "Also write the table as CSV");

  PruneArgs prune_args;
  auto* prune = app.add_subcommand("prune", "Prune an architecture at initialization");
  prune->add_option("--arch", prune_args.arch, "Reference name or architecture file");
  prune->add_option("--epsilon", prune_args.epsilon, "Fraction of prunable filters to remove, in (0, 1)")->required();
  prune->add_option("--min-filters", prune_args.min_filters, "Filters every prunable layer keeps");
  prune->add_option("--out", prune_args.out, "Write the pruned architecture here");
  prune->add_option("--plan", prune_args.plan, "Write the removal sequence as CSV");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen->add_option("--out", gen_args.out, "Output directory")->required();
  gen->add_option("--n", gen_args.n, "Number of samples");
  gen->add_option("--hard-fraction", gen_args.hard_fraction, "Share of hard samples");
  gen->add_option("--image-size", gen_args.image_size, "Image side length");

  TrainArgs train_args;
  auto* trn = app.add_subcommand("train", "Train a model on a dataset directory");
  trn->add_option("--arch", train_args.arch, "Reference name or architecture file");
  trn->add_option("--data", train_args.data, "Dataset directory (labels.csv plus images)")->required();
  trn->add_option("--out", train_args.out, "Checkpoint path")->required();
  trn->add_option("--loss", train_args.loss, "rmse or uncert (default uncert)");
  trn->add_option("--epochs", train_args.epochs, "Epochs");
  trn->add_option("--lr", train_args.lr, "Base learning rate");
  trn->add_option("--batch-size", train_args.batch_size, "Minibatch size");
  trn->add_option("--sigma-warmup", train_args.warmup, "Epochs with the log-sigma output held fixed");
  trn->add_flag("--easy-only", train_args.easy_only, "Train on easy samples only");

  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Run the compression sweep and the threshold sweep");
  sweep->add_option("--out", sweep_args.out, "Output directory (overrides the config)");
  sweep->add_flag("--epsilon-only", sweep_args.epsilon_only, "Only the compression sweep");
  sweep->add_flag("--threshold-only", sweep_args.threshold_only, "Only the threshold sweep");
  sweep->add_flag("--svg", sweep_args.svg, "Also plot the threshold sweep");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "Summarize a results directory");
  rep->add_option("--dir", report_dir, "Results directory (defaults to the config's output_dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*energy) cmd_analyze_energy(g, energy_args);
    else if (*prune) cmd_prune(g, prune_args);
    else if (*gen) cmd_gen_data(g, gen_args);
    else if (*trn) cmd_train(g, train_args);
    else if (*sweep) {
      if (sweep_args.epsilon_only && sweep_args.threshold_only)
        throw ConfigError("--epsilon-only and --threshold-only are mutually exclusive");
      cmd_sweep(g, sweep_args);
    } else if (*rep) cmd_report(g, report_dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
