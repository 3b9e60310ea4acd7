#pragma once

#include "greenprune/energy.hpp"
#include "greenprune/hybrid.hpp"
#include "greenprune/synthdata.hpp"
#include "greenprune/train.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace greenprune {

/// Squared-error loss, lr 0.01.
TrainConfig default_baseline_train();
/// Uncertainty loss, lr 0.0003, 30 sigma warm-up epochs.
TrainConfig default_pruned_train();

/// Everything needed to reproduce an experiment. Loaded from JSON; every
/// key is optional and falls back to the defaults below.
struct ExperimentConfig {
  std::string arch = "vgg-tiny";  // reference name or architecture file
  std::vector<double> epsilons = {20, 40, 60, 80, 90};  // percent of prunable filters
  int runs = 5;
  std::uint64_t seed = 0;  // master seed; every other seed derives from it
  std::filesystem::path output_dir = "results";

  SyntheticConfig data;
  // When set, samples come from this directory (labels.csv plus images)
  // instead of the generator.
  std::optional<std::filesystem::path> dataset_dir;
  double train_frac = 0.8;

  TrainConfig baseline_train = default_baseline_train();
  TrainConfig pruned_train = default_pruned_train();
  std::int64_t min_filters = 1;
  EnergyConstants energy;

  // Threshold sweep: which pruned setting to route against the baseline.
  double sweep_epsilon = 80;
  int sweep_run = 0;
  // Explicit tau list; when empty, taus are quantiles of the pruned model's
  // aggregated sigma on the test set. 0 and +inf are always added.
  std::vector<double> taus;
  int tau_quantiles = 20;
  double suggest_tolerance = 0.10;
  bool write_svg = false;

  void check() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig experiment_config_from_json(const std::string& json_text);
std::string experiment_config_to_json(const ExperimentConfig& config);

/// Seeds for every random choice of an experiment, derived from the
/// master seed. Epsilon 0 denotes the unpruned baseline.
struct SeedManifest {
  std::uint64_t master = 0;

  std::uint64_t data() const;
  std::uint64_t split() const;
  std::uint64_t init(double epsilon, int run) const;
  std::uint64_t pruning(double epsilon, int run) const;
  std::uint64_t shuffle(double epsilon, int run) const;
};

/// Result of one training run at one compression setting (epsilon 0 is the
/// unpruned baseline).
struct RunRecord {
  double epsilon = 0.0;
  int run = 0;
  std::uint64_t pruning_seed = 0;
  std::uint64_t init_seed = 0;
  std::int64_t filters_removed = 0;
  std::int64_t params = 0;
  double energy_j = 0.0;
  double rmse = 0.0;
  double rmse_easy = 0.0;
  double rmse_hard = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation; 0 for a single value
};

MeanStd mean_std(const std::vector<double>& values);

struct ReportRow {
  double epsilon = 0.0;
  int runs = 0;
  MeanStd energy_j;
  MeanStd rmse;
  MeanStd rmse_easy;
  MeanStd rmse_hard;
};

struct EpsilonSweepResult {
  std::vector<RunRecord> records;  // sorted by (epsilon, run)
  std::vector<ReportRow> rows;     // epsilon 0 first
};

using ProgressFn = std::function<void(const std::string&)>;

/// Trains the baseline (squared-error loss) and, for every epsilon and run,
/// prunes at init and trains with the uncertainty loss. Each finished run is
/// written to `runs/` with its checkpoint under `models/`; runs whose files
/// already exist are loaded instead of retrained.
EpsilonSweepResult run_epsilon_sweep(const ExperimentConfig& config, const ProgressFn& progress = {});

/// Collapses per-run records into mean and spread per epsilon.
std::vector<ReportRow> aggregate_runs(const std::vector<RunRecord>& records);

/// One model serving every sample on its own.
struct ReferenceLine {
  double energy_j = 0.0;
  double rmse = 0.0;
  std::optional<double> rmse_easy;
  std::optional<double> rmse_hard;
};

struct ThresholdSweepOutput {
  SweepResult sweep;
  ReferenceLine pruned_only;
  ReferenceLine unpruned_only;
  double pearson_sigma_error = 0.0;  // pruned model, held-out samples
  std::optional<SweepRow> suggested;
};

/// Routes the test set between the configured pruned checkpoint and the
/// baseline checkpoint over a tau grid. Writes `threshold_sweep.csv`,
/// `threshold_summary.csv`, and optionally `threshold_sweep.svg`. Throws
/// RuntimeFailure if either checkpoint is missing.
ThresholdSweepOutput run_threshold_sweep(const ExperimentConfig& config);

/// Human-readable summary of everything under `dir`, rebuilt from the raw
/// per-run files. Returns a "no results" message for an empty directory.
std::string report(const std::filesystem::path& dir);

/// Paths of the artifacts a sweep writes.
std::filesystem::path run_csv_path(const std::filesystem::path& dir, double epsilon, int run);
std::filesystem::path checkpoint_path(const std::filesystem::path& dir, double epsilon, int run);

/// The train/test split the experiment uses.
Split experiment_split(const ExperimentConfig& config);

}  // namespace greenprune
