#pragma once

#include "greenprune/dataset.hpp"
#include "greenprune/model.hpp"

#include <limits>
#include <optional>
#include <span>
#include <vector>

namespace greenprune {

/// Routing statistic: sum of the per-category spreads.
double aggregate_sigma(const GaussianPrediction& prediction);

enum class Route { Keep, Reinfer };

/// Re-infer iff sigma_agg > tau. Ties keep the pruned prediction.
Route route(double sigma_agg, double tau);

inline constexpr double kTauPrunedOnly = std::numeric_limits<double>::infinity();
inline constexpr double kTauAlwaysReinfer = 0.0;

/// Everything routing needs about one test sample, computed once.
struct CachedSample {
  int id = 0;
  Stratum stratum = Stratum::Easy;
  std::vector<double> target;
  std::vector<double> pruned_mu;
  double sigma_agg = 0.0;
  std::vector<double> unpruned_mu;
};

struct PredictionCache {
  std::vector<CachedSample> samples;
  double e_pruned = 0.0;    // joules per sample
  double e_unpruned = 0.0;  // joules per sample
};

/// Runs both models over `samples` once.
PredictionCache build_cache(const Model& pruned, const Model& unpruned, std::span<const Sample> samples,
                            double e_pruned, double e_unpruned);

struct RoutedSample {
  int id = 0;
  Stratum stratum = Stratum::Easy;
  Route source = Route::Keep;
  std::vector<double> prediction;
  double sigma_agg = 0.0;
};

struct HybridResult {
  std::vector<RoutedSample> per_sample;
  std::size_t reinferred_count = 0;
  std::size_t reinferred_easy = 0;
  std::size_t reinferred_hard = 0;
  double total_energy = 0.0;
  double rmse_overall = 0.0;
  std::optional<double> rmse_easy;  // unset when the stratum is absent
  std::optional<double> rmse_hard;
};

HybridResult hybrid_from_cache(const PredictionCache& cache, double tau);

/// Pruned model first; samples whose aggregated sigma exceeds tau are
/// re-inferred by the unpruned model, whose mean replaces the prediction.
HybridResult hybrid_predict(const Model& pruned, const Model& unpruned, std::span<const Sample> samples, double tau,
                            double e_pruned, double e_unpruned);

struct SweepRow {
  double tau = 0.0;
  std::size_t reinferred = 0;
  std::size_t reinferred_easy = 0;
  std::size_t reinferred_hard = 0;
  double total_energy = 0.0;
  double energy_saving = 0.0;  // fraction relative to running only the unpruned model
  double rmse = 0.0;
  std::optional<double> rmse_easy;
  std::optional<double> rmse_hard;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double e_pruned = 0.0;
  double e_unpruned = 0.0;
  std::size_t sample_count = 0;
};

/// One row per tau (ascending) from the cached predictions.
SweepResult threshold_sweep(const PredictionCache& cache, std::span<const double> taus);

/// Largest-saving tau whose RMSE stays within `(1 + tolerance)` of the
/// unpruned-only RMSE. A heuristic for marking an operating point.
std::optional<SweepRow> suggest_threshold(const SweepResult& sweep, double unpruned_rmse, double tolerance = 0.10);

/// Root of the mean squared residual over samples and categories.
double rmse(std::span<const std::vector<double>> predictions, std::span<const std::vector<double>> targets);
double sample_rmse(const std::vector<double>& prediction, const std::vector<double>& target);

/// Product-moment correlation.
double pearson(std::span<const double> xs, std::span<const double> ys);

}  // namespace greenprune
