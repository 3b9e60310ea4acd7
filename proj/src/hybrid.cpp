#include "greenprune/hybrid.hpp"

#include "greenprune/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace greenprune {

double aggregate_sigma(const GaussianPrediction& prediction) {
  double total = 0.0;
  for (double s : prediction.sigma) total += s;
  return total;
}

Route route(double sigma_agg, double tau) { return sigma_agg > tau ? Route::Reinfer : Route::Keep; }

PredictionCache build_cache(const Model& pruned, const Model& unpruned, std::span<const Sample> samples,
                            double e_pruned, double e_unpruned) {
  if (pruned.category_count != unpruned.category_count)
    throw ConfigError(fmt::format("pruned model predicts {} categories, unpruned {}", pruned.category_count,
                                  unpruned.category_count));
  std::vector<Tensor> images;
  images.reserve(samples.size());
  for (const auto& s : samples) images.push_back(s.image);
  const auto p = predict_gaussian(pruned, images);
  const auto u = predict_gaussian(unpruned, images);

  PredictionCache cache;
  cache.e_pruned = e_pruned;
  cache.e_unpruned = e_unpruned;
  cache.samples.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    cache.samples.push_back(
        {samples[i].id, samples[i].stratum, samples[i].target, p[i].mu, aggregate_sigma(p[i]), u[i].mu});
  }
  return cache;
}

namespace {

struct Accumulator {
  double sq = 0.0;
  std::size_t n = 0;

  void add(const std::vector<double>& pred, const std::vector<double>& target) {
    for (std::size_t c = 0; c < target.size(); ++c) {
      const double r = pred[c] - target[c];
      sq += r * r;
    }
    n += target.size();
  }
  std::optional<double> value() const {
    if (n == 0) return std::nullopt;
    return std::sqrt(sq / static_cast<double>(n));
  }
};

}  // namespace

HybridResult hybrid_from_cache(const PredictionCache& cache, double tau) {
  if (std::isnan(tau) || tau < 0.0) throw ConfigError(fmt::format("tau must be >= 0, got {}", tau));
  HybridResult result;
  Accumulator all, easy, hard;
  result.per_sample.reserve(cache.samples.size());
  for (const auto& s : cache.samples) {
    RoutedSample r;
    r.id = s.id;
    r.stratum = s.stratum;
    r.sigma_agg = s.sigma_agg;
    r.source = route(s.sigma_agg, tau);
    r.prediction = r.source == Route::Reinfer ? s.unpruned_mu : s.pruned_mu;
    if (r.source == Route::Reinfer) {
      ++result.reinferred_count;
      ++(s.stratum == Stratum::Hard ? result.reinferred_hard : result.reinferred_easy);
    }
    all.add(r.prediction, s.target);
    (s.stratum == Stratum::Hard ? hard : easy).add(r.prediction, s.target);
    result.per_sample.push_back(std::move(r));
  }
  result.total_energy = static_cast<double>(cache.samples.size()) * cache.e_pruned +
                        static_cast<double>(result.reinferred_count) * cache.e_unpruned;
  result.rmse_overall = all.value().value_or(0.0);
  result.rmse_easy = easy.value();
  result.rmse_hard = hard.value();
  return result;
}

HybridResult hybrid_predict(const Model& pruned, const Model& unpruned, std::span<const Sample> samples, double tau,
                            double e_pruned, double e_unpruned) {
  return hybrid_from_cache(build_cache(pruned, unpruned, samples, e_pruned, e_unpruned), tau);
}

SweepResult threshold_sweep(const PredictionCache& cache, std::span<const double> taus) {
  if (taus.empty()) throw ConfigError("threshold sweep needs at least one tau");
  if (!std::is_sorted(taus.begin(), taus.end())) throw ConfigError("taus must be sorted ascending");
  SweepResult sweep;
  sweep.e_pruned = cache.e_pruned;
  sweep.e_unpruned = cache.e_unpruned;
  sweep.sample_count = cache.samples.size();
  const double baseline = static_cast<double>(cache.samples.size()) * cache.e_unpruned;
  for (double tau : taus) {
    const auto h = hybrid_from_cache(cache, tau);
    SweepRow row;
    row.tau = tau;
    row.reinferred = h.reinferred_count;
    row.reinferred_easy = h.reinferred_easy;
    row.reinferred_hard = h.reinferred_hard;
    row.total_energy = h.total_energy;
    row.energy_saving = baseline > 0.0 ? 1.0 - h.total_energy / baseline : 0.0;
    row.rmse = h.rmse_overall;
    row.rmse_easy = h.rmse_easy;
    row.rmse_hard = h.rmse_hard;
    sweep.rows.push_back(row);
  }
  return sweep;
}

std::optional<SweepRow> suggest_threshold(const SweepResult& sweep, double unpruned_rmse, double tolerance) {
  std::optional<SweepRow> best;
  for (const auto& row : sweep.rows) {
    if (row.rmse > unpruned_rmse * (1.0 + tolerance)) continue;
    if (!best || row.energy_saving > best->energy_saving) best = row;
  }
  return best;
}

double sample_rmse(const std::vector<double>& prediction, const std::vector<double>& target) {
  if (prediction.size() != target.size() || target.empty())
    throw ConfigError("sample_rmse: prediction and target lengths differ");
  double sq = 0.0;
  for (std::size_t c = 0; c < target.size(); ++c) {
    const double r = prediction[c] - target[c];
    sq += r * r;
  }
  return std::sqrt(sq / static_cast<double>(target.size()));
}

double rmse(std::span<const std::vector<double>> predictions, std::span<const std::vector<double>> targets) {
  if (predictions.size() != targets.size())
    throw ConfigError(fmt::format("rmse: {} predictions for {} targets", predictions.size(), targets.size()));
  Accumulator acc;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (predictions[i].size() != targets[i].size()) throw ConfigError(fmt::format("rmse: sample {} length mismatch", i));
    acc.add(predictions[i], targets[i]);
  }
  return acc.value().value_or(0.0);
}

double pearson(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw ConfigError("pearson: lengths differ");
  if (xs.size() < 2) throw ConfigError("pearson: need at least two points");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw ConfigError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace greenprune
