#pragma once

#include "greenprune/archspec.hpp"
#include "greenprune/energy.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <vector>

namespace greenprune {

struct PruningConfig {
  double epsilon = 0.5;  // fraction of prunable filters to remove, in (0, 1)
  std::int64_t min_filters = 1;
  std::uint64_t seed = 0;
  EnergyConstants constants{};

  void check() const;
};

struct Removal {
  std::int64_t iteration = 0;
  int layer_id = 0;
  std::int64_t filter_index = 0;  // index into the original layer's filters

  bool operator==(const Removal&) const = default;
};

struct PruningPlan {
  std::vector<Removal> removals;
  std::int64_t quota = 0;
  std::map<int, std::int64_t> per_layer_histogram;
  std::map<int, std::int64_t> original_filters;  // c_out of each prunable layer before pruning

  /// Mask equivalent to the first `count` removals (all when count < 0).
  PruneMask mask(std::int64_t count = -1, std::int64_t min_filters = 1) const;

  bool operator==(const PruningPlan&) const = default;
};

struct PruneResult {
  NetworkArch arch;
  PruningPlan plan;
};

/// ceil(epsilon * prunable filters).
std::int64_t removal_quota(const NetworkArch& arch, double epsilon);

/// Energy-driven stochastic filter pruning at initialization. Each
/// iteration recomputes layer energies on the partially pruned network,
/// samples a layer with probability proportional to its energy among
/// prunable layers still above the floor, and drops one of its remaining
/// filters uniformly at random. Deterministic in (arch, config).
PruneResult prune_at_init(const NetworkArch& arch, const PruningConfig& config);

/// Same, drawing from a caller-supplied generator.
PruneResult prune_at_init(const NetworkArch& arch, const PruningConfig& config, std::mt19937_64& rng);

struct PlanSummaryRow {
  int layer_id = 0;
  std::int64_t removed = 0;
  std::int64_t original = 0;
  double percent_removed = 0.0;
};

std::vector<PlanSummaryRow> summarize(const PruningPlan& plan);

/// Uniform double in [0, 1) from the top 53 bits of one draw.
double uniform01(std::mt19937_64& rng);

/// Index drawn with probability proportional to `weights`.
std::size_t sample_index(std::mt19937_64& rng, const std::vector<double>& weights);

}  // namespace greenprune
