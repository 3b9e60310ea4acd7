#include "greenprune/pruner.hpp"

#include "greenprune/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <set>

namespace greenprune {

void PruningConfig::check() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw ConfigError(fmt::format("epsilon must be in (0, 1), got {}", epsilon));
  if (min_filters < 1) throw ConfigError("min_filters must be >= 1");
  constants.check();
}

PruneMask PruningPlan::mask(std::int64_t count, std::int64_t min_filters) const {
  PruneMask m;
  m.min_filters = min_filters;
  const auto n = count < 0 ? static_cast<std::int64_t>(removals.size()) : count;
  for (std::int64_t i = 0; i < n; ++i) m.removed[removals[i].layer_id].insert(removals[i].filter_index);
  return m;
}

std::int64_t removal_quota(const NetworkArch& arch, double epsilon) {
  const auto total = prunable_filter_count(arch);
  if (total == 0) throw ConfigError("architecture has no prunable layers");
  // Guards against 0.2 * 100 evaluating to 20.000000000000004.
  const double raw = epsilon * static_cast<double>(total);
  const double rounded = std::round(raw);
  if (std::abs(raw - rounded) < 1e-9) return static_cast<std::int64_t>(rounded);
  return static_cast<std::int64_t>(std::ceil(raw));
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::size_t sample_index(std::mt19937_64& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // u landed in the rounding slack at the top; take the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

PruneResult prune_at_init(const NetworkArch& arch, const PruningConfig& config) {
  std::mt19937_64 rng(config.seed);
  return prune_at_init(arch, config, rng);
}

PruneResult prune_at_init(const NetworkArch& input, const PruningConfig& config, std::mt19937_64& rng) {
  config.check();
  const NetworkArch original = input.shapes_inferred() ? input : infer_shapes(input);
  const auto prunable = prunable_layers(original);
  if (prunable.empty()) throw ConfigError("architecture has no prunable layers");

  PruningPlan plan;
  plan.quota = removal_quota(original, config.epsilon);
  std::int64_t capacity = 0;
  std::map<int, std::vector<std::int64_t>> alive;
  for (int id : prunable) {
    const auto c_out = original.layer(id).c_out;
    plan.original_filters[id] = c_out;
    capacity += std::max<std::int64_t>(0, c_out - config.min_filters);
    auto& filters = alive[id];
    for (std::int64_t f = 0; f < c_out; ++f) filters.push_back(f);
  }
  if (plan.quota > capacity)
    throw ConfigError(fmt::format("quota of {} filters is unachievable: only {} can be removed with min_filters={}",
                                  plan.quota, capacity, config.min_filters));

  NetworkArch current = original;
  PruneMask mask;
  mask.min_filters = config.min_filters;
  for (std::int64_t it = 0; it < plan.quota; ++it) {
    std::set<int> eligible;
    for (int id : prunable)
      if (static_cast<std::int64_t>(alive[id].size()) > config.min_filters) eligible.insert(id);
    if (eligible.empty()) throw ConfigError("every prunable layer is at the min_filters floor");

    const auto probs = selection_probs(current, config.constants, eligible);
    std::vector<double> weights;
    weights.reserve(probs.size());
    for (const auto& lp : probs) weights.push_back(lp.p);
    const int layer_id = probs[sample_index(rng, weights)].layer_id;

    auto& filters = alive[layer_id];
    const auto pick = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(filters.size()));
    const auto filter = filters[pick];
    filters.erase(filters.begin() + static_cast<std::ptrdiff_t>(pick));

    plan.removals.push_back({it, layer_id, filter});
    ++plan.per_layer_histogram[layer_id];
    mask.removed[layer_id].insert(filter);
    current = apply_mask(original, mask);
  }
  return {std::move(current), std::move(plan)};
}

std::vector<PlanSummaryRow> summarize(const PruningPlan& plan) {
  std::vector<PlanSummaryRow> rows;
  for (const auto& [id, removed] : plan.per_layer_histogram) {
    PlanSummaryRow row;
    row.layer_id = id;
    row.removed = removed;
    auto it = plan.original_filters.find(id);
    row.original = it == plan.original_filters.end() ? 0 : it->second;
    row.percent_removed = row.original > 0 ? 100.0 * static_cast<double>(removed) / static_cast<double>(row.original) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace greenprune
