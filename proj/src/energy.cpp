#include "greenprune/energy.hpp"

#include "greenprune/error.hpp"

#include <fmt/format.h>

#include <algorithm>

namespace greenprune {

namespace {

std::int64_t inferred_s_out(const LayerSpec& layer) {
  if (!layer.s_out) throw ConfigError(fmt::format("layer {}: shapes not inferred", layer.id));
  return *layer.s_out;
}

}  // namespace

void EnergyConstants::check() const {
  if (!(a_per_flop > 0.0) || !(b_per_mb > 0.0) || bytes_per_value < 1)
    throw ConfigError("energy constants must be strictly positive");
}

const LayerEnergy& EnergyReport::at(int layer_id) const {
  auto it = std::find_if(per_layer.begin(), per_layer.end(), [&](const LayerEnergy& e) { return e.layer_id == layer_id; });
  if (it == per_layer.end()) throw ConfigError(fmt::format("no energy entry for layer {}", layer_id));
  return *it;
}

std::uint64_t layer_flops(const LayerSpec& layer) {
  switch (layer.kind) {
    case LayerKind::Conv: {
      const auto s_out = inferred_s_out(layer);
      return static_cast<std::uint64_t>(layer.c_in) * layer.kernel * layer.kernel * layer.c_out * s_out;
    }
    case LayerKind::Linear:
      (void)inferred_s_out(layer);
      return static_cast<std::uint64_t>(layer.c_in) * layer.c_out;
    default:
      return 0;
  }
}

double flops_energy(std::uint64_t flops, const EnergyConstants& constants) {
  return static_cast<double>(flops) * constants.a_per_flop;
}

std::uint64_t memory_footprint_bytes(std::uint64_t params, std::uint64_t s_out, std::uint64_t c_out,
                                     const EnergyConstants& constants) {
  return (params * 3 + s_out * c_out * 2) * static_cast<std::uint64_t>(constants.bytes_per_value);
}

std::uint64_t layer_mem_bytes(const LayerSpec& layer, const EnergyConstants& constants) {
  if (!layer.is_parametric()) return 0;
  return memory_footprint_bytes(static_cast<std::uint64_t>(param_count(layer)),
                                static_cast<std::uint64_t>(inferred_s_out(layer)),
                                static_cast<std::uint64_t>(layer.c_out), constants);
}

double access_energy(std::uint64_t mem_bytes, const EnergyConstants& constants) {
  return static_cast<double>(mem_bytes) / kBytesPerMB * constants.b_per_mb;
}

LayerEnergy layer_energy(const LayerSpec& layer, const EnergyConstants& constants) {
  LayerEnergy e;
  e.layer_id = layer.id;
  e.kind = layer.kind;
  e.flops = layer_flops(layer);
  e.e_flops = flops_energy(e.flops, constants);
  e.mem_bytes = layer_mem_bytes(layer, constants);
  e.e_access = access_energy(e.mem_bytes, constants);
  e.e_total = e.e_flops + e.e_access;
  return e;
}

EnergyReport network_energy(const NetworkArch& arch, const EnergyConstants& constants) {
  constants.check();
  EnergyReport report;
  report.per_layer.reserve(arch.layers.size());
  for (const auto& layer : arch.layers) {
    report.per_layer.push_back(layer_energy(layer, constants));
    report.network_total += report.per_layer.back().e_total;
  }
  return report;
}

std::vector<LayerProbability> selection_probs(const EnergyReport& report, const std::set<int>& eligible) {
  if (eligible.empty()) throw ConfigError("selection_probs: empty eligible set");
  std::vector<LayerProbability> out;
  double total = 0.0;
  for (int id : eligible) {
    const double e = report.at(id).e_total;
    out.push_back({id, e});
    total += e;
  }
  if (!(total > 0.0)) throw ConfigError("selection_probs: eligible layers have zero energy");
  for (auto& lp : out) lp.p /= total;
  return out;
}

std::vector<LayerProbability> selection_probs(const NetworkArch& arch, const EnergyConstants& constants,
                                              const std::set<int>& eligible) {
  return selection_probs(network_energy(arch, constants), eligible);
}

}  // namespace greenprune
