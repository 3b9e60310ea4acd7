#pragma once

#include "greenprune/archspec.hpp"

#include <cstdint>
#include <set>
#include <vector>

namespace greenprune {

/// Analytical energy coefficients.
struct EnergyConstants {
  double a_per_flop = 2.3e-12;  // joules per FLOP
  double b_per_mb = 640e-12;    // joules per MiB of DRAM traffic
  std::int64_t bytes_per_value = 4;

  void check() const;
};

/// Bytes in one "MB" of the access-energy term.
inline constexpr double kBytesPerMB = 1024.0 * 1024.0;

struct LayerEnergy {
  int layer_id = 0;
  LayerKind kind = LayerKind::Relu;
  std::uint64_t flops = 0;
  double e_flops = 0.0;
  std::uint64_t mem_bytes = 0;
  double e_access = 0.0;
  double e_total = 0.0;
};

struct EnergyReport {
  std::vector<LayerEnergy> per_layer;
  double network_total = 0.0;

  const LayerEnergy& at(int layer_id) const;
};

/// C_in * k^2 * C_out * S_out for conv, C_in * C_out for linear, 0 otherwise.
std::uint64_t layer_flops(const LayerSpec& layer);
double flops_energy(std::uint64_t flops, const EnergyConstants& constants = {});

/// [(params * 3) + (s_out * c_out * 2)] * bytes_per_value.
std::uint64_t memory_footprint_bytes(std::uint64_t params, std::uint64_t s_out, std::uint64_t c_out,
                                     const EnergyConstants& constants = {});
/// memory_footprint_bytes of a conv/linear layer, 0 for other kinds.
std::uint64_t layer_mem_bytes(const LayerSpec& layer, const EnergyConstants& constants = {});
double access_energy(std::uint64_t mem_bytes, const EnergyConstants& constants = {});

LayerEnergy layer_energy(const LayerSpec& layer, const EnergyConstants& constants = {});
EnergyReport network_energy(const NetworkArch& arch, const EnergyConstants& constants = {});

struct LayerProbability {
  int layer_id = 0;
  double p = 0.0;
};

/// Energy-proportional distribution over `eligible` layers, in id order.
std::vector<LayerProbability> selection_probs(const NetworkArch& arch, const EnergyConstants& constants,
                                              const std::set<int>& eligible);

/// Same distribution computed from an existing report.
std::vector<LayerProbability> selection_probs(const EnergyReport& report, const std::set<int>& eligible);

}  // namespace greenprune
