#pragma once

#include "greenprune/model.hpp"

#include <filesystem>
#include <string>

namespace greenprune {

/// Binary checkpoint layout:
///
///     GPCKPT1\n
///     <header byte length, decimal>\n
///     <JSON header>
///     <float64 little-endian parameter values>
///
/// The header holds `category_count`, the architecture text under `arch`,
/// the normalization fields `input_mean`, `input_std`, `target_mean` and
/// `target_std`, and a `manifest` of {name, shape, offset, count} entries whose offsets
/// index (in values, not bytes) into the trailing array.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(const std::string& bytes);

}  // namespace greenprune
