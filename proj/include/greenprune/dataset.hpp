#pragma once

#include "greenprune/tensor.hpp"

#include <optional>
#include <string_view>
#include <vector>

namespace greenprune {

/// Capture-condition subpopulation. Easy is the camera analog, hard the
/// handheld-phone analog.
enum class Stratum { Easy, Hard };

std::string_view to_string(Stratum s);
std::optional<Stratum> stratum_from_string(std::string_view s);

/// One labelled image. `target` holds per-category percentages summing to 100.
struct Sample {
  int id = 0;
  Tensor image;  // [channels, height, width], values in [0, 1]
  std::vector<double> target;
  Stratum stratum = Stratum::Easy;
};

using Dataset = std::vector<Sample>;

}  // namespace greenprune
