#pragma once

#include "greenprune/archspec.hpp"
#include "greenprune/autodiff.hpp"
#include "greenprune/dataset.hpp"
#include "greenprune/tensor.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace greenprune {

/// Outputs of the log-sigma head are clamped to this range.
inline constexpr double kLogSigmaMin = -6.0;
inline constexpr double kLogSigmaMax = 6.0;

struct Parameter {
  std::string name;
  Tensor value;

  bool operator==(const Parameter&) const = default;
};

/// CNN regressor with two linear heads on a shared feature extractor: one
/// predicting the per-category mean, one the per-category log spread.
///
/// When the architecture ends in a linear layer whose width equals the
/// category count, that layer is the template for both heads. Otherwise
/// the architecture's last layer must produce a 1x1 (or flattened) output
/// and the heads are appended after it.
struct Model {
  NetworkArch arch;
  int category_count = 0;
  int extractor_layers = 0;  // arch.layers[0, extractor_layers) form the extractor
  int feature_dim = 0;
  std::vector<Parameter> params;  // extractor params in layer order, then heads
  // Per-channel input standardization applied before the first layer.
  std::vector<double> input_mean;
  std::vector<double> input_std;
  // Per-category output scaling: mu = head * target_std + target_mean and
  // logsigma = head + log(target_std), before the clamp.
  std::vector<double> target_mean;
  std::vector<double> target_std;

  const Parameter& param(const std::string& name) const;
  Parameter& param(const std::string& name);
  std::size_t parameter_count() const;

  bool operator==(const Model&) const = default;
};

/// Instantiates a model with fan-in-scaled normal weights (He for the
/// extractor, LeCun for the heads) and zero biases. Input standardization
/// and output scaling start as the identity.
Model build_from_arch(const NetworkArch& arch, int category_count, std::uint64_t seed);

/// Recorded forward pass. `leaves[i]` is the graph leaf for `model.params[i]`.
struct ForwardPass {
  ad::Var mu;        // [B, C]
  ad::Var logsigma;  // [B, C], clamped
  std::vector<ad::Var> leaves;
};

/// `batch` is [B, channels, height, width] matching the arch input.
ForwardPass forward(const Model& model, const Tensor& batch, bool track_gradients = false);

struct GaussianPrediction {
  std::vector<double> mu;
  std::vector<double> sigma;
};

/// Predictions for every image, processed in chunks; no augmentation.
std::vector<GaussianPrediction> predict_gaussian(const Model& model, std::span<const Tensor> images,
                                                 std::size_t chunk = 64);
GaussianPrediction predict_gaussian(const Model& model, const Tensor& image);

/// Stacks [C,H,W] images into one [B,C,H,W] batch.
Tensor stack_images(std::span<const Tensor> images);

}  // namespace greenprune
