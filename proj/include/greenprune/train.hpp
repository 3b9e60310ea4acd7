#pragma once

#include "greenprune/dataset.hpp"
#include "greenprune/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

namespace greenprune {

enum class LossKind {
  SquaredError,  // RMSE on the mean head only
  Uncertainty,   // variance attenuation loss on both heads
};

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view s);

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 32;
  LossKind loss = LossKind::Uncertainty;
  std::uint64_t seed = 0;
  bool horizontal_flip = true;
  bool vertical_flip = true;
  // Fit the model's output scaling to the per-category target mean and spread.
  bool scale_outputs_to_targets = true;
  // Fit the model's per-channel input standardization to the training images.
  bool standardize_inputs = true;
  // For this many initial epochs the log-sigma output is held at the log of
  // the model's target spread, so the mean head trains under uniform weights.
  int sigma_warmup_epochs = 0;
  // Rescale the full gradient to at most this L2 norm; 0 disables.
  double grad_clip_norm = 5.0;

  void check() const;
};

struct EpochStats {
  int epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
};

/// base * (1 + cos(pi * epoch / epochs)) / 2
double cosine_lr(double base, int epoch, int epochs);

/// Image flipped left-right and/or top-bottom.
Tensor flip_image(const Tensor& image, bool horizontal, bool vertical);

using EpochCallback = std::function<void(const EpochStats&)>;

/// Minibatch SGD with momentum over shuffled data and a per-epoch cosine
/// learning rate. Deterministic in (model, data, config). Throws
/// RuntimeFailure if the loss becomes non-finite.
TrainResult train(Model model, std::span<const Sample> data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace greenprune
