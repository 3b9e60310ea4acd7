#include "greenprune/train.hpp"

#include "greenprune/error.hpp"
#include "greenprune/pruner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace greenprune {

std::string_view to_string(LossKind kind) {
  return kind == LossKind::SquaredError ? "rmse" : "uncert";
}

LossKind loss_kind_from_string(std::string_view s) {
  if (s == "rmse") return LossKind::SquaredError;
  if (s == "uncert") return LossKind::Uncertainty;
  throw ConfigError(fmt::format("unknown loss '{}' (expected rmse or uncert)", s));
}

void TrainConfig::check() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (sigma_warmup_epochs < 0) throw ConfigError("sigma_warmup_epochs must be >= 0");
  if (!(grad_clip_norm >= 0.0)) throw ConfigError("grad_clip_norm must be >= 0");
}

double cosine_lr(double base, int epoch, int epochs) {
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

Tensor flip_image(const Tensor& image, bool horizontal, bool vertical) {
  if (!horizontal && !vertical) return image;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t sy = vertical ? h - 1 - y : y;
        const std::size_t sx = horizontal ? w - 1 - x : x;
        out[(ch * h + y) * w + x] = image[(ch * h + sy) * w + sx];
      }
  return out;
}

TrainResult train(Model model, std::span<const Sample> data, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.check();
  if (data.empty()) throw ConfigError("training set is empty");
  const auto categories = static_cast<std::size_t>(model.category_count);
  for (const auto& s : data)
    if (s.target.size() != categories)
      throw ConfigError(fmt::format("sample {} has {} targets, model predicts {}", s.id, s.target.size(), categories));

  if (config.standardize_inputs) {
    const std::size_t channels = model.input_mean.size();
    std::vector<double> sum(channels, 0.0), sq(channels, 0.0);
    const std::size_t plane = data.front().image.size() / channels;
    for (const auto& s : data)
      for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t i = 0; i < plane; ++i) sum[ch] += s.image[ch * plane + i];
    const auto count = static_cast<double>(data.size() * plane);
    for (std::size_t ch = 0; ch < channels; ++ch) sum[ch] /= count;
    for (const auto& s : data)
      for (std::size_t ch = 0; ch < channels; ++ch)
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = s.image[ch * plane + i] - sum[ch];
          sq[ch] += d * d;
        }
    for (std::size_t ch = 0; ch < channels; ++ch) {
      model.input_mean[ch] = sum[ch];
      model.input_std[ch] = std::max(std::sqrt(sq[ch] / count), 1e-6);
    }
  }

  if (config.scale_outputs_to_targets) {
    const auto n = static_cast<double>(data.size());
    for (std::size_t c = 0; c < categories; ++c) {
      double sum = 0.0, sq = 0.0;
      for (const auto& s : data) sum += s.target[c];
      const double mean = sum / n;
      for (const auto& s : data) sq += (s.target[c] - mean) * (s.target[c] - mean);
      model.target_mean[c] = mean;
      model.target_std[c] = std::clamp(std::sqrt(sq / n), std::exp(kLogSigmaMin), std::exp(kLogSigmaMax));
    }
  }

  std::mt19937_64 rng(config.seed);
  std::vector<Tensor> velocity;
  for (const auto& p : model.params) velocity.emplace_back(p.value.shape(), 0.0);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = cosine_lr(config.learning_rate, epoch, config.epochs);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const auto n = std::min(static_cast<std::size_t>(config.batch_size), order.size() - start);
      std::vector<Tensor> images;
      images.reserve(n);
      Tensor target({n, categories});
      for (std::size_t b = 0; b < n; ++b) {
        const auto& s = data[order[start + b]];
        const bool hflip = config.horizontal_flip && uniform01(rng) < 0.5;
        const bool vflip = config.vertical_flip && uniform01(rng) < 0.5;
        images.push_back(flip_image(s.image, hflip, vflip));
        for (std::size_t c = 0; c < categories; ++c) target.at(b, c) = s.target[c];
      }

      auto pass = forward(model, stack_images(images), true);
      if (epoch < config.sigma_warmup_epochs) {
        Tensor held({n, categories});
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t c = 0; c < categories; ++c)
            held.at(b, c) = std::clamp(std::log(model.target_std[c]), kLogSigmaMin, kLogSigmaMax);
        pass.logsigma = ad::Var::leaf(std::move(held));
      }
      const auto loss = config.loss == LossKind::Uncertainty ? ad::uncert_loss(pass.mu, pass.logsigma, target)
                                                             : ad::squared_error_loss(pass.mu, target);
      const double value = loss.value()[0];
      if (!std::isfinite(value))
        throw RuntimeFailure(fmt::format("training diverged: non-finite {} loss at epoch {}, batch starting at {}",
                                         to_string(config.loss), epoch + 1, start));
      ad::backward(loss);
      loss_sum += value * static_cast<double>(n);

      double scale = 1.0;
      if (config.grad_clip_norm > 0.0) {
        double norm_sq = 0.0;
        for (const auto& leaf : pass.leaves) {
          const auto grad = leaf.grad();
          for (double g : grad.values()) norm_sq += g * g;
        }
        const double norm = std::sqrt(norm_sq);
        if (norm > config.grad_clip_norm) scale = config.grad_clip_norm / norm;
      }
      for (std::size_t i = 0; i < model.params.size(); ++i) {
        const auto grad = pass.leaves[i].grad();
        auto& v = velocity[i];
        auto& p = model.params[i].value;
        for (std::size_t j = 0; j < p.size(); ++j) {
          v[j] = config.momentum * v[j] + scale * grad[j];
          p[j] -= lr * v[j];
        }
      }
    }

    EpochStats stats{epoch + 1, lr, loss_sum / static_cast<double>(data.size())};
    if (!std::isfinite(stats.loss))
      throw RuntimeFailure(fmt::format("training diverged at epoch {}", epoch + 1));
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace greenprune
