#include "greenprune/model.hpp"

#include "greenprune/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <random>

namespace greenprune {

namespace {

std::string weight_name(int layer_id) { return fmt::format("layer{}.weight", layer_id); }
std::string bias_name(int layer_id) { return fmt::format("layer{}.bias", layer_id); }

Tensor normal_tensor(std::vector<std::size_t> shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

const Parameter& Model::param(const std::string& name) const {
  for (const auto& p : params)
    if (p.name == name) return p;
  throw ConfigError(fmt::format("model has no parameter '{}'", name));
}

Parameter& Model::param(const std::string& name) {
  return const_cast<Parameter&>(std::as_const(*this).param(name));
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

Model build_from_arch(const NetworkArch& input, int category_count, std::uint64_t seed) {
  if (category_count < 1) throw ConfigError("category_count must be >= 1");
  Model model;
  model.arch = input.shapes_inferred() ? input : infer_shapes(input);
  model.category_count = category_count;
  const auto& layers = model.arch.layers;
  const auto& last = layers.back();

  if (last.kind == LayerKind::Linear) {
    if (last.c_out != category_count)
      throw ConfigError(fmt::format("final linear layer has {} outputs but the model predicts {} categories",
                                    last.c_out, category_count));
    model.extractor_layers = static_cast<int>(layers.size()) - 1;
    model.feature_dim = static_cast<int>(last.c_in);
  } else if (last.out_h == 1 && last.out_w == 1) {
    model.extractor_layers = static_cast<int>(layers.size());
    model.feature_dim = static_cast<int>(last.c_out);
  } else {
    throw ConfigError(fmt::format("architecture ends with non-flattened spatial output ({}x{})", last.out_h,
                                  last.out_w));
  }
  for (const auto& e : model.arch.skip_edges) {
    if (e.to >= model.extractor_layers) throw ConfigError("residual junctions must precede the prediction head");
  }

  model.input_mean.assign(static_cast<std::size_t>(model.arch.input.channels), 0.0);
  model.input_std.assign(static_cast<std::size_t>(model.arch.input.channels), 1.0);
  model.target_mean.assign(static_cast<std::size_t>(category_count), 0.0);
  model.target_std.assign(static_cast<std::size_t>(category_count), 1.0);

  std::mt19937_64 rng(seed);
  for (int i = 0; i < model.extractor_layers; ++i) {
    const auto& l = layers[i];
    if (!l.is_parametric()) continue;
    const auto c_in = static_cast<std::size_t>(l.c_in);
    const auto c_out = static_cast<std::size_t>(l.c_out);
    const auto k = static_cast<std::size_t>(l.kernel);
    std::vector<std::size_t> shape =
        l.kind == LayerKind::Conv ? std::vector<std::size_t>{c_out, c_in, k, k} : std::vector<std::size_t>{c_out, c_in};
    const double fan_in = static_cast<double>(shape_product(shape) / c_out);
    model.params.push_back({weight_name(l.id), normal_tensor(shape, std::sqrt(2.0 / fan_in), rng)});
    model.params.push_back({bias_name(l.id), Tensor({c_out}, 0.0)});
  }
  const auto c = static_cast<std::size_t>(category_count);
  const auto f = static_cast<std::size_t>(model.feature_dim);
  const double head_std = std::sqrt(1.0 / static_cast<double>(f));
  model.params.push_back({"head_mu.weight", normal_tensor({c, f}, head_std, rng)});
  model.params.push_back({"head_mu.bias", Tensor({c}, 0.0)});
  model.params.push_back({"head_logsigma.weight", normal_tensor({c, f}, head_std, rng)});
  model.params.push_back({"head_logsigma.bias", Tensor({c}, 0.0)});
  return model;
}

ForwardPass forward(const Model& model, const Tensor& batch, bool track_gradients) {
  const auto& in = model.arch.input;
  if (batch.rank() != 4 || batch.dim(1) != static_cast<std::size_t>(in.channels) ||
      batch.dim(2) != static_cast<std::size_t>(in.height) || batch.dim(3) != static_cast<std::size_t>(in.width))
    throw ConfigError(fmt::format("batch shape {} does not match model input {}x{}x{}", shape_string(batch.shape()),
                                  in.channels, in.height, in.width));

  ForwardPass pass;
  pass.leaves.reserve(model.params.size());
  for (const auto& p : model.params) pass.leaves.push_back(ad::Var::leaf(p.value, track_gradients));
  std::size_t next_param = 0;

  std::vector<ad::Var> outputs;
  outputs.reserve(static_cast<std::size_t>(model.extractor_layers));
  Tensor input = batch;
  const std::size_t plane = batch.dim(2) * batch.dim(3);
  for (std::size_t b = 0; b < batch.dim(0); ++b)
    for (std::size_t ch = 0; ch < batch.dim(1); ++ch) {
      const double mean = model.input_mean[ch], scale = 1.0 / model.input_std[ch];
      double* p = input.data() + (b * batch.dim(1) + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - mean) * scale;
    }
  ad::Var x = ad::Var::leaf(std::move(input));
  for (int i = 0; i < model.extractor_layers; ++i) {
    const auto& l = model.arch.layers[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        const auto& w = pass.leaves[next_param++];
        const auto& b = pass.leaves[next_param++];
        x = ad::conv2d(x, w, b, l.stride, l.pad);
        break;
      }
      case LayerKind::Linear: {
        if (x.value().rank() != 2) x = ad::flatten(x);
        const auto& w = pass.leaves[next_param++];
        const auto& b = pass.leaves[next_param++];
        x = ad::linear(x, w, b);
        break;
      }
      case LayerKind::Relu:
        x = ad::relu(x);
        break;
      case LayerKind::MaxPool:
        x = ad::maxpool2d(x, l.kernel, l.stride, l.pad);
        break;
      case LayerKind::AvgPool:
        x = ad::avgpool2d(x, l.kernel, l.stride, l.pad);
        break;
      case LayerKind::Flatten:
        x = ad::flatten(x);
        break;
      case LayerKind::ResidualAdd: {
        for (const auto& e : model.arch.skip_edges)
          if (e.to == l.id) x = ad::add(x, outputs.at(static_cast<std::size_t>(e.from)));
        break;
      }
    }
    outputs.push_back(x);
  }
  if (x.value().rank() != 2) x = ad::flatten(x);

  const auto& mu_w = pass.leaves[next_param++];
  const auto& mu_b = pass.leaves[next_param++];
  const auto& ls_w = pass.leaves[next_param++];
  const auto& ls_b = pass.leaves[next_param++];
  std::vector<double> ones(model.target_std.size(), 1.0), log_std;
  for (double s : model.target_std) log_std.push_back(std::log(s));
  pass.mu = ad::scale_shift(ad::linear(x, mu_w, mu_b), model.target_std, model.target_mean);
  pass.logsigma = ad::clamp(ad::scale_shift(ad::linear(x, ls_w, ls_b), ones, log_std), kLogSigmaMin, kLogSigmaMax);
  return pass;
}

Tensor stack_images(std::span<const Tensor> images) {
  if (images.empty()) throw ConfigError("stack_images: no images");
  std::vector<std::size_t> shape{images.size()};
  for (auto d : images.front().shape()) shape.push_back(d);
  Tensor out(shape);
  const std::size_t per = images.front().size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != images.front().shape()) throw ConfigError("stack_images: images differ in shape");
    std::copy(images[i].values().begin(), images[i].values().end(), out.values().begin() + i * per);
  }
  return out;
}

std::vector<GaussianPrediction> predict_gaussian(const Model& model, std::span<const Tensor> images,
                                                 std::size_t chunk) {
  std::vector<GaussianPrediction> out;
  out.reserve(images.size());
  const auto c = static_cast<std::size_t>(model.category_count);
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const auto n = std::min(chunk, images.size() - start);
    const auto pass = forward(model, stack_images(images.subspan(start, n)));
    for (std::size_t b = 0; b < n; ++b) {
      GaussianPrediction p;
      for (std::size_t k = 0; k < c; ++k) {
        p.mu.push_back(pass.mu.value().at(b, k));
        p.sigma.push_back(std::exp(pass.logsigma.value().at(b, k)));
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

GaussianPrediction predict_gaussian(const Model& model, const Tensor& image) {
  return predict_gaussian(model, std::span<const Tensor>(&image, 1)).front();
}

}  // namespace greenprune
