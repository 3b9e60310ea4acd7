#include "greenprune/archspec.hpp"
#include "greenprune/error.hpp"
#include "greenprune/train.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace greenprune;

namespace {

constexpr const char* kSmall = R"(input 3x8x8
conv in=3 out=4 k=3 stride=1 pad=1
relu
maxpool k=2 stride=2
flatten
linear in=64 out=3
)";

// Targets are the channel brightness shares, so they are learnable from the image.
Dataset learnable_set(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset data;
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.id = i;
    s.image = Tensor({3, 8, 8});
    std::array<double, 3> level{u(rng), u(rng), u(rng)};
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
      for (int p = 0; p < 64; ++p) s.image[c * 64 + p] = std::clamp(level[c] + 0.05 * (u(rng) - 0.5), 0.0, 1.0);
      total += level[c];
    }
    for (int c = 0; c < 3; ++c) s.target.push_back(100.0 * level[c] / total);
    data.push_back(std::move(s));
  }
  return data;
}

Model small_model(std::uint64_t seed) { return build_from_arch(infer_shapes(parse_arch(kSmall)), 3, seed); }

}  // namespace

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(0.01, 0, 100) == doctest::Approx(0.01));
  CHECK(cosine_lr(0.01, 50, 100) == doctest::Approx(0.005));
  CHECK(cosine_lr(0.01, 100, 100) == doctest::Approx(0.0));
  CHECK(cosine_lr(0.2, 25, 100) == doctest::Approx(0.1 * (1.0 + std::cos(std::numbers::pi / 4))));
}

TEST_CASE("image flips") {
  Tensor img({1, 2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  CHECK(flip_image(img, true, false).values()[0] == 3);
  CHECK(flip_image(img, false, true).values()[0] == 4);
  CHECK(flip_image(img, true, true).values()[0] == 6);
  CHECK(flip_image(img, false, false) == img);
}

TEST_CASE("configuration preconditions") {
  const auto data = learnable_set(4, 1);
  auto expect_error = [&](auto mutate) {
    TrainConfig cfg;
    mutate(cfg);
    CHECK_THROWS_AS(train(small_model(0), data, cfg), ConfigError);
  };
  expect_error([](TrainConfig& c) { c.epochs = 0; });
  expect_error([](TrainConfig& c) { c.learning_rate = 0.0; });
  expect_error([](TrainConfig& c) { c.momentum = 1.0; });
  expect_error([](TrainConfig& c) { c.batch_size = 0; });
  expect_error([](TrainConfig& c) { c.sigma_warmup_epochs = -1; });
  expect_error([](TrainConfig& c) { c.grad_clip_norm = -1.0; });

  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train(small_model(0), Dataset{}, cfg), ConfigError);
  auto wrong = data;
  wrong[0].target.pop_back();
  CHECK_THROWS_AS(train(small_model(0), wrong, cfg), ConfigError);

  CHECK(loss_kind_from_string("rmse") == LossKind::SquaredError);
  CHECK(loss_kind_from_string("uncert") == LossKind::Uncertainty);
  CHECK_THROWS_AS(loss_kind_from_string("mae"), ConfigError);
}

TEST_CASE("loss decreases on a small learnable set") {
  const auto data = learnable_set(50, 2);
  for (LossKind kind : {LossKind::SquaredError, LossKind::Uncertainty}) {
    TrainConfig cfg;
    cfg.epochs = 100;
    cfg.batch_size = 10;
    cfg.loss = kind;
    cfg.seed = 3;
    const auto result = train(small_model(4), data, cfg);
    REQUIRE(result.history.size() == 100);
    INFO(to_string(kind));
    CHECK(result.history.back().loss < result.history.front().loss);
    CHECK(result.history[50].learning_rate == doctest::Approx(cfg.learning_rate * 0.5));
  }
}

TEST_CASE("fitted standardization and output scaling") {
  const auto data = learnable_set(20, 5);
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto model = train(small_model(1), data, cfg).model;
  for (int c = 0; c < 3; ++c) {
    double sum = 0.0, target_sum = 0.0;
    for (const auto& s : data) {
      for (int p = 0; p < 64; ++p) sum += s.image[c * 64 + p];
      target_sum += s.target[c];
    }
    CHECK(model.input_mean[c] == doctest::Approx(sum / (20 * 64)));
    CHECK(model.target_mean[c] == doctest::Approx(target_sum / 20));
    CHECK(model.input_std[c] > 0.0);
  }

  cfg.standardize_inputs = false;
  cfg.scale_outputs_to_targets = false;
  const auto plain = train(small_model(1), data, cfg).model;
  CHECK(plain.input_std == std::vector<double>{1, 1, 1});
  CHECK(plain.target_mean == std::vector<double>{0, 0, 0});
}

TEST_CASE("training is deterministic") {
  const auto data = learnable_set(16, 6);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 5;
  cfg.seed = 9;
  cfg.sigma_warmup_epochs = 1;
  const auto a = train(small_model(2), data, cfg);
  const auto b = train(small_model(2), data, cfg);
  CHECK(a.model == b.model);
  cfg.seed = 10;
  CHECK_FALSE(train(small_model(2), data, cfg).model == a.model);
}

TEST_CASE("epoch callback sees every epoch") {
  const auto data = learnable_set(8, 7);
  TrainConfig cfg;
  cfg.epochs = 4;
  std::vector<int> seen;
  train(small_model(0), data, cfg, [&](const EpochStats& s) { seen.push_back(s.epoch); });
  CHECK(seen.size() == 4);
}
