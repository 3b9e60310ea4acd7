#include "greenprune/archspec.hpp"
#include "greenprune/error.hpp"
#include "greenprune/hybrid.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace greenprune;

namespace {

// Pruned predictions err by `sigma_agg / 3` per category; unpruned ones are exact.
PredictionCache synthetic_cache() {
  PredictionCache cache;
  cache.e_pruned = 1.0;
  cache.e_unpruned = 10.0;
  const std::vector<double> sigmas{0.5, 1.0, 2.0, 3.0, 4.0, 6.0};
  for (int i = 0; i < 6; ++i) {
    CachedSample s;
    s.id = i;
    s.stratum = i >= 3 ? Stratum::Hard : Stratum::Easy;
    s.target = {50.0, 25.0, 25.0};
    s.sigma_agg = sigmas[i];
    const double err = sigmas[i] / 3.0;
    s.pruned_mu = {50.0 + err, 25.0 - err, 25.0};
    s.unpruned_mu = s.target;
    cache.samples.push_back(s);
  }
  return cache;
}

double oracle_rmse(const std::vector<std::vector<double>>& p, const std::vector<std::vector<double>>& t) {
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t c = 0; c < p[i].size(); ++c, ++n) sq += (p[i][c] - t[i][c]) * (p[i][c] - t[i][c]);
  return std::sqrt(sq / static_cast<double>(n));
}

}  // namespace

TEST_CASE("aggregate sigma sums the per-category spreads") {
  CHECK(aggregate_sigma({{0, 0, 0}, {1.0, 1.0, 1.0}}) == doctest::Approx(3.0));
  CHECK(aggregate_sigma({{0, 0, 0}, {0.011, 0.011, 0.011}}) == doctest::Approx(0.033));
  CHECK(aggregate_sigma({{0}, {2.5}}) == doctest::Approx(2.5));
}

TEST_CASE("routing rule") {
  CHECK(route(3.0, 3.0) == Route::Keep);
  CHECK(route(3.0000001, 3.0) == Route::Reinfer);
  CHECK(route(2.0, 3.0) == Route::Keep);
  CHECK(route(1e300, kTauPrunedOnly) == Route::Keep);
  CHECK(route(1e-12, kTauAlwaysReinfer) == Route::Reinfer);
}

TEST_CASE("endpoint identities") {
  const auto cache = synthetic_cache();
  std::vector<std::vector<double>> pruned, unpruned, targets;
  for (const auto& s : cache.samples) {
    pruned.push_back(s.pruned_mu);
    unpruned.push_back(s.unpruned_mu);
    targets.push_back(s.target);
  }

  const auto never = hybrid_from_cache(cache, kTauPrunedOnly);
  CHECK(never.reinferred_count == 0);
  CHECK(never.total_energy == doctest::Approx(6.0 * 1.0));
  CHECK(never.rmse_overall == doctest::Approx(oracle_rmse(pruned, targets)));

  const auto always = hybrid_from_cache(cache, kTauAlwaysReinfer);
  CHECK(always.reinferred_count == 6);
  CHECK(always.total_energy == doctest::Approx(6.0 * (1.0 + 10.0)));
  CHECK(always.rmse_overall == doctest::Approx(0.0));
}

TEST_CASE("interior threshold") {
  const auto cache = synthetic_cache();
  const auto h = hybrid_from_cache(cache, 2.0);
  CHECK(h.reinferred_count == 3);  // 3, 4, 6
  CHECK(h.reinferred_easy == 0);
  CHECK(h.reinferred_hard == 3);
  CHECK(h.total_energy == doctest::Approx(6.0 + 3.0 * 10.0));
  // Kept samples err by 0.5/3, 1/3, 2/3 in two of three categories.
  const double sq = 2.0 * (std::pow(0.5 / 3, 2) + std::pow(1.0 / 3, 2) + std::pow(2.0 / 3, 2));
  CHECK(h.rmse_overall == doctest::Approx(std::sqrt(sq / 18.0)));
  REQUIRE(h.rmse_easy.has_value());
  CHECK(*h.rmse_easy == doctest::Approx(std::sqrt(sq / 9.0)));
  CHECK(*h.rmse_hard == doctest::Approx(0.0));
  CHECK(h.per_sample[3].source == Route::Reinfer);
  CHECK(h.per_sample[2].source == Route::Keep);
  CHECK_THROWS_AS(hybrid_from_cache(cache, -1.0), ConfigError);
}

TEST_CASE("absent stratum leaves its RMSE unset") {
  auto cache = synthetic_cache();
  for (auto& s : cache.samples) s.stratum = Stratum::Easy;
  const auto h = hybrid_from_cache(cache, 1.0);
  CHECK_FALSE(h.rmse_hard.has_value());
  CHECK(h.rmse_easy.has_value());
}

TEST_CASE("threshold sweep") {
  const auto cache = synthetic_cache();
  const std::vector<double> taus{0.0, 1.0, 2.5, 5.0, kTauPrunedOnly};
  const auto sweep = threshold_sweep(cache, taus);
  REQUIRE(sweep.rows.size() == 5);
  CHECK(sweep.rows[0].energy_saving == doctest::Approx(1.0 - 66.0 / 60.0));
  CHECK(sweep.rows[4].energy_saving == doctest::Approx(0.9));
  for (std::size_t i = 1; i < sweep.rows.size(); ++i) {
    CHECK(sweep.rows[i].reinferred <= sweep.rows[i - 1].reinferred);
    CHECK(sweep.rows[i].total_energy <= sweep.rows[i - 1].total_energy);
  }
  const std::vector<double> unsorted{1.0, 0.0};
  CHECK_THROWS_AS(threshold_sweep(cache, unsorted), ConfigError);

  // Unpruned RMSE is 0, so only tau=0 qualifies at any tolerance.
  const auto pick = suggest_threshold(sweep, 0.0);
  REQUIRE(pick.has_value());
  CHECK(pick->tau == 0.0);
  const auto loose = suggest_threshold(sweep, 0.5, 0.0);
  REQUIRE(loose.has_value());
  CHECK(loose->tau == 2.5);
}

TEST_CASE("rmse and pearson") {
  const std::vector<std::vector<double>> p{{0.0, 0.0}}, t{{5.0, 0.0}};
  CHECK(rmse(p, t) == doctest::Approx(3.5355339));
  CHECK(sample_rmse({1, 2, 3}, {1, 2, 3}) == 0.0);
  CHECK(sample_rmse({0, 0}, {3, 4}) == doctest::Approx(std::sqrt(12.5)));

  const std::vector<double> x{1, 2, 3, 4}, up{2, 4, 6, 8}, down{8, 6, 4, 2};
  CHECK(pearson(x, up) == doctest::Approx(1.0));
  CHECK(pearson(x, down) == doctest::Approx(-1.0));
  const std::vector<double> y{1, 3, 2, 4};
  CHECK(pearson(x, y) == doctest::Approx(0.8));
  const std::vector<double> flat{1, 1, 1, 1};
  CHECK_THROWS_AS(pearson(x, flat), ConfigError);
}

TEST_CASE("hybrid_predict uses the unpruned mean for re-inferred samples") {
  const auto arch = reference_arch("vgg-tiny");
  const Model a = build_from_arch(arch, 3, 1), b = build_from_arch(arch, 3, 2);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Dataset data;
  for (int i = 0; i < 3; ++i) {
    Sample s;
    s.id = i;
    s.image = Tensor({3, 32, 32});
    for (auto& v : s.image.values()) v = u(rng);
    s.target = {40, 30, 30};
    data.push_back(s);
  }
  const auto all = hybrid_predict(a, b, data, 0.0, 1.0, 2.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto expected = predict_gaussian(b, data[i].image).mu;
    for (int c = 0; c < 3; ++c) CHECK(all.per_sample[i].prediction[c] == doctest::Approx(expected[c]));
  }
  const auto none = hybrid_predict(a, b, data, kTauPrunedOnly, 1.0, 2.0);
  const auto pa = predict_gaussian(a, data[0].image);
  CHECK(none.per_sample[0].prediction[0] == doctest::Approx(pa.mu[0]));
  CHECK(none.per_sample[0].sigma_agg == doctest::Approx(aggregate_sigma(pa)));
}
