#pragma once

#include "greenprune/dataset.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace greenprune {

inline constexpr int kCategoryCount = 3;
inline constexpr std::array<const char*, kCategoryCount> kCategoryNames = {"grass", "clover", "soil"};

struct SyntheticConfig {
  int n_samples = 2000;
  int image_size = 32;
  double hard_fraction = 0.2;
  int blur_radius = 1;
  double occluder_probability = 0.5;
  double clover_bias = 3.0;  // added to the clover Dirichlet weight for hard samples
  double noise_sigma = 0.25;  // Gaussian pixel noise on hard samples
  // Easy samples get Gaussian noise with a per-image level drawn from
  // U(0, easy_noise_max).
  double easy_noise_max = 0.2;
  std::uint64_t seed = 0;

  void check() const;
};

using Rgb = std::array<double, 3>;

/// A sample together with the ground-truth category map and the palette
/// it was painted with (after the per-image illumination scale).
struct RenderedSample {
  Sample sample;
  std::vector<std::uint8_t> category_map;  // row-major, image_size^2
  std::array<Rgb, kCategoryCount> palette;
  bool occluded = false;
};

/// Renders sample `index`; depends only on (config, index).
RenderedSample render_sample(const SyntheticConfig& config, int index);

/// All samples, in index order. Parallel over indices.
Dataset generate(const SyntheticConfig& config);

struct Split {
  Dataset train;
  Dataset test;
};

/// Test set: a stratified draw of round((1 - train_frac) * N) samples that
/// keeps the dataset's easy/hard proportions. Train set: every remaining
/// easy sample. Leftover hard samples are not used. Both sorted by id.
Split split(const Dataset& data, double train_frac, std::uint64_t seed);

/// Writes `labels.csv` (id, frac_grass, frac_clover, frac_soil, stratum)
/// and one `<id>.bin` per sample: float32 little-endian, CHW order.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

/// Reads a dataset laid out like save_dataset. Images may be `<id>.bin`
/// (3 x image_size x image_size float32) or binary PPM `<id>.ppm` of the
/// same size. Fractions must sum to 100 +- 0.5.
Dataset load_external(const std::filesystem::path& image_dir, const std::filesystem::path& labels_csv,
                      int image_size = 32);

Dataset load_dataset(const std::filesystem::path& dir, int image_size = 32);

Dataset filter_stratum(const Dataset& data, Stratum stratum);

}  // namespace greenprune
