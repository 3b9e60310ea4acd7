#include "greenprune/synthdata.hpp"

#include "greenprune/error.hpp"
#include "greenprune/pruner.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

namespace greenprune {

namespace {

constexpr std::array<Rgb, kCategoryCount> kBasePalette = {{
    {0.22, 0.52, 0.14},  // grass
    {0.62, 0.82, 0.50},  // clover
    {0.46, 0.31, 0.16},  // soil
}};
constexpr double kOccluderGray = 0.5;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Largest-remainder rounding of fractions to pixel counts summing to total.
std::array<int, kCategoryCount> pixel_counts(const std::array<double, kCategoryCount>& frac, int total) {
  std::array<int, kCategoryCount> counts{};
  std::array<double, kCategoryCount> rem{};
  int assigned = 0;
  for (int c = 0; c < kCategoryCount; ++c) {
    const double exact = frac[c] * total;
    counts[c] = static_cast<int>(std::floor(exact));
    rem[c] = exact - counts[c];
    assigned += counts[c];
  }
  std::array<int, kCategoryCount> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
  for (int i = 0; assigned < total; ++i, ++assigned) ++counts[order[i % kCategoryCount]];
  return counts;
}

// Smooth random field: max over a few Gaussian bumps plus a little jitter.
std::vector<double> blob_field(int size, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> n_blobs(2, 5);
  std::uniform_real_distribution<double> pos(0.0, size);
  std::uniform_real_distribution<double> radius(size * 0.08, size * 0.25);
  std::uniform_real_distribution<double> jitter(0.0, 0.05);
  const int n = n_blobs(rng);
  std::vector<std::array<double, 3>> blobs(static_cast<std::size_t>(n));
  for (auto& b : blobs) b = {pos(rng), pos(rng), radius(rng)};
  std::vector<double> field(static_cast<std::size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double best = 0.0;
      for (const auto& b : blobs) {
        const double dx = x + 0.5 - b[0], dy = y + 0.5 - b[1];
        best = std::max(best, std::exp(-(dx * dx + dy * dy) / (2.0 * b[2] * b[2])));
      }
      field[static_cast<std::size_t>(y) * size + x] = best + jitter(rng);
    }
  return field;
}

// Marks the `count` unassigned pixels with the highest score as `category`.
void claim_pixels(std::vector<std::uint8_t>& map, const std::vector<double>& score, int count, std::uint8_t category) {
  std::vector<int> free;
  for (int i = 0; i < static_cast<int>(map.size()); ++i)
    if (map[i] == 255) free.push_back(i);
  std::stable_sort(free.begin(), free.end(), [&](int a, int b) { return score[a] > score[b]; });
  for (int i = 0; i < count; ++i) map[free[i]] = category;
}

void box_blur(Tensor& image, int radius) {
  if (radius <= 0) return;
  const int c = static_cast<int>(image.dim(0)), h = static_cast<int>(image.dim(1)), w = static_cast<int>(image.dim(2));
  const Tensor src = image;
  for (int ch = 0; ch < c; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        int n = 0;
        for (int dy = -radius; dy <= radius; ++dy)
          for (int dx = -radius; dx <= radius; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            acc += src[(static_cast<std::size_t>(ch) * h + yy) * w + xx];
            ++n;
          }
        image[(static_cast<std::size_t>(ch) * h + y) * w + x] = acc / n;
      }
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    out.push_back(first == std::string::npos ? "" : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Tensor read_bin_image(const std::filesystem::path& path, int size) {
  std::ifstream in(path, std::ios::binary);
  const std::size_t n = static_cast<std::size_t>(3) * size * size;
  std::vector<float> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(float)));
  if (in.gcount() != static_cast<std::streamsize>(n * sizeof(float)) || in.peek() != EOF)
    throw ConfigError(fmt::format("image '{}' is not 3x{}x{} float32", path.string(), size, size));
  Tensor t({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
  for (std::size_t i = 0; i < n; ++i) t[i] = raw[i];
  return t;
}

Tensor read_ppm_image(const std::filesystem::path& path, int size) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  in.get();
  if (magic != "P6" || w != size || h != size || maxval != 255)
    throw ConfigError(fmt::format("image '{}' must be a {}x{} 8-bit binary PPM", path.string(), size, size));
  std::vector<unsigned char> raw(static_cast<std::size_t>(3) * size * size);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    throw ConfigError(fmt::format("image '{}' is truncated", path.string()));
  Tensor t({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t ch = 0; ch < 3; ++ch) t[ch * plane + p] = raw[p * 3 + ch] / 255.0;
  return t;
}

}  // namespace

std::string_view to_string(Stratum s) { return s == Stratum::Easy ? "easy" : "hard"; }

std::optional<Stratum> stratum_from_string(std::string_view s) {
  if (s == "easy") return Stratum::Easy;
  if (s == "hard") return Stratum::Hard;
  return std::nullopt;
}

void SyntheticConfig::check() const {
  if (n_samples < 0) throw ConfigError("n_samples must be >= 0");
  if (image_size < 8) throw ConfigError("image_size must be >= 8");
  if (hard_fraction < 0.0 || hard_fraction > 1.0) throw ConfigError("hard_fraction must be in [0, 1]");
  if (occluder_probability < 0.0 || occluder_probability > 1.0)
    throw ConfigError("occluder_probability must be in [0, 1]");
  if (blur_radius < 0) throw ConfigError("blur_radius must be >= 0");
  if (clover_bias < 0.0) throw ConfigError("clover_bias must be >= 0");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (easy_noise_max < 0.0) throw ConfigError("easy_noise_max must be >= 0");
}

RenderedSample render_sample(const SyntheticConfig& config, int index) {
  std::mt19937_64 rng(splitmix64(config.seed ^ splitmix64(static_cast<std::uint64_t>(index))));
  const int size = config.image_size;
  const int pixels = size * size;

  RenderedSample out;
  auto& sample = out.sample;
  sample.id = index;
  sample.stratum = uniform01(rng) < config.hard_fraction ? Stratum::Hard : Stratum::Easy;
  const bool hard = sample.stratum == Stratum::Hard;

  // Dirichlet draw via normalized gammas.
  std::array<double, kCategoryCount> alpha = {2.0, 1.5, 1.0};
  if (hard) alpha[1] += config.clover_bias;
  std::array<double, kCategoryCount> frac{};
  double total = 0.0;
  for (int c = 0; c < kCategoryCount; ++c) {
    std::gamma_distribution<double> g(alpha[c], 1.0);
    frac[c] = g(rng);
    total += frac[c];
  }
  for (auto& f : frac) f /= total;
  const auto counts = pixel_counts(frac, pixels);

  // Soil first, then clover, grass fills the rest.
  out.category_map.assign(static_cast<std::size_t>(pixels), 255);
  claim_pixels(out.category_map, blob_field(size, rng), counts[2], 2);
  claim_pixels(out.category_map, blob_field(size, rng), counts[1], 1);
  for (auto& m : out.category_map)
    if (m == 255) m = 0;

  sample.target.resize(kCategoryCount);
  for (int c = 0; c < kCategoryCount; ++c) sample.target[c] = 100.0 * counts[c] / pixels;

  std::uniform_real_distribution<double> illum(0.85, 1.1);
  const double light = illum(rng);
  for (int c = 0; c < kCategoryCount; ++c)
    for (int ch = 0; ch < 3; ++ch) out.palette[c][ch] = kBasePalette[c][ch] * light;

  // Texture: mild per-pixel shading, plus a leaflet pattern on clover.
  std::uniform_real_distribution<double> shade(-0.04, 0.04);
  std::uniform_real_distribution<double> phase(0.0, 6.283185307179586);
  const double px = phase(rng), py = phase(rng);
  sample.image = Tensor({3, static_cast<std::size_t>(size), static_cast<std::size_t>(size)});
  const std::size_t plane = static_cast<std::size_t>(pixels);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const std::size_t p = static_cast<std::size_t>(y) * size + x;
      const int cat = out.category_map[p];
      double mod = shade(rng);
      if (cat == 1) mod += 0.04 * std::sin(2.1 * x + px) * std::sin(2.1 * y + py);
      for (int ch = 0; ch < 3; ++ch)
        sample.image[ch * plane + p] = std::clamp(out.palette[cat][ch] * (1.0 + mod), 0.0, 1.0);
    }

  if (hard) {
    box_blur(sample.image, config.blur_radius);
    if (uniform01(rng) < config.occluder_probability) {
      out.occluded = true;
      std::uniform_int_distribution<int> side(size / 5, size / 2);
      const int w = side(rng), h = side(rng);
      std::uniform_int_distribution<int> ox(0, size - w), oy(0, size - h);
      const int x0 = ox(rng), y0 = oy(rng);
      for (int y = y0; y < y0 + h; ++y)
        for (int x = x0; x < x0 + w; ++x)
          for (int ch = 0; ch < 3; ++ch)
            sample.image[ch * plane + static_cast<std::size_t>(y) * size + x] = kOccluderGray;
    }
    if (config.noise_sigma > 0.0) {
      std::normal_distribution<double> noise(0.0, config.noise_sigma);
      for (auto& v : sample.image.values()) v = std::clamp(v + noise(rng), 0.0, 1.0);
    }
  }
  if (!hard && config.easy_noise_max > 0.0) {
    // Per-image sensor noise level, so easy images vary in quality too.
    std::uniform_real_distribution<double> level(0.0, config.easy_noise_max);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double sd = level(rng);
    for (auto& v : sample.image.values()) v = std::clamp(v + sd * noise(rng), 0.0, 1.0);
  }
  // Stored precision matches the float32 on-disk format.
  for (auto& v : sample.image.values()) v = static_cast<float>(v);
  return out;
}

Dataset generate(const SyntheticConfig& config) {
  config.check();
  Dataset data(static_cast<std::size_t>(config.n_samples));
#pragma omp parallel for schedule(dynamic, 16)
  for (int i = 0; i < config.n_samples; ++i) data[static_cast<std::size_t>(i)] = render_sample(config, i).sample;
  return data;
}

Split split(const Dataset& data, double train_frac, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must be in (0, 1)");
  std::vector<std::size_t> easy, hard;
  for (std::size_t i = 0; i < data.size(); ++i) (data[i].stratum == Stratum::Hard ? hard : easy).push_back(i);
  std::mt19937_64 rng(seed);
  std::shuffle(easy.begin(), easy.end(), rng);
  std::shuffle(hard.begin(), hard.end(), rng);

  const auto n = static_cast<double>(data.size());
  const auto n_test = static_cast<std::size_t>(std::llround((1.0 - train_frac) * n));
  const auto n_test_hard =
      data.empty() ? 0 : static_cast<std::size_t>(std::llround(static_cast<double>(n_test) * hard.size() / n));
  const auto n_test_easy = n_test - std::min(n_test, n_test_hard);
  if (n_test_hard < 1 || n_test_hard > hard.size())
    throw ConfigError(fmt::format("insufficient hard samples for a stratified test set ({} available)", hard.size()));
  if (n_test_easy < 1 || n_test_easy >= easy.size())
    throw ConfigError(fmt::format("insufficient easy samples to fill both train and test ({} available)", easy.size()));

  Split out;
  std::vector<std::size_t> test_idx(easy.begin(), easy.begin() + static_cast<std::ptrdiff_t>(n_test_easy));
  test_idx.insert(test_idx.end(), hard.begin(), hard.begin() + static_cast<std::ptrdiff_t>(n_test_hard));
  std::vector<std::size_t> train_idx(easy.begin() + static_cast<std::ptrdiff_t>(n_test_easy), easy.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  for (auto i : test_idx) out.test.push_back(data[i]);
  for (auto i : train_idx) out.train.push_back(data[i]);
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream labels(dir / "labels.csv", std::ios::trunc);
  if (!labels) throw RuntimeFailure(fmt::format("cannot write '{}'", (dir / "labels.csv").string()));
  labels << "id,frac_grass,frac_clover,frac_soil,stratum\n";
  for (const auto& s : data) {
    if (s.target.size() != kCategoryCount) throw ConfigError("save_dataset expects three categories");
    labels << fmt::format("{},{},{},{},{}\n", s.id, s.target[0], s.target[1], s.target[2], to_string(s.stratum));
    std::vector<float> raw(s.image.size());
    for (std::size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(s.image[i]);
    std::ofstream img(dir / fmt::format("{}.bin", s.id), std::ios::binary | std::ios::trunc);
    img.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * sizeof(float)));
    if (!img) throw RuntimeFailure(fmt::format("failed writing image {}", s.id));
  }
}

Dataset load_external(const std::filesystem::path& image_dir, const std::filesystem::path& labels_csv, int image_size) {
  std::ifstream in(labels_csv);
  if (!in) throw ConfigError(fmt::format("cannot open labels file '{}'", labels_csv.string()));
  Dataset data;
  std::string line;
  int row = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++row;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (!header_seen) {
      header_seen = true;
      if (cells.size() != 5 || cells[0] != "id")
        throw ConfigError(fmt::format("{}: row {}: expected header id,frac_grass,frac_clover,frac_soil,stratum",
                                      labels_csv.string(), row));
      continue;
    }
    auto fail = [&](const std::string& msg) {
      throw ConfigError(fmt::format("{}: row {}: {}", labels_csv.string(), row, msg));
    };
    if (cells.size() != 5) fail(fmt::format("expected 5 columns, got {}", cells.size()));
    Sample s;
    try {
      std::size_t used = 0;
      s.id = std::stoi(cells[0], &used);
      if (used != cells[0].size()) fail(fmt::format("bad id '{}'", cells[0]));
      for (int c = 1; c <= 3; ++c) {
        s.target.push_back(std::stod(cells[c], &used));
        if (used != cells[c].size()) fail(fmt::format("bad fraction '{}'", cells[c]));
      }
    } catch (const std::logic_error&) {
      fail("malformed number");
    }
    const double sum = s.target[0] + s.target[1] + s.target[2];
    if (std::abs(sum - 100.0) > 0.5) fail(fmt::format("fractions sum to {}, expected 100 +- 0.5", sum));
    for (double f : s.target)
      if (f < 0.0) fail("negative fraction");
    auto stratum = stratum_from_string(cells[4]);
    if (!stratum) fail(fmt::format("unknown stratum '{}'", cells[4]));
    s.stratum = *stratum;

    const auto bin = image_dir / fmt::format("{}.bin", s.id);
    const auto ppm = image_dir / fmt::format("{}.ppm", s.id);
    if (std::filesystem::exists(bin)) s.image = read_bin_image(bin, image_size);
    else if (std::filesystem::exists(ppm)) s.image = read_ppm_image(ppm, image_size);
    else fail(fmt::format("missing image for id {} (looked for {}.bin and {}.ppm)", s.id, s.id, s.id));
    data.push_back(std::move(s));
  }
  if (data.empty()) std::cerr << "warning: " << labels_csv.string() << " contains no samples\n";
  return data;
}

Dataset load_dataset(const std::filesystem::path& dir, int image_size) {
  return load_external(dir, dir / "labels.csv", image_size);
}

Dataset filter_stratum(const Dataset& data, Stratum stratum) {
  Dataset out;
  for (const auto& s : data)
    if (s.stratum == stratum) out.push_back(s);
  return out;
}

}  // namespace greenprune
