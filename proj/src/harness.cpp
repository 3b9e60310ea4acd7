#include "greenprune/harness.hpp"

#include "greenprune/archspec.hpp"
#include "greenprune/checkpoint.hpp"
#include "greenprune/error.hpp"
#include "greenprune/pruner.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace greenprune {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive(std::uint64_t master, std::uint64_t tag, double epsilon = 0.0, int run = 0) {
  const auto eps_key = static_cast<std::uint64_t>(std::llround(epsilon * 1000.0));
  return mix(mix(mix(mix(master) ^ tag) ^ eps_key) ^ static_cast<std::uint64_t>(run));
}

std::string num(double v) { return fmt::format("{}", v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

// Writes through a temporary file so an interrupted run never leaves a
// truncated artifact behind.
void write_atomic(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure(fmt::format("cannot write '{}'", path.string()));
    out << text;
    if (!out) throw RuntimeFailure(fmt::format("failed writing '{}'", path.string()));
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RuntimeFailure(fmt::format("cannot read '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

double parse_double(const std::string& s, const fs::path& source) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::logic_error&) {
  }
  throw RuntimeFailure(fmt::format("{}: malformed number '{}'", source.string(), s));
}

// ---------------------------------------------------------------- config JSON

[[noreturn]] void bad_key(const std::string& where, const std::string& key) {
  throw ConfigError(fmt::format("unknown config key '{}{}'", where, key));
}

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(fmt::format("config key '{}' has the wrong type", key));
  }
}

void read_train(const json& j, TrainConfig& t, const std::string& where) {
  if (!j.is_object()) throw ConfigError(fmt::format("config key '{}' must be an object", where));
  for (const auto& [key, v] : j.items()) {
    const std::string k = where + "." + key;
    if (key == "epochs") t.epochs = get_as<int>(v, k);
    else if (key == "learning_rate") t.learning_rate = get_as<double>(v, k);
    else if (key == "momentum") t.momentum = get_as<double>(v, k);
    else if (key == "batch_size") t.batch_size = get_as<int>(v, k);
    else if (key == "loss") t.loss = loss_kind_from_string(get_as<std::string>(v, k));
    else if (key == "horizontal_flip") t.horizontal_flip = get_as<bool>(v, k);
    else if (key == "vertical_flip") t.vertical_flip = get_as<bool>(v, k);
    else if (key == "scale_outputs_to_targets") t.scale_outputs_to_targets = get_as<bool>(v, k);
    else if (key == "standardize_inputs") t.standardize_inputs = get_as<bool>(v, k);
    else if (key == "sigma_warmup_epochs") t.sigma_warmup_epochs = get_as<int>(v, k);
    else if (key == "grad_clip_norm") t.grad_clip_norm = get_as<double>(v, k);
    else bad_key(where + ".", key);
  }
}

json train_to_json(const TrainConfig& t) {
  return {{"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"momentum", t.momentum},
          {"batch_size", t.batch_size},
          {"loss", std::string(to_string(t.loss))},
          {"horizontal_flip", t.horizontal_flip},
          {"vertical_flip", t.vertical_flip},
          {"scale_outputs_to_targets", t.scale_outputs_to_targets},
          {"standardize_inputs", t.standardize_inputs},
          {"sigma_warmup_epochs", t.sigma_warmup_epochs},
          {"grad_clip_norm", t.grad_clip_norm}};
}

void read_data(const json& j, SyntheticConfig& d) {
  if (!j.is_object()) throw ConfigError("config key 'data' must be an object");
  for (const auto& [key, v] : j.items()) {
    const std::string k = "data." + key;
    if (key == "n_samples") d.n_samples = get_as<int>(v, k);
    else if (key == "image_size") d.image_size = get_as<int>(v, k);
    else if (key == "hard_fraction") d.hard_fraction = get_as<double>(v, k);
    else if (key == "blur_radius") d.blur_radius = get_as<int>(v, k);
    else if (key == "occluder_probability") d.occluder_probability = get_as<double>(v, k);
    else if (key == "clover_bias") d.clover_bias = get_as<double>(v, k);
    else if (key == "noise_sigma") d.noise_sigma = get_as<double>(v, k);
    else if (key == "easy_noise_max") d.easy_noise_max = get_as<double>(v, k);
    else bad_key("data.", key);
  }
}

// ---------------------------------------------------------------- evaluation

struct Evaluation {
  double rmse = 0.0;
  double rmse_easy = 0.0;
  double rmse_hard = 0.0;
};

Evaluation evaluate(const Model& model, const Dataset& test) {
  std::vector<Tensor> images;
  images.reserve(test.size());
  for (const auto& s : test) images.push_back(s.image);
  const auto preds = predict_gaussian(model, images);
  std::vector<std::vector<double>> p[3], t[3];  // all, easy, hard
  for (std::size_t i = 0; i < test.size(); ++i) {
    const int stratum = test[i].stratum == Stratum::Hard ? 2 : 1;
    for (int g : {0, stratum}) {
      p[g].push_back(preds[i].mu);
      t[g].push_back(test[i].target);
    }
  }
  Evaluation e;
  e.rmse = rmse(p[0], t[0]);
  e.rmse_easy = p[1].empty() ? 0.0 : rmse(p[1], t[1]);
  e.rmse_hard = p[2].empty() ? 0.0 : rmse(p[2], t[2]);
  return e;
}

constexpr const char* kRunHeader =
    "epsilon,run,init_seed,pruning_seed,filters_removed,params,energy_j,rmse,rmse_easy,rmse_hard";

std::string run_to_csv(const RunRecord& r) {
  return fmt::format("{}\n{},{},{},{},{},{},{},{},{},{}\n", kRunHeader, num(r.epsilon), r.run, r.init_seed,
                     r.pruning_seed, r.filters_removed, r.params, num(r.energy_j), num(r.rmse), num(r.rmse_easy),
                     num(r.rmse_hard));
}

RunRecord run_from_csv(const fs::path& path) {
  const auto rows = read_csv(path);
  if (rows.size() != 2 || rows[1].size() != 10)
    throw RuntimeFailure(fmt::format("{}: expected a header and one 10-column row", path.string()));
  const auto& c = rows[1];
  RunRecord r;
  try {
    r.epsilon = parse_double(c[0], path);
    r.run = std::stoi(c[1]);
    r.init_seed = std::stoull(c[2]);
    r.pruning_seed = std::stoull(c[3]);
    r.filters_removed = std::stoll(c[4]);
    r.params = std::stoll(c[5]);
  } catch (const std::logic_error&) {
    throw RuntimeFailure(fmt::format("{}: malformed run record", path.string()));
  }
  r.energy_j = parse_double(c[6], path);
  r.rmse = parse_double(c[7], path);
  r.rmse_easy = parse_double(c[8], path);
  r.rmse_hard = parse_double(c[9], path);
  return r;
}

std::string aggregate_csv(const std::vector<ReportRow>& rows) {
  std::string out =
      "epsilon,runs,energy_j_mean,energy_j_std,rmse_mean,rmse_std,rmse_easy_mean,rmse_easy_std,rmse_hard_mean,"
      "rmse_hard_std\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", num(r.epsilon), r.runs, num(r.energy_j.mean),
                       num(r.energy_j.std), num(r.rmse.mean), num(r.rmse.std), num(r.rmse_easy.mean),
                       num(r.rmse_easy.std), num(r.rmse_hard.mean), num(r.rmse_hard.std));
  return out;
}

std::vector<RunRecord> read_run_records(const fs::path& dir) {
  std::vector<RunRecord> records;
  const auto runs_dir = dir / "runs";
  if (!fs::is_directory(runs_dir)) return records;
  for (const auto& entry : fs::directory_iterator(runs_dir))
    if (entry.path().extension() == ".csv") records.push_back(run_from_csv(entry.path()));
  std::sort(records.begin(), records.end(),
            [](const RunRecord& a, const RunRecord& b) { return std::tie(a.epsilon, a.run) < std::tie(b.epsilon, b.run); });
  return records;
}

// ---------------------------------------------------------------- threshold sweep output

constexpr const char* kSweepHeader =
    "tau,n_reinferred,n_reinferred_easy,n_reinferred_hard,energy_j,energy_saving_pct,rmse_overall,rmse_easy,rmse_hard";

std::string sweep_csv(const SweepResult& sweep) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& r : sweep.rows)
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", num(r.tau), r.reinferred, r.reinferred_easy, r.reinferred_hard,
                       num(r.total_energy), num(100.0 * r.energy_saving), num(r.rmse), opt_num(r.rmse_easy),
                       opt_num(r.rmse_hard));
  return out;
}

std::string summary_csv(const ThresholdSweepOutput& o) {
  std::string out = "key,value\n";
  auto add = [&](const std::string& k, const std::string& v) { out += k + "," + v + "\n"; };
  add("samples", std::to_string(o.sweep.sample_count));
  add("e_pruned_j", num(o.sweep.e_pruned));
  add("e_unpruned_j", num(o.sweep.e_unpruned));
  add("pruned_only_energy_j", num(o.pruned_only.energy_j));
  add("pruned_only_rmse", num(o.pruned_only.rmse));
  add("pruned_only_rmse_easy", opt_num(o.pruned_only.rmse_easy));
  add("pruned_only_rmse_hard", opt_num(o.pruned_only.rmse_hard));
  add("unpruned_only_energy_j", num(o.unpruned_only.energy_j));
  add("unpruned_only_rmse", num(o.unpruned_only.rmse));
  add("unpruned_only_rmse_easy", opt_num(o.unpruned_only.rmse_easy));
  add("unpruned_only_rmse_hard", opt_num(o.unpruned_only.rmse_hard));
  add("pearson_sigma_error", num(o.pearson_sigma_error));
  add("suggested_tau", o.suggested ? num(o.suggested->tau) : "");
  add("suggested_energy_saving_pct", o.suggested ? num(100.0 * o.suggested->energy_saving) : "");
  add("suggested_rmse", o.suggested ? num(o.suggested->rmse) : "");
  return out;
}

// RMSE against energy saving, with the two single-model reference lines.
std::string sweep_svg(const ThresholdSweepOutput& o) {
  constexpr double W = 640, H = 420, L = 70, R = 20, T = 30, B = 60;
  double y_lo = std::min(o.pruned_only.rmse, o.unpruned_only.rmse), y_hi = std::max(o.pruned_only.rmse, o.unpruned_only.rmse);
  double x_lo = 0.0, x_hi = 0.0;
  for (const auto& r : o.sweep.rows) {
    y_lo = std::min(y_lo, r.rmse);
    y_hi = std::max(y_hi, r.rmse);
    x_lo = std::min(x_lo, 100.0 * r.energy_saving);
    x_hi = std::max(x_hi, 100.0 * r.energy_saving);
  }
  const double pad = std::max(1e-9, 0.08 * (y_hi - y_lo));
  y_lo -= pad;
  y_hi += pad;
  if (x_hi <= x_lo) x_hi = x_lo + 1.0;
  auto sx = [&](double x) { return L + (x - x_lo) / (x_hi - x_lo) * (W - L - R); };
  auto sy = [&](double y) { return T + (y_hi - y) / (y_hi - y_lo) * (H - T - B); };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      W, H);
  s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", L, H - B, W - R, H - B);
  s += fmt::format("<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n", L, T, L, H - B);
  for (int i = 0; i <= 4; ++i) {
    const double xv = x_lo + (x_hi - x_lo) * i / 4.0, yv = y_lo + (y_hi - y_lo) * i / 4.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.0f}</text>\n", sx(xv), H - B + 18, xv);
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.2f}</text>\n", L - 6, sy(yv) + 4, yv);
  }
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">energy saving vs unpruned-only (%)</text>\n",
                   (L + W - R) / 2, H - 18);
  s += fmt::format("<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">RMSE</text>\n",
                   (T + H - B) / 2, (T + H - B) / 2);
  auto hline = [&](double y, const char* color, const char* label) {
    s += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"{}\" stroke-dasharray=\"6 4\"/>\n",
                     L, sy(y), W - R, sy(y), color);
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\" fill=\"{}\">{}</text>\n", W - R - 4, sy(y) - 4,
                     color, label);
  };
  hline(o.pruned_only.rmse, "#c0392b", "pruned only");
  hline(o.unpruned_only.rmse, "#2c3e50", "unpruned only");
  std::string points;
  for (const auto& r : o.sweep.rows) points += fmt::format("{:.1f},{:.1f} ", sx(100.0 * r.energy_saving), sy(r.rmse));
  s += fmt::format("<polyline points=\"{}\" fill=\"none\" stroke=\"#27ae60\" stroke-width=\"2\"/>\n", points);
  for (const auto& r : o.sweep.rows)
    s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"#27ae60\"/>\n", sx(100.0 * r.energy_saving),
                     sy(r.rmse));
  if (o.suggested)
    s += fmt::format(
        "<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"7\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n"
        "<text x=\"{:.1f}\" y=\"{:.1f}\">suggested tau (heuristic)</text>\n",
        sx(100.0 * o.suggested->energy_saving), sy(o.suggested->rmse), sx(100.0 * o.suggested->energy_saving) + 10,
        sy(o.suggested->rmse) + 18);
  s += "</svg>\n";
  return s;
}

std::string pm(const MeanStd& v, int digits) { return fmt::format("{:.{}f} ± {:.{}f}", v.mean, digits, v.std, digits); }

}  // namespace

// ---------------------------------------------------------------- config

TrainConfig default_baseline_train() {
  TrainConfig t;
  t.loss = LossKind::SquaredError;
  t.learning_rate = 0.01;
  return t;
}

TrainConfig default_pruned_train() {
  TrainConfig t;
  t.loss = LossKind::Uncertainty;
  t.learning_rate = 0.0003;
  t.sigma_warmup_epochs = 30;
  return t;
}

void ExperimentConfig::check() const {
  if (arch.empty()) throw ConfigError("arch must be set");
  if (epsilons.empty()) throw ConfigError("epsilons must not be empty");
  for (double e : epsilons)
    if (!(e > 0.0 && e < 100.0)) throw ConfigError(fmt::format("epsilon {} is outside (0, 100)", e));
  auto sorted = epsilons;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("epsilons must not repeat");
  if (runs < 1) throw ConfigError("runs must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw ConfigError("train_frac must be in (0, 1)");
  if (min_filters < 1) throw ConfigError("min_filters must be >= 1");
  if (!(sweep_epsilon > 0.0 && sweep_epsilon < 100.0)) throw ConfigError("sweep_epsilon must be in (0, 100)");
  if (sweep_run < 0) throw ConfigError("sweep_run must be >= 0");
  for (double t : taus)
    if (std::isnan(t) || t < 0.0) throw ConfigError("taus must be >= 0");
  if (tau_quantiles < 1) throw ConfigError("tau_quantiles must be >= 1");
  if (!(suggest_tolerance >= 0.0)) throw ConfigError("suggest_tolerance must be >= 0");
  data.check();
  baseline_train.check();
  pruned_train.check();
  energy.check();
}

ExperimentConfig experiment_config_from_json(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "arch") c.arch = get_as<std::string>(v, key);
    else if (key == "epsilons") c.epsilons = get_as<std::vector<double>>(v, key);
    else if (key == "runs") c.runs = get_as<int>(v, key);
    else if (key == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (key == "output_dir") c.output_dir = get_as<std::string>(v, key);
    else if (key == "data") read_data(v, c.data);
    else if (key == "dataset_dir") c.dataset_dir = fs::path(get_as<std::string>(v, key));
    else if (key == "train_frac") c.train_frac = get_as<double>(v, key);
    else if (key == "baseline_train") read_train(v, c.baseline_train, key);
    else if (key == "pruned_train") read_train(v, c.pruned_train, key);
    else if (key == "min_filters") c.min_filters = get_as<std::int64_t>(v, key);
    else if (key == "energy") {
      for (const auto& [ek, ev] : v.items()) {
        if (ek == "a_per_flop") c.energy.a_per_flop = get_as<double>(ev, "energy." + ek);
        else if (ek == "b_per_mb") c.energy.b_per_mb = get_as<double>(ev, "energy." + ek);
        else if (ek == "bytes_per_value") c.energy.bytes_per_value = get_as<std::int64_t>(ev, "energy." + ek);
        else bad_key("energy.", ek);
      }
    } else if (key == "sweep_epsilon") c.sweep_epsilon = get_as<double>(v, key);
    else if (key == "sweep_run") c.sweep_run = get_as<int>(v, key);
    else if (key == "taus") c.taus = get_as<std::vector<double>>(v, key);
    else if (key == "tau_quantiles") c.tau_quantiles = get_as<int>(v, key);
    else if (key == "suggest_tolerance") c.suggest_tolerance = get_as<double>(v, key);
    else if (key == "write_svg") c.write_svg = get_as<bool>(v, key);
    else bad_key("", key);
  }
  c.check();
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config '{}'", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return experiment_config_from_json(ss.str());
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j = {{"arch", c.arch},
            {"epsilons", c.epsilons},
            {"runs", c.runs},
            {"seed", c.seed},
            {"output_dir", c.output_dir.string()},
            {"data",
             {{"n_samples", c.data.n_samples},
              {"image_size", c.data.image_size},
              {"hard_fraction", c.data.hard_fraction},
              {"blur_radius", c.data.blur_radius},
              {"occluder_probability", c.data.occluder_probability},
              {"clover_bias", c.data.clover_bias},
              {"noise_sigma", c.data.noise_sigma},
              {"easy_noise_max", c.data.easy_noise_max}}},
            {"train_frac", c.train_frac},
            {"baseline_train", train_to_json(c.baseline_train)},
            {"pruned_train", train_to_json(c.pruned_train)},
            {"min_filters", c.min_filters},
            {"energy",
             {{"a_per_flop", c.energy.a_per_flop},
              {"b_per_mb", c.energy.b_per_mb},
              {"bytes_per_value", c.energy.bytes_per_value}}},
            {"sweep_epsilon", c.sweep_epsilon},
            {"sweep_run", c.sweep_run},
            {"taus", c.taus},
            {"tau_quantiles", c.tau_quantiles},
            {"suggest_tolerance", c.suggest_tolerance},
            {"write_svg", c.write_svg}};
  if (c.dataset_dir) j["dataset_dir"] = c.dataset_dir->string();
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- seeds

std::uint64_t SeedManifest::data() const { return derive(master, 1); }
std::uint64_t SeedManifest::split() const { return derive(master, 2); }
std::uint64_t SeedManifest::init(double epsilon, int run) const { return derive(master, 3, epsilon, run); }
std::uint64_t SeedManifest::pruning(double epsilon, int run) const { return derive(master, 4, epsilon, run); }
std::uint64_t SeedManifest::shuffle(double epsilon, int run) const { return derive(master, 5, epsilon, run); }

// ---------------------------------------------------------------- epsilon sweep

MeanStd mean_std(const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("mean_std of no values");
  MeanStd m;
  m.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double sq = 0.0;
    for (double v : values) sq += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(sq / static_cast<double>(values.size() - 1));
  }
  return m;
}

std::vector<ReportRow> aggregate_runs(const std::vector<RunRecord>& records) {
  std::map<double, std::vector<const RunRecord*>> by_eps;
  for (const auto& r : records) by_eps[r.epsilon].push_back(&r);
  std::vector<ReportRow> rows;
  for (const auto& [eps, group] : by_eps) {
    std::vector<double> e, a, ez, h;
    for (const auto* r : group) {
      e.push_back(r->energy_j);
      a.push_back(r->rmse);
      ez.push_back(r->rmse_easy);
      h.push_back(r->rmse_hard);
    }
    rows.push_back({eps, static_cast<int>(group.size()), mean_std(e), mean_std(a), mean_std(ez), mean_std(h)});
  }
  return rows;
}

fs::path run_csv_path(const fs::path& dir, double epsilon, int run) {
  return dir / "runs" / fmt::format("eps_{}_run_{}.csv", num(epsilon), run);
}

fs::path checkpoint_path(const fs::path& dir, double epsilon, int run) {
  return dir / "models" / fmt::format("eps_{}_run_{}.ckpt", num(epsilon), run);
}

Split experiment_split(const ExperimentConfig& config) {
  const SeedManifest seeds{config.seed};
  Dataset data;
  if (config.dataset_dir) {
    data = load_dataset(*config.dataset_dir, config.data.image_size);
  } else {
    SyntheticConfig dc = config.data;
    dc.seed = seeds.data();
    data = generate(dc);
  }
  return split(data, config.train_frac, seeds.split());
}

EpsilonSweepResult run_epsilon_sweep(const ExperimentConfig& config, const ProgressFn& progress) {
  config.check();
  const SeedManifest seeds{config.seed};
  const fs::path& dir = config.output_dir;
  fs::create_directories(dir);
  write_atomic(dir / "config.json", experiment_config_to_json(config));

  const NetworkArch arch = resolve_arch(config.arch);
  const Split data = experiment_split(config);
  if (progress) progress(fmt::format("train {} samples, test {} samples", data.train.size(), data.test.size()));

  std::vector<double> settings{0.0};
  for (double e : config.epsilons) settings.push_back(e);
  std::sort(settings.begin(), settings.end());

  json manifest = {{"master", config.seed}, {"data", seeds.data()}, {"split", seeds.split()}, {"runs", json::array()}};
  EpsilonSweepResult result;
  for (double eps : settings) {
    for (int run = 0; run < config.runs; ++run) {
      RunRecord rec;
      rec.epsilon = eps;
      rec.run = run;
      rec.init_seed = seeds.init(eps, run);
      rec.pruning_seed = eps > 0.0 ? seeds.pruning(eps, run) : 0;
      manifest["runs"].push_back({{"epsilon", eps},
                                  {"run", run},
                                  {"init", rec.init_seed},
                                  {"pruning", rec.pruning_seed},
                                  {"shuffle", seeds.shuffle(eps, run)}});

      const auto csv = run_csv_path(dir, eps, run);
      const auto ckpt = checkpoint_path(dir, eps, run);
      if (fs::exists(csv) && fs::exists(ckpt)) {
        result.records.push_back(run_from_csv(csv));
        if (progress) progress(fmt::format("epsilon {} run {}: reusing {}", num(eps), run, csv.string()));
        continue;
      }

      NetworkArch run_arch = arch;
      if (eps > 0.0) {
        PruningConfig pc;
        pc.epsilon = eps / 100.0;
        pc.min_filters = config.min_filters;
        pc.seed = rec.pruning_seed;
        pc.constants = config.energy;
        auto pruned = prune_at_init(arch, pc);
        rec.filters_removed = static_cast<std::int64_t>(pruned.plan.removals.size());
        run_arch = std::move(pruned.arch);
      }
      TrainConfig tc = eps > 0.0 ? config.pruned_train : config.baseline_train;
      tc.seed = seeds.shuffle(eps, run);
      if (progress) progress(fmt::format("epsilon {} run {}: training {} epochs", num(eps), run, tc.epochs));
      const auto trained = train(build_from_arch(run_arch, kCategoryCount, rec.init_seed), data.train, tc);
      const auto ev = evaluate(trained.model, data.test);
      rec.params = static_cast<std::int64_t>(trained.model.parameter_count());
      rec.energy_j = network_energy(trained.model.arch, config.energy).network_total;
      rec.rmse = ev.rmse;
      rec.rmse_easy = ev.rmse_easy;
      rec.rmse_hard = ev.rmse_hard;

      fs::create_directories(ckpt.parent_path());
      save_checkpoint(trained.model, ckpt);
      write_atomic(csv, run_to_csv(rec));
      result.records.push_back(rec);
      if (progress) progress(fmt::format("epsilon {} run {}: rmse {:.3f} (easy {:.3f}, hard {:.3f})", num(eps), run,
                                         rec.rmse, rec.rmse_easy, rec.rmse_hard));
    }
  }
  write_atomic(dir / "seeds.json", manifest.dump(2) + "\n");
  result.rows = aggregate_runs(result.records);
  write_atomic(dir / "epsilon_sweep.csv", aggregate_csv(result.rows));
  return result;
}

// ---------------------------------------------------------------- threshold sweep

ThresholdSweepOutput run_threshold_sweep(const ExperimentConfig& config) {
  config.check();
  const fs::path& dir = config.output_dir;
  const auto pruned_path = checkpoint_path(dir, config.sweep_epsilon, config.sweep_run);
  const auto unpruned_path = checkpoint_path(dir, 0.0, config.sweep_run);
  for (const auto& p : {pruned_path, unpruned_path})
    if (!fs::exists(p))
      throw RuntimeFailure(fmt::format("missing checkpoint '{}'; run the epsilon sweep first", p.string()));
  const Model pruned = load_checkpoint(pruned_path);
  const Model unpruned = load_checkpoint(unpruned_path);
  const Split data = experiment_split(config);

  const double e_p = network_energy(pruned.arch, config.energy).network_total;
  const double e_u = network_energy(unpruned.arch, config.energy).network_total;
  const auto cache = build_cache(pruned, unpruned, data.test, e_p, e_u);

  std::vector<double> sigmas, errors;
  for (const auto& s : cache.samples) {
    sigmas.push_back(s.sigma_agg);
    errors.push_back(sample_rmse(s.pruned_mu, s.target));
  }

  std::vector<double> taus = config.taus;
  if (taus.empty()) {
    auto sorted = sigmas;
    std::sort(sorted.begin(), sorted.end());
    for (int q = 1; q < config.tau_quantiles; ++q)
      taus.push_back(sorted[sorted.size() * static_cast<std::size_t>(q) / static_cast<std::size_t>(config.tau_quantiles)]);
  }
  taus.push_back(kTauAlwaysReinfer);
  taus.push_back(kTauPrunedOnly);
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());

  ThresholdSweepOutput out;
  out.sweep = threshold_sweep(cache, taus);
  const auto only_pruned = hybrid_from_cache(cache, kTauPrunedOnly);
  out.pruned_only = {only_pruned.total_energy, only_pruned.rmse_overall, only_pruned.rmse_easy, only_pruned.rmse_hard};
  // Unpruned-only serves every sample with the unpruned model alone.
  const auto always = hybrid_from_cache(cache, kTauAlwaysReinfer);
  out.unpruned_only = {static_cast<double>(cache.samples.size()) * e_u, always.rmse_overall, always.rmse_easy,
                       always.rmse_hard};
  try {
    out.pearson_sigma_error = pearson(sigmas, errors);
  } catch (const ConfigError&) {
    out.pearson_sigma_error = std::nan("");
  }
  out.suggested = suggest_threshold(out.sweep, out.unpruned_only.rmse, config.suggest_tolerance);

  write_atomic(dir / "threshold_sweep.csv", sweep_csv(out.sweep));
  write_atomic(dir / "threshold_summary.csv", summary_csv(out));
  if (config.write_svg) write_atomic(dir / "threshold_sweep.svg", sweep_svg(out));
  return out;
}

// ---------------------------------------------------------------- report

std::string report(const fs::path& dir) {
  const auto records = fs::is_directory(dir) ? read_run_records(dir) : std::vector<RunRecord>{};
  const bool have_sweep = fs::exists(dir / "threshold_sweep.csv");
  if (records.empty() && !have_sweep) return fmt::format("no results in {}\n", dir.string());

  std::string out = fmt::format("# Results in {}\n", dir.string());
  if (!records.empty()) {
    out +=
        "\n## Compression sweep\n\nMean ± sample std over runs. Epsilon 0 is the unpruned baseline trained with "
        "squared-error loss.\n\n"
        "| epsilon (%) | runs | energy (J) | RMSE | RMSE easy | RMSE hard |\n"
        "|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& r : aggregate_runs(records))
      out += fmt::format("| {} | {} | {:.4e} ± {:.1e} | {} | {} | {} |\n", num(r.epsilon), r.runs, r.energy_j.mean,
                         r.energy_j.std, pm(r.rmse, 3), pm(r.rmse_easy, 3), pm(r.rmse_hard, 3));
  }
  if (have_sweep) {
    const auto rows = read_csv(dir / "threshold_sweep.csv");
    out +=
        "\n## Threshold sweep\n\n"
        "| tau | re-inferred | easy | hard | energy (J) | saving (%) | RMSE | RMSE easy | RMSE hard |\n"
        "|---:|---:|---:|---:|---:|---:|---:|---:|---:|\n";
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& c = rows[i];
      if (c.size() != 9) throw RuntimeFailure("threshold_sweep.csv: expected 9 columns");
      auto fixed = [&](const std::string& s, int d) {
        return s.empty() ? std::string("-") : fmt::format("{:.{}f}", parse_double(s, dir), d);
      };
      out += fmt::format("| {} | {} | {} | {} | {:.4e} | {} | {} | {} | {} |\n", c[0] == "inf" ? "inf" : fixed(c[0], 4),
                         c[1], c[2], c[3], parse_double(c[4], dir), fixed(c[5], 1), fixed(c[6], 3), fixed(c[7], 3),
                         fixed(c[8], 3));
    }
    if (fs::exists(dir / "threshold_summary.csv")) {
      std::map<std::string, std::string> kv;
      for (const auto& c : read_csv(dir / "threshold_summary.csv"))
        if (c.size() == 2) kv[c[0]] = c[1];
      auto val = [&](const std::string& k, const char* spec) {
        const auto it = kv.find(k);
        if (it == kv.end() || it->second.empty()) return std::string("-");
        return fmt::format(fmt::runtime(spec), parse_double(it->second, dir));
      };
      out += fmt::format("\nPruned only: RMSE {}, energy {} J. Unpruned only: RMSE {}, energy {} J.\n",
                         val("pruned_only_rmse", "{:.3f}"), val("pruned_only_energy_j", "{:.4e}"),
                         val("unpruned_only_rmse", "{:.3f}"), val("unpruned_only_energy_j", "{:.4e}"));
      out += fmt::format("Pearson correlation of aggregated sigma with per-sample RMSE (pruned model): {}\n",
                         val("pearson_sigma_error", "{:.3f}"));
      if (val("suggested_tau", "{}") != "-")
        out += fmt::format(
            "Suggested tau {} (our heuristic: the largest energy saving whose RMSE stays within the configured "
            "tolerance of unpruned-only): saving {}%, RMSE {}\n",
            val("suggested_tau", "{:.4f}"), val("suggested_energy_saving_pct", "{:.1f}"), val("suggested_rmse", "{:.3f}"));
    }
  }
  return out;
}

}  // namespace greenprune
