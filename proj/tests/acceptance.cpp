// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include "greenprune/archspec.hpp"
#include "greenprune/autodiff.hpp"
#include "greenprune/energy.hpp"
#include "greenprune/harness.hpp"
#include "greenprune/hybrid.hpp"
#include "greenprune/model.hpp"
#include "greenprune/pruner.hpp"
#include "greenprune/synthdata.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>

#include <chrono>
#include <cstdlib>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>

using namespace greenprune;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool report_line(int id, const std::string& title, Verdict v, double seconds, double budget, const std::string& info) {
  v.require(seconds < budget, fmt::format("took {:.1f} s, budget {:.0f} s", seconds, budget));
  fmt::print("criterion {}: {} {} ({:.2f} s){}{}\n", id, v.pass ? "PASS" : "FAIL", title, seconds,
             info.empty() ? "" : " | " + info, v.detail.empty() ? "" : " | failed: " + v.detail);
  std::fflush(stdout);
  return v.pass;
}

// ------------------------------------------------------------------ 1

// Counts multiply-accumulates and memory words by walking every index.
struct Enumerated {
  std::uint64_t flops = 0;
  std::uint64_t bytes = 0;
};

Enumerated enumerate_layer(const LayerSpec& l) {
  Enumerated e;
  std::uint64_t params = 0, outputs = 0;
  if (l.kind == LayerKind::Conv) {
    for (std::int64_t co = 0; co < l.c_out; ++co) {
      for (std::int64_t ci = 0; ci < l.c_in; ++ci)
        for (std::int64_t k = 0; k < l.kernel * l.kernel; ++k) ++params;
      ++params;  // bias
      for (std::int64_t y = 0; y < l.out_h; ++y)
        for (std::int64_t x = 0; x < l.out_w; ++x) {
          ++outputs;
          for (std::int64_t ci = 0; ci < l.c_in; ++ci)
            for (std::int64_t k = 0; k < l.kernel * l.kernel; ++k) ++e.flops;
        }
    }
  } else if (l.kind == LayerKind::Linear) {
    for (std::int64_t co = 0; co < l.c_out; ++co) {
      for (std::int64_t ci = 0; ci < l.c_in; ++ci) {
        ++params;
        ++e.flops;
      }
      ++params;
      ++outputs;
    }
  } else {
    return e;
  }
  e.bytes = (params * 3 + outputs * 2) * 4;
  return e;
}

bool criterion1() {
  const auto t0 = Clock::now();
  Verdict v;
  int layers = 0;
  for (const char* name : {"vgg-tiny", "res-tiny"}) {
    for (const auto& l : reference_arch(name).layers) {
      const auto e = enumerate_layer(l);
      v.require(layer_flops(l) == e.flops, fmt::format("{} layer {} flops {} != {}", name, l.id, layer_flops(l), e.flops));
      v.require(layer_mem_bytes(l) == e.bytes,
                fmt::format("{} layer {} bytes {} != {}", name, l.id, layer_mem_bytes(l), e.bytes));
      ++layers;
    }
  }
  return report_line(1, "energy model matches brute-force enumeration", v, seconds_since(t0), 1.0,
                     fmt::format("{} layers checked", layers));
}

// ------------------------------------------------------------------ 2

double conv_energy(double c_in, double k, double c_out, double s_out) {
  const double flops = c_in * k * k * c_out * s_out;
  const double bytes = ((c_in * k * k * c_out + c_out) * 3 + s_out * c_out * 2) * 4;
  return flops * 2.3e-12 + bytes / (1024.0 * 1024.0) * 640e-12;
}

bool criterion2() {
  const auto t0 = Clock::now();
  const auto arch = infer_shapes(parse_arch(R"(input 3x16x16
conv in=3 out=8 k=3 stride=1 pad=1 prunable=true
relu
conv in=8 out=16 k=3 stride=2 pad=1 prunable=true
relu
conv in=16 out=8 k=3 stride=1 pad=1 prunable=true
relu
flatten
linear in=512 out=3
)"));
  // Analytic P_k from the layer shapes alone.
  const std::vector<double> energies{conv_energy(3, 3, 8, 256), conv_energy(8, 3, 16, 64), conv_energy(16, 3, 8, 64)};
  const double total = energies[0] + energies[1] + energies[2];
  const std::vector<int> ids{0, 2, 4};

  constexpr int kTrials = 10000;
  std::map<int, double> counts;
  for (int seed = 0; seed < kTrials; ++seed) {
    PruningConfig pc;
    pc.epsilon = 1e-6;  // quota of one filter: the first pick only
    pc.seed = static_cast<std::uint64_t>(seed);
    counts[prune_at_init(arch, pc).plan.removals.at(0).layer_id] += 1.0;
  }
  double stat = 0.0;
  std::string freqs;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double expected = energies[i] / total * kTrials;
    stat += std::pow(counts[ids[i]] - expected, 2) / expected;
    freqs += fmt::format("{}layer {}: {:.4f} vs {:.4f}", i ? ", " : "", ids[i], counts[ids[i]] / kTrials,
                         energies[i] / total);
  }
  const boost::math::chi_squared dist(static_cast<double>(ids.size() - 1));
  const double p = boost::math::cdf(boost::math::complement(dist, stat));
  Verdict v;
  v.require(p > 0.01, fmt::format("p = {:.4g}", p));
  return report_line(2, "first-pick frequencies fit the energy-proportional distribution", v, seconds_since(t0), 10.0,
                     fmt::format("chi2 = {:.3f}, p = {:.4f}; {}", stat, p, freqs));
}

// ------------------------------------------------------------------ 3

bool criterion3() {
  const auto t0 = Clock::now();
  Verdict v;
  int plans = 0;
  for (const char* name : {"vgg-tiny", "res-tiny"}) {
    const auto arch = reference_arch(name);
    std::int64_t total = 0;
    for (const auto& l : arch.layers)
      if (l.prunable) total += l.c_out;
    for (double eps : {0.2, 0.8}) {
      for (std::int64_t floor : {1, 2}) {
        for (std::uint64_t seed : {0ULL, 1ULL, 2ULL}) {
          PruningConfig pc;
          pc.epsilon = eps;
          pc.seed = seed;
          pc.min_filters = floor;
          const auto r = prune_at_init(arch, pc);
          ++plans;
          const auto expected = static_cast<std::int64_t>(std::ceil(eps * static_cast<double>(total) - 1e-9));
          const std::string tag = fmt::format("{} eps {} floor {} seed {}", name, eps, floor, seed);
          v.require(static_cast<std::int64_t>(r.plan.removals.size()) == expected,
                    fmt::format("{}: removed {} != {}", tag, r.plan.removals.size(), expected));
          for (const auto& l : r.arch.layers)
            if (l.prunable) v.require(l.c_out >= floor, fmt::format("{}: layer {} below floor", tag, l.id));
          double prev = network_energy(arch).network_total;
          for (std::int64_t k = 1; k <= static_cast<std::int64_t>(r.plan.removals.size()); ++k) {
            const double e = network_energy(apply_mask(arch, r.plan.mask(k, floor))).network_total;
            v.require(e < prev, fmt::format("{}: energy did not drop at removal {}", tag, k));
            prev = e;
          }
          v.require(prune_at_init(arch, pc).plan == r.plan, tag + ": plan not reproducible");
        }
      }
    }
  }
  return report_line(3, "pruning quota, floors, monotone energy, determinism", v, seconds_since(t0), 5.0,
                     fmt::format("{} plans checked", plans));
}

// ------------------------------------------------------------------ 4

double loss_value(const Tensor& mu, const Tensor& ls, const Tensor& target) {
  return ad::uncert_loss(ad::Var::leaf(mu), ad::Var::leaf(ls), target).value()[0];
}

bool criterion4() {
  const auto t0 = Clock::now();
  Verdict v;
  const Tensor one_target({1, 1}, std::vector<double>{0.0});
  auto scalar = [](double x) { return Tensor({1, 1}, std::vector<double>{x}); };
  const double l0 = loss_value(scalar(0.0), scalar(0.0), one_target);
  const double l1 = loss_value(scalar(1.0), scalar(0.0), one_target);
  const double l2 = loss_value(scalar(std::exp(0.5)), scalar(0.5), one_target);
  v.require(l0 == 0.0, fmt::format("L(r=0, s=0) = {}", l0));
  v.require(l1 == 1.0, fmt::format("L(r=1, s=0) = {}", l1));
  v.require(std::abs(l2 - 2.0) <= 4 * std::numeric_limits<double>::epsilon(), fmt::format("L(r=e^0.5, s=0.5) = {:.17g}", l2));

  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 10.0);
  Tensor mu({16, 3}), target({16, 3});
  for (auto& x : mu.values()) x = nd(rng);
  for (auto& x : target.values()) x = nd(rng);
  double mse = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) mse += (mu[i] - target[i]) * (mu[i] - target[i]);
  mse /= static_cast<double>(mu.size());
  const double frozen = loss_value(mu, Tensor({16, 3}, 0.0), target);
  const double mse_rel = std::abs(frozen - mse) / mse;
  v.require(mse_rel <= 1e-15, fmt::format("frozen-sigma loss differs from MSE by {:.3g}", mse_rel));

  // Gradients of both losses through a small model, by central differences.
  const auto arch = infer_shapes(parse_arch(R"(input 3x8x8
conv in=3 out=4 k=3 stride=1 pad=1
relu
maxpool k=2 stride=2
conv in=4 out=4 k=3 stride=1 pad=1
relu
flatten
linear in=64 out=3
)"));
  Model model = build_from_arch(arch, 3, 5);
  Tensor batch({4, 3, 8, 8}), y({4, 3});
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& x : batch.values()) x = u(rng);
  for (auto& x : y.values()) x = 100.0 * u(rng) / 3.0;

  double worst = 0.0;
  for (int kind = 0; kind < 2; ++kind) {
    auto loss_of = [&](const Model& m, bool grad) {
      const auto pass = forward(m, batch, grad);
      const auto loss = kind == 0 ? ad::uncert_loss(pass.mu, pass.logsigma, y) : ad::squared_error_loss(pass.mu, y);
      return std::make_pair(loss, pass);
    };
    auto [loss, pass] = loss_of(model, true);
    ad::backward(loss);
    std::vector<std::pair<std::size_t, std::size_t>> coords;
    std::uniform_int_distribution<std::size_t> pick_param(0, model.params.size() - 1);
    while (coords.size() < 20) {
      const std::size_t p = pick_param(rng);
      std::uniform_int_distribution<std::size_t> pick_elem(0, model.params[p].value.size() - 1);
      coords.emplace_back(p, pick_elem(rng));
    }
    constexpr double h = 1e-5;
    for (const auto& [p, i] : coords) {
      const double analytic = pass.leaves[p].grad()[i];
      Model plus = model, minus = model;
      plus.params[p].value[i] += h;
      minus.params[p].value[i] -= h;
      const double numeric =
          (loss_of(plus, false).first.value()[0] - loss_of(minus, false).first.value()[0]) / (2.0 * h);
      const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
      worst = std::max(worst, rel);
      v.require(rel <= 1e-4, fmt::format("{} loss, {}[{}]: analytic {:.6g} numeric {:.6g}",
                                         kind == 0 ? "uncertainty" : "squared-error", model.params[p].name, i, analytic,
                                         numeric));
    }
  }
  return report_line(4, "loss point values, MSE reduction, finite-difference gradients", v, seconds_since(t0), 30.0,
                     fmt::format("L = {}, {}, {:.17g}; MSE rel diff {:.2g}; worst gradient rel err {:.2e}", l0, l1, l2,
                                 mse_rel, worst));
}

// ------------------------------------------------------------------ 5

double direct_rmse(const PredictionCache& cache, bool unpruned) {
  double sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : cache.samples)
    for (std::size_t c = 0; c < s.target.size(); ++c, ++n) {
      const double d = (unpruned ? s.unpruned_mu[c] : s.pruned_mu[c]) - s.target[c];
      sq += d * d;
    }
  return std::sqrt(sq / static_cast<double>(n));
}

bool criterion5() {
  SyntheticConfig dc;
  dc.n_samples = 300;
  dc.seed = 3;
  const auto data = generate(dc);
  const auto arch = reference_arch("vgg-tiny");
  PruningConfig pc;
  pc.epsilon = 0.8;
  const auto pruned_arch = prune_at_init(arch, pc).arch;
  const Model pruned = build_from_arch(pruned_arch, 3, 1);
  const Model unpruned = build_from_arch(arch, 3, 2);
  const double e_p = network_energy(pruned_arch).network_total, e_u = network_energy(arch).network_total;
  const auto cache = build_cache(pruned, unpruned, data, e_p, e_u);

  const auto t0 = Clock::now();
  Verdict v;
  const double n = static_cast<double>(cache.samples.size());
  const auto never = hybrid_from_cache(cache, kTauPrunedOnly);
  v.require(never.rmse_overall == direct_rmse(cache, false), "tau=inf RMSE differs from pruned-only");
  v.require(never.total_energy == n * e_p, "tau=inf energy differs from pruned-only");
  v.require(never.reinferred_count == 0, "tau=inf re-inferred samples");
  const auto always = hybrid_from_cache(cache, kTauAlwaysReinfer);
  v.require(always.rmse_overall == direct_rmse(cache, true), "tau=0 RMSE differs from unpruned-only");
  v.require(std::abs(always.total_energy - n * (e_p + e_u)) <= 1e-12 * n * (e_p + e_u), "tau=0 energy");

  std::vector<double> taus{0.0};
  double max_sigma = 0.0;
  for (const auto& s : cache.samples) max_sigma = std::max(max_sigma, s.sigma_agg);
  for (int i = 1; i <= 60; ++i) taus.push_back(max_sigma * 1.05 * i / 60.0);
  taus.push_back(kTauPrunedOnly);
  const auto sweep = threshold_sweep(cache, taus);
  for (std::size_t i = 1; i < sweep.rows.size(); ++i) {
    v.require(sweep.rows[i].reinferred <= sweep.rows[i - 1].reinferred, fmt::format("count rose at tau {}", taus[i]));
    v.require(sweep.rows[i].total_energy <= sweep.rows[i - 1].total_energy, fmt::format("energy rose at tau {}", taus[i]));
  }
  return report_line(5, "routing endpoint identities and monotone sweep", v, seconds_since(t0), 10.0,
                     fmt::format("{} samples, {} taus", cache.samples.size(), taus.size()));
}

// ------------------------------------------------------------------ 6

fs::path work_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "greenprune_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig trend_config() {
  ExperimentConfig c;
  c.arch = "vgg-tiny";
  c.epsilons = {80};
  c.runs = 1;
  c.seed = 0;
  c.data.n_samples = 2000;
  c.data.hard_fraction = 0.2;
  c.baseline_train.epochs = 30;
  c.pruned_train.epochs = 100;
  c.pruned_train.learning_rate = 0.02;
  c.pruned_train.sigma_warmup_epochs = 30;
  c.sweep_epsilon = 80;
  c.write_svg = true;
  return c;
}

bool criterion6() {
  const auto t0 = Clock::now();
  auto cfg = trend_config();
  cfg.output_dir = work_dir("trend");
  run_epsilon_sweep(cfg, [](const std::string& line) { fmt::print(stderr, "  [trend] {}\n", line); });
  const auto out = run_threshold_sweep(cfg);
  Verdict v;

  const double ratio = out.sweep.e_pruned / out.sweep.e_unpruned;
  v.require(ratio <= 0.40, fmt::format("(a) energy ratio {:.3f}", ratio));
  v.require(out.pearson_sigma_error > 0.3, fmt::format("(b) pearson {:.3f}", out.pearson_sigma_error));

  const double limit = 1.10 * out.unpruned_only.rmse;
  double best_saving = -1.0, best_tau = 0.0, best_rmse = 0.0;
  for (const auto& r : out.sweep.rows)
    if (r.rmse <= limit && r.energy_saving > best_saving) best_saving = r.energy_saving, best_tau = r.tau, best_rmse = r.rmse;
  v.require(best_saving >= 0.35, fmt::format("(c) best saving within 10% of unpruned RMSE is {:.1f}%", 100 * best_saving));

  // Rates are judged at interior taus; at tau=0 and tau=inf every sample
  // is re-inferred or none is, so the two strata coincide by construction.
  std::size_t n_easy = 0, n_hard = 0;
  for (const auto& s : experiment_split(cfg).test) (s.stratum == Stratum::Hard ? n_hard : n_easy) += 1;
  int interior = 0, hard_higher = 0;
  std::string rates;
  for (const auto& r : out.sweep.rows) {
    if (r.tau == 0.0 || std::isinf(r.tau)) continue;
    ++interior;
    const double easy_rate = static_cast<double>(r.reinferred_easy) / static_cast<double>(n_easy);
    const double hard_rate = static_cast<double>(r.reinferred_hard) / static_cast<double>(n_hard);
    if (hard_rate > easy_rate) ++hard_higher;
    else rates += fmt::format("{}tau {:.3f}: hard {:.3f} vs easy {:.3f}", rates.empty() ? "" : ", ", r.tau, hard_rate, easy_rate);
  }
  v.require(interior > 0 && hard_higher == interior,
            fmt::format("(d) hard rate higher at {}/{} interior taus ({})", hard_higher, interior, rates));

  return report_line(6, "desk-scale trend (energy ratio, sigma-error correlation, hybrid saving, strata)", v,
                     seconds_since(t0), 1200.0,
                     fmt::format("(a) E_p/E_u = {:.3f}; (b) pearson = {:.3f}; (c) {:.1f}% saving at tau {:.3f} with "
                                 "RMSE {:.3f} vs unpruned {:.3f}; (d) hard > easy at {}/{} interior taus; results in {}",
                                 ratio, out.pearson_sigma_error, 100 * best_saving, best_tau, best_rmse,
                                 out.unpruned_only.rmse, hard_higher, interior, cfg.output_dir.string()));
}

// ------------------------------------------------------------------ 7

std::map<std::string, std::string> csv_files(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    files[fs::relative(e.path(), dir).string()] = ss.str();
  }
  return files;
}

bool criterion7() {
  const auto t0 = Clock::now();
  Verdict v;
  std::map<std::string, std::string> first, second;
  for (int pass = 0; pass < 2; ++pass) {
    ExperimentConfig c;
    c.arch = "vgg-tiny";
    c.epsilons = {50, 80};
    c.runs = 2;
    c.seed = 11;
    c.data.n_samples = 300;
    c.baseline_train.epochs = 2;
    c.pruned_train.epochs = 2;
    c.pruned_train.learning_rate = 0.02;
    c.pruned_train.sigma_warmup_epochs = 1;
    c.sweep_epsilon = 80;
    c.output_dir = work_dir(fmt::format("determinism_{}", pass));
    run_epsilon_sweep(c);
    run_threshold_sweep(c);
    (pass == 0 ? first : second) = csv_files(c.output_dir);
  }
  v.require(!first.empty(), "no CSV files written");
  v.require(first.size() == second.size(), "different CSV file sets");
  std::size_t identical = 0;
  for (const auto& [name, text] : first) {
    const auto it = second.find(name);
    if (it != second.end() && it->second == text) ++identical;
    else v.require(false, name + " differs");
  }
  return report_line(7, "harness CSVs are byte-identical across two invocations", v, seconds_since(t0), 1200.0,
                     fmt::format("{} of {} CSV files identical", identical, first.size()));
}

}  // namespace

// Optional arguments select criteria by number; default is all.
int main(int argc, char** argv) {
  fmt::print("acceptance: writing scratch results under {}\n",
             (fs::temp_directory_path() / "greenprune_acceptance").string());
  const std::vector<std::function<bool()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                    criterion5, criterion6, criterion7};
  std::vector<bool> selected(criteria.size(), argc <= 1);
  for (int a = 1; a < argc; ++a) {
    const int id = std::atoi(argv[a]);
    if (id < 1 || id > static_cast<int>(criteria.size())) {
      fmt::print(stderr, "unknown criterion '{}'\n", argv[a]);
      return 2;
    }
    selected[static_cast<std::size_t>(id - 1)] = true;
  }
  int failed = 0, ran = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected[i]) continue;
    ++ran;
    try {
      failed += criteria[i]() ? 0 : 1;
    } catch (const std::exception& e) {
      fmt::print("criterion {}: FAIL (error: {})\n", i + 1, e.what());
      ++failed;
    }
  }
  fmt::print("acceptance: {} of {} criteria passed\n", ran - failed, ran);
  return failed == 0 ? 0 : 1;
}
