// Acceptance gate: prints one PASS/FAIL line per criterion. Thresholds and
// runtime budgets are pinned below. Usage: acceptance [--only <name>]...

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "chartsample/dataset.hpp"
#include "chartsample/domain.hpp"
#include "chartsample/experiment.hpp"
#include "chartsample/random.hpp"
#include "chartsample/sampler.hpp"
#include "chartsample/stats.hpp"

#include "stats_fixture_check.hpp"
#include "test_util.hpp"

namespace cs = chartsample;
namespace fs = std::filesystem;
using cs::sampling::Level;
using cs::sampling::Method;
using cs::sampling::Tick;

namespace {

// Runtime budgets in seconds.
constexpr double kDomainBudget = 1.0;
constexpr double kCovBudget = 10.0;
constexpr double kTtdBudget = 5.0;
constexpr double kKneeBudget = 15.0 * 60.0;
constexpr double kStabilityBudget = 45.0 * 60.0;
constexpr double kStatsBudget = 10.0;

// Thresholds.
constexpr std::size_t kCovPools = 1000;
constexpr std::size_t kCovMaxPool = 100;
constexpr std::size_t kTtdSeeds = 100;
constexpr double kTtdDominanceShare = 0.95;
constexpr double kKneeInDistributionFactor = 2.0;
constexpr double kKneeSpearman = 0.8;
constexpr std::size_t kKneeEpochs = 30;
constexpr double kStabilityPearson = 0.8;
constexpr std::size_t kStabilitySeeds = 5;
constexpr std::size_t kStabilityCovWins = 4;
constexpr std::size_t kStabilityEpochs = 30;
// Smaller than the 6k/2k/2k desk default so 80 cells fit the budget on one core.
constexpr cs::experiment::SplitCounts kStabilityCounts{2000, 500, 1000};
constexpr double kStatsTolerance = 1e-9;
constexpr double kLowessTolerance = 1e-6;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt_double(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

cs::domain::DiscreteDomain ratio_domain() { return cs::domain::ratio_bin_domain(cs::domain::enumerate_pairs(false)); }

// ---------------------------------------------------------------------------

Outcome domain_exactness() {
  const auto start = Clock::now();
  const auto full = cs::domain::enumerate_pairs(false);
  const auto divided = cs::domain::enumerate_pairs(true);
  // Independent count of reduced fractions h/H.
  std::set<std::pair<int, int>> reduced;
  for (int H = 6; H <= 85; ++H) {
    for (int h = 5; h < H; ++h) {
      const int g = std::gcd(h, H);
      reduced.insert({h / g, H / g});
    }
  }
  const double elapsed = seconds_since(start);
  const bool ok = full.all_pairs().size() == 3240 && full.distinct_ratio_count() == 2081 && reduced.size() == 2081 &&
                  full.bins().size() == 94 && divided.bins().size() == 93 && elapsed < kDomainBudget;
  return {ok, "pairs=" + std::to_string(full.all_pairs().size()) + " ratios=" +
                  std::to_string(full.distinct_ratio_count()) + " bins=" + std::to_string(full.bins().size()) +
                  " type5_bins=" + std::to_string(divided.bins().size()) + " time=" + fmt_double(elapsed, 3) + "s"};
}

Outcome split_plan_arithmetic() {
  bool ok = true;
  const auto ratio = cs::sampling::split_holdout(ratio_domain(), 1);
  const auto height = cs::sampling::split_holdout(cs::domain::taller_height_domain(), 1);
  ok &= ratio.test.size() == 19 && ratio.validation.size() == 19 && ratio.pool.size() == 56;
  ok &= height.test.size() == 16 && height.validation.size() == 16 && height.pool.size() == 48;
  const std::size_t ratio_levels[] = {28, 14, 7, 3}, height_levels[] = {24, 12, 6, 3};
  std::string counts;
  const auto plan = cs::sampling::sample_iid(ratio_domain(), ratio, ratio.pool.size(), 1);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto r = cs::sampling::downsample_level(cs::sampling::kAllLevels[i], 94);
    const auto h = cs::sampling::downsample_level(cs::sampling::kAllLevels[i], 80);
    ok &= r.count == ratio_levels[i] && h.count == height_levels[i];
    const auto cut = cs::sampling::downsample(plan, r);
    ok &= cut.order.size() == r.count && std::equal(cut.order.begin(), cut.order.end(), plan.order.begin());
    counts += std::to_string(r.count) + "/" + std::to_string(h.count) + " ";
  }
  return {ok, "ratio=" + std::to_string(ratio.test.size()) + "/" + std::to_string(ratio.validation.size()) + "/" +
                  std::to_string(ratio.pool.size()) + " height=" + std::to_string(height.test.size()) + "/" +
                  std::to_string(height.validation.size()) + "/" + std::to_string(height.pool.size()) +
                  " levels(ratio/height)=" + counts};
}

// Brute-force max-min ordering: extremes first, then repeatedly the candidate
// whose nearest selected value is farthest, smaller value on ties.
std::vector<Tick> brute_force_cov(const std::vector<Tick>& pool) {
  std::vector<Tick> order{pool.front()};
  if (pool.size() > 1) order.push_back(pool.back());
  std::vector<bool> used(pool.size(), false);
  used.front() = used.back() = true;
  while (order.size() < pool.size()) {
    Tick best_d = -1;
    std::size_t best = 0;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (used[i]) continue;
      Tick d = std::numeric_limits<Tick>::max();
      for (Tick s : order) d = std::min(d, std::abs(pool[i] - s));
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    used[best] = true;
    order.push_back(pool[best]);
  }
  return order;
}

Outcome cov_optimality() {
  const auto start = Clock::now();
  cs::Rng rng(20240601);
  std::size_t mismatches = 0, picks = 0;
  for (std::size_t trial = 0; trial < kCovPools; ++trial) {
    const auto size = static_cast<std::size_t>(rng.between(2, kCovMaxPool));
    std::set<Tick> values;
    while (values.size() < size) values.insert(rng.between(0, 1000));
    std::vector<Tick> pool(values.begin(), values.end());
    cs::domain::DiscreteDomain domain(cs::domain::DomainLabel::CellCount, 1, pool);
    cs::sampling::Split split;
    split.pool = pool;
    const auto plan = cs::sampling::sample_cov(domain, split, pool.size());
    const auto expected = brute_force_cov(pool);
    for (std::size_t k = 0; k < expected.size(); ++k) {
      ++picks;
      if (k >= plan.order.size() || plan.order[k] != expected[k]) ++mismatches;
    }
  }
  const double elapsed = seconds_since(start);
  return {mismatches == 0 && elapsed < kCovBudget,
          "pools=" + std::to_string(kCovPools) + " picks=" + std::to_string(picks) +
              " mismatches=" + std::to_string(mismatches) + " time=" + fmt_double(elapsed, 3) + "s"};
}

double oracle_ttd(const std::vector<double>& train, const std::vector<double>& test) {
  double sum = 0.0;
  for (double t : test) {
    double best = std::numeric_limits<double>::infinity();
    for (double s : train) best = std::min(best, std::abs(t - s));
    sum += best;
  }
  return sum / static_cast<double>(test.size());
}

Outcome ttd_dominance() {
  const auto start = Clock::now();
  const auto domain = ratio_domain();
  bool ok = true;
  std::string detail;
  for (Level level : {Level::P15, Level::P7_5, Level::P3_75}) {
    const auto lvl = cs::sampling::downsample_level(level, domain.size());
    std::size_t cov_wins = 0;
    double iid_sum = 0.0, ood_sum = 0.0;
    for (std::uint64_t seed = 0; seed < kTtdSeeds; ++seed) {
      const auto split = cs::sampling::split_holdout(domain, seed);
      const auto m = split.pool.size();
      auto ttd = [&](Method method) {
        const auto plan = cs::sampling::downsample(cs::sampling::make_plan(method, domain, split, m, seed), lvl);
        const double lib = cs::sampling::plan_training_test_distance(plan);
        if (std::abs(lib - oracle_ttd(plan.order_values(), plan.test_values())) > 1e-12) ok = false;
        return lib;
      };
      const double iid = ttd(Method::IID), cov = ttd(Method::COV), ood = ttd(Method::OodLeft);
      if (cov <= iid) ++cov_wins;
      iid_sum += iid;
      ood_sum += ood;
    }
    const double share = static_cast<double>(cov_wins) / kTtdSeeds;
    ok &= share >= kTtdDominanceShare && ood_sum > iid_sum;
    detail += std::string(cs::sampling::to_string(level)) + ": cov<=iid " + fmt_double(share * 100, 3) +
              "% mean iid " + fmt_double(iid_sum / kTtdSeeds) + " ood " + fmt_double(ood_sum / kTtdSeeds) + "; ";
  }
  const double elapsed = seconds_since(start);
  ok &= elapsed < kTtdBudget;
  return {ok, detail + "time=" + fmt_double(elapsed, 3) + "s"};
}

// Mean absolute error per test bin (percent midpoint -> MAE).
std::map<int, double> per_bin_mae(const std::vector<cs::stats::PredictionRecord>& records) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto& r : records) {
    auto& a = acc[cs::domain::bin_of(r.truth).midpoint_percent()];
    a.first += std::abs(r.prediction - r.truth);
    ++a.second;
  }
  std::map<int, double> out;
  for (const auto& [bin, a] : acc) out[bin] = a.first / static_cast<double>(a.second);
  return out;
}

std::vector<cs::stats::PredictionRecord> cell_predictions(const fs::path& dir, const cs::experiment::RunResult& run,
                                                          Method method, std::size_t r) {
  for (const auto& c : run.cells) {
    if (c.cell.method == method && c.cell.run == r && c.ok) return cs::stats::read_predictions_csv(dir / c.predictions);
  }
  return {};
}

unsigned workers() { return cs::dataset::default_workers(); }

Outcome ood_knee() {
  const auto start = Clock::now();
  cs::test::TempDir tmp;
  auto config = cs::experiment::default_config(cs::experiment::Study::Robustness);
  config.methods = {Method::IID, Method::OodLeft};
  config.levels = {Level::P30};
  config.chart_types = {1};
  config.runs = 1;
  config.counts = {6000, 2000, 2000};
  config.learner.max_epochs = kKneeEpochs;
  config.master_seed = 11;
  config.output_dir = tmp.path();
  config.write_images = false;
  config.workers = workers();
  const auto run = cs::experiment::run_experiment(config);
  if (!run.failures.empty()) return {false, "cell failed: " + run.failures.front()};

  const auto plan = cs::experiment::cell_plan(config, {Method::OodLeft, Level::P30, 1, 0});
  const auto train = plan.order_values();
  const double lo = *std::min_element(train.begin(), train.end());
  const double hi = *std::max_element(train.begin(), train.end());

  const auto ood = per_bin_mae(cell_predictions(tmp.path(), run, Method::OodLeft, 0));
  const auto iid = per_bin_mae(cell_predictions(tmp.path(), run, Method::IID, 0));
  double ood_in = 0, iid_in = 0;
  std::size_t n_in = 0;
  std::vector<double> distance, error;
  for (const auto& [bin, mae] : ood) {
    const double v = bin / 100.0;
    if (v >= lo - 1e-12 && v <= hi + 1e-12) {
      ood_in += mae;
      iid_in += iid.at(bin);
      ++n_in;
    } else if (v > hi) {
      distance.push_back(v - hi);
      error.push_back(mae);
    }
  }
  if (n_in == 0 || distance.size() < 3) return {false, "too few bins on either side of the boundary"};
  ood_in /= n_in;
  iid_in /= n_in;
  const double rho = cs::stats::spearman(distance, error).r;
  const double elapsed = seconds_since(start);
  const bool ok = ood_in <= kKneeInDistributionFactor * iid_in && rho >= kKneeSpearman && elapsed <= kKneeBudget;
  return {ok, "in-dist MAE ood " + fmt_double(ood_in) + " vs iid " + fmt_double(iid_in) + " (" +
                  std::to_string(n_in) + " bins); beyond " + fmt_double(hi, 3) + ": spearman " + fmt_double(rho, 3) +
                  " over " + std::to_string(distance.size()) + " bins; time=" + fmt_double(elapsed, 4) + "s"};
}

Outcome stability() {
  const auto start = Clock::now();
  cs::test::TempDir tmp;
  auto config = cs::experiment::default_config(cs::experiment::Study::Stability);
  config.runs = kStabilitySeeds;
  config.counts = kStabilityCounts;
  config.learner.max_epochs = kStabilityEpochs;
  config.master_seed = 7;
  config.output_dir = tmp.path();
  config.write_images = false;
  config.workers = workers();
  const auto run = cs::experiment::run_experiment(config);
  if (!run.failures.empty()) return {false, "cell failed: " + run.failures.front()};
  std::vector<double> ttd, mae;
  std::map<std::pair<std::size_t, Method>, double> smallest;
  for (const auto& c : run.cells) {
    ttd.push_back(c.ttd);
    mae.push_back(c.mae);
    if (c.cell.level == Level::P3_75) smallest[{c.cell.run, c.cell.method}] = c.mae;
  }
  const double r = cs::stats::pearson(ttd, mae).r;
  std::size_t wins = 0;
  for (std::size_t s = 0; s < kStabilitySeeds; ++s) {
    if (smallest.at({s, Method::COV}) < smallest.at({s, Method::IID})) ++wins;
  }
  const double elapsed = seconds_since(start);
  const bool ok = r >= kStabilityPearson && wins >= kStabilityCovWins && elapsed <= kStabilityBudget;
  return {ok, "cells=" + std::to_string(run.cells.size()) + " pearson(ttd, mae)=" + fmt_double(r, 3) +
                  " cov<iid at 3.75%: " + std::to_string(wins) + "/" + std::to_string(kStabilitySeeds) +
                  " time=" + fmt_double(elapsed, 4) + "s"};
}

Outcome stats_oracle() {
  const auto start = Clock::now();
  const auto d = cs::test::compare_stats_fixtures(cs::test::data_dir() / "stats_fixtures.json");
  const double worst = std::max({d.anova_F, d.anova_p, d.eta2, d.tukey_p, d.pearson, d.spearman, d.interval, d.srange});
  const double elapsed = seconds_since(start);
  const std::size_t fixtures = std::min({d.anova_fixtures, d.correlation_fixtures, d.interval_fixtures, d.lowess_fixtures});
  const bool ok = fixtures >= 20 && worst < kStatsTolerance && d.lowess < kLowessTolerance &&
                  d.partition_mismatches == 0 && elapsed < kStatsBudget;
  return {ok, "fixtures>=" + std::to_string(fixtures) + " worst=" + fmt_double(worst, 3) + " lowess=" +
                  fmt_double(d.lowess, 3) + " partition_mismatches=" + std::to_string(d.partition_mismatches) +
                  " time=" + fmt_double(elapsed, 3) + "s"};
}

Outcome mlae_anchors() {
  std::vector<cs::stats::PredictionRecord> perfect;
  for (int H = 6; H <= 85; ++H) {
    for (int h = 5; h < H; h += 7) {
      const double t = static_cast<double>(h) / H;
      perfect.push_back({"p" + std::to_string(h) + "_" + std::to_string(H), "r0", "IID", "30%", 1, h, H, t, t});
    }
  }
  const double zero_error = cs::stats::mlae(perfect);
  const double seven_eighths = cs::stats::log_absolute_error(0.5, 0.50875);
  std::vector<cs::stats::PredictionRecord> off{{"a", "r0", "IID", "30%", 1, 10, 20, 0.5, 0.50875},
                                               {"b", "r0", "IID", "30%", 1, 10, 20, 0.5, 0.49125}};
  const double seven_eighths_mean = cs::stats::mlae(off);
  const bool ok = zero_error == -3.0 && seven_eighths == 0.0 && seven_eighths_mean == 0.0;
  return {ok, "perfect=" + fmt_double(zero_error, 17) + " seven_eighths=" + fmt_double(seven_eighths, 17) +
                  " (mean " + fmt_double(seven_eighths_mean, 17) + ")"};
}

Outcome bit_exact_replay() {
  cs::test::TempDir tmp;
  bool ok = true;
  std::size_t images = 0;
  for (int type = 1; type <= 5; ++type) {
    const auto table = cs::domain::enumerate_pairs(type == 5);
    const auto domain = cs::domain::ratio_bin_domain(table);
    const auto split = cs::sampling::split_holdout(domain, 100 + type);
    const auto plan = cs::sampling::sample_iid(domain, split, 28, 100 + type);
    cs::dataset::DatasetSpec spec;
    spec.chart_type = static_cast<cs::stimulus::ChartType>(type);
    spec.roles = cs::dataset::roles_from_plan(plan, 120, 40, 40);
    spec.master_seed = 900 + type;
    spec.plans = {plan};
    const auto dir = tmp.path() / ("t" + std::to_string(type));
    const auto written = cs::dataset::generate_dataset(spec, dir, 1);
    const auto manifest = cs::dataset::read_manifest(dir);
    for (unsigned w : {1u, 2u, 8u}) {
      const auto replay = cs::dataset::replay_dataset(manifest, w);
      ok &= replay.identical && replay.mismatched_ids.empty();
      images += replay.images;
    }
    const auto parallel = cs::dataset::render_dataset(spec, 8);
    std::vector<std::uint64_t> hashes;
    for (const auto& role : written.roles) hashes.insert(hashes.end(), role.image_hashes.begin(), role.image_hashes.end());
    ok &= parallel.hashes == hashes;
  }
  return {ok, "types=1..5 replayed_images=" + std::to_string(images) + " workers={1,2,8}"};
}

struct Criterion {
  const char* name;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"domain", "Domain exactness", domain_exactness},
      {"split-plan", "Split/plan arithmetic", split_plan_arithmetic},
      {"cov-optimality", "COV optimality", cov_optimality},
      {"ttd-dominance", "TTD dominance", ttd_dominance},
      {"ood-knee", "OOD knee", ood_knee},
      {"stability", "Stability ordering", stability},
      {"stats-oracle", "Statistics oracle equivalence", stats_oracle},
      {"mlae-anchors", "MLAE anchors", mlae_anchors},
      {"replay", "Bit-exact replay", bit_exact_replay},
  };
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      only.insert(argv[++i]);
    } else if (arg == "--list") {
      for (const auto& c : criteria) std::printf("%s\n", c.name);
      return 0;
    } else {
      std::fprintf(stderr, "usage: acceptance [--only <name>]... [--list]\n");
      return 2;
    }
  }
  for (const auto& name : only) {
    if (std::none_of(criteria.begin(), criteria.end(), [&](const Criterion& c) { return name == c.name; })) {
      std::fprintf(stderr, "unknown criterion '%s'\n", name.c_str());
      return 2;
    }
  }
  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.name)) continue;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s [%s]: %s\n", o.pass ? "PASS" : "FAIL", c.title, c.name, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
