#include "chartsample/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "chartsample/errors.hpp"
#include "chartsample/random.hpp"

namespace chartsample::sampling {

namespace {

std::vector<Tick> sorted(std::vector<Tick> v) {
  std::sort(v.begin(), v.end());
  return v;
}

SamplingPlan base_plan(Method method, const domain::DiscreteDomain& domain, const Split& split, std::size_t m,
                       std::uint64_t seed) {
  SamplingPlan plan;
  plan.method = method;
  plan.target = domain.label();
  plan.scale = domain.scale();
  plan.m = m;
  plan.seed = seed;
  plan.split = split;
  plan.level = Level::P30;
  return plan;
}

void require_m(std::size_t m, const Split& split) {
  if (m > split.pool.size()) {
    throw ArgumentError(fmt::format("selection count {} exceeds pool size {}", m, split.pool.size()));
  }
}

Tick abs_diff(Tick a, Tick b) { return a > b ? a - b : b - a; }

Tick nearest_distance(Tick v, std::span<const Tick> sorted_set) {
  const auto it = std::lower_bound(sorted_set.begin(), sorted_set.end(), v);
  Tick best = std::numeric_limits<Tick>::max();
  if (it != sorted_set.end()) best = *it - v;
  if (it != sorted_set.begin()) best = std::min(best, v - *std::prev(it));
  return best;
}

std::vector<Tick> to_ticks(const nlohmann::json& values, std::int64_t scale) {
  std::vector<Tick> out;
  for (const auto& v : values) out.push_back(std::llround(v.get<double>() * static_cast<double>(scale)));
  return out;
}

nlohmann::json to_values(std::span<const Tick> ticks, std::int64_t scale) {
  auto arr = nlohmann::json::array();
  for (auto t : ticks) arr.push_back(static_cast<double>(t) / static_cast<double>(scale));
  return arr;
}

}  // namespace

std::string_view to_string(Method method) {
  switch (method) {
    case Method::IID: return "IID";
    case Method::COV: return "COV";
    case Method::ADV: return "ADV";
    case Method::OodLeft: return "OOD";
    case Method::OodRight: return "OOD-right";
    case Method::IidLarge: return "IID-LARGE";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "IID" || text == "iid") return Method::IID;
  if (text == "COV" || text == "cov") return Method::COV;
  if (text == "ADV" || text == "adv") return Method::ADV;
  if (text == "OOD" || text == "OOD-left" || text == "ood") return Method::OodLeft;
  if (text == "OOD-right" || text == "OOD-symmetric") return Method::OodRight;
  if (text == "IID-LARGE" || text == "IID-large") return Method::IidLarge;
  throw ArgumentError(fmt::format("unknown sampling method '{}'", text));
}

std::string_view to_string(Level level) {
  switch (level) {
    case Level::P30: return "30%";
    case Level::P15: return "15%";
    case Level::P7_5: return "7.5%";
    case Level::P3_75: return "3.75%";
  }
  return "unknown";
}

Level parse_level(std::string_view text) {
  for (auto level : kAllLevels) {
    auto label = to_string(level);
    if (text == label || text == label.substr(0, label.size() - 1)) return level;
  }
  throw ArgumentError(fmt::format("unknown downsampling level '{}'", text));
}

DownsampleLevel downsample_level(Level level, std::size_t domain_size) {
  // Percentages in basis points keep the floor exact.
  std::size_t bp = 0;
  switch (level) {
    case Level::P30: bp = 3000; break;
    case Level::P15: bp = 1500; break;
    case Level::P7_5: bp = 750; break;
    case Level::P3_75: bp = 375; break;
  }
  return {level, domain_size * bp / 10000};
}

std::vector<double> SamplingPlan::order_values() const {
  std::vector<double> out;
  for (auto t : order) out.push_back(value(t));
  return out;
}

std::vector<double> SamplingPlan::test_values() const {
  std::vector<double> out;
  for (auto t : split.test) out.push_back(value(t));
  return out;
}

Split split_holdout(const domain::DiscreteDomain& domain, std::uint64_t seed) {
  const std::size_t n = domain.size();
  if (n < 10) throw ArgumentError(fmt::format("holdout split needs at least 10 domain values, got {}", n));
  // 20% rounded to nearest: 94 -> 19, 80 -> 16.
  const std::size_t holdout = (n * 20 + 50) / 100;
  std::vector<Tick> shuffled = domain.ticks();
  Rng rng(seed);
  // Partial Fisher-Yates: position i receives the i-th draw.
  for (std::size_t i = 0; i < 2 * holdout; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(shuffled[i], shuffled[j]);
  }
  Split split;
  split.seed = seed;
  split.test = sorted({shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(holdout)});
  split.validation = sorted({shuffled.begin() + static_cast<std::ptrdiff_t>(holdout),
                             shuffled.begin() + static_cast<std::ptrdiff_t>(2 * holdout)});
  split.pool = sorted({shuffled.begin() + static_cast<std::ptrdiff_t>(2 * holdout), shuffled.end()});
  return split;
}

SamplingPlan sample_iid(const domain::DiscreteDomain& domain, const Split& split, std::size_t m, std::uint64_t seed) {
  require_m(m, split);
  auto plan = base_plan(Method::IID, domain, split, m, seed);
  std::vector<Tick> pool = sorted(split.pool);
  Rng rng(seed);
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  plan.order.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
  return plan;
}

SamplingPlan sample_iid_large(const domain::DiscreteDomain& domain, const Split& split, std::uint64_t seed) {
  auto plan = sample_iid(domain, split, split.pool.size(), seed);
  plan.method = Method::IidLarge;
  plan.level.reset();
  return plan;
}

SamplingPlan sample_cov(const domain::DiscreteDomain& domain, const Split& split, std::size_t m) {
  if (m < 2) throw ArgumentError(fmt::format("coverage sampling needs m >= 2 (both extremes), got {}", m));
  require_m(m, split);
  auto plan = base_plan(Method::COV, domain, split, m, 0);
  const std::vector<Tick> pool = sorted(split.pool);
  const std::size_t n = pool.size();
  std::vector<bool> taken(n, false);
  std::vector<Tick> nearest(n, std::numeric_limits<Tick>::max());

  auto take = [&](std::size_t idx) {
    taken[idx] = true;
    plan.order.push_back(pool[idx]);
    for (std::size_t i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], abs_diff(pool[i], pool[idx]));
  };

  take(0);
  take(n - 1);
  while (plan.order.size() < m) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      // Ascending scan with strict '>' keeps the smaller value on ties.
      if (best == n || nearest[i] > nearest[best]) best = i;
    }
    take(best);
  }
  return plan;
}

SamplingPlan sample_adv(const domain::DiscreteDomain& domain, const Split& split, std::size_t m, AdvDistance distance) {
  if (split.test.empty()) throw ArgumentError("adversarial sampling needs a non-empty test set");
  require_m(m, split);
  auto plan = base_plan(Method::ADV, domain, split, m, 0);
  const std::vector<Tick> test = sorted(split.test);
  struct Scored {
    Tick value;
    Tick score;
  };
  std::vector<Scored> scored;
  for (auto v : sorted(split.pool)) {
    Tick score = 0;
    if (distance == AdvDistance::Nearest) {
      score = nearest_distance(v, test);
    } else {
      for (auto t : test) score += abs_diff(v, t);
    }
    scored.push_back({v, score});
  }
  std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.value < b.value;
  });
  for (std::size_t i = 0; i < m; ++i) plan.order.push_back(scored[i].value);
  return plan;
}

SamplingPlan sample_ood(const domain::DiscreteDomain& domain, const Split& split, std::size_t m, Side side) {
  require_m(m, split);
  auto plan = base_plan(side == Side::Left ? Method::OodLeft : Method::OodRight, domain, split, m, 0);
  const std::vector<Tick> pool = sorted(split.pool);
  if (side == Side::Left) {
    plan.order.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(m));
  } else {
    plan.order.assign(pool.rbegin(), pool.rbegin() + static_cast<std::ptrdiff_t>(m));
  }
  return plan;
}

SamplingPlan make_plan(Method method, const domain::DiscreteDomain& domain, const Split& split, std::size_t m,
                       std::uint64_t seed, AdvDistance adv_distance) {
  switch (method) {
    case Method::IID: return sample_iid(domain, split, m, seed);
    case Method::COV: return sample_cov(domain, split, m);
    case Method::ADV: return sample_adv(domain, split, m, adv_distance);
    case Method::OodLeft: return sample_ood(domain, split, m, Side::Left);
    case Method::OodRight: return sample_ood(domain, split, m, Side::Right);
    case Method::IidLarge: return sample_iid_large(domain, split, seed);
  }
  throw ArgumentError("unknown sampling method");
}

SamplingPlan downsample(const SamplingPlan& plan, const DownsampleLevel& level) {
  if (level.count > plan.order.size()) {
    throw ArgumentError(fmt::format("downsampling to {} values but the plan only selected {}", level.count,
                                    plan.order.size()));
  }
  SamplingPlan out = plan;
  out.order.resize(level.count);
  out.m = level.count;
  out.level = level.level;
  return out;
}

double training_test_distance(std::span<const double> train, std::span<const double> test) {
  if (train.empty() || test.empty()) throw ArgumentError("training-test distance needs non-empty sets");
  std::vector<double> sorted_train(train.begin(), train.end());
  std::sort(sorted_train.begin(), sorted_train.end());
  double total = 0.0;
  for (double t : test) {
    const auto it = std::lower_bound(sorted_train.begin(), sorted_train.end(), t);
    double best = std::numeric_limits<double>::infinity();
    if (it != sorted_train.end()) best = *it - t;
    if (it != sorted_train.begin()) best = std::min(best, t - *std::prev(it));
    total += best;
  }
  return total / static_cast<double>(test.size());
}

double training_test_distance(std::span<const Tick> train, std::span<const Tick> test, std::int64_t scale) {
  if (train.empty() || test.empty()) throw ArgumentError("training-test distance needs non-empty sets");
  const std::vector<Tick> sorted_train = sorted({train.begin(), train.end()});
  Tick total = 0;
  for (auto t : test) total += nearest_distance(t, sorted_train);
  return static_cast<double>(total) / static_cast<double>(scale) / static_cast<double>(test.size());
}

double plan_training_test_distance(const SamplingPlan& plan) {
  return training_test_distance(std::span<const Tick>(plan.order), std::span<const Tick>(plan.split.test), plan.scale);
}

std::int64_t tick_scale(domain::DomainLabel label) { return label == domain::DomainLabel::RatioBin ? 100 : 1; }

nlohmann::json to_json(const Split& split, std::int64_t scale) {
  return {{"seed", split.seed},
          {"test", to_values(split.test, scale)},
          {"validation", to_values(split.validation, scale)},
          {"pool", to_values(split.pool, scale)}};
}

nlohmann::json to_json(const SamplingPlan& plan) {
  nlohmann::json doc = {{"method", to_string(plan.method)},
                        {"target", domain::to_string(plan.target)},
                        {"seed", plan.seed},
                        {"m", plan.m},
                        {"order", to_values(plan.order, plan.scale)},
                        {"split", to_json(plan.split, plan.scale)}};
  doc["level"] = plan.level ? nlohmann::json(to_string(*plan.level)) : nlohmann::json(nullptr);
  return doc;
}

SamplingPlan plan_from_json(const nlohmann::json& doc) {
  try {
    SamplingPlan plan;
    plan.method = parse_method(doc.at("method").get<std::string>());
    plan.target = domain::parse_domain_label(doc.at("target").get<std::string>());
    plan.scale = tick_scale(plan.target);
    plan.seed = doc.at("seed").get<std::uint64_t>();
    plan.m = doc.at("m").get<std::size_t>();
    plan.order = to_ticks(doc.at("order"), plan.scale);
    const auto& split = doc.at("split");
    plan.split.seed = split.value("seed", std::uint64_t{0});
    plan.split.test = to_ticks(split.at("test"), plan.scale);
    plan.split.validation = to_ticks(split.at("validation"), plan.scale);
    plan.split.pool = to_ticks(split.at("pool"), plan.scale);
    if (doc.contains("level") && !doc["level"].is_null()) plan.level = parse_level(doc["level"].get<std::string>());
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(fmt::format("malformed sampling plan: {}", e.what()));
  }
}

}  // namespace chartsample::sampling
