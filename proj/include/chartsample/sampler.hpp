#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "chartsample/domain.hpp"

namespace chartsample::sampling {

using Tick = std::int64_t;

enum class Method { IID, COV, ADV, OodLeft, OodRight, IidLarge };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);

/// Holdout partition of a domain. All three lists are sorted ascending and
/// hold domain ticks (see DiscreteDomain).
struct Split {
  std::vector<Tick> test;
  std::vector<Tick> validation;
  std::vector<Tick> pool;
  std::uint64_t seed = 0;

  bool operator==(const Split&) const = default;
};

enum class Level { P30, P15, P7_5, P3_75 };

inline constexpr Level kAllLevels[] = {Level::P30, Level::P15, Level::P7_5, Level::P3_75};

std::string_view to_string(Level level);
Level parse_level(std::string_view text);

/// A downsampling level resolved against a domain size.
struct DownsampleLevel {
  Level level = Level::P30;
  std::size_t count = 0;

  std::string_view label() const { return to_string(level); }
};

/// floor(percent * |domain|): 28/14/7/3 for 94 ratio bins, 24/12/6/3 for 80 heights.
DownsampleLevel downsample_level(Level level, std::size_t domain_size);

/// How ADV scores a pool value against the test set.
enum class AdvDistance { Nearest, Sum };

struct SamplingPlan {
  Method method = Method::IID;
  domain::DomainLabel target = domain::DomainLabel::RatioBin;
  std::int64_t scale = 1;
  std::size_t m = 0;
  std::vector<Tick> order;
  std::uint64_t seed = 0;
  Split split;
  std::optional<Level> level;

  double value(Tick tick) const { return static_cast<double>(tick) / static_cast<double>(scale); }
  std::vector<double> order_values() const;
  std::vector<double> test_values() const;

  bool operator==(const SamplingPlan&) const = default;
};

/// Seeded simple random sampling of test, then validation (round(20%) each);
/// the remainder is the training pool.
Split split_holdout(const domain::DiscreteDomain& domain, std::uint64_t seed);

SamplingPlan sample_iid(const domain::DiscreteDomain& domain, const Split& split, std::size_t m, std::uint64_t seed);

/// The whole pool, in draw order.
SamplingPlan sample_iid_large(const domain::DiscreteDomain& domain, const Split& split, std::uint64_t seed);

/// Greedy farthest-point selection: pool minimum, pool maximum, then the
/// value maximizing the distance to its nearest selected value. Ties go to
/// the smaller value.
SamplingPlan sample_cov(const domain::DiscreteDomain& domain, const Split& split, std::size_t m);

/// Pool values ranked by distance to the test set, farthest first. Ties go
/// to the smaller value.
SamplingPlan sample_adv(const domain::DiscreteDomain& domain, const Split& split, std::size_t m,
                        AdvDistance distance = AdvDistance::Nearest);

enum class Side { Left, Right };

/// Left: the m smallest pool values ascending. Right: the m largest descending.
SamplingPlan sample_ood(const domain::DiscreteDomain& domain, const Split& split, std::size_t m, Side side);

/// Dispatches to the method-specific sampler. m is ignored for IID-LARGE.
SamplingPlan make_plan(Method method, const domain::DiscreteDomain& domain, const Split& split, std::size_t m,
                       std::uint64_t seed, AdvDistance adv_distance = AdvDistance::Nearest);

/// Selection-order prefix of length level.count.
SamplingPlan downsample(const SamplingPlan& plan, const DownsampleLevel& level);

/// Mean over test values of the distance to the closest training value.
double training_test_distance(std::span<const double> train, std::span<const double> test);
/// Same metric evaluated exactly on integer ticks, returned in domain units.
double training_test_distance(std::span<const Tick> train, std::span<const Tick> test, std::int64_t scale);

/// TTD between a plan's selection and its split's test set.
double plan_training_test_distance(const SamplingPlan& plan);

std::int64_t tick_scale(domain::DomainLabel label);

nlohmann::json to_json(const Split& split, std::int64_t scale);
nlohmann::json to_json(const SamplingPlan& plan);
SamplingPlan plan_from_json(const nlohmann::json& doc);

}  // namespace chartsample::sampling
