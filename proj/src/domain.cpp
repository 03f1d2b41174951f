#include "chartsample/domain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <set>
#include <utility>

#include <fmt/format.h>

#include "chartsample/errors.hpp"

namespace chartsample::domain {

int bin_index_of(const HeightPair& pair) {
  // lower(i) = (55 + 10(i-1)) / 1000  <=  h/H  <  lower(i) + 1/100
  const long long scaled = 1000LL * pair.h - 55LL * pair.H;
  if (scaled < 0) throw DomainError(fmt::format("ratio {}/{} below the first bin", pair.h, pair.H));
  const auto index = static_cast<int>(scaled / (10LL * pair.H)) + 1;
  if (index > kBinCount) throw DomainError(fmt::format("ratio {}/{} above the last bin", pair.h, pair.H));
  return index;
}

RatioBin bin_of(double ratio) {
  if (!std::isfinite(ratio) || ratio < RatioBin{1}.lower() || ratio >= RatioBin{kBinCount}.upper()) {
    throw DomainError(fmt::format("ratio {} outside the binned range [0.055, 0.995)", ratio));
  }
  int index = std::clamp(static_cast<int>(std::floor((ratio - 0.055) * 100.0)) + 1, 1, kBinCount);
  // The bounds are the doubles nearest the decimal edges; nudge the estimate
  // so the half-open comparison is made against them.
  while (index > 1 && ratio < RatioBin{index}.lower()) --index;
  while (index < kBinCount && ratio >= RatioBin{index}.upper()) ++index;
  return RatioBin{index};
}

PairTable::PairTable(std::vector<HeightPair> pairs, std::optional<int> sum_bound)
    : all_pairs_(std::move(pairs)), sum_bound_(sum_bound) {
  for (const auto& p : all_pairs_) pairs_by_bin_[bin_index_of(p)].push_back(p);
  for (const auto& [index, members] : pairs_by_bin_) bins_.push_back(RatioBin{index});
}

const std::vector<HeightPair>& PairTable::pairs_in(int bin_index) const {
  static const std::vector<HeightPair> empty;
  const auto it = pairs_by_bin_.find(bin_index);
  return it == pairs_by_bin_.end() ? empty : it->second;
}

std::vector<HeightPair> PairTable::pairs_with_taller(int taller) const {
  std::vector<HeightPair> out;
  for (const auto& p : all_pairs_)
    if (p.H == taller) out.push_back(p);
  return out;
}

std::size_t PairTable::distinct_ratio_count() const {
  std::set<std::pair<int, int>> reduced;
  for (const auto& p : all_pairs_) {
    const int g = std::gcd(p.h, p.H);
    reduced.emplace(p.h / g, p.H / g);
  }
  return reduced.size();
}

PairTable enumerate_pairs(bool type5_constrained, int sum_bound) {
  std::vector<HeightPair> pairs;
  for (int H = kMinHeight + 1; H <= kMaxHeight; ++H) {
    for (int h = kMinHeight; h < H; ++h) {
      if (type5_constrained && h + H > sum_bound) continue;
      pairs.push_back({h, H});
    }
  }
  return PairTable(std::move(pairs), type5_constrained ? std::optional<int>(sum_bound) : std::nullopt);
}

void write_pair_table_csv(std::ostream& out, const PairTable& table) {
  out << "bin_index,midpoint,h,H,exact_ratio\n";
  for (const auto& [index, members] : table.pairs_by_bin()) {
    const RatioBin bin{index};
    for (const auto& p : members) {
      out << fmt::format("{},{:.2f},{},{},{:.12f}\n", index, bin.midpoint(), p.h, p.H, p.ratio());
    }
  }
}

std::string_view to_string(DomainLabel label) {
  switch (label) {
    case DomainLabel::RatioBin: return "ratio-bin";
    case DomainLabel::TallerHeight: return "taller-height";
    case DomainLabel::CellCount: return "cell-count";
    case DomainLabel::NodeCount: return "node-count";
  }
  return "unknown";
}

DomainLabel parse_domain_label(std::string_view text) {
  for (auto label : {DomainLabel::RatioBin, DomainLabel::TallerHeight, DomainLabel::CellCount, DomainLabel::NodeCount}) {
    if (to_string(label) == text) return label;
  }
  if (text == "ratio") return DomainLabel::RatioBin;
  if (text == "height") return DomainLabel::TallerHeight;
  throw ArgumentError(fmt::format("unknown domain label '{}'", text));
}

DiscreteDomain::DiscreteDomain(DomainLabel label, std::int64_t scale, std::vector<std::int64_t> ticks)
    : label_(label), scale_(scale), ticks_(std::move(ticks)) {
  if (scale_ <= 0) throw ArgumentError("domain scale must be positive");
  if (std::adjacent_find(ticks_.begin(), ticks_.end(), std::greater_equal<>()) != ticks_.end()) {
    throw ArgumentError("domain values must be strictly increasing");
  }
}

std::int64_t DiscreteDomain::to_tick(double value) const {
  const auto tick = static_cast<std::int64_t>(std::llround(value * static_cast<double>(scale_)));
  if (!contains(tick) || std::abs(to_value(tick) - value) > 1e-9) {
    throw DomainError(fmt::format("{} is not a value of the {} domain", value, to_string(label_)));
  }
  return tick;
}

bool DiscreteDomain::contains(std::int64_t tick) const {
  return std::binary_search(ticks_.begin(), ticks_.end(), tick);
}

namespace {

DiscreteDomain integer_range(DomainLabel label, int first, int last) {
  std::vector<std::int64_t> ticks(static_cast<std::size_t>(last - first + 1));
  std::iota(ticks.begin(), ticks.end(), first);
  return DiscreteDomain(label, 1, std::move(ticks));
}

}  // namespace

DiscreteDomain ratio_bin_domain(const PairTable& table) {
  std::vector<std::int64_t> ticks;
  for (const auto& bin : table.bins()) ticks.push_back(bin.midpoint_percent());
  return DiscreteDomain(DomainLabel::RatioBin, 100, std::move(ticks));
}

DiscreteDomain taller_height_domain() { return integer_range(DomainLabel::TallerHeight, kMinHeight + 1, kMaxHeight); }
DiscreteDomain cell_count_domain() { return integer_range(DomainLabel::CellCount, 80, 159); }
DiscreteDomain node_count_domain() { return integer_range(DomainLabel::NodeCount, 20, 99); }

DiscreteDomain make_domain(DomainLabel label, const PairTable& table) {
  switch (label) {
    case DomainLabel::RatioBin: return ratio_bin_domain(table);
    case DomainLabel::TallerHeight: return taller_height_domain();
    case DomainLabel::CellCount: return cell_count_domain();
    case DomainLabel::NodeCount: return node_count_domain();
  }
  throw ArgumentError("unknown domain label");
}

}  // namespace chartsample::domain
