#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chartsample::domain {

inline constexpr int kMinHeight = 5;
inline constexpr int kMaxHeight = 85;
inline constexpr int kBinCount = 94;
inline constexpr int kDefaultType5SumBound = 90;

/// Heights (pixels) of the two marked bars; h is the shorter one.
struct HeightPair {
  int h = 0;
  int H = 0;

  double ratio() const { return static_cast<double>(h) / static_cast<double>(H); }
  bool valid() const { return h >= kMinHeight && H <= kMaxHeight && h < H; }

  auto operator<=>(const HeightPair&) const = default;
};

/// One of the 94 half-open ratio bins [lower, upper), width 0.01, starting at
/// 0.055. Bins are identified by their midpoint rounded to two decimals.
struct RatioBin {
  int index = 0;  // 1..94

  /// Midpoint in hundredths: 6 for bin 1, 99 for bin 94.
  int midpoint_percent() const { return index + 5; }
  double midpoint() const { return midpoint_percent() / 100.0; }
  double lower() const { return (55 + 10 * (index - 1)) / 1000.0; }
  double upper() const { return (65 + 10 * (index - 1)) / 1000.0; }

  auto operator<=>(const RatioBin&) const = default;
};

/// Bin of an exact integer ratio h/H, decided in integer arithmetic.
int bin_index_of(const HeightPair& pair);

/// Bin containing a real ratio. Throws DomainError outside [0.055, 0.995).
RatioBin bin_of(double ratio);

/// Every (h, H) pair of the sampling domain grouped by ratio bin.
class PairTable {
 public:
  PairTable(std::vector<HeightPair> pairs, std::optional<int> sum_bound);

  const std::vector<RatioBin>& bins() const { return bins_; }
  const std::vector<HeightPair>& all_pairs() const { return all_pairs_; }
  const std::map<int, std::vector<HeightPair>>& pairs_by_bin() const { return pairs_by_bin_; }

  /// Pairs whose ratio lies in the bin; empty when the bin is not populated.
  const std::vector<HeightPair>& pairs_in(int bin_index) const;
  /// Pairs whose taller bar has the given height.
  std::vector<HeightPair> pairs_with_taller(int taller) const;

  std::size_t distinct_ratio_count() const;
  std::optional<int> sum_bound() const { return sum_bound_; }

  bool operator==(const PairTable&) const = default;

 private:
  std::vector<HeightPair> all_pairs_;
  std::map<int, std::vector<HeightPair>> pairs_by_bin_;
  std::vector<RatioBin> bins_;
  std::optional<int> sum_bound_;
};

/// The full (h, H) table. With the stacked-divided constraint, pairs with
/// h + H > sum_bound are removed and only non-empty bins are kept.
PairTable enumerate_pairs(bool type5_constrained, int sum_bound = kDefaultType5SumBound);

/// Audit export: bin_index,midpoint,h,H,exact_ratio
void write_pair_table_csv(std::ostream& out, const PairTable& table);

enum class DomainLabel { RatioBin, TallerHeight, CellCount, NodeCount };

std::string_view to_string(DomainLabel label);
DomainLabel parse_domain_label(std::string_view text);

/// A one-dimensional sampling axis. Values are stored as integer ticks on a
/// fixed scale (ratio bins use hundredths) so distances and ties are exact.
class DiscreteDomain {
 public:
  DiscreteDomain(DomainLabel label, std::int64_t scale, std::vector<std::int64_t> ticks);

  DomainLabel label() const { return label_; }
  std::int64_t scale() const { return scale_; }
  const std::vector<std::int64_t>& ticks() const { return ticks_; }
  std::size_t size() const { return ticks_.size(); }

  double to_value(std::int64_t tick) const { return static_cast<double>(tick) / static_cast<double>(scale_); }
  std::int64_t to_tick(double value) const;  // throws DomainError if not a member
  bool contains(std::int64_t tick) const;

 private:
  DomainLabel label_;
  std::int64_t scale_;
  std::vector<std::int64_t> ticks_;
};

/// Midpoints of the table's non-empty bins (94, or 93 with the constraint).
DiscreteDomain ratio_bin_domain(const PairTable& table);
/// Taller-bar heights 6..85.
DiscreteDomain taller_height_domain();
/// Cell counts 80..159.
DiscreteDomain cell_count_domain();
/// Node counts 20..99.
DiscreteDomain node_count_domain();

DiscreteDomain make_domain(DomainLabel label, const PairTable& table);

}  // namespace chartsample::domain
