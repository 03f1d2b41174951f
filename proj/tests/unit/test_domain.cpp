#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "chartsample/domain.hpp"
#include "chartsample/errors.hpp"

namespace cs = chartsample;
using namespace cs::domain;

namespace {

// Independent bin oracle: lower_k = (55 + 10(k-1))/1000, so for a ratio h/H
// the index is floor((1000h - 55H) / 10H) + 1 in integer arithmetic.
int oracle_bin(int h, int H) { return (1000 * h - 55 * H) / (10 * H) + 1; }

std::set<std::pair<int, int>> reduced_ratios(const std::vector<HeightPair>& pairs) {
  std::set<std::pair<int, int>> out;
  for (const auto& p : pairs) {
    int a = p.h, b = p.H;
    while (b != 0) {
      const int t = a % b;
      a = b;
      b = t;
    }
    out.insert({p.h / a, p.H / a});
  }
  return out;
}

}  // namespace

TEST(Domain, FullTableCounts) {
  const auto table = enumerate_pairs(false);
  EXPECT_EQ(table.all_pairs().size(), 3240u);
  EXPECT_EQ(table.distinct_ratio_count(), 2081u);
  EXPECT_EQ(reduced_ratios(table.all_pairs()).size(), 2081u);
  EXPECT_EQ(table.bins().size(), 94u);
  EXPECT_EQ(table.bins().front().midpoint_percent(), 6);
  EXPECT_EQ(table.bins().back().midpoint_percent(), 99);
}

TEST(Domain, FullTableMatchesBruteForceEnumeration) {
  std::vector<HeightPair> expected;
  for (int H = 6; H <= 85; ++H)
    for (int h = 5; h < H; ++h) expected.push_back({h, H});
  auto got = enumerate_pairs(false).all_pairs();
  std::sort(got.begin(), got.end());
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(got, expected);
}

TEST(Domain, Type5TableCounts) {
  const auto table = enumerate_pairs(true);
  EXPECT_EQ(table.bins().size(), 93u);
  EXPECT_EQ(table.bins().front().midpoint_percent(), 6);
  EXPECT_EQ(table.bins().back().midpoint_percent(), 98);
  for (const auto& p : table.all_pairs()) EXPECT_LE(p.h + p.H, 90);
  EXPECT_TRUE(table.pairs_in(94).empty());
}

TEST(Domain, Type5BoundIsConfigurable) {
  const auto table = enumerate_pairs(true, 100);
  for (const auto& p : table.all_pairs()) EXPECT_LE(p.h + p.H, 100);
  EXPECT_GT(table.all_pairs().size(), enumerate_pairs(true).all_pairs().size());
}

TEST(Domain, BinFortyTwoHoldsDocumentedPairs) {
  const auto table = enumerate_pairs(false);
  const auto& pairs = table.pairs_in(bin_of(0.42).index);
  EXPECT_NE(std::find(pairs.begin(), pairs.end(), HeightPair{19, 45}), pairs.end());
  EXPECT_NE(std::find(pairs.begin(), pairs.end(), HeightPair{16, 38}), pairs.end());
}

TEST(Domain, EveryPairLiesInItsBin) {
  for (bool constrained : {false, true}) {
    const auto table = enumerate_pairs(constrained);
    std::size_t total = 0;
    for (const auto& [index, pairs] : table.pairs_by_bin()) {
      for (const auto& p : pairs) {
        EXPECT_EQ(oracle_bin(p.h, p.H), index);
        EXPECT_EQ(bin_index_of(p), index);
        // lower <= h/H < upper in exact integer arithmetic.
        EXPECT_GE(1000 * p.h, (55 + 10 * (index - 1)) * p.H);
        EXPECT_LT(1000 * p.h, (65 + 10 * (index - 1)) * p.H);
      }
      total += pairs.size();
    }
    EXPECT_EQ(total, table.all_pairs().size());
  }
}

TEST(Domain, DistinctRatiosPartitionIntoBins) {
  const auto table = enumerate_pairs(false);
  std::map<std::pair<int, int>, std::set<int>> bins_of_ratio;
  for (const auto& [index, pairs] : table.pairs_by_bin()) {
    for (const auto& p : pairs) {
      const auto r = reduced_ratios({p});
      bins_of_ratio[*r.begin()].insert(index);
    }
  }
  EXPECT_EQ(bins_of_ratio.size(), 2081u);
  for (const auto& [_, bins] : bins_of_ratio) EXPECT_EQ(bins.size(), 1u);
}

TEST(Domain, BinOfExamples) {
  EXPECT_EQ(bin_of(5.0 / 85.0).index, 1);
  EXPECT_DOUBLE_EQ(bin_of(5.0 / 85.0).midpoint(), 0.06);
  EXPECT_EQ(bin_of(84.0 / 85.0).index, 94);
  EXPECT_DOUBLE_EQ(bin_of(84.0 / 85.0).midpoint(), 0.99);
  EXPECT_EQ(bin_of(0.065).index, 2);
  EXPECT_EQ(bin_of(0.055).index, 1);
}

TEST(Domain, BinOfRejectsOutOfRange) {
  EXPECT_THROW(bin_of(0.05), cs::DomainError);
  EXPECT_THROW(bin_of(0.995), cs::DomainError);
  try {
    bin_of(1.5);
    FAIL();
  } catch (const cs::DomainError& e) {
    EXPECT_NE(std::string(e.what()).find("1.5"), std::string::npos);
  }
}

TEST(Domain, BinGeometry) {
  for (int k = 1; k <= 94; ++k) {
    const RatioBin b{k};
    EXPECT_NEAR(b.upper() - b.lower(), 0.01, 1e-15);
    EXPECT_NEAR(b.midpoint(), b.lower() + 0.005, 1e-15);
  }
}

TEST(Domain, EnumerationIsPure) {
  EXPECT_EQ(enumerate_pairs(false), enumerate_pairs(false));
  EXPECT_EQ(enumerate_pairs(true), enumerate_pairs(true));
}

TEST(Domain, DiscreteDomains) {
  const auto ratio = ratio_bin_domain(enumerate_pairs(false));
  EXPECT_EQ(ratio.size(), 94u);
  EXPECT_EQ(ratio.scale(), 100);
  EXPECT_EQ(ratio.ticks().front(), 6);
  EXPECT_EQ(ratio.ticks().back(), 99);
  EXPECT_EQ(ratio_bin_domain(enumerate_pairs(true)).size(), 93u);

  const auto heights = taller_height_domain();
  EXPECT_EQ(heights.size(), 80u);
  EXPECT_EQ(heights.ticks().front(), 6);
  EXPECT_EQ(heights.ticks().back(), 85);
  EXPECT_EQ(cell_count_domain().ticks().front(), 80);
  EXPECT_EQ(cell_count_domain().ticks().back(), 159);
  EXPECT_EQ(node_count_domain().ticks().front(), 20);
  EXPECT_EQ(node_count_domain().ticks().back(), 99);
  for (const auto& d : {ratio, heights, cell_count_domain(), node_count_domain()}) {
    EXPECT_TRUE(std::is_sorted(d.ticks().begin(), d.ticks().end()));
    EXPECT_EQ(std::adjacent_find(d.ticks().begin(), d.ticks().end()), d.ticks().end());
  }
}

TEST(Domain, TickConversion) {
  const auto ratio = ratio_bin_domain(enumerate_pairs(false));
  EXPECT_EQ(ratio.to_tick(0.42), 42);
  EXPECT_DOUBLE_EQ(ratio.to_value(42), 0.42);
  EXPECT_THROW(ratio.to_tick(0.425), cs::DomainError);
}

TEST(Domain, LabelsRoundTrip) {
  EXPECT_EQ(parse_domain_label("ratio"), DomainLabel::RatioBin);
  EXPECT_EQ(parse_domain_label("height"), DomainLabel::TallerHeight);
  for (auto l : {DomainLabel::RatioBin, DomainLabel::TallerHeight, DomainLabel::CellCount, DomainLabel::NodeCount}) {
    EXPECT_EQ(parse_domain_label(to_string(l)), l);
  }
}

TEST(Domain, CsvExport) {
  std::ostringstream out;
  write_pair_table_csv(out, enumerate_pairs(false));
  const auto text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "bin_index,midpoint,h,H,exact_ratio");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3241);
}
