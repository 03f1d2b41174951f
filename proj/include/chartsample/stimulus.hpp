#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "chartsample/domain.hpp"
#include "chartsample/image.hpp"
#include "chartsample/random.hpp"

namespace chartsample::stimulus {

/// The five Cleveland-McGill position/length bar layouts.
enum class ChartType : int {
  Adjacent = 1,          // grouped, targets adjacent in one group
  AlignedStacked = 2,    // two stacks, targets are the bottom segments
  Separated = 3,         // grouped, targets in different groups
  UnalignedStacked = 4,  // two stacks, targets sit on random bases
  Divided = 5,           // one stack holds both targets (h + H bounded)
};

ChartType chart_type_from_int(int id);
bool is_grouped(ChartType type);

/// Fixed drawing constants. Every dataset manifest records them.
struct Appearance {
  int canvas = 100;
  int baseline = 99;  // row of the shared bottom edge
  int grouped_bar_width = 8;
  int within_group_gap = 1;
  int between_group_gap = 10;
  int bars_per_group = 5;
  int stacked_bar_width = 30;
  int stacked_group_gap = 20;
  int segments_per_stack = 4;
  int dot_size = 1;
  int grouped_dot_offset = 3;  // rows above the baseline
  int min_bar = domain::kMinHeight;
  int max_bar = domain::kMaxHeight;
  int type5_sum_bound = domain::kDefaultType5SumBound;
  std::uint8_t background = 255;
  std::uint8_t ink = 0;

  bool operator==(const Appearance&) const = default;
};

nlohmann::json to_json(const Appearance& appearance);
Appearance appearance_from_json(const nlohmann::json& doc);

enum class SplitRole { Train, Validation, Test };

std::string_view to_string(SplitRole role);
SplitRole parse_split_role(std::string_view text);

struct StimulusRecord {
  std::string image_id;
  ChartType chart_type = ChartType::Adjacent;
  domain::HeightPair pair;
  double bin = 0.0;    // ratio-bin midpoint of truth
  double truth = 0.0;  // h / H
  std::uint64_t distractor_seed = 0;
  SplitRole role = SplitRole::Train;
};

/// Builds a record for a pair; truth and bin are derived from it.
StimulusRecord make_record(std::string image_id, ChartType type, domain::HeightPair pair, std::uint64_t distractor_seed,
                           SplitRole role);

/// Inclusive pixel rectangle of a 1-px bar outline.
struct Rect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  bool on_outline(int x, int y) const {
    const bool inside = x >= x0 && x <= x1 && y >= y0 && y <= y1;
    return inside && (x == x0 || x == x1 || y == y0 || y == y1);
  }
  bool strictly_inside(int x, int y) const { return x > x0 && x < x1 && y > y0 && y < y1; }
};

struct Point {
  int x = 0, y = 0;
};

/// Geometry of one stimulus before rasterization. targets[0] is the bar of
/// height h, targets[1] the bar of height H; both index into bars.
struct ChartLayout {
  std::vector<Rect> bars;
  std::array<std::size_t, 2> targets{};
  std::array<Point, 2> dots{};
};

/// Resolves bar positions and distractor heights. Throws RenderError when the
/// record violates its chart type's geometry.
ChartLayout layout_chart(const StimulusRecord& record, const Appearance& appearance);

GrayImage rasterize(const ChartLayout& layout, const Appearance& appearance);

/// layout_chart + rasterize. Identical inputs give identical pixels.
GrayImage render(const StimulusRecord& record, const Appearance& appearance);

/// Uniform choice among the bin's pairs. Throws DomainError for empty bins.
domain::HeightPair choose_pair(int bin_index, const domain::PairTable& table, Rng& rng);
domain::HeightPair choose_pair(int bin_index, const domain::PairTable& table, std::uint64_t seed);

}  // namespace chartsample::stimulus
