#include "chartsample/stimulus.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "chartsample/errors.hpp"

namespace chartsample::stimulus {

ChartType chart_type_from_int(int id) {
  if (id < 1 || id > 5) throw ArgumentError(fmt::format("chart type must be 1..5, got {}", id));
  return static_cast<ChartType>(id);
}

bool is_grouped(ChartType type) { return type == ChartType::Adjacent || type == ChartType::Separated; }

nlohmann::json to_json(const Appearance& a) {
  return {{"canvas", a.canvas},
          {"baseline", a.baseline},
          {"grouped_bar_width", a.grouped_bar_width},
          {"within_group_gap", a.within_group_gap},
          {"between_group_gap", a.between_group_gap},
          {"bars_per_group", a.bars_per_group},
          {"stacked_bar_width", a.stacked_bar_width},
          {"stacked_group_gap", a.stacked_group_gap},
          {"segments_per_stack", a.segments_per_stack},
          {"dot_size", a.dot_size},
          {"grouped_dot_offset", a.grouped_dot_offset},
          {"min_bar", a.min_bar},
          {"max_bar", a.max_bar},
          {"type5_sum_bound", a.type5_sum_bound},
          {"palette", {{"background", a.background}, {"ink", a.ink}}}};
}

Appearance appearance_from_json(const nlohmann::json& doc) {
  Appearance a;
  a.canvas = doc.at("canvas");
  a.baseline = doc.at("baseline");
  a.grouped_bar_width = doc.at("grouped_bar_width");
  a.within_group_gap = doc.at("within_group_gap");
  a.between_group_gap = doc.at("between_group_gap");
  a.bars_per_group = doc.at("bars_per_group");
  a.stacked_bar_width = doc.at("stacked_bar_width");
  a.stacked_group_gap = doc.at("stacked_group_gap");
  a.segments_per_stack = doc.at("segments_per_stack");
  a.dot_size = doc.at("dot_size");
  a.grouped_dot_offset = doc.at("grouped_dot_offset");
  a.min_bar = doc.at("min_bar");
  a.max_bar = doc.at("max_bar");
  a.type5_sum_bound = doc.at("type5_sum_bound");
  a.background = doc.at("palette").at("background");
  a.ink = doc.at("palette").at("ink");
  return a;
}

std::string_view to_string(SplitRole role) {
  switch (role) {
    case SplitRole::Train: return "train";
    case SplitRole::Validation: return "validation";
    case SplitRole::Test: return "test";
  }
  return "unknown";
}

SplitRole parse_split_role(std::string_view text) {
  if (text == "train") return SplitRole::Train;
  if (text == "validation" || text == "val") return SplitRole::Validation;
  if (text == "test") return SplitRole::Test;
  throw ArgumentError(fmt::format("unknown split role '{}'", text));
}

StimulusRecord make_record(std::string image_id, ChartType type, domain::HeightPair pair, std::uint64_t distractor_seed,
                           SplitRole role) {
  StimulusRecord r;
  r.image_id = std::move(image_id);
  r.chart_type = type;
  r.pair = pair;
  r.truth = pair.ratio();
  r.bin = domain::RatioBin{domain::bin_index_of(pair)}.midpoint();
  r.distractor_seed = distractor_seed;
  r.role = role;
  return r;
}

namespace {

class StackBuilder {
 public:
  StackBuilder(const Appearance& a, int x0) : a_(a), x0_(x0), bottom_(a.baseline) {}

  std::size_t push(ChartLayout& layout, int height, const StimulusRecord& record) {
    if (bottom_ - height < 0) {
      throw RenderError(fmt::format("{}: stacked segments exceed the canvas height", record.image_id));
    }
    layout.bars.push_back({x0_, bottom_ - height, x0_ + a_.stacked_bar_width - 1, bottom_});
    bottom_ -= height;
    ++segments_;
    return layout.bars.size() - 1;
  }

  // Distractor segments fill the remaining slots while at least min_bar rows remain.
  void fill(ChartLayout& layout, Rng& rng, const StimulusRecord& record) {
    while (segments_ < a_.segments_per_stack) {
      const int room = bottom_;
      if (room < a_.min_bar) break;
      push(layout, static_cast<int>(rng.between(a_.min_bar, std::min(a_.max_bar, room))), record);
    }
  }

  int room() const { return bottom_; }
  int x0() const { return x0_; }

 private:
  const Appearance& a_;
  int x0_;
  int bottom_;
  int segments_ = 0;
};

Point stacked_dot(const Rect& r, const Appearance& a) {
  return {r.x0 + a.stacked_bar_width / 2, r.y1 - (r.y1 - r.y0) / 2};
}

ChartLayout layout_grouped(const StimulusRecord& record, const Appearance& a, Rng& rng) {
  const int group_width = a.bars_per_group * a.grouped_bar_width + (a.bars_per_group - 1) * a.within_group_gap;
  const int total = 2 * group_width + a.between_group_gap;
  const int margin = (a.canvas - total) / 2;
  if (margin < 0) throw RenderError(fmt::format("{}: grouped layout wider than the canvas", record.image_id));

  // Target slots as (group, bar); which target is the shorter is random.
  const std::array<std::pair<int, int>, 2> slots = record.chart_type == ChartType::Adjacent
                                                       ? std::array<std::pair<int, int>, 2>{{{0, 1}, {0, 2}}}
                                                       : std::array<std::pair<int, int>, 2>{{{0, 2}, {1, 2}}};
  const bool shorter_first = rng.coin();
  const std::pair<int, int> short_slot = shorter_first ? slots[0] : slots[1];
  const std::pair<int, int> tall_slot = shorter_first ? slots[1] : slots[0];

  ChartLayout layout;
  for (int g = 0; g < 2; ++g) {
    for (int k = 0; k < a.bars_per_group; ++k) {
      const int x0 = margin + g * (group_width + a.between_group_gap) + k * (a.grouped_bar_width + a.within_group_gap);
      int height = 0;
      const std::pair<int, int> slot{g, k};
      if (slot == short_slot) {
        height = record.pair.h;
        layout.targets[0] = layout.bars.size();
      } else if (slot == tall_slot) {
        height = record.pair.H;
        layout.targets[1] = layout.bars.size();
      } else {
        height = static_cast<int>(rng.between(a.min_bar, a.max_bar));
      }
      if (a.baseline - height < 0) throw RenderError(fmt::format("{}: bar taller than the canvas", record.image_id));
      layout.bars.push_back({x0, a.baseline - height, x0 + a.grouped_bar_width - 1, a.baseline});
    }
  }
  for (int t = 0; t < 2; ++t) {
    const Rect& r = layout.bars[layout.targets[static_cast<std::size_t>(t)]];
    layout.dots[static_cast<std::size_t>(t)] = {r.x0 + a.grouped_bar_width / 2, a.baseline - a.grouped_dot_offset};
  }
  return layout;
}

ChartLayout layout_stacked(const StimulusRecord& record, const Appearance& a, Rng& rng) {
  const int total = 2 * a.stacked_bar_width + a.stacked_group_gap;
  const int margin = (a.canvas - total) / 2;
  if (margin < 0) throw RenderError(fmt::format("{}: stacked layout wider than the canvas", record.image_id));
  std::array<StackBuilder, 2> stacks{StackBuilder(a, margin), StackBuilder(a, margin + a.stacked_bar_width + a.stacked_group_gap)};
  const std::array<int, 2> heights{record.pair.h, record.pair.H};

  ChartLayout layout;
  switch (record.chart_type) {
    case ChartType::AlignedStacked: {
      const bool shorter_left = rng.coin();
      for (int s = 0; s < 2; ++s) {
        const int t = (s == 0) == shorter_left ? 0 : 1;
        layout.targets[static_cast<std::size_t>(t)] = stacks[static_cast<std::size_t>(s)].push(layout, heights[static_cast<std::size_t>(t)], record);
        stacks[static_cast<std::size_t>(s)].fill(layout, rng, record);
      }
      break;
    }
    case ChartType::UnalignedStacked: {
      const bool shorter_left = rng.coin();
      for (int s = 0; s < 2; ++s) {
        const int t = (s == 0) == shorter_left ? 0 : 1;
        auto& stack = stacks[static_cast<std::size_t>(s)];
        const int target = heights[static_cast<std::size_t>(t)];
        const int base_room = std::min(a.max_bar, stack.room() - target);
        if (base_room < a.min_bar) {
          throw RenderError(fmt::format("{}: no room for a base segment under the target", record.image_id));
        }
        stack.push(layout, static_cast<int>(rng.between(a.min_bar, base_room)), record);
        layout.targets[static_cast<std::size_t>(t)] = stack.push(layout, target, record);
        stack.fill(layout, rng, record);
      }
      break;
    }
    case ChartType::Divided: {
      if (record.pair.h + record.pair.H > a.type5_sum_bound) {
        throw RenderError(fmt::format("{}: divided bar needs h + H <= {}, got {} + {}", record.image_id,
                                      a.type5_sum_bound, record.pair.h, record.pair.H));
      }
      const int target_stack = rng.coin() ? 0 : 1;
      const bool shorter_below = rng.coin();
      auto& stack = stacks[static_cast<std::size_t>(target_stack)];
      for (int t : shorter_below ? std::array<int, 2>{0, 1} : std::array<int, 2>{1, 0}) {
        layout.targets[static_cast<std::size_t>(t)] = stack.push(layout, heights[static_cast<std::size_t>(t)], record);
      }
      stack.fill(layout, rng, record);
      stacks[static_cast<std::size_t>(1 - target_stack)].fill(layout, rng, record);
      break;
    }
    default:
      throw RenderError(fmt::format("{}: not a stacked chart type", record.image_id));
  }
  for (int t = 0; t < 2; ++t) {
    layout.dots[static_cast<std::size_t>(t)] = stacked_dot(layout.bars[layout.targets[static_cast<std::size_t>(t)]], a);
  }
  return layout;
}

void draw_outline(GrayImage& img, const Rect& r, std::uint8_t ink) {
  for (int x = r.x0; x <= r.x1; ++x) {
    img.at(x, r.y0) = ink;
    img.at(x, r.y1) = ink;
  }
  for (int y = r.y0; y <= r.y1; ++y) {
    img.at(r.x0, y) = ink;
    img.at(r.x1, y) = ink;
  }
}

}  // namespace

ChartLayout layout_chart(const StimulusRecord& record, const Appearance& appearance) {
  const auto& p = record.pair;
  if (!p.valid() || p.h < appearance.min_bar || p.H > appearance.max_bar) {
    throw RenderError(fmt::format("{}: invalid target heights ({}, {})", record.image_id, p.h, p.H));
  }
  Rng rng(record.distractor_seed);
  return is_grouped(record.chart_type) ? layout_grouped(record, appearance, rng)
                                       : layout_stacked(record, appearance, rng);
}

GrayImage rasterize(const ChartLayout& layout, const Appearance& appearance) {
  GrayImage img(appearance.canvas, appearance.canvas, appearance.background);
  for (const auto& bar : layout.bars) {
    if (bar.x0 < 0 || bar.y0 < 0 || bar.x1 >= appearance.canvas || bar.y1 >= appearance.canvas) {
      throw RenderError("bar outline outside the canvas");
    }
    draw_outline(img, bar, appearance.ink);
  }
  for (const auto& dot : layout.dots) {
    for (int dy = 0; dy < appearance.dot_size; ++dy)
      for (int dx = 0; dx < appearance.dot_size; ++dx) img.at(dot.x + dx, dot.y + dy) = appearance.ink;
  }
  return img;
}

GrayImage render(const StimulusRecord& record, const Appearance& appearance) {
  return rasterize(layout_chart(record, appearance), appearance);
}

domain::HeightPair choose_pair(int bin_index, const domain::PairTable& table, Rng& rng) {
  const auto& members = table.pairs_in(bin_index);
  if (members.empty()) {
    throw DomainError(fmt::format("ratio bin {} (midpoint {:.2f}) has no height pairs", bin_index,
                                  domain::RatioBin{bin_index}.midpoint()));
  }
  return members[static_cast<std::size_t>(rng.below(members.size()))];
}

domain::HeightPair choose_pair(int bin_index, const domain::PairTable& table, std::uint64_t seed) {
  Rng rng(seed);
  return choose_pair(bin_index, table, rng);
}

}  // namespace chartsample::stimulus
