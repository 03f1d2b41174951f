#include "chartsample/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <tuple>

#include <fmt/format.h>

#include "chartsample/errors.hpp"
#include "chartsample/sampler.hpp"

namespace chartsample::report {

namespace fs = std::filesystem;
using nlohmann::json;
using stats::PredictionRecord;

namespace {

// ---------------------------------------------------------------------------
// Canonical orderings so every output is independent of input order.

int method_rank(const std::string& m) {
  try {
    return static_cast<int>(sampling::parse_method(m));
  } catch (const std::exception&) {
    return 100;
  }
}

int level_rank(const std::string& l) {
  if (l == "full") return 50;
  try {
    return static_cast<int>(sampling::parse_level(l));
  } catch (const std::exception&) {
    return 100;
  }
}

bool run_less(const std::string& a, const std::string& b) {
  return std::tuple(a.size(), a) < std::tuple(b.size(), b);
}

struct MethodLess {
  bool operator()(const std::string& a, const std::string& b) const {
    return std::tuple(method_rank(a), a) < std::tuple(method_rank(b), b);
  }
};

struct LevelLess {
  bool operator()(const std::string& a, const std::string& b) const {
    return std::tuple(level_rank(a), a) < std::tuple(level_rank(b), b);
  }
};

struct GroupKey {
  std::string run, method, level;
  int chart_type = 0;
};

struct GroupKeyLess {
  bool operator()(const GroupKey& a, const GroupKey& b) const {
    if (a.chart_type != b.chart_type) return a.chart_type < b.chart_type;
    if (a.method != b.method) return MethodLess{}(a.method, b.method);
    if (a.level != b.level) return LevelLess{}(a.level, b.level);
    return run_less(a.run, b.run);
  }
};

using Groups = std::map<GroupKey, std::vector<PredictionRecord>, GroupKeyLess>;

Groups group_records(std::span<const PredictionRecord> records) {
  Groups g;
  for (const auto& r : records) g[{r.run_id, r.method, r.level, r.chart_type}].push_back(r);
  return g;
}

std::vector<double> trial_values(const std::vector<PredictionRecord>& records) {
  std::vector<double> out;
  for (const auto& t : stats::aggregate_by_pair(records)) out.push_back(t.value);
  return out;
}

std::string factor_value(const GroupKey& k, std::string_view variable) {
  if (variable == "method") return k.method;
  if (variable == "level") return k.level;
  return std::to_string(k.chart_type);
}

std::vector<std::string> ordered_values(const Groups& groups, std::string_view variable) {
  std::vector<std::string> values;
  for (const auto& [k, _] : groups) {
    auto v = factor_value(k, variable);
    if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
  }
  if (variable == "method") std::sort(values.begin(), values.end(), MethodLess{});
  else if (variable == "level") std::sort(values.begin(), values.end(), LevelLess{});
  else std::sort(values.begin(), values.end(), [](const std::string& a, const std::string& b) { return std::stoi(a) < std::stoi(b); });
  return values;
}

/// One-way analysis of `variable` over per-pair trials of the groups that
/// pass `filter`.
template <typename Filter>
json factor_analysis(const Groups& groups, std::string_view variable, std::string scope, Filter filter) {
  std::vector<stats::FactorLevel> levels;
  for (const auto& value : ordered_values(groups, variable)) {
    stats::FactorLevel level{value, {}};
    for (const auto& [k, recs] : groups) {
      if (factor_value(k, variable) != value || !filter(k)) continue;
      const auto trials = trial_values(recs);
      level.values.insert(level.values.end(), trials.begin(), trials.end());
    }
    if (!level.values.empty()) levels.push_back(std::move(level));
  }
  json out = {{"variable", variable}, {"scope", scope}};
  if (levels.size() < 2) return json();
  try {
    out["anova"] = stats::to_json(stats::analyze_factor(levels));
  } catch (const ArgumentError& e) {
    out["skipped"] = e.what();
  }
  return out;
}

double x_of(const PredictionRecord& r, domain::DomainLabel target) {
  if (target == domain::DomainLabel::TallerHeight) return r.H;
  return domain::bin_of(r.truth).midpoint();
}

std::string slug(std::string s) {
  for (auto& c : s) {
    if (c == '%') c = 'p';
    else if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-') c = '_';
  }
  return s;
}

std::string fixed(double v, int digits = 6) {
  if (!std::isfinite(v)) return "";
  return fmt::format("{:.{}f}", v, digits);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
  out << text;
}

}  // namespace

// ---------------------------------------------------------------------------
// Analysis

json analyze_predictions(std::span<const PredictionRecord> records, domain::DomainLabel target) {
  if (records.empty()) throw ArgumentError("no prediction records to analyze");
  const auto groups = group_records(records);
  json doc;
  doc["target"] = domain::to_string(target);
  doc["records"] = records.size();

  json group_rows = json::array();
  for (const auto& [k, recs] : groups) {
    group_rows.push_back({{"run_id", k.run},
                          {"method", k.method},
                          {"level", k.level},
                          {"chart_type", k.chart_type},
                          {"n", recs.size()},
                          {"pairs", stats::aggregate_by_pair(recs).size()},
                          {"mae", stats::mae(recs)},
                          {"mlae", stats::mlae(recs)}});
  }
  doc["groups"] = group_rows;

  const auto methods = ordered_values(groups, "method");
  const auto levels = ordered_values(groups, "level");
  const auto types = ordered_values(groups, "chart_type");
  json factors = json::array();
  auto add = [&](json f) {
    if (!f.is_null()) factors.push_back(std::move(f));
  };
  auto all = [](const GroupKey&) { return true; };
  add(factor_analysis(groups, "method", "all", all));
  add(factor_analysis(groups, "level", "all", all));
  add(factor_analysis(groups, "chart_type", "all", all));
  if (methods.size() > 1 && levels.size() > 1) {
    for (const auto& l : levels) {
      add(factor_analysis(groups, "method", "level=" + l, [&](const GroupKey& k) { return k.level == l; }));
    }
  }
  if (methods.size() > 1 && types.size() > 1) {
    for (const auto& t : types) {
      add(factor_analysis(groups, "method", "chart_type=" + t,
                          [&](const GroupKey& k) { return std::to_string(k.chart_type) == t; }));
    }
  }
  doc["factors"] = factors;

  // Pooled over runs: mean per-pair error with a 95% interval.
  json errors = json::array();
  for (const auto& t : types) {
    for (const auto& m : methods) {
      for (const auto& l : levels) {
        std::vector<PredictionRecord> pooled;
        std::vector<double> trials;
        for (const auto& [k, recs] : groups) {
          if (k.method != m || k.level != l || std::to_string(k.chart_type) != t) continue;
          pooled.insert(pooled.end(), recs.begin(), recs.end());
          const auto tv = trial_values(recs);
          trials.insert(trials.end(), tv.begin(), tv.end());
        }
        if (pooled.empty()) continue;
        json row = {{"chart_type", std::stoi(t)}, {"method", m},           {"level", l},
                    {"n", pooled.size()},         {"trials", trials.size()}, {"mae", stats::mae(pooled)},
                    {"mlae", stats::mlae(pooled)}};
        if (trials.size() >= 2) {
          const auto ci = stats::confidence_interval_95(trials);
          row["trial_mean"] = ci.mean;
          row["ci_lo"] = ci.lo;
          row["ci_hi"] = ci.hi;
        }
        errors.push_back(row);
      }
    }
  }
  doc["errors"] = errors;

  // Error per domain value (ratio bin midpoint or taller height).
  json by_value = json::array();
  for (const auto& m : methods) {
    for (const auto& l : levels) {
      std::map<double, std::tuple<double, double, std::size_t>> acc;
      for (const auto& [k, recs] : groups) {
        if (k.method != m || k.level != l) continue;
        for (const auto& r : recs) {
          auto& a = acc[x_of(r, target)];
          std::get<0>(a) += r.abs_error();
          std::get<1>(a) += r.prediction;
          ++std::get<2>(a);
        }
      }
      if (acc.empty()) continue;
      json xs = json::array(), mae = json::array(), pred = json::array(), n = json::array();
      for (const auto& [x, a] : acc) {
        const double c = static_cast<double>(std::get<2>(a));
        xs.push_back(x);
        mae.push_back(std::get<0>(a) / c);
        pred.push_back(std::get<1>(a) / c);
        n.push_back(std::get<2>(a));
      }
      by_value.push_back({{"method", m}, {"level", l}, {"x", xs}, {"mae", mae}, {"mean_prediction", pred}, {"n", n}});
    }
  }
  doc["by_value"] = by_value;

  // Intra-consistency: per-pair mean predictions correlated across levels.
  json consistency = json::array();
  for (const auto& m : methods) {
    std::vector<std::string> present;
    std::vector<std::map<std::pair<int, int>, std::pair<double, std::size_t>>> per_level;
    for (const auto& l : levels) {
      std::map<std::pair<int, int>, std::pair<double, std::size_t>> acc;
      for (const auto& [k, recs] : groups) {
        if (k.method != m || k.level != l) continue;
        for (const auto& r : recs) {
          auto& a = acc[{r.H, r.h}];
          a.first += r.prediction;
          ++a.second;
        }
      }
      if (!acc.empty()) {
        present.push_back(l);
        per_level.push_back(std::move(acc));
      }
    }
    if (present.size() < 2) continue;
    std::vector<std::pair<int, int>> common;
    for (const auto& [pair, _] : per_level.front()) {
      if (std::all_of(per_level.begin(), per_level.end(), [&](const auto& lv) { return lv.contains(pair); })) {
        common.push_back(pair);
      }
    }
    json entry = {{"method", m}, {"pairs", common.size()}};
    if (common.size() >= 3) {
      std::vector<std::vector<double>> series;
      for (const auto& lv : per_level) {
        std::vector<double> s;
        for (const auto& pair : common) s.push_back(lv.at(pair).first / static_cast<double>(lv.at(pair).second));
        series.push_back(std::move(s));
      }
      entry["matrix"] = stats::to_json(stats::consistency_matrix(present, series));
    } else {
      entry["skipped"] = "fewer than three pairs shared by all levels";
    }
    consistency.push_back(entry);
  }
  doc["consistency"] = consistency;
  return doc;
}

std::string tables_csv(const json& analysis) {
  std::string out = "scope,variable,F,df_between,df_within,p,eta2,effect,HSD\n";
  for (const auto& f : analysis.at("factors")) {
    const auto scope = f.at("scope").get<std::string>();
    const auto variable = f.at("variable").get<std::string>();
    if (!f.contains("anova")) {
      out += fmt::format("{},{},,,,,,skipped,\n", scope, variable);
      continue;
    }
    const auto& a = f.at("anova");
    auto num = [](const json& v, int digits) { return v.is_null() ? std::string() : fixed(v.get<double>(), digits); };
    out += fmt::format("{},{},{},{},{},{},{},{},\"{}\"\n", scope, variable, num(a.at("F"), 4), a.at("df_between").get<int>(),
                       a.at("df_within").get<int>(), num(a.at("p"), 6), num(a.at("eta2"), 4),
                       a.at("effect").get<std::string>(), a.value("hsd", std::string()));
  }
  return out;
}

json analyze_experiment(const experiment::ExperimentConfig& config, std::span<const experiment::CellResult> cells,
                        std::span<const PredictionRecord> records) {
  json doc = analyze_predictions(records, config.target);
  doc["study"] = experiment::to_string(config.study);
  json cell_rows = json::array();
  json failures = json::array();
  std::vector<double> ttd, mae;
  json points = json::array();
  for (const auto& c : cells) {
    cell_rows.push_back({{"cell_id", c.cell_id},
                         {"method", sampling::to_string(c.cell.method)},
                         {"level", c.cell.level_label()},
                         {"chart_type", c.cell.chart_type},
                         {"run", c.cell.run},
                         {"ok", c.ok},
                         {"mae", c.mae},
                         {"mlae", c.mlae},
                         {"ttd", c.ttd},
                         {"unique_train_values", c.unique_train_values},
                         {"stopped_epoch", c.stopped_epoch},
                         {"best_epoch", c.best_epoch}});
    if (!c.ok) {
      failures.push_back({{"cell_id", c.cell_id}, {"error", c.error}});
      continue;
    }
    ttd.push_back(c.ttd);
    mae.push_back(c.mae);
    points.push_back({{"cell_id", c.cell_id}, {"method", sampling::to_string(c.cell.method)},
                      {"level", c.cell.level_label()}, {"ttd", c.ttd}, {"mae", c.mae}});
  }
  doc["cells"] = cell_rows;
  doc["failures"] = failures;
  json ttd_doc = {{"n", ttd.size()}, {"points", points}};
  if (ttd.size() >= 3) {
    const auto r = stats::pearson(ttd, mae);
    ttd_doc["pearson_r"] = r.defined ? json(r.r) : json(nullptr);
  }
  doc["ttd_vs_mae"] = ttd_doc;
  return doc;
}

// ---------------------------------------------------------------------------
// Model card

namespace {

std::string_view chart_name(int type) {
  switch (type) {
    case 1: return "grouped bars, targets adjacent";
    case 2: return "stacked bars, targets aligned at the base";
    case 3: return "grouped bars, targets in separate groups";
    case 4: return "stacked bars, targets on unaligned bases";
    case 5: return "single divided stacked bar";
  }
  return "unknown";
}

std::string format_tick(sampling::Tick t, std::int64_t scale) {
  if (scale == 1) return std::to_string(t);
  return fmt::format("{:.2f}", static_cast<double>(t) / static_cast<double>(scale));
}

}  // namespace

std::string model_card(const dataset::DatasetSpec& spec, const experiment::ExperimentConfig& config,
                       const experiment::CellResult& result) {
  if (!result.ok) throw ArgumentError(fmt::format("cell {} has no results; refusing to write a model card", result.cell_id));
  if (spec.plans.empty()) throw ArgumentError("training dataset carries no sampling plan");
  const auto& plan = spec.plans.front();
  const auto scale = plan.scale;
  auto list = [&](const std::vector<sampling::Tick>& ticks) {
    std::string s;
    for (std::size_t i = 0; i < ticks.size(); ++i) s += (i ? ", " : "") + format_tick(ticks[i], scale);
    return s;
  };
  auto span_of = [&](const std::vector<sampling::Tick>& ticks) {
    const auto [lo, hi] = std::minmax_element(ticks.begin(), ticks.end());
    return fmt::format("[{}, {}]", format_tick(*lo, scale), format_tick(*hi, scale));
  };

  const auto records = dataset::build_records(spec);
  std::map<sampling::Tick, std::size_t> per_value;
  std::set<std::pair<int, int>> pairs;
  for (const auto& r : records) {
    pairs.insert({r.pair.h, r.pair.H});
    const sampling::Tick tick = config.target == domain::DomainLabel::TallerHeight
                                    ? r.pair.H
                                    : static_cast<sampling::Tick>(domain::bin_of(r.truth).midpoint_percent());
    ++per_value[tick];
  }

  std::string out;
  out += fmt::format("# Model card: {}\n\n", result.cell_id);
  out += "Regressor that reads a bar-chart image and outputs the ratio of the shorter marked bar to the taller one.\n\n";
  out += "## Training sample selection\n\n";
  out += fmt::format("- Sampling target: {}\n", domain::to_string(config.target));
  out += fmt::format("- Sampling method: {}\n", sampling::to_string(result.cell.method));
  out += fmt::format("- Downsampling level: {}\n", result.cell.level_label());
  out += fmt::format("- Unique training values: m={}\n", result.unique_train_values);
  out += fmt::format("- Training values in selection order: {}\n", list(plan.order));
  out += fmt::format("- Training value span: {}\n", span_of(plan.order));
  out += fmt::format("- Test values: {} values spanning {}\n", plan.split.test.size(), span_of(plan.split.test));
  out += fmt::format("- Validation values: {} values spanning {}\n", plan.split.validation.size(),
                     span_of(plan.split.validation));
  out += fmt::format("- Training-test distance: {:.6f}\n\n", result.ttd);
  out += "## Training images\n\n";
  out += fmt::format("- Images: {} of {}x{} pixels, 8-bit grayscale\n", records.size(), spec.appearance.canvas,
                     spec.appearance.canvas);
  out += fmt::format("- Chart type: {} ({})\n", static_cast<int>(spec.chart_type), chart_name(static_cast<int>(spec.chart_type)));
  out += fmt::format("- Unique (h, H) pairs: {}\n", pairs.size());
  out += "- Images per value:\n\n";
  out += "| value | images |\n|---|---|\n";
  for (const auto& [tick, n] : per_value) out += fmt::format("| {} | {} |\n", format_tick(tick, scale), n);
  out += "\n## Learner\n\n";
  if (config.learner_mode == experiment::LearnerMode::Toy) {
    const auto& l = config.learner;
    out += fmt::format("- Network: {} inputs, {} hidden units ({}), dropout {}, linear output\n", learner::kInputSize,
                       l.hidden_units, l.activation == learner::Activation::Relu ? "ReLU" : "linear", l.dropout_rate);
    out += fmt::format("- Optimizer: SGD lr {}, Nesterov momentum {}, batch {}, MSE loss\n", l.learning_rate,
                       l.nesterov_momentum, l.batch_size);
    out += fmt::format("- Epochs: at most {}, early-stopping patience {}; stopped after {}, best epoch {}\n", l.max_epochs,
                       l.early_stop_patience, result.stopped_epoch, result.best_epoch);
  } else {
    out += "- External learner; predictions were imported from CSV\n";
  }
  out += "\n## Seeds\n\n";
  out += fmt::format("- Master seed: {}\n", config.master_seed);
  out += fmt::format("- Split seed: {}\n", plan.split.seed);
  out += fmt::format("- Plan seed: {}\n", plan.seed);
  out += fmt::format("- Training image seed: {}\n", spec.master_seed);
  if (config.learner_mode == experiment::LearnerMode::Toy) {
    out += fmt::format("- Learner seed: {}\n", experiment::learner_seed(config, result.cell));
  }
  out += "\n## Test metrics\n\n";
  out += fmt::format("- Test images: {}\n", result.test_images);
  out += fmt::format("- MAE: {:.6f}\n", result.mae);
  out += fmt::format("- MLAE: {:.6f}\n", result.mlae);
  return out;
}

// ---------------------------------------------------------------------------
// Plots

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2"};

std::string color_of(const std::string& method) {
  const int rank = method_rank(method);
  return kPalette[static_cast<std::size_t>(std::min(rank, 6))];
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

class Svg {
 public:
  Svg(double width, double height) : width_(width), height_(height) {}

  void line(double x1, double y1, double x2, double y2, std::string_view stroke, double w = 1.0) {
    body_ += fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="{}" stroke-width="{:.2f}"/>)",
                         x1, y1, x2, y2, stroke, w);
    body_ += '\n';
  }
  void rect(double x, double y, double w, double h, std::string_view fill) {
    body_ += fmt::format(R"(<rect x="{:.2f}" y="{:.2f}" width="{:.2f}" height="{:.2f}" fill="{}"/>)", x, y, w, h, fill);
    body_ += '\n';
  }
  void circle(double x, double y, double r, std::string_view fill, double opacity) {
    body_ += fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="{:.2f}" fill="{}" fill-opacity="{:.2f}"/>)", x, y, r, fill,
                         opacity);
    body_ += '\n';
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, std::string_view stroke, double w) {
    std::string p;
    for (const auto& [x, y] : pts) p += fmt::format("{:.2f},{:.2f} ", x, y);
    body_ += fmt::format(R"(<polyline points="{}" fill="none" stroke="{}" stroke-width="{:.2f}"/>)", p, stroke, w);
    body_ += '\n';
  }
  void text(double x, double y, std::string_view s, double size = 11, std::string_view anchor = "middle") {
    body_ += fmt::format(R"(<text x="{:.2f}" y="{:.2f}" font-size="{:.0f}" font-family="sans-serif" text-anchor="{}">{}</text>)",
                         x, y, size, anchor, escape(s));
    body_ += '\n';
  }
  std::string str() const {
    return fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" viewBox=\"0 0 {:.0f} {:.0f}\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
        width_, height_, width_, height_, width_, height_, body_);
  }

 private:
  double width_, height_;
  std::string body_;
};

struct Axes {
  double left = 60, top = 30, width = 420, height = 320;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

  double px(double x) const { return left + (x - xmin) / (xmax - xmin) * width; }
  double py(double y) const { return top + height - (y - ymin) / (ymax - ymin) * height; }

  void draw(Svg& svg, std::string_view xlabel, std::string_view ylabel, std::string_view title) const {
    svg.line(left, top + height, left + width, top + height, "black");
    svg.line(left, top, left, top + height, "black");
    for (int i = 0; i <= 5; ++i) {
      const double xv = xmin + (xmax - xmin) * i / 5.0, yv = ymin + (ymax - ymin) * i / 5.0;
      svg.line(px(xv), top + height, px(xv), top + height + 4, "black");
      svg.text(px(xv), top + height + 16, fmt::format("{:.3g}", xv), 10);
      svg.line(left - 4, py(yv), left, py(yv), "black");
      svg.text(left - 6, py(yv) + 3, fmt::format("{:.3g}", yv), 10, "end");
    }
    svg.text(left + width / 2, top + height + 34, xlabel);
    svg.text(14, top + height / 2, ylabel, 11, "start");
    svg.text(left + width / 2, top - 10, title, 13);
  }
};

void legend(Svg& svg, const std::vector<std::string>& methods, double x, double y) {
  for (std::size_t i = 0; i < methods.size(); ++i) {
    svg.rect(x, y + 16.0 * i - 8, 10, 10, color_of(methods[i]));
    svg.text(x + 14, y + 16.0 * i + 1, methods[i], 11, "start");
  }
}

double nice_max(double v) {
  if (!(v > 0)) return 1.0;
  const double p = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (v <= m * p) return m * p;
  }
  return 10 * p;
}

void case_by_case(const fs::path& dir, std::span<const PredictionRecord> records, domain::DomainLabel target) {
  const bool height = target == domain::DomainLabel::TallerHeight;
  std::map<std::string, std::map<std::string, std::vector<std::pair<double, double>>, MethodLess>, LevelLess> data;
  for (const auto& r : records) {
    data[r.level][r.method].push_back(height ? std::pair<double, double>(r.H, r.abs_error()) : std::pair(r.truth, r.prediction));
  }
  for (auto& [level, by_method] : data) {
    Axes ax;
    if (height) {
      double ymax = 0;
      for (const auto& [_, pts] : by_method)
        for (const auto& p : pts) ymax = std::max(ymax, p.second);
      ax.xmin = domain::kMinHeight;
      ax.xmax = domain::kMaxHeight;
      ax.ymax = nice_max(ymax);
    }
    Svg svg(620, 400);
    std::string csv = "method,x,lowess\n";
    std::vector<std::string> methods;
    if (!height) svg.line(ax.px(0), ax.py(0), ax.px(1), ax.py(1), "#999999");
    for (auto& [method, pts] : by_method) {
      methods.push_back(method);
      std::sort(pts.begin(), pts.end());
      const std::size_t stride = std::max<std::size_t>(1, pts.size() / 1500);
      for (std::size_t i = 0; i < pts.size(); i += stride) {
        svg.circle(ax.px(pts[i].first), ax.py(std::clamp(pts[i].second, ax.ymin, ax.ymax)), 1.2, color_of(method), 0.25);
      }
      if (pts.size() < 5) continue;
      std::vector<double> xs, ys;
      for (const auto& [x, y] : pts) {
        xs.push_back(x);
        ys.push_back(y);
      }
      const auto curve = stats::lowess(xs, ys, 0.3);
      std::vector<std::pair<double, double>> line;
      for (std::size_t i = 0; i < curve.x.size(); ++i) {
        if (i > 0 && curve.x[i] == curve.x[i - 1]) continue;
        line.emplace_back(ax.px(curve.x[i]), ax.py(std::clamp(curve.y[i], ax.ymin, ax.ymax)));
        csv += fmt::format("{},{},{}\n", method, fixed(curve.x[i]), fixed(curve.y[i]));
      }
      svg.polyline(line, color_of(method), 2.0);
    }
    ax.draw(svg, height ? "taller bar height H" : "true ratio", height ? "absolute error" : "predicted ratio",
            fmt::format("Case-by-case inference ({})", level));
    legend(svg, methods, 500, 50);
    write_text(dir / fmt::format("case_by_case_{}.svg", slug(level)), svg.str());
    write_text(dir / fmt::format("case_by_case_{}.csv", slug(level)), csv);
  }
}

void error_bars(const fs::path& dir, const json& analysis) {
  std::map<int, std::vector<json>> by_type;
  for (const auto& row : analysis.at("errors")) by_type[row.at("chart_type").get<int>()].push_back(row);
  for (const auto& [type, rows] : by_type) {
    std::vector<std::string> levels, methods;
    double ymax = 0;
    for (const auto& r : rows) {
      const auto l = r.at("level").get<std::string>(), m = r.at("method").get<std::string>();
      if (std::find(levels.begin(), levels.end(), l) == levels.end()) levels.push_back(l);
      if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
      ymax = std::max(ymax, r.value("ci_hi", r.at("mae").get<double>()));
      ymax = std::max(ymax, r.at("mae").get<double>());
    }
    std::sort(levels.begin(), levels.end(), LevelLess{});
    std::sort(methods.begin(), methods.end(), MethodLess{});
    Axes ax;
    ax.xmin = 0;
    ax.xmax = static_cast<double>(levels.size());
    ax.ymax = nice_max(ymax);
    Svg svg(620, 400);
    std::string csv = "chart_type,method,level,trials,trial_mean,ci_lo,ci_hi,mae\n";
    const double group_w = ax.width / static_cast<double>(levels.size());
    const double bar_w = 0.8 * group_w / static_cast<double>(methods.size());
    for (const auto& r : rows) {
      const auto l = r.at("level").get<std::string>(), m = r.at("method").get<std::string>();
      const auto li = std::find(levels.begin(), levels.end(), l) - levels.begin();
      const auto mi = std::find(methods.begin(), methods.end(), m) - methods.begin();
      const double mean = r.value("trial_mean", r.at("mae").get<double>());
      const double x = ax.left + group_w * static_cast<double>(li) + 0.1 * group_w + bar_w * static_cast<double>(mi);
      svg.rect(x, ax.py(mean), bar_w * 0.9, ax.py(0) - ax.py(mean), color_of(m));
      if (r.contains("ci_lo")) {
        const double cx = x + bar_w * 0.45;
        svg.line(cx, ax.py(r.at("ci_lo").get<double>()), cx, ax.py(r.at("ci_hi").get<double>()), "black");
      }
      csv += fmt::format("{},{},{},{},{},{},{},{}\n", type, m, l, r.at("trials").get<std::size_t>(), fixed(mean),
                         r.contains("ci_lo") ? fixed(r.at("ci_lo").get<double>()) : "",
                         r.contains("ci_hi") ? fixed(r.at("ci_hi").get<double>()) : "", fixed(r.at("mae").get<double>()));
    }
    Svg& s = svg;
    // Axis without numeric x ticks: categories instead.
    s.line(ax.left, ax.top + ax.height, ax.left + ax.width, ax.top + ax.height, "black");
    s.line(ax.left, ax.top, ax.left, ax.top + ax.height, "black");
    for (int i = 0; i <= 5; ++i) {
      const double yv = ax.ymax * i / 5.0;
      s.line(ax.left - 4, ax.py(yv), ax.left, ax.py(yv), "black");
      s.text(ax.left - 6, ax.py(yv) + 3, fmt::format("{:.3g}", yv), 10, "end");
    }
    for (std::size_t li = 0; li < levels.size(); ++li) {
      s.text(ax.left + group_w * (static_cast<double>(li) + 0.5), ax.top + ax.height + 16, levels[li], 11);
    }
    s.text(ax.left + ax.width / 2, ax.top - 10, fmt::format("Mean error with 95% CI (chart type {})", type), 13);
    s.text(14, ax.top + ax.height / 2, "MAE", 11, "start");
    legend(svg, methods, 500, 50);
    write_text(dir / fmt::format("errors_t{}.svg", type), svg.str());
    write_text(dir / fmt::format("errors_t{}.csv", type), csv);
  }
}

void ttd_scatter(const fs::path& dir, const json& analysis) {
  if (!analysis.contains("ttd_vs_mae")) return;
  const auto& points = analysis.at("ttd_vs_mae").at("points");
  if (points.size() < 2) return;
  double xmax = 0, ymax = 0;
  std::vector<std::string> methods;
  for (const auto& p : points) {
    xmax = std::max(xmax, p.at("ttd").get<double>());
    ymax = std::max(ymax, p.at("mae").get<double>());
    const auto m = p.at("method").get<std::string>();
    if (std::find(methods.begin(), methods.end(), m) == methods.end()) methods.push_back(m);
  }
  std::sort(methods.begin(), methods.end(), MethodLess{});
  Axes ax;
  ax.xmax = nice_max(xmax);
  ax.ymax = nice_max(ymax);
  Svg svg(620, 400);
  std::string csv = "cell_id,method,level,ttd,mae\n";
  for (const auto& p : points) {
    const auto m = p.at("method").get<std::string>();
    svg.circle(ax.px(p.at("ttd").get<double>()), ax.py(p.at("mae").get<double>()), 3.5, color_of(m), 0.8);
    csv += fmt::format("{},{},{},{},{}\n", p.at("cell_id").get<std::string>(), m, p.at("level").get<std::string>(),
                       fixed(p.at("ttd").get<double>()), fixed(p.at("mae").get<double>()));
  }
  const auto& t = analysis.at("ttd_vs_mae");
  std::string title = "Training-test distance vs error";
  if (t.contains("pearson_r") && !t.at("pearson_r").is_null()) {
    title += fmt::format(" (r = {:.2f})", t.at("pearson_r").get<double>());
  }
  ax.draw(svg, "training-test distance", "MAE", title);
  legend(svg, methods, 500, 50);
  write_text(dir / "ttd_vs_error.svg", svg.str());
  write_text(dir / "ttd_vs_error.csv", csv);
}

void consistency_heatmap(const fs::path& dir, const json& analysis, domain::DomainLabel target) {
  std::vector<json> panels;
  for (const auto& c : analysis.at("consistency")) {
    if (c.contains("matrix")) panels.push_back(c);
  }
  if (panels.empty()) return;
  const double cell = 44, gap = 60, margin = 70;
  std::size_t max_n = 0;
  for (const auto& p : panels) max_n = std::max(max_n, p.at("matrix").at("labels").size());
  const double panel_w = cell * static_cast<double>(max_n);
  Svg svg(margin + static_cast<double>(panels.size()) * (panel_w + gap), margin + panel_w + 40);
  std::string csv = "method,row,column,r\n";
  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const auto& p = panels[pi];
    const auto method = p.at("method").get<std::string>();
    const auto labels = p.at("matrix").at("labels").get<std::vector<std::string>>();
    const auto& r = p.at("matrix").at("r");
    const double x0 = margin + static_cast<double>(pi) * (panel_w + gap), y0 = margin;
    svg.text(x0 + cell * static_cast<double>(labels.size()) / 2, y0 - 30, method, 13);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      svg.text(x0 - 4, y0 + cell * (static_cast<double>(i) + 0.6), labels[i], 10, "end");
      svg.text(x0 + cell * (static_cast<double>(i) + 0.5), y0 - 6, labels[i], 10);
      for (std::size_t j = 0; j < labels.size(); ++j) {
        const double v = r[i][j].is_null() ? 0.0 : r[i][j].get<double>();
        const int shade = static_cast<int>(std::lround(255.0 * (1.0 - std::clamp(v, 0.0, 1.0))));
        svg.rect(x0 + cell * static_cast<double>(j), y0 + cell * static_cast<double>(i), cell - 1, cell - 1,
                 fmt::format("rgb({},{},255)", shade, shade));
        svg.text(x0 + cell * (static_cast<double>(j) + 0.5), y0 + cell * (static_cast<double>(i) + 0.6),
                 r[i][j].is_null() ? "n/a" : fmt::format("{:.2f}", v), 10);
        csv += fmt::format("{},{},{},{}\n", method, labels[i], labels[j], r[i][j].is_null() ? "" : fixed(v));
      }
    }
  }
  svg.text(margin, 20, fmt::format("Intra-consistency across levels ({})", domain::to_string(target)), 13, "start");
  const auto name = slug(std::string(domain::to_string(target)));
  write_text(dir / fmt::format("consistency_{}.svg", name), svg.str());
  write_text(dir / fmt::format("consistency_{}.csv", name), csv);
}

}  // namespace

void plot_reports(const fs::path& plot_dir, const json& analysis, std::span<const PredictionRecord> records,
                  domain::DomainLabel target) {
  fs::create_directories(plot_dir);
  case_by_case(plot_dir, records, target);
  error_bars(plot_dir, analysis);
  ttd_scatter(plot_dir, analysis);
  consistency_heatmap(plot_dir, analysis, target);
}

fs::path write_reports(const experiment::ExperimentConfig& config, std::span<const experiment::CellResult> cells_in) {
  std::vector<experiment::CellResult> cells(cells_in.begin(), cells_in.end());
  if (std::none_of(cells.begin(), cells.end(), [](const auto& c) { return c.ok; })) {
    throw ArgumentError("no successful cells; nothing to report");
  }
  std::sort(cells.begin(), cells.end(), [](const auto& a, const auto& b) {
    auto key = [](const experiment::CellResult& c) {
      return std::tuple(c.cell.run, c.cell.chart_type, static_cast<int>(c.cell.method),
                        c.cell.level ? static_cast<int>(*c.cell.level) : 99);
    };
    return key(a) < key(b);
  });
  const auto records = experiment::load_predictions(config.output_dir, cells);
  const auto analysis = analyze_experiment(config, cells, records);
  const auto report_path = config.output_dir / "report.json";
  write_text(report_path, analysis.dump(1) + "\n");
  write_text(config.output_dir / "tables.csv", tables_csv(analysis));
  plot_reports(config.output_dir / "plots", analysis, records, config.target);
  for (const auto& c : cells) {
    if (!c.ok) continue;
    const auto manifest_path = config.output_dir / c.train_dataset / "manifest.json";
    const auto spec = fs::exists(manifest_path) ? dataset::read_manifest(config.output_dir / c.train_dataset).spec
                                                : experiment::train_spec(config, c.cell);
    write_text(config.output_dir / "cells" / c.cell_id / "model_card.md", model_card(spec, config, c));
  }
  return report_path;
}

}  // namespace chartsample::report
