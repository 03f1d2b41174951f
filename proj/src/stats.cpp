#include "chartsample/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "chartsample/distributions.hpp"
#include "chartsample/errors.hpp"

namespace chartsample::stats {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view text, std::string_view source, std::size_t line_no) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw IoError(fmt::format("{}:{}: cannot parse number '{}'", source, line_no, text));
  }
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// Predictions CSV

double PredictionRecord::abs_error() const { return std::abs(prediction - truth); }

std::string format_predictions_csv(std::span<const PredictionRecord> records) {
  std::string out(kPredictionsHeader);
  out += '\n';
  for (const auto& r : records) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.image_id, r.run_id, r.method, r.level, r.chart_type, r.h, r.H,
                       r.truth, r.prediction);
  }
  return out;
}

void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionRecord> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << format_predictions_csv(records);
    if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::vector<PredictionRecord> parse_predictions_csv(std::string_view text, std::string_view source) {
  std::vector<PredictionRecord> out;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    auto line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kPredictionsHeader) {
        throw IoError(fmt::format("{}: unexpected header '{}', expected '{}'", source, line, kPredictionsHeader));
      }
      header_seen = true;
      continue;
    }
    const auto f = split_fields(line);
    if (f.size() != 9) throw IoError(fmt::format("{}:{}: expected 9 fields, got {}", source, line_no, f.size()));
    PredictionRecord r;
    r.image_id = std::string(f[0]);
    r.run_id = std::string(f[1]);
    r.method = std::string(f[2]);
    r.level = std::string(f[3]);
    r.chart_type = parse_number<int>(f[4], source, line_no);
    r.h = parse_number<int>(f[5], source, line_no);
    r.H = parse_number<int>(f[6], source, line_no);
    r.truth = parse_number<double>(f[7], source, line_no);
    r.prediction = parse_number<double>(f[8], source, line_no);
    if (!(r.truth > 0.0 && r.truth < 1.0)) {
      throw IoError(fmt::format("{}:{}: truth {} outside (0, 1)", source, line_no, r.truth));
    }
    if (!std::isfinite(r.prediction)) throw IoError(fmt::format("{}:{}: non-finite prediction", source, line_no));
    out.push_back(std::move(r));
  }
  if (!header_seen) throw IoError(fmt::format("{}: missing header", source));
  return out;
}

std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_predictions_csv(buffer.str(), path.string());
}

// ---------------------------------------------------------------------------
// Error metrics

double mae(std::span<const PredictionRecord> records) {
  if (records.empty()) throw ArgumentError("mae of an empty record set");
  double total = 0.0;
  for (const auto& r : records) total += r.abs_error();
  return total / static_cast<double>(records.size());
}

double midmean(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("midmean of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t trim = values.size() / 4;
  const std::span<const double> middle(values.data() + trim, values.size() - 2 * trim);
  return mean_of(middle);
}

double log_absolute_error(double truth, double prediction) {
  return std::log2(std::abs(prediction * 100.0 - truth * 100.0) + 0.125);
}

double mlae(std::span<const PredictionRecord> records) {
  if (records.empty()) throw ArgumentError("mlae of an empty record set");
  std::vector<double> logs;
  logs.reserve(records.size());
  for (const auto& r : records) logs.push_back(log_absolute_error(r.truth, r.prediction));
  return midmean(std::move(logs));
}

std::vector<PairTrial> aggregate_by_pair(std::span<const PredictionRecord> records) {
  std::map<std::pair<int, int>, std::pair<double, std::size_t>> sums;
  for (const auto& r : records) {
    auto& s = sums[{r.H, r.h}];
    s.first += r.abs_error();
    ++s.second;
  }
  std::vector<PairTrial> out;
  out.reserve(sums.size());
  for (const auto& [key, s] : sums) {
    out.push_back({key.second, key.first, s.first / static_cast<double>(s.second), s.second});
  }
  return out;
}

// ---------------------------------------------------------------------------
// ANOVA / Tukey

std::string_view to_string(EffectSize effect) {
  switch (effect) {
    case EffectSize::None: return "no effect";
    case EffectSize::Small: return "small effect";
    case EffectSize::Medium: return "medium effect";
    case EffectSize::Large: return "large effect";
  }
  return "?";
}

EffectSize classify_eta2(double eta2) {
  if (eta2 < 0.01) return EffectSize::None;
  if (eta2 < 0.06) return EffectSize::Small;
  if (eta2 < 0.14) return EffectSize::Medium;
  return EffectSize::Large;
}

namespace {

void check_levels(std::span<const FactorLevel> levels) {
  if (levels.size() < 2) throw ArgumentError("ANOVA needs at least two factor levels");
  for (const auto& l : levels) {
    if (l.values.size() < 2) throw ArgumentError(fmt::format("level '{}' has fewer than two trials", l.name));
    for (double v : l.values) {
      if (!std::isfinite(v)) throw ArgumentError(fmt::format("level '{}' has a non-finite value", l.name));
    }
  }
}

struct Moments {
  std::vector<double> means;
  std::vector<std::size_t> counts;
  double grand_mean = 0.0;
  double ss_between = 0.0;
  double ss_within = 0.0;
  std::size_t total = 0;
};

Moments moments_of(std::span<const FactorLevel> levels) {
  Moments m;
  double grand = 0.0;
  for (const auto& l : levels) {
    m.means.push_back(mean_of(l.values));
    m.counts.push_back(l.values.size());
    m.total += l.values.size();
    for (double v : l.values) grand += v;
  }
  m.grand_mean = grand / static_cast<double>(m.total);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double d = m.means[i] - m.grand_mean;
    m.ss_between += static_cast<double>(m.counts[i]) * d * d;
    for (double v : levels[i].values) m.ss_within += (v - m.means[i]) * (v - m.means[i]);
  }
  return m;
}

/// Maximal runs of the mean-sorted order whose members are pairwise
/// non-significant.
std::vector<std::vector<std::size_t>> letter_groups(const std::vector<std::size_t>& sorted,
                                                    const std::vector<std::vector<bool>>& significant) {
  std::vector<std::vector<std::size_t>> groups;
  std::size_t covered_to = 0;  // exclusive end of the last kept run
  for (std::size_t s = 0; s < sorted.size(); ++s) {
    std::size_t e = s + 1;
    while (e < sorted.size()) {
      bool ok = true;
      for (std::size_t t = s; t < e && ok; ++t) ok = !significant[sorted[t]][sorted[e]];
      if (!ok) break;
      ++e;
    }
    if (e > covered_to) {
      groups.emplace_back(sorted.begin() + static_cast<std::ptrdiff_t>(s), sorted.begin() + static_cast<std::ptrdiff_t>(e));
      covered_to = e;
    }
  }
  return groups;
}

std::string letter_name(std::size_t index) {
  std::string name;
  do {
    name.insert(name.begin(), static_cast<char>('a' + index % 26));
    index = index / 26;
  } while (index-- > 0);
  return name;
}

}  // namespace

double TukeyResult::p_value(std::size_t a, std::size_t b) const {
  if (a == b) return 1.0;
  if (a > b) std::swap(a, b);
  for (const auto& c : comparisons) {
    if (c.a == a && c.b == b) return c.p;
  }
  throw ArgumentError("no such comparison");
}

AnovaResult anova_oneway(std::span<const FactorLevel> levels) {
  check_levels(levels);
  const auto m = moments_of(levels);
  AnovaResult r;
  for (const auto& l : levels) r.levels.push_back(l.name);
  r.means = m.means;
  r.counts = m.counts;
  r.ss_between = m.ss_between;
  r.ss_within = m.ss_within;
  r.df_between = levels.size() - 1;
  r.df_within = m.total - levels.size();
  const double ss_total = m.ss_between + m.ss_within;
  if (ss_total == 0.0) {
    r.degenerate = true;
    r.F = r.p = r.eta2 = kNaN;
    return r;
  }
  r.eta2 = m.ss_between / ss_total;
  r.effect = classify_eta2(r.eta2);
  if (m.ss_within == 0.0) {
    r.F = std::numeric_limits<double>::infinity();
    r.p = 0.0;
    return r;
  }
  r.F = (m.ss_between / static_cast<double>(r.df_between)) / (m.ss_within / static_cast<double>(r.df_within));
  r.p = f_sf(r.F, static_cast<double>(r.df_between), static_cast<double>(r.df_within));
  return r;
}

TukeyResult tukey_hsd(std::span<const FactorLevel> levels, double alpha) {
  check_levels(levels);
  const auto m = moments_of(levels);
  const std::size_t k = levels.size();
  const double df = static_cast<double>(m.total - k);
  const double mse = m.ss_within / df;
  TukeyResult result;
  result.alpha = alpha;
  std::vector<std::vector<bool>> significant(k, std::vector<bool>(k, false));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      TukeyComparison c;
      c.a = a;
      c.b = b;
      c.mean_difference = m.means[a] - m.means[b];
      const double se = std::sqrt(0.5 * mse * (1.0 / static_cast<double>(m.counts[a]) + 1.0 / static_cast<double>(m.counts[b])));
      if (c.mean_difference == 0.0) {
        c.q = 0.0;
        c.p = 1.0;
      } else if (se == 0.0) {
        c.q = std::numeric_limits<double>::infinity();
        c.p = 0.0;
      } else {
        c.q = std::abs(c.mean_difference) / se;
        c.p = studentized_range_sf(c.q, k, df);
      }
      c.significant = c.p < alpha;
      significant[a][b] = significant[b][a] = c.significant;
      result.comparisons.push_back(c);
    }
  }
  std::vector<std::size_t> sorted(k);
  std::iota(sorted.begin(), sorted.end(), 0);
  std::stable_sort(sorted.begin(), sorted.end(), [&](std::size_t x, std::size_t y) { return m.means[x] < m.means[y]; });
  result.groups = letter_groups(sorted, significant);
  result.letters.assign(k, "");
  for (std::size_t g = 0; g < result.groups.size(); ++g) {
    for (auto idx : result.groups[g]) result.letters[idx] += letter_name(g);
  }
  return result;
}

AnovaResult analyze_factor(std::span<const FactorLevel> levels, double alpha) {
  auto result = anova_oneway(levels);
  if (!result.degenerate) result.tukey = tukey_hsd(levels, alpha);
  return result;
}

std::string AnovaResult::hsd_summary() const {
  if (!tukey) return "";
  std::string out;
  for (const auto& group : tukey->groups) {
    if (!out.empty()) out += ">";
    out += "(";
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (i) out += ", ";
      out += levels[group[i]];
    }
    out += ")";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Correlation / intervals / LOWESS

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("pearson needs equally long inputs");
  if (x.size() < 3) throw ArgumentError("pearson needs at least three points");
  const double mx = mean_of(x), my = mean_of(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return {kNaN, false};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), true};
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ArgumentError("spearman needs equally long inputs");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

ConsistencyMatrix consistency_matrix(std::vector<std::string> labels, std::span<const std::vector<double>> series) {
  if (labels.size() != series.size()) throw ArgumentError("one label per series");
  ConsistencyMatrix m;
  m.labels = std::move(labels);
  const std::size_t n = series.size();
  m.r.assign(n, std::vector<double>(n, 1.0));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto c = pearson(series[a], series[b]);
      m.r[a][b] = m.r[b][a] = c.r;
    }
  }
  return m;
}

ConfidenceInterval confidence_interval_95(std::span<const double> values) {
  if (values.size() < 2) throw ArgumentError("confidence interval needs at least two trials");
  ConfidenceInterval ci;
  ci.n = values.size();
  ci.mean = mean_of(values);
  double ss = 0.0;
  for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
  const double n = static_cast<double>(values.size());
  const double se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  const double half = t_quantile(0.975, n - 1.0) * se;
  ci.lo = ci.mean - half;
  ci.hi = ci.mean + half;
  return ci;
}

LowessCurve lowess(std::span<const double> x_in, std::span<const double> y_in, double frac) {
  if (x_in.size() != y_in.size()) throw ArgumentError("lowess needs equally long inputs");
  const std::size_t n = x_in.size();
  if (n < 5) throw ArgumentError("lowess needs at least five points");
  if (!(frac > 0.0 && frac <= 1.0)) throw ArgumentError("lowess fraction must be in (0, 1]");
  const auto k = static_cast<std::size_t>(frac * static_cast<double>(n) + 1e-10);
  if (k < 1) throw ArgumentError("lowess fraction selects no neighbours");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x_in[a] < x_in[b]; });
  LowessCurve curve;
  curve.x.resize(n);
  curve.y.assign(n, 0.0);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    curve.x[i] = x_in[order[i]];
    y[i] = y_in[order[i]];
  }
  const auto& x = curve.x;

  std::vector<double> w(n);
  std::size_t left = 0, right = k;  // neighbourhood [left, right)
  std::size_t i = 0;
  std::ptrdiff_t last_fit = -1;
  while (last_fit < static_cast<std::ptrdiff_t>(n) - 1) {
    while (right < n && x[i] > 0.5 * (x[left] + x[right])) {
      ++left;
      ++right;
    }
    const double radius = std::max(x[i] - x[left], x[right - 1] - x[i]);
    double sum_w = 0.0;
    std::size_t nonzero = 0;
    for (std::size_t j = left; j < right; ++j) {
      const double d = std::abs(x[j] - x[i]) / radius;
      const double c = d < 1.0 ? 1.0 - d * d * d : 0.0;
      w[j] = c * c * c;
      sum_w += w[j];
      nonzero += w[j] != 0.0;
    }
    if (!(sum_w > 0.0) || nonzero == 1) {
      curve.y[i] = y[i];
    } else {
      double wx = 0.0;
      for (std::size_t j = left; j < right; ++j) {
        w[j] /= sum_w;
        wx += w[j] * x[j];
      }
      double sq = 0.0;
      for (std::size_t j = left; j < right; ++j) sq += w[j] * (x[j] - wx) * (x[j] - wx);
      double fit = 0.0;
      for (std::size_t j = left; j < right; ++j) {
        const double p = w[j] * (1.0 + (x[i] - wx) * (x[j] - wx) / sq);
        fit += p * y[j];
      }
      curve.y[i] = fit;
    }
    // Copy fits for tied x values, then move to the next distinct point.
    last_fit = static_cast<std::ptrdiff_t>(i);
    std::size_t next = i + 1;
    while (next < n && x[next] == x[i]) {
      curve.y[next] = curve.y[i];
      last_fit = static_cast<std::ptrdiff_t>(next);
      ++next;
    }
    i = next;
  }
  return curve;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json to_json(const TukeyResult& result, std::span<const std::string> levels) {
  nlohmann::json comparisons = nlohmann::json::array();
  for (const auto& c : result.comparisons) {
    comparisons.push_back({{"a", levels[c.a]},
                           {"b", levels[c.b]},
                           {"mean_difference", c.mean_difference},
                           {"q", number_or_null(c.q)},
                           {"p", c.p},
                           {"significant", c.significant}});
  }
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& g : result.groups) {
    nlohmann::json names = nlohmann::json::array();
    for (auto idx : g) names.push_back(levels[idx]);
    groups.push_back(names);
  }
  nlohmann::json letters = nlohmann::json::object();
  for (std::size_t i = 0; i < levels.size(); ++i) letters[levels[i]] = result.letters[i];
  return {{"alpha", result.alpha}, {"comparisons", comparisons}, {"groups", groups}, {"letters", letters}};
}

nlohmann::json to_json(const AnovaResult& r) {
  nlohmann::json levels = nlohmann::json::array();
  for (std::size_t i = 0; i < r.levels.size(); ++i) {
    levels.push_back({{"name", r.levels[i]}, {"mean", r.means[i]}, {"n", r.counts[i]}});
  }
  nlohmann::json doc = {{"levels", levels},
                        {"df_between", r.df_between},
                        {"df_within", r.df_within},
                        {"ss_between", r.ss_between},
                        {"ss_within", r.ss_within},
                        {"F", number_or_null(r.F)},
                        {"p", number_or_null(r.p)},
                        {"eta2", number_or_null(r.eta2)},
                        {"effect", r.degenerate ? "undefined" : std::string(to_string(r.effect))},
                        {"degenerate", r.degenerate}};
  if (r.tukey) {
    doc["tukey"] = to_json(*r.tukey, r.levels);
    doc["hsd"] = r.hsd_summary();
  }
  return doc;
}

nlohmann::json to_json(const ConfidenceInterval& ci) {
  return {{"mean", ci.mean}, {"lo", ci.lo}, {"hi", ci.hi}, {"n", ci.n}};
}

nlohmann::json to_json(const ConsistencyMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : m.r) {
    nlohmann::json out = nlohmann::json::array();
    for (double v : row) out.push_back(number_or_null(v));
    rows.push_back(out);
  }
  return {{"labels", m.labels}, {"r", rows}};
}

}  // namespace chartsample::stats
