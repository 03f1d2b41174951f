#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace chartsample::stats {

/// One model inference in the shared predictions schema.
struct PredictionRecord {
  std::string image_id;
  std::string run_id;
  std::string method;
  std::string level;
  int chart_type = 1;
  int h = 0;
  int H = 0;
  double truth = 0.0;
  double prediction = 0.0;

  double abs_error() const;
  bool operator==(const PredictionRecord&) const = default;
};

inline constexpr std::string_view kPredictionsHeader = "image_id,run_id,method,level,chart_type,h,H,truth,prediction";

/// Header plus one row per record; doubles use round-trip precision.
std::string format_predictions_csv(std::span<const PredictionRecord> records);
void write_predictions_csv(const std::filesystem::path& path, std::span<const PredictionRecord> records);
/// Validates the header and that truth lies in (0, 1). Throws IoError.
std::vector<PredictionRecord> parse_predictions_csv(std::string_view text, std::string_view source = "<memory>");
std::vector<PredictionRecord> read_predictions_csv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Error metrics

double mae(std::span<const PredictionRecord> records);

/// Mean of the sorted values after dropping floor(n/4) from each end.
double midmean(std::vector<double> values);

/// log2(|prediction - truth| * 100 + 1/8), the percent-scale log error.
double log_absolute_error(double truth, double prediction);

/// Midmean of the percent-scale log errors.
double mlae(std::span<const PredictionRecord> records);

struct PairTrial {
  int h = 0;
  int H = 0;
  double value = 0.0;  // mean absolute error over the pair's records
  std::size_t count = 0;
};

/// One trial per distinct (h, H), sorted by (H, h).
std::vector<PairTrial> aggregate_by_pair(std::span<const PredictionRecord> records);

// ---------------------------------------------------------------------------
// One-way ANOVA and Tukey HSD

enum class EffectSize { None, Small, Medium, Large };

std::string_view to_string(EffectSize effect);
/// <0.01 none, <0.06 small, <0.14 medium, otherwise large.
EffectSize classify_eta2(double eta2);

struct FactorLevel {
  std::string name;
  std::vector<double> values;
};

struct TukeyComparison {
  std::size_t a = 0;
  std::size_t b = 0;
  double mean_difference = 0.0;  // mean[a] - mean[b]
  double q = 0.0;
  double p = 1.0;
  bool significant = false;
};

struct TukeyResult {
  double alpha = 0.05;
  std::vector<TukeyComparison> comparisons;  // a < b, lexicographic
  /// letters[i] = group letters of level i; levels sharing a letter are not
  /// significantly different.
  std::vector<std::string> letters;
  /// Groups as index lists, in letter order.
  std::vector<std::vector<std::size_t>> groups;

  double p_value(std::size_t a, std::size_t b) const;
};

struct AnovaResult {
  std::vector<std::string> levels;
  std::vector<double> means;
  std::vector<std::size_t> counts;
  double ss_between = 0.0;
  double ss_within = 0.0;
  std::size_t df_between = 0;
  std::size_t df_within = 0;
  double F = 0.0;  // NaN when degenerate
  double p = 1.0;  // NaN when degenerate
  double eta2 = 0.0;
  EffectSize effect = EffectSize::None;
  /// All values identical: F, p and eta2 are undefined.
  bool degenerate = false;
  std::optional<TukeyResult> tukey;

  /// HSD display such as "(COV, IID)>(OOD)": lowest-error group first.
  std::string hsd_summary() const;
};

/// Classical fixed-effect one-way ANOVA. Requires >= 2 levels with >= 2
/// values each; throws ArgumentError otherwise.
AnovaResult anova_oneway(std::span<const FactorLevel> levels);

/// Tukey-Kramer pairwise comparisons with studentized-range p-values and a
/// compact letter grouping over levels sorted by ascending mean.
TukeyResult tukey_hsd(std::span<const FactorLevel> levels, double alpha = 0.05);

/// anova_oneway with the Tukey groups attached (skipped when degenerate).
AnovaResult analyze_factor(std::span<const FactorLevel> levels, double alpha = 0.05);

// ---------------------------------------------------------------------------
// Correlation, intervals, smoothing

struct Correlation {
  double r = 0.0;  // NaN when undefined
  bool defined = false;
};

/// Product-moment correlation; requires equal lengths >= 3.
Correlation pearson(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
Correlation spearman(std::span<const double> x, std::span<const double> y);

/// Average ranks (1-based), ties share the mean rank.
std::vector<double> average_ranks(std::span<const double> values);

struct ConsistencyMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<double>> r;
};

/// Pairwise Pearson coefficients between equally long series.
ConsistencyMatrix consistency_matrix(std::vector<std::string> labels, std::span<const std::vector<double>> series);

struct ConfidenceInterval {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
};

/// mean +- t(0.975, n-1) * sd / sqrt(n); requires n >= 2.
ConfidenceInterval confidence_interval_95(std::span<const double> values);

struct LowessCurve {
  std::vector<double> x;  // sorted input x
  std::vector<double> y;  // fitted values
};

/// Single-pass local linear LOWESS with tricube weights over the
/// floor(frac * n) nearest neighbours. Requires >= 5 points.
LowessCurve lowess(std::span<const double> x, std::span<const double> y, double frac = 2.0 / 3.0);

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const AnovaResult& result);
nlohmann::json to_json(const TukeyResult& result, std::span<const std::string> levels);
nlohmann::json to_json(const ConfidenceInterval& ci);
nlohmann::json to_json(const ConsistencyMatrix& matrix);

}  // namespace chartsample::stats
