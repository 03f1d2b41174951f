#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "chartsample/dataset.hpp"
#include "chartsample/domain.hpp"
#include "chartsample/experiment.hpp"
#include "chartsample/stats.hpp"

namespace chartsample::report {

/// Statistics over a set of prediction records: per-group errors, one-way
/// ANOVA with Tukey groups for every factor that varies, 95% intervals,
/// per-value error curves and intra-consistency across levels.
nlohmann::json analyze_predictions(std::span<const stats::PredictionRecord> records, domain::DomainLabel target);

/// One row per factor analysis: scope,variable,F,df_between,df_within,p,eta2,effect,HSD
std::string tables_csv(const nlohmann::json& analysis);

/// Experiment-level analysis: analyze_predictions plus per-cell metrics and
/// the TTD-vs-error correlation.
nlohmann::json analyze_experiment(const experiment::ExperimentConfig& config,
                                  std::span<const experiment::CellResult> cells,
                                  std::span<const stats::PredictionRecord> records);

/// Provenance document for one trained cell. Throws ArgumentError when the
/// cell has no results.
std::string model_card(const dataset::DatasetSpec& train_spec, const experiment::ExperimentConfig& config,
                       const experiment::CellResult& result);

/// Writes plots/*.svg and plots/*.csv for an analysis.
void plot_reports(const std::filesystem::path& plot_dir, const nlohmann::json& analysis,
                  std::span<const stats::PredictionRecord> records, domain::DomainLabel target);

/// report.json, tables.csv, plots/ and one model_card.md per successful
/// cell. Pure function of the files on disk and the config. Returns the
/// report.json path. Throws ArgumentError when no cell succeeded.
std::filesystem::path write_reports(const experiment::ExperimentConfig& config,
                                    std::span<const experiment::CellResult> cells);

}  // namespace chartsample::report
