#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "chartsample/dataset.hpp"
#include "chartsample/domain.hpp"
#include "chartsample/learner.hpp"
#include "chartsample/sampler.hpp"
#include "chartsample/stats.hpp"
#include "chartsample/stimulus.hpp"

namespace chartsample::experiment {

inline constexpr int kConfigSchemaVersion = 1;

enum class Study { Robustness, Stability, Baseline, Ttd };

std::string_view to_string(Study study);
Study parse_study(std::string_view text);

enum class LearnerMode { Toy, External };

struct SplitCounts {
  std::size_t train = 6000;
  std::size_t validation = 2000;
  std::size_t test = 2000;

  bool operator==(const SplitCounts&) const = default;
};

inline constexpr SplitCounts kPaperScaleCounts{60000, 20000, 20000};

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  Study study = Study::Robustness;
  domain::DomainLabel target = domain::DomainLabel::RatioBin;
  std::vector<sampling::Method> methods{sampling::Method::IID, sampling::Method::COV, sampling::Method::ADV,
                                        sampling::Method::OodLeft};
  std::vector<sampling::Level> levels{sampling::Level::P30};
  std::vector<int> chart_types{1};
  std::size_t runs = 5;
  SplitCounts counts;
  std::uint64_t master_seed = 1;
  std::filesystem::path output_dir = "experiment-out";
  LearnerMode learner_mode = LearnerMode::Toy;
  learner::LearnerConfig learner;
  /// External mode: directory holding <cell_id>.csv prediction files.
  std::filesystem::path predictions_dir;
  sampling::AdvDistance adv_distance = sampling::AdvDistance::Nearest;
  stimulus::Appearance appearance;
  unsigned workers = 1;
  /// Writes PNGs, labels.csv and manifest.json for every dataset.
  bool write_images = true;

  /// Throws ArgumentError on an empty grid, runs < 1 or unsupported values.
  void validate() const;
};

/// Desk-scale defaults for a study (grid shape, levels, learner epochs).
ExperimentConfig default_config(Study study);
/// Switches counts to 60k/20k/20k and the learner to its full epoch budget.
void apply_paper_scale(ExperimentConfig& config);

nlohmann::json to_json(const ExperimentConfig& config);
/// Missing keys take the study defaults.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);

/// One (method, level, chart type, run) combination of the grid.
struct Cell {
  sampling::Method method = sampling::Method::IID;
  std::optional<sampling::Level> level;  // empty for IID-LARGE
  int chart_type = 1;
  std::size_t run = 0;

  std::string level_label() const;
  std::string id() const;
};

std::vector<Cell> expand_grid(const ExperimentConfig& config);

/// Stable hash over the configuration subset that determines the cell.
std::uint64_t cell_fingerprint(const ExperimentConfig& config, const Cell& cell);

/// Holdout split of one run; shared by every method of that run.
sampling::Split run_split(const ExperimentConfig& config, std::size_t run);

/// Training plan of a cell: the method's full ordering cut to the level.
sampling::SamplingPlan cell_plan(const ExperimentConfig& config, const Cell& cell);

/// Training-image dataset of a cell.
dataset::DatasetSpec train_spec(const ExperimentConfig& config, const Cell& cell, const sampling::SamplingPlan& plan);
dataset::DatasetSpec train_spec(const ExperimentConfig& config, const Cell& cell);

std::uint64_t learner_seed(const ExperimentConfig& config, const Cell& cell);

struct CellResult {
  Cell cell;
  std::string cell_id;
  std::string fingerprint;
  bool ok = false;
  bool skipped = false;  // reused from a previous run
  std::string error;
  double mae = 0.0;
  double mlae = 0.0;
  double ttd = 0.0;
  std::size_t unique_train_values = 0;
  std::size_t test_images = 0;
  std::size_t stopped_epoch = 0;
  std::size_t best_epoch = 0;
  // Paths relative to the experiment output directory.
  std::filesystem::path predictions;
  std::filesystem::path train_dataset;
  std::filesystem::path eval_dataset;
};

nlohmann::json to_json(const CellResult& result);
CellResult cell_result_from_json(const nlohmann::json& doc);

struct RunResult {
  std::string config_fingerprint;
  std::vector<CellResult> cells;
  std::size_t trained = 0;
  std::size_t reused = 0;
  std::vector<std::string> failures;
  std::filesystem::path report;
};

using ProgressCallback = std::function<void(const std::string& message)>;

/// Runs the grid. Cells whose result.json carries the same fingerprint are
/// reused; failing cells are recorded and do not stop their siblings. The
/// analysis, plots and model cards are written after all cells finish.
RunResult run_experiment(const ExperimentConfig& config, const ProgressCallback& progress = {});

/// Loads every prediction file of a finished experiment directory.
std::vector<stats::PredictionRecord> load_predictions(const std::filesystem::path& output_dir,
                                                     const std::vector<CellResult>& cells);
std::vector<CellResult> load_cell_results(const std::filesystem::path& output_dir);

}  // namespace chartsample::experiment
