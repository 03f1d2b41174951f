#include <gtest/gtest.h>

#include <set>

#include "chartsample/dataset.hpp"
#include "chartsample/errors.hpp"
#include "chartsample/experiment.hpp"
#include "chartsample/report.hpp"
#include "chartsample/stats.hpp"

#include "test_util.hpp"

namespace cs = chartsample;
namespace fs = std::filesystem;
using namespace cs::experiment;
using cs::sampling::Level;
using cs::sampling::Method;

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
  auto c = default_config(Study::Robustness);
  c.methods = {Method::IID, Method::COV};
  c.levels = {Level::P30};
  c.runs = 1;
  c.counts = {60, 20, 40};
  c.learner.hidden_units = 8;
  c.learner.max_epochs = 2;
  c.output_dir = out;
  c.workers = 2;
  return c;
}

std::map<std::string, std::string> snapshot(const fs::path& root, const std::vector<fs::path>& files) {
  std::map<std::string, std::string> out;
  for (const auto& f : files) out[f.string()] = cs::test::read_text(root / f);
  return out;
}

std::vector<fs::path> report_files(const fs::path& root) {
  std::vector<fs::path> out{"report.json", "tables.csv"};
  for (const auto& e : fs::recursive_directory_iterator(root / "plots")) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  for (const auto& e : fs::recursive_directory_iterator(root / "cells")) {
    if (e.path().filename() == "model_card.md") out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  auto c = default_config(Study::Stability);
  c.runs = 3;
  c.counts = {10, 5, 7};
  c.master_seed = 99;
  c.adv_distance = cs::sampling::AdvDistance::Sum;
  c.learner.hidden_units = 12;
  c.output_dir = "some/where";
  const auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(Config, MissingKeysTakeStudyDefaults) {
  const auto c = config_from_json({{"study", "stability"}});
  EXPECT_EQ(c.levels.size(), 4u);
  EXPECT_EQ(c.methods.size(), 4u);
  EXPECT_EQ(c.learner.max_epochs, 30u);
  EXPECT_EQ(c.counts, (SplitCounts{6000, 2000, 2000}));
  const auto b = config_from_json({{"study", "baseline"}});
  EXPECT_EQ(b.methods, std::vector<Method>{Method::IidLarge});
  EXPECT_EQ(b.chart_types.size(), 5u);
}

TEST(Config, PaperScale) {
  auto c = default_config(Study::Robustness);
  apply_paper_scale(c);
  EXPECT_EQ(c.counts, (SplitCounts{60000, 20000, 20000}));
  EXPECT_EQ(c.learner.max_epochs, 100u);
}

TEST(Config, RejectsInvalid) {
  EXPECT_THROW(config_from_json({{"study", "nope"}}), cs::ArgumentError);
  EXPECT_THROW(config_from_json({{"runs", 0}}), cs::ArgumentError);
  EXPECT_THROW(config_from_json({{"methods", nlohmann::json::array()}}), cs::ArgumentError);
  EXPECT_THROW(config_from_json({{"chart_types", {6}}}), cs::ArgumentError);
  EXPECT_THROW(config_from_json({{"schema_version", 2}}), cs::ArgumentError);
  EXPECT_THROW(config_from_json({{"learner", {{"mode", "external"}}}}), cs::ArgumentError);
  EXPECT_THROW(config_from_json({{"adv_distance", "far"}}), cs::ArgumentError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), cs::IoError);
}

TEST(Grid, SizeIsProductOfFactors) {
  auto c = default_config(Study::Stability);
  c.chart_types = {1, 3};
  c.runs = 2;
  EXPECT_EQ(expand_grid(c).size(), 4u * 4u * 2u * 2u);
  c.methods.push_back(Method::IidLarge);
  EXPECT_EQ(expand_grid(c).size(), (4u * 4u + 1u) * 2u * 2u);
  std::set<std::string> ids;
  for (const auto& cell : expand_grid(c)) ids.insert(cell.id());
  EXPECT_EQ(ids.size(), expand_grid(c).size());
}

TEST(Grid, CellIdFormat) {
  EXPECT_EQ((Cell{Method::COV, Level::P7_5, 3, 2}.id()), "COV_7.5p_t3_r2");
  EXPECT_EQ((Cell{Method::IidLarge, std::nullopt, 1, 0}.id()), "IID-LARGE_full_t1_r0");
  EXPECT_EQ((Cell{Method::IidLarge, std::nullopt, 1, 0}.level_label()), "full");
}

TEST(Grid, FingerprintTracksOnlyCellRelevantSettings) {
  auto c = tiny_config("a");
  const Cell cell{Method::IID, Level::P30, 1, 0};
  const auto fp = cell_fingerprint(c, cell);
  auto moved = c;
  moved.output_dir = "b";
  moved.workers = 7;
  moved.methods = {Method::IID};
  EXPECT_EQ(cell_fingerprint(moved, cell), fp);
  auto reseeded = c;
  reseeded.master_seed = 2;
  EXPECT_NE(cell_fingerprint(reseeded, cell), fp);
  auto retuned = c;
  retuned.learner.learning_rate = 1e-3;
  EXPECT_NE(cell_fingerprint(retuned, cell), fp);
  EXPECT_NE(cell_fingerprint(c, Cell{Method::COV, Level::P30, 1, 0}), fp);
}

TEST(Grid, MethodsOfARunShareTheSplit) {
  const auto c = tiny_config("a");
  const auto a = cell_plan(c, {Method::IID, Level::P30, 1, 0});
  const auto b = cell_plan(c, {Method::COV, Level::P30, 1, 0});
  EXPECT_EQ(a.split, b.split);
  EXPECT_EQ(a.order.size(), 28u);
  EXPECT_NE(run_split(c, 0), run_split(c, 1));
}

TEST(Grid, DividedTypeDrawsFromConstrainedValues) {
  auto c = tiny_config("a");
  c.chart_types = {5};
  const auto plan = cell_plan(c, {Method::COV, Level::P30, 5, 0});
  const auto table = cs::domain::enumerate_pairs(true, c.appearance.type5_sum_bound);
  const auto domain = cs::domain::ratio_bin_domain(table);
  for (auto t : plan.order) EXPECT_TRUE(domain.contains(t));
  for (auto t : plan.split.test) EXPECT_TRUE(domain.contains(t));
}

TEST(Experiment, RunResumeAndReportRegeneration) {
  cs::test::TempDir tmp;
  const auto c = tiny_config(tmp.path());
  const auto first = run_experiment(c);
  ASSERT_TRUE(first.failures.empty()) << first.failures.front();
  EXPECT_EQ(first.trained, 2u);
  EXPECT_EQ(first.reused, 0u);
  for (const auto& cell : first.cells) {
    const auto dir = tmp.path() / "cells" / cell.cell_id;
    EXPECT_TRUE(fs::exists(dir / "predictions.csv"));
    EXPECT_TRUE(fs::exists(dir / "model_card.md"));
    EXPECT_TRUE(fs::exists(dir / "plan.json"));
    EXPECT_TRUE(fs::exists(tmp.path() / cell.train_dataset / "manifest.json"));
    EXPECT_TRUE(fs::exists(tmp.path() / cell.train_dataset / "labels.csv"));
    EXPECT_EQ(cell.test_images, 40u);
  }
  EXPECT_EQ(first.cells[0].eval_dataset, first.cells[1].eval_dataset);

  const auto files = report_files(tmp.path());
  const auto before = snapshot(tmp.path(), files);

  const auto second = run_experiment(c);
  EXPECT_EQ(second.trained, 0u);
  EXPECT_EQ(second.reused, 2u);
  EXPECT_EQ(snapshot(tmp.path(), files), before);

  fs::remove(tmp.path() / "report.json");
  fs::remove(tmp.path() / "tables.csv");
  fs::remove_all(tmp.path() / "plots");
  cs::report::write_reports(c, load_cell_results(tmp.path()));
  EXPECT_EQ(snapshot(tmp.path(), files), before);

  const auto header = cs::test::read_text(tmp.path() / "tables.csv").substr(0, 60);
  EXPECT_EQ(header.rfind("scope,variable,F,df_between,df_within,p,eta2,effect,HSD\n", 0), 0u);

  const auto records = load_predictions(tmp.path(), load_cell_results(tmp.path()));
  EXPECT_EQ(records.size(), 80u);
}

TEST(Experiment, ChangedSettingRetrainsOnlyAffectedCells) {
  cs::test::TempDir tmp;
  auto c = tiny_config(tmp.path());
  ASSERT_TRUE(run_experiment(c).failures.empty());
  c.methods.push_back(Method::ADV);
  const auto r = run_experiment(c);
  EXPECT_EQ(r.trained, 1u);
  EXPECT_EQ(r.reused, 2u);
}

TEST(Experiment, SingleMethodWritesErrorPlot) {
  cs::test::TempDir tmp;
  auto c = tiny_config(tmp.path());
  c.methods = {Method::COV};
  const auto r = run_experiment(c);
  ASSERT_TRUE(r.failures.empty());
  EXPECT_TRUE(fs::exists(tmp.path() / "plots" / "errors_t1.svg"));
  EXPECT_TRUE(fs::exists(tmp.path() / "plots" / "errors_t1.csv"));
}

TEST(Experiment, ModelCardIsDeterministicAndRefusesFailedCells) {
  cs::test::TempDir tmp;
  const auto c = tiny_config(tmp.path());
  const auto r = run_experiment(c);
  ASSERT_TRUE(r.failures.empty());
  const auto& cell = r.cells[0];
  const auto spec = train_spec(c, cell.cell);
  const auto card = cs::report::model_card(spec, c, cell);
  EXPECT_EQ(card, cs::report::model_card(spec, c, cell));
  EXPECT_NE(card.find(cell.cell_id), std::string::npos);
  auto failed = cell;
  failed.ok = false;
  failed.error = "boom";
  EXPECT_THROW(cs::report::model_card(spec, c, failed), cs::ArgumentError);
}

TEST(Experiment, ExternalModeRejectsTrainingImagesPerCell) {
  cs::test::TempDir toy_dir, ext_dir, pred_dir;
  const auto toy = tiny_config(toy_dir.path());
  const auto toy_run = run_experiment(toy);
  ASSERT_TRUE(toy_run.failures.empty());

  // Reuse the toy predictions as an external learner's output; poison one cell
  // with an image id from its own training set.
  for (const auto& cell : toy_run.cells) {
    auto records = cs::stats::read_predictions_csv(toy_dir.path() / cell.predictions);
    if (cell.cell.method == Method::COV) {
      const auto labels = cs::dataset::read_labels(toy_dir.path() / cell.train_dataset);
      ASSERT_FALSE(labels.empty());
      records[0].image_id = labels[0].image_id;
    }
    cs::stats::write_predictions_csv(pred_dir.path() / (cell.cell_id + ".csv"), records);
  }

  auto ext = tiny_config(ext_dir.path());
  ext.learner_mode = LearnerMode::External;
  ext.predictions_dir = pred_dir.path();
  const auto r = run_experiment(ext);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_NE(r.failures[0].find("COV_30p_t1_r0"), std::string::npos);
  EXPECT_NE(r.failures[0].find("appears in the evaluation file"), std::string::npos);
  for (const auto& cell : r.cells) {
    if (cell.cell.method == Method::IID) {
      EXPECT_TRUE(cell.ok);
      EXPECT_EQ(cell.mae, toy_run.cells[0].mae);
    }
  }
  EXPECT_TRUE(fs::exists(ext_dir.path() / "report.json"));
}

TEST(Experiment, ExternalModeMissingFileIsACellFailure) {
  cs::test::TempDir out, preds;
  auto c = tiny_config(out.path());
  c.methods = {Method::IID};
  c.learner_mode = LearnerMode::External;
  c.predictions_dir = preds.path();
  const auto r = run_experiment(c);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_NE(r.failures[0].find("not found"), std::string::npos);
  EXPECT_TRUE(r.report.empty());
}

TEST(Report, RefusesWhenNoCellSucceeded) {
  cs::test::TempDir tmp;
  const auto c = tiny_config(tmp.path());
  CellResult failed;
  failed.cell_id = "IID_30p_t1_r0";
  EXPECT_THROW(cs::report::write_reports(c, std::vector<CellResult>{failed}), cs::ArgumentError);
}
