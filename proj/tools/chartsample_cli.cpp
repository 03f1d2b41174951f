#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "chartsample/dataset.hpp"
#include "chartsample/domain.hpp"
#include "chartsample/errors.hpp"
#include "chartsample/experiment.hpp"
#include "chartsample/learner.hpp"
#include "chartsample/report.hpp"
#include "chartsample/sampler.hpp"
#include "chartsample/stats.hpp"

namespace fs = std::filesystem;
namespace cs = chartsample;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw cs::IoError(fmt::format("cannot open {}", path.string()));
  return json::parse(in);
}

void write_output(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
    return;
  }
  const fs::path path(out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw cs::IoError(fmt::format("cannot write {}", out));
  file << text;
}

cs::learner::LabeledImages labeled(const fs::path& dir, cs::stimulus::SplitRole role) {
  auto split = cs::dataset::load_split(dir, role);
  cs::learner::LabeledImages out;
  out.images = std::move(split.images);
  for (const auto& l : split.labels) out.labels.push_back(l.truth);
  return out;
}

struct DomainArgs {
  std::string target = "ratio";
  int chart_type = 1;
  int sum_bound = cs::domain::kDefaultType5SumBound;

  cs::domain::PairTable table() const { return cs::domain::enumerate_pairs(chart_type == 5, sum_bound); }
  cs::domain::DiscreteDomain domain() const {
    return cs::domain::make_domain(cs::domain::parse_domain_label(target), table());
  }
};

void add_domain_options(CLI::App& app, DomainArgs& args) {
  app.add_option("--target", args.target, "Sampling domain: ratio, height, cells, nodes")->capture_default_str();
  app.add_option("--chart-type", args.chart_type, "Chart type 1..5 (5 bounds h + H)")
      ->check(CLI::Range(1, 5))
      ->capture_default_str();
  app.add_option("--sum-bound", args.sum_bound, "Upper bound on h + H for chart type 5")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training-sample selection experiments for bar-chart ratio regression"};
  app.require_subcommand(1);
  app.fallthrough();
  unsigned workers = cs::dataset::default_workers();
  app.add_option("--workers", workers, "Worker threads (default: CHARTSAMPLE_WORKERS or all cores)");

  // domain dump
  auto* domain_cmd = app.add_subcommand("domain", "Inspect the sampling domains");
  domain_cmd->require_subcommand(1);
  auto* dump = domain_cmd->add_subcommand("dump", "Write the (h, H) pair table as CSV");
  DomainArgs dump_args;
  std::string dump_out;
  add_domain_options(*dump, dump_args);
  dump->add_option("--out", dump_out, "Output CSV (default: stdout)");
  dump->callback([&] {
    const auto table = dump_args.table();
    std::ostringstream csv;
    cs::domain::write_pair_table_csv(csv, table);
    write_output(csv.str(), dump_out);
    std::cerr << fmt::format("{} pairs, {} distinct ratios, {} bins\n", table.all_pairs().size(),
                             table.distinct_ratio_count(), table.bins().size());
  });

  // sample
  auto* sample = app.add_subcommand("sample", "Split a domain and select training values");
  DomainArgs sample_args;
  std::string method = "IID", level, plan_out, adv = "nearest";
  std::size_t m = 0;
  std::uint64_t seed = 1;
  add_domain_options(*sample, sample_args);
  sample->add_option("--method", method, "IID, COV, ADV, OOD, OOD-right, IID-LARGE")->capture_default_str();
  sample->add_option("--level", level, "Downsampling level: 30%, 15%, 7.5%, 3.75%");
  sample->add_option("--m", m, "Plan size before downsampling (default: whole pool)");
  sample->add_option("--seed", seed, "Seed for the split and IID draws")->capture_default_str();
  sample->add_option("--adv-distance", adv, "ADV scoring: nearest or sum")->capture_default_str();
  sample->add_option("--out", plan_out, "Plan JSON (default: stdout)");
  sample->callback([&] {
    const auto domain = sample_args.domain();
    const auto split = cs::sampling::split_holdout(domain, seed);
    const auto pool_size = split.pool.size();
    auto plan = cs::sampling::make_plan(cs::sampling::parse_method(method), domain, split, m ? m : pool_size,
                                        seed, adv == "sum" ? cs::sampling::AdvDistance::Sum
                                                           : cs::sampling::AdvDistance::Nearest);
    if (!level.empty()) {
      plan = cs::sampling::downsample(
          plan, cs::sampling::downsample_level(cs::sampling::parse_level(level), domain.size()));
    }
    write_output(cs::sampling::to_json(plan).dump(1) + "\n", plan_out);
    std::cerr << fmt::format("{} values selected, TTD {:.6f}\n", plan.order.size(),
                             cs::sampling::plan_training_test_distance(plan));
  });

  // render
  auto* render = app.add_subcommand("render", "Render a dataset from a plan, or replay a manifest");
  std::string render_plan, render_out, replay_dir, id_prefix;
  int render_type = 1;
  const cs::experiment::SplitCounts desk_counts;
  std::size_t n_train = desk_counts.train, n_val = desk_counts.validation, n_test = desk_counts.test;
  std::uint64_t render_seed = 1;
  render->add_option("--plan", render_plan, "Plan JSON from `sample`");
  render->add_option("--out", render_out, "Dataset directory");
  render->add_option("--chart-type", render_type, "Chart type 1..5")->check(CLI::Range(1, 5))->capture_default_str();
  render->add_option("--train", n_train, "Training images")->capture_default_str();
  render->add_option("--validation", n_val, "Validation images")->capture_default_str();
  render->add_option("--test", n_test, "Test images")->capture_default_str();
  render->add_option("--seed", render_seed, "Image seed")->capture_default_str();
  render->add_option("--id-prefix", id_prefix, "Prefix for image ids");
  render->add_option("--replay", replay_dir, "Re-render a dataset directory and compare image hashes");
  int exit_code = 0;
  render->callback([&] {
    if (!replay_dir.empty()) {
      const auto result = cs::dataset::replay_dataset(cs::dataset::read_manifest(replay_dir), workers);
      std::cout << fmt::format("{} images, {}\n", result.images, result.identical ? "identical" : "MISMATCH");
      for (const auto& id : result.mismatched_ids) std::cout << "  " << id << "\n";
      if (!result.identical) exit_code = 1;
      return;
    }
    if (render_plan.empty() || render_out.empty()) throw CLI::ValidationError("--plan and --out are required");
    const auto plan = cs::sampling::plan_from_json(read_json(render_plan));
    cs::dataset::DatasetSpec spec;
    spec.domain = plan.target;
    spec.chart_type = cs::stimulus::chart_type_from_int(render_type);
    spec.roles = cs::dataset::roles_from_plan(plan, n_train, n_val, n_test);
    spec.master_seed = render_seed;
    spec.id_prefix = id_prefix;
    spec.plans = {plan};
    const auto manifest = cs::dataset::generate_dataset(spec, render_out, workers);
    std::cerr << fmt::format("wrote {} train, {} validation, {} test images to {}\n",
                             manifest.count(cs::stimulus::SplitRole::Train),
                             manifest.count(cs::stimulus::SplitRole::Validation),
                             manifest.count(cs::stimulus::SplitRole::Test), render_out);
  });

  // train
  auto* train = app.add_subcommand("train", "Fit the toy learner on a rendered dataset");
  std::string train_data, model_out, learner_config;
  std::optional<std::size_t> max_epochs;
  std::optional<std::uint64_t> learner_seed;
  train->add_option("--data", train_data, "Dataset directory")->required();
  train->add_option("--out", model_out, "Model file")->required();
  train->add_option("--config", learner_config, "Learner JSON (or experiment JSON with a learner section)");
  train->add_option("--max-epochs", max_epochs, "Override the epoch budget");
  train->add_option("--seed", learner_seed, "Override the learner seed");
  train->callback([&] {
    cs::learner::LearnerConfig lc;
    if (!learner_config.empty()) {
      auto doc = read_json(learner_config);
      if (doc.contains("learner") && doc["learner"].is_object()) doc = doc["learner"].value("config", doc["learner"]);
      lc = cs::learner::learner_config_from_json(doc);
    }
    if (max_epochs) lc.max_epochs = *max_epochs;
    if (learner_seed) lc.seed = *learner_seed;
    const auto train_set = labeled(train_data, cs::stimulus::SplitRole::Train);
    const auto val_set = labeled(train_data, cs::stimulus::SplitRole::Validation);
    const auto model = cs::learner::train(lc, train_set, val_set, [](const cs::learner::EpochStats& s) {
      std::cerr << fmt::format("epoch {} train {:.6f} validation {:.6f}\n", s.epoch, s.train_loss, s.validation_loss);
    });
    cs::learner::save_model(model, model_out);
    std::cerr << fmt::format("stopped after {} epochs, best epoch {} (validation {:.6f})\n", model.stopped_epoch,
                             model.best_epoch, model.best_validation_loss);
  });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Predict the test split and write the predictions CSV");
  std::string eval_model, eval_data, eval_out, run_id = "r0", eval_method = "IID", eval_level = "30%";
  evaluate->add_option("--model", eval_model, "Model file")->required();
  evaluate->add_option("--data", eval_data, "Dataset directory")->required();
  evaluate->add_option("--out", eval_out, "Predictions CSV (default: stdout)");
  evaluate->add_option("--run-id", run_id, "run_id column")->capture_default_str();
  evaluate->add_option("--method", eval_method, "method column")->capture_default_str();
  evaluate->add_option("--level", eval_level, "level column")->capture_default_str();
  evaluate->callback([&] {
    const auto model = cs::learner::load_model(eval_model);
    const auto split = cs::dataset::load_split(eval_data, cs::stimulus::SplitRole::Test);
    const auto yhat = cs::learner::predict_batch(model, split.images);
    std::vector<cs::stats::PredictionRecord> records;
    for (std::size_t i = 0; i < yhat.size(); ++i) {
      const auto& l = split.labels[i];
      records.push_back({l.image_id, run_id, eval_method, eval_level, l.chart_type, l.h, l.H, l.truth, yhat[i]});
    }
    write_output(cs::stats::format_predictions_csv(records), eval_out);
    std::cerr << fmt::format("{} predictions, MAE {:.6f}, MLAE {:.6f}\n", records.size(), cs::stats::mae(records),
                             cs::stats::mlae(records));
  });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "ANOVA, Tukey groups, intervals and consistency over predictions");
  std::vector<std::string> prediction_files;
  std::string analyze_out, tables_out, plots_dir, analyze_target = "ratio";
  analyze->add_option("predictions", prediction_files, "Predictions CSV files")->required();
  analyze->add_option("--target", analyze_target, "ratio or height")->capture_default_str();
  analyze->add_option("--out", analyze_out, "Analysis JSON (default: stdout)");
  analyze->add_option("--tables", tables_out, "Factor table CSV");
  analyze->add_option("--plots", plots_dir, "Directory for SVG/CSV plots");
  analyze->callback([&] {
    std::vector<cs::stats::PredictionRecord> records;
    for (const auto& f : prediction_files) {
      auto r = cs::stats::read_predictions_csv(f);
      records.insert(records.end(), r.begin(), r.end());
    }
    const auto target = cs::domain::parse_domain_label(analyze_target);
    const auto analysis = cs::report::analyze_predictions(records, target);
    write_output(analysis.dump(1) + "\n", analyze_out);
    if (!tables_out.empty()) write_output(cs::report::tables_csv(analysis), tables_out);
    if (!plots_dir.empty()) cs::report::plot_reports(plots_dir, analysis, records, target);
  });

  // report
  auto* report = app.add_subcommand("report", "Regenerate report, plots and model cards of an experiment directory");
  std::string report_dir;
  report->add_option("--dir", report_dir, "Experiment output directory")->required();
  report->callback([&] {
    auto config = cs::experiment::load_config(fs::path(report_dir) / "config.json");
    config.output_dir = report_dir;
    const auto cells = cs::experiment::load_cell_results(report_dir);
    const auto path = cs::report::write_reports(config, cells);
    std::cerr << "wrote " << path.string() << "\n";
  });

  // run
  auto* run = app.add_subcommand("run", "Run a full experiment grid");
  std::string config_path, study, run_out, predictions_dir;
  bool paper_scale = false, quiet = false;
  std::optional<std::size_t> runs;
  std::optional<std::uint64_t> master_seed;
  run->add_option("--config", config_path, "Experiment JSON");
  run->add_option("--study", study, "robustness, stability, baseline or ttd (when no config is given)");
  run->add_option("--out", run_out, "Output directory (overrides the config)");
  run->add_option("--runs", runs, "Override the number of runs");
  run->add_option("--seed", master_seed, "Override the master seed");
  run->add_option("--predictions-dir", predictions_dir, "Read external predictions from <dir>/<cell_id>.csv");
  run->add_flag("--paper-scale", paper_scale, "60k/20k/20k images and the full epoch budget");
  run->add_flag("--quiet", quiet, "Suppress progress output");
  run->callback([&] {
    cs::experiment::ExperimentConfig config;
    if (!config_path.empty()) config = cs::experiment::load_config(config_path);
    else if (!study.empty()) config = cs::experiment::default_config(cs::experiment::parse_study(study));
    else throw CLI::ValidationError("--config or --study is required");
    if (paper_scale) cs::experiment::apply_paper_scale(config);
    if (!run_out.empty()) config.output_dir = run_out;
    if (runs) config.runs = *runs;
    if (master_seed) config.master_seed = *master_seed;
    if (!predictions_dir.empty()) {
      config.learner_mode = cs::experiment::LearnerMode::External;
      config.predictions_dir = predictions_dir;
    }
    if (app.get_option("--workers")->count() > 0 || std::getenv("CHARTSAMPLE_WORKERS")) config.workers = workers;
    cs::experiment::ProgressCallback progress;
    if (!quiet) progress = [](const std::string& msg) { std::cerr << msg << "\n"; };
    const auto result = cs::experiment::run_experiment(config, progress);
    std::cout << fmt::format("{} cells: {} trained, {} reused, {} failed\n", result.cells.size(), result.trained,
                             result.reused, result.failures.size());
    for (const auto& f : result.failures) std::cout << "  FAILED " << f << "\n";
    if (!result.report.empty()) std::cout << "report: " << result.report.string() << "\n";
    if (!result.failures.empty()) exit_code = 2;
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}
