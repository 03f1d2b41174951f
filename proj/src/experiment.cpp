#include "chartsample/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "chartsample/dataset.hpp"
#include "chartsample/errors.hpp"
#include "chartsample/image.hpp"
#include "chartsample/parallel.hpp"
#include "chartsample/random.hpp"
#include "chartsample/report.hpp"

namespace chartsample::experiment {

namespace fs = std::filesystem;
using sampling::Level;
using sampling::Method;

// ---------------------------------------------------------------------------
// Config

std::string_view to_string(Study study) {
  switch (study) {
    case Study::Robustness: return "robustness";
    case Study::Stability: return "stability";
    case Study::Baseline: return "baseline";
    case Study::Ttd: return "ttd";
  }
  return "unknown";
}

Study parse_study(std::string_view text) {
  for (auto s : {Study::Robustness, Study::Stability, Study::Baseline, Study::Ttd}) {
    if (text == to_string(s)) return s;
  }
  throw ArgumentError(fmt::format("unknown study '{}' (robustness|stability|baseline|ttd)", text));
}

void ExperimentConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ArgumentError(fmt::format("unsupported config schema_version {}", schema_version));
  }
  if (runs < 1) throw ArgumentError("runs must be at least 1");
  if (methods.empty()) throw ArgumentError("methods must not be empty");
  if (chart_types.empty()) throw ArgumentError("chart_types must not be empty");
  const bool needs_levels = std::any_of(methods.begin(), methods.end(), [](Method m) { return m != Method::IidLarge; });
  if (needs_levels && levels.empty()) throw ArgumentError("levels must not be empty");
  for (int t : chart_types) stimulus::chart_type_from_int(t);
  if (!dataset::renders_images(target)) {
    throw ArgumentError(fmt::format("target '{}' has no chart stimuli", domain::to_string(target)));
  }
  if (counts.train == 0 || counts.validation == 0 || counts.test == 0) {
    throw ArgumentError("every split needs at least one image");
  }
  if (output_dir.empty()) throw ArgumentError("output directory is required");
  if (learner_mode == LearnerMode::External && predictions_dir.empty()) {
    throw ArgumentError("external learner mode needs learner.predictions_dir");
  }
  learner.validate();
}

ExperimentConfig default_config(Study study) {
  ExperimentConfig c;
  c.study = study;
  c.learner.max_epochs = 30;
  switch (study) {
    case Study::Robustness:
      break;
    case Study::Stability:
    case Study::Ttd:
      c.levels.assign(std::begin(sampling::kAllLevels), std::end(sampling::kAllLevels));
      break;
    case Study::Baseline:
      c.methods = {Method::IidLarge};
      c.levels = {};
      c.chart_types = {1, 2, 3, 4, 5};
      break;
  }
  return c;
}

void apply_paper_scale(ExperimentConfig& config) {
  config.counts = kPaperScaleCounts;
  config.learner.max_epochs = learner::LearnerConfig{}.max_epochs;
}

namespace {

std::string_view adv_name(sampling::AdvDistance d) {
  return d == sampling::AdvDistance::Nearest ? "nearest" : "sum";
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json methods = nlohmann::json::array(), levels = nlohmann::json::array();
  for (auto m : c.methods) methods.push_back(sampling::to_string(m));
  for (auto l : c.levels) levels.push_back(sampling::to_string(l));
  nlohmann::json learner = {{"mode", c.learner_mode == LearnerMode::Toy ? "toy" : "external"},
                            {"config", learner::to_json(c.learner)}};
  if (c.learner_mode == LearnerMode::External) learner["predictions_dir"] = c.predictions_dir.string();
  return {{"schema_version", c.schema_version},
          {"study", to_string(c.study)},
          {"target", domain::to_string(c.target)},
          {"methods", methods},
          {"levels", levels},
          {"chart_types", c.chart_types},
          {"runs", c.runs},
          {"counts", {{"train", c.counts.train}, {"validation", c.counts.validation}, {"test", c.counts.test}}},
          {"master_seed", c.master_seed},
          {"output_dir", c.output_dir.string()},
          {"learner", learner},
          {"adv_distance", adv_name(c.adv_distance)},
          {"appearance", stimulus::to_json(c.appearance)},
          {"workers", c.workers},
          {"write_images", c.write_images}};
}

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  const auto study = parse_study(doc.value("study", std::string("robustness")));
  ExperimentConfig c = default_config(study);
  c.schema_version = doc.value("schema_version", kConfigSchemaVersion);
  if (doc.contains("target")) c.target = domain::parse_domain_label(doc.at("target").get<std::string>());
  if (doc.contains("methods")) {
    c.methods.clear();
    for (const auto& m : doc.at("methods")) c.methods.push_back(sampling::parse_method(m.get<std::string>()));
  }
  if (doc.contains("levels")) {
    c.levels.clear();
    for (const auto& l : doc.at("levels")) c.levels.push_back(sampling::parse_level(l.get<std::string>()));
  }
  if (doc.contains("chart_types")) c.chart_types = doc.at("chart_types").get<std::vector<int>>();
  c.runs = doc.value("runs", c.runs);
  if (doc.contains("counts")) {
    const auto& k = doc.at("counts");
    c.counts.train = k.value("train", c.counts.train);
    c.counts.validation = k.value("validation", c.counts.validation);
    c.counts.test = k.value("test", c.counts.test);
  }
  c.master_seed = doc.value("master_seed", c.master_seed);
  if (doc.contains("output_dir")) c.output_dir = doc.at("output_dir").get<std::string>();
  if (doc.contains("learner")) {
    const auto& l = doc.at("learner");
    const auto mode = l.value("mode", std::string("toy"));
    if (mode != "toy" && mode != "external") throw ArgumentError(fmt::format("unknown learner mode '{}'", mode));
    c.learner_mode = mode == "toy" ? LearnerMode::Toy : LearnerMode::External;
    if (l.contains("config")) {
      nlohmann::json merged = learner::to_json(c.learner);
      merged.update(l.at("config"));
      c.learner = learner::learner_config_from_json(merged);
    }
    if (l.contains("predictions_dir")) c.predictions_dir = l.at("predictions_dir").get<std::string>();
  }
  if (doc.contains("adv_distance")) {
    const auto d = doc.at("adv_distance").get<std::string>();
    if (d != "nearest" && d != "sum") throw ArgumentError(fmt::format("unknown adv_distance '{}'", d));
    c.adv_distance = d == "nearest" ? sampling::AdvDistance::Nearest : sampling::AdvDistance::Sum;
  }
  if (doc.contains("appearance")) c.appearance = stimulus::appearance_from_json(doc.at("appearance"));
  c.workers = doc.value("workers", c.workers);
  c.write_images = doc.value("write_images", c.write_images);
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open config {}", path.string()));
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

// ---------------------------------------------------------------------------
// Grid

std::string Cell::level_label() const { return level ? std::string(sampling::to_string(*level)) : "full"; }

std::string Cell::id() const {
  std::string lvl = level ? std::string(sampling::to_string(*level)) : "full";
  if (!lvl.empty() && lvl.back() == '%') lvl.back() = 'p';
  return fmt::format("{}_{}_t{}_r{}", sampling::to_string(method), lvl, chart_type, run);
}

std::vector<Cell> expand_grid(const ExperimentConfig& config) {
  std::vector<Cell> cells;
  for (std::size_t run = 0; run < config.runs; ++run) {
    for (int type : config.chart_types) {
      for (auto method : config.methods) {
        if (method == Method::IidLarge) {
          cells.push_back({method, std::nullopt, type, run});
          continue;
        }
        for (auto level : config.levels) cells.push_back({method, level, type, run});
      }
    }
  }
  return cells;
}

namespace {

nlohmann::json fingerprint_basis(const ExperimentConfig& c) {
  nlohmann::json doc = to_json(c);
  for (const auto* key : {"output_dir", "workers", "methods", "levels", "chart_types", "runs", "study", "write_images"}) {
    doc.erase(key);
  }
  return doc;
}

domain::PairTable pair_table_for(const ExperimentConfig& config, int chart_type) {
  return domain::enumerate_pairs(stimulus::chart_type_from_int(chart_type) == stimulus::ChartType::Divided,
                                 config.appearance.type5_sum_bound);
}

domain::DiscreteDomain domain_for(const ExperimentConfig& config, int chart_type) {
  return domain::make_domain(config.target, pair_table_for(config, chart_type));
}

std::uint64_t image_seed(const ExperimentConfig& config, std::string_view purpose, std::string_view key) {
  return stable_hash(derive_seed(config.master_seed, purpose), fnv1a(key));
}

}  // namespace

std::uint64_t cell_fingerprint(const ExperimentConfig& config, const Cell& cell) {
  nlohmann::json doc = fingerprint_basis(config);
  doc["cell"] = cell.id();
  return fnv1a(doc.dump());
}

sampling::Split run_split(const ExperimentConfig& config, std::size_t run) {
  // The ratio domain loses bins under the stacked-divided constraint, so the
  // split is taken on the unconstrained table; cells of that type draw their
  // values from the intersection (see cell_plan).
  const auto domain = domain::make_domain(config.target, domain::enumerate_pairs(false));
  return sampling::split_holdout(domain, stable_hash(derive_seed(config.master_seed, "split"), run));
}

namespace {

/// Drops values that have no pairs under the chart type's constraint.
sampling::Split restrict_split(const sampling::Split& split, const domain::DiscreteDomain& domain) {
  auto keep = [&](const std::vector<sampling::Tick>& in) {
    std::vector<sampling::Tick> out;
    for (auto t : in) {
      if (domain.contains(t)) out.push_back(t);
    }
    return out;
  };
  return {keep(split.test), keep(split.validation), keep(split.pool), split.seed};
}

}  // namespace

sampling::SamplingPlan cell_plan(const ExperimentConfig& config, const Cell& cell) {
  const auto domain = domain_for(config, cell.chart_type);
  const auto split = restrict_split(run_split(config, cell.run), domain);
  const std::uint64_t seed = stable_hash(derive_seed(config.master_seed, "plan"), cell.run);
  auto plan = sampling::make_plan(cell.method, domain, split, split.pool.size(), seed, config.adv_distance);
  if (cell.level) plan = sampling::downsample(plan, sampling::downsample_level(*cell.level, domain.size()));
  return plan;
}

dataset::DatasetSpec train_spec(const ExperimentConfig& config, const Cell& cell, const sampling::SamplingPlan& plan) {
  dataset::DatasetSpec spec;
  spec.domain = config.target;
  spec.chart_type = stimulus::chart_type_from_int(cell.chart_type);
  spec.roles = {{stimulus::SplitRole::Train, plan.order, config.counts.train}};
  spec.master_seed = image_seed(config, "train-images", cell.id());
  spec.appearance = config.appearance;
  spec.id_prefix = cell.id() + "_";
  spec.plans = {plan};
  return spec;
}

dataset::DatasetSpec train_spec(const ExperimentConfig& config, const Cell& cell) {
  return train_spec(config, cell, cell_plan(config, cell));
}

std::uint64_t learner_seed(const ExperimentConfig& config, const Cell& cell) {
  return image_seed(config, "learner", cell.id());
}

// ---------------------------------------------------------------------------
// Results

nlohmann::json to_json(const CellResult& r) {
  return {{"cell_id", r.cell_id},
          {"method", sampling::to_string(r.cell.method)},
          {"level", r.cell.level_label()},
          {"chart_type", r.cell.chart_type},
          {"run", r.cell.run},
          {"fingerprint", r.fingerprint},
          {"ok", r.ok},
          {"error", r.error},
          {"mae", r.mae},
          {"mlae", r.mlae},
          {"ttd", r.ttd},
          {"unique_train_values", r.unique_train_values},
          {"test_images", r.test_images},
          {"stopped_epoch", r.stopped_epoch},
          {"best_epoch", r.best_epoch},
          {"predictions", r.predictions.string()},
          {"train_dataset", r.train_dataset.string()},
          {"eval_dataset", r.eval_dataset.string()}};
}

CellResult cell_result_from_json(const nlohmann::json& doc) {
  CellResult r;
  r.cell.method = sampling::parse_method(doc.at("method").get<std::string>());
  const auto level = doc.at("level").get<std::string>();
  if (level != "full") r.cell.level = sampling::parse_level(level);
  r.cell.chart_type = doc.at("chart_type");
  r.cell.run = doc.at("run");
  r.cell_id = doc.at("cell_id");
  r.fingerprint = doc.at("fingerprint");
  r.ok = doc.at("ok");
  r.error = doc.value("error", "");
  r.mae = doc.at("mae");
  r.mlae = doc.at("mlae");
  r.ttd = doc.at("ttd");
  r.unique_train_values = doc.at("unique_train_values");
  r.test_images = doc.at("test_images");
  r.stopped_epoch = doc.at("stopped_epoch");
  r.best_epoch = doc.at("best_epoch");
  r.predictions = doc.at("predictions").get<std::string>();
  r.train_dataset = doc.at("train_dataset").get<std::string>();
  r.eval_dataset = doc.at("eval_dataset").get<std::string>();
  return r;
}

namespace {

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(fmt::format("cannot write {}", path.string()));
    out << text;
  }
  fs::rename(tmp, path);
}

std::optional<CellResult> reusable_result(const fs::path& output_dir, const fs::path& cell_dir,
                                          const std::string& fingerprint) {
  const auto path = cell_dir / "result.json";
  if (!fs::exists(path)) return std::nullopt;
  try {
    std::ifstream in(path);
    auto r = cell_result_from_json(nlohmann::json::parse(in));
    if (r.ok && r.fingerprint == fingerprint && fs::exists(output_dir / r.predictions)) return r;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

/// Rendered images of one dataset, decoded from the exact PNG bytes.
struct Images {
  std::vector<stimulus::StimulusRecord> records;
  std::vector<GrayImage> images;
};

Images materialize(const dataset::DatasetSpec& spec, const fs::path& dir, bool write) {
  const auto rendered = dataset::render_dataset(spec, 1);
  if (write) {
    bool current = false;
    if (fs::exists(dir / "manifest.json") && !fs::exists(dir / "INCOMPLETE")) {
      try {
        const auto existing = dataset::read_manifest(dir);
        std::vector<std::uint64_t> hashes;
        for (const auto& role : existing.roles) hashes.insert(hashes.end(), role.image_hashes.begin(), role.image_hashes.end());
        current = hashes == rendered.hashes;
      } catch (const std::exception&) {
      }
    }
    if (!current) {
      fs::remove_all(dir);
      dataset::write_dataset(spec, rendered, dir);
    }
  }
  Images out;
  out.records = rendered.records;
  out.images.reserve(rendered.png.size());
  for (const auto& png : rendered.png) out.images.push_back(decode_png(png));
  return out;
}

struct EvalSet {
  fs::path dir;
  Images data;
  learner::LabeledImages validation;
  std::vector<std::size_t> test_index;  // into data
};

dataset::DatasetSpec eval_spec(const ExperimentConfig& config, std::size_t run, int chart_type) {
  const auto domain = domain_for(config, chart_type);
  const auto split = restrict_split(run_split(config, run), domain);
  dataset::DatasetSpec spec;
  spec.domain = config.target;
  spec.chart_type = stimulus::chart_type_from_int(chart_type);
  spec.roles = {{stimulus::SplitRole::Validation, split.validation, config.counts.validation},
                {stimulus::SplitRole::Test, split.test, config.counts.test}};
  const auto key = fmt::format("r{}_t{}", run, chart_type);
  spec.master_seed = image_seed(config, "eval-images", key);
  spec.appearance = config.appearance;
  spec.id_prefix = key + "_";
  return spec;
}

EvalSet build_eval_set(const ExperimentConfig& config, std::size_t run, int chart_type) {
  EvalSet e;
  e.dir = config.output_dir / "datasets" / fmt::format("eval_r{}_t{}", run, chart_type);
  e.data = materialize(eval_spec(config, run, chart_type), e.dir, config.write_images);
  for (std::size_t i = 0; i < e.data.records.size(); ++i) {
    const auto& r = e.data.records[i];
    if (r.role == stimulus::SplitRole::Validation) {
      e.validation.images.push_back(e.data.images[i]);
      e.validation.labels.push_back(r.truth);
    } else {
      e.test_index.push_back(i);
    }
  }
  return e;
}

std::vector<stats::PredictionRecord> external_predictions(const ExperimentConfig& config, const Cell& cell) {
  const auto path = config.predictions_dir / (cell.id() + ".csv");
  if (!fs::exists(path)) throw IoError(fmt::format("external predictions not found: {}", path.string()));
  return stats::read_predictions_csv(path);
}

CellResult run_cell(const ExperimentConfig& config, const Cell& cell, const EvalSet& eval, const ProgressCallback& progress) {
  CellResult result;
  result.cell = cell;
  result.cell_id = cell.id();
  result.fingerprint = fmt::format("{:016x}", cell_fingerprint(config, cell));
  const fs::path cell_dir = config.output_dir / "cells" / result.cell_id;
  if (auto reused = reusable_result(config.output_dir, cell_dir, result.fingerprint)) {
    reused->skipped = true;
    return *reused;
  }
  fs::create_directories(cell_dir);
  fs::remove(cell_dir / "result.json");
  result.eval_dataset = fs::path("datasets") / fmt::format("eval_r{}_t{}", cell.run, cell.chart_type);
  result.predictions = fs::path("cells") / result.cell_id / "predictions.csv";

  try {
    const auto plan = cell_plan(config, cell);
    write_text_atomic(cell_dir / "plan.json", sampling::to_json(plan).dump(1) + "\n");
    result.ttd = sampling::plan_training_test_distance(plan);
    result.unique_train_values = std::set<sampling::Tick>(plan.order.begin(), plan.order.end()).size();

    const auto spec = train_spec(config, cell, plan);
    result.train_dataset = fs::path("datasets") / ("train_" + result.cell_id);
    const auto train_images = materialize(spec, config.output_dir / result.train_dataset, config.write_images);

    std::set<std::string> train_ids;
    for (const auto& r : train_images.records) train_ids.insert(r.image_id);
    std::map<std::string, std::size_t> test_ids;
    for (auto i : eval.test_index) test_ids.emplace(eval.data.records[i].image_id, i);

    std::vector<stats::PredictionRecord> predictions;
    const std::string run_id = fmt::format("r{}", cell.run);
    if (config.learner_mode == LearnerMode::Toy) {
      learner::LabeledImages train;
      train.images = train_images.images;
      for (const auto& r : train_images.records) train.labels.push_back(r.truth);
      auto lc = config.learner;
      lc.seed = learner_seed(config, cell);
      const auto model = learner::train(lc, train, eval.validation, [&](const learner::EpochStats& s) {
        if (progress) {
          progress(fmt::format("{} epoch {} train {:.5f} val {:.5f}", result.cell_id, s.epoch, s.train_loss,
                               s.validation_loss));
        }
      });
      learner::save_model(model, cell_dir / "model.bin");
      std::string history = "epoch,train_loss,validation_loss\n";
      for (const auto& h : model.history) history += fmt::format("{},{},{}\n", h.epoch, h.train_loss, h.validation_loss);
      write_text_atomic(cell_dir / "history.csv", history);
      result.stopped_epoch = model.stopped_epoch;
      result.best_epoch = model.best_epoch;

      std::vector<GrayImage> test_images;
      for (auto i : eval.test_index) test_images.push_back(eval.data.images[i]);
      const auto yhat = learner::predict_batch(model, test_images);
      for (std::size_t k = 0; k < eval.test_index.size(); ++k) {
        const auto& r = eval.data.records[eval.test_index[k]];
        predictions.push_back({r.image_id, run_id, std::string(sampling::to_string(cell.method)), cell.level_label(),
                               cell.chart_type, r.pair.h, r.pair.H, r.truth, yhat[k]});
      }
    } else {
      predictions = external_predictions(config, cell);
    }

    for (const auto& p : predictions) {
      if (train_ids.contains(p.image_id)) {
        throw TrainingError(fmt::format("training image {} appears in the evaluation file", p.image_id));
      }
      if (!test_ids.contains(p.image_id)) {
        throw IoError(fmt::format("prediction for unknown test image {}", p.image_id));
      }
    }
    if (predictions.empty()) throw IoError("no predictions for the test split");
    stats::write_predictions_csv(config.output_dir / result.predictions, predictions);
    result.mae = stats::mae(predictions);
    result.mlae = stats::mlae(predictions);
    result.test_images = predictions.size();
    result.ok = true;
  } catch (const std::exception& e) {
    result.ok = false;
    result.error = e.what();
  }
  write_text_atomic(cell_dir / "result.json", to_json(result).dump(1) + "\n");
  return result;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const ProgressCallback& progress) {
  config.validate();
  fs::create_directories(config.output_dir);
  RunResult out;
  out.config_fingerprint = fmt::format("{:016x}", fnv1a(fingerprint_basis(config).dump()));
  write_text_atomic(config.output_dir / "config.json", to_json(config).dump(1) + "\n");

  const auto cells = expand_grid(config);
  std::vector<std::string> fingerprints;
  bool all_reusable = true;
  for (const auto& cell : cells) {
    const auto fp = fmt::format("{:016x}", cell_fingerprint(config, cell));
    if (!reusable_result(config.output_dir, config.output_dir / "cells" / cell.id(), fp)) all_reusable = false;
  }

  // Shared validation/test images per (run, chart type), built only when a
  // cell actually needs them.
  std::map<std::pair<std::size_t, int>, EvalSet> evals;
  if (!all_reusable) {
    for (std::size_t run = 0; run < config.runs; ++run) {
      for (int type : config.chart_types) {
        if (progress) progress(fmt::format("evaluation images for run {} type {}", run, type));
        evals.emplace(std::pair{run, type}, build_eval_set(config, run, type));
      }
    }
  }

  out.cells.resize(cells.size());
  std::mutex progress_mutex;
  ProgressCallback locked;
  if (progress) {
    locked = [&](const std::string& msg) {
      std::lock_guard lock(progress_mutex);
      progress(msg);
    };
  }
  parallel_for(cells.size(), std::max(1u, config.workers), [&](std::size_t i) {
    const auto& cell = cells[i];
    static const EvalSet kEmpty{};
    const auto it = evals.find({cell.run, cell.chart_type});
    out.cells[i] = run_cell(config, cell, it == evals.end() ? kEmpty : it->second, locked);
    if (locked) {
      const auto& r = out.cells[i];
      locked(r.ok ? fmt::format("{} {} mae {:.4f} ttd {:.4f}", r.cell_id, r.skipped ? "reused" : "done", r.mae, r.ttd)
                  : fmt::format("{} FAILED: {}", r.cell_id, r.error));
    }
  });

  for (const auto& r : out.cells) {
    if (!r.ok) out.failures.push_back(fmt::format("{}: {}", r.cell_id, r.error));
    else if (r.skipped) ++out.reused;
    else ++out.trained;
  }
  nlohmann::json summary = {{"config_fingerprint", out.config_fingerprint},
                            {"cells", nlohmann::json::array()},
                            {"failures", out.failures}};
  for (const auto& r : out.cells) summary["cells"].push_back(r.cell_id);
  write_text_atomic(config.output_dir / "results.json", summary.dump(1) + "\n");

  if (std::any_of(out.cells.begin(), out.cells.end(), [](const CellResult& r) { return r.ok; })) {
    out.report = report::write_reports(config, out.cells);
  }
  return out;
}

std::vector<CellResult> load_cell_results(const fs::path& output_dir) {
  std::vector<CellResult> out;
  const auto cells_dir = output_dir / "cells";
  if (!fs::exists(cells_dir)) return out;
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(cells_dir)) {
    if (entry.is_directory() && fs::exists(entry.path() / "result.json")) dirs.push_back(entry.path());
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& d : dirs) {
    std::ifstream in(d / "result.json");
    out.push_back(cell_result_from_json(nlohmann::json::parse(in)));
  }
  return out;
}

std::vector<stats::PredictionRecord> load_predictions(const fs::path& output_dir, const std::vector<CellResult>& cells) {
  std::vector<stats::PredictionRecord> out;
  for (const auto& c : cells) {
    if (!c.ok) continue;
    auto records = stats::read_predictions_csv(output_dir / c.predictions);
    out.insert(out.end(), std::make_move_iterator(records.begin()), std::make_move_iterator(records.end()));
  }
  return out;
}

}  // namespace chartsample::experiment
