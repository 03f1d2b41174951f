#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "chartsample/domain.hpp"
#include "chartsample/sampler.hpp"
#include "chartsample/stimulus.hpp"

namespace chartsample::dataset {

inline constexpr int kManifestFormatVersion = 1;

/// Domain values (ticks) that feed one split, and how many images to draw.
struct RoleSpec {
  stimulus::SplitRole role = stimulus::SplitRole::Train;
  std::vector<sampling::Tick> values;
  std::size_t count = 0;
};

struct DatasetSpec {
  domain::DomainLabel domain = domain::DomainLabel::RatioBin;
  stimulus::ChartType chart_type = stimulus::ChartType::Adjacent;
  std::vector<RoleSpec> roles;
  std::uint64_t master_seed = 0;
  stimulus::Appearance appearance;
  std::string id_prefix;
  /// Plans recorded verbatim in the manifest for provenance.
  std::vector<sampling::SamplingPlan> plans;
};

/// Role specs taken from a plan: training = plan order, validation and test
/// from the plan's split.
std::vector<RoleSpec> roles_from_plan(const sampling::SamplingPlan& plan, std::size_t train_count,
                                      std::size_t validation_count, std::size_t test_count);

/// Count domains carry no chart; their records hold the count as truth.
bool renders_images(domain::DomainLabel label);

/// Deterministic record list. Image i (over all roles, in order) draws from
/// Rng(stable_hash(master_seed, i)): a uniform domain value, then a pair.
std::vector<stimulus::StimulusRecord> build_records(const DatasetSpec& spec);

struct RoleSummary {
  stimulus::SplitRole role;
  std::vector<sampling::Tick> values;
  std::size_t count = 0;
  std::uint64_t digest = 0;
  std::vector<std::uint64_t> image_hashes;
};

struct DatasetManifest {
  int format_version = kManifestFormatVersion;
  std::string generated_at;
  DatasetSpec spec;
  std::vector<RoleSummary> roles;

  std::size_t count(stimulus::SplitRole role) const;
};

nlohmann::json to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const nlohmann::json& doc);
DatasetManifest read_manifest(const std::filesystem::path& dataset_dir);

/// In-memory dataset: records plus encoded PNGs (empty for count domains).
struct RenderedDataset {
  std::vector<stimulus::StimulusRecord> records;
  std::vector<std::vector<std::uint8_t>> png;
  std::vector<std::uint64_t> hashes;
};

/// Renders every record on `workers` threads. Output is independent of the
/// worker count.
RenderedDataset render_dataset(const DatasetSpec& spec, unsigned workers);

/// Writes <out>/<split>/<image_id>.png, labels.csv and (last) manifest.json.
/// An INCOMPLETE marker exists while writing and stays behind on failure.
DatasetManifest generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out_dir, unsigned workers);

/// Same as generate_dataset but reuses an already rendered dataset.
DatasetManifest write_dataset(const DatasetSpec& spec, const RenderedDataset& rendered,
                              const std::filesystem::path& out_dir);

struct ReplayResult {
  bool identical = false;
  std::size_t images = 0;
  std::vector<std::string> mismatched_ids;
};

/// Re-renders a dataset from its manifest and compares image hashes.
ReplayResult replay_dataset(const DatasetManifest& manifest, unsigned workers);

struct LabelRow {
  std::string image_id;
  int chart_type = 0;
  int h = 0;
  int H = 0;
  double truth = 0.0;
  double bin = 0.0;
};

std::vector<LabelRow> read_labels(const std::filesystem::path& dataset_dir);

/// Loads the images of one split (decoded PNGs) with their label rows.
struct LoadedSplit {
  std::vector<LabelRow> labels;
  std::vector<GrayImage> images;
};

LoadedSplit load_split(const std::filesystem::path& dataset_dir, stimulus::SplitRole role);

/// Worker count from CHARTSAMPLE_WORKERS, defaulting to hardware concurrency.
unsigned default_workers();

std::string utc_timestamp();

}  // namespace chartsample::dataset
