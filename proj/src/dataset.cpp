#include "chartsample/dataset.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "chartsample/errors.hpp"
#include "chartsample/parallel.hpp"
#include "chartsample/random.hpp"

namespace chartsample::dataset {

namespace fs = std::filesystem;
using stimulus::SplitRole;

namespace {

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

std::uint64_t parse_hex64(const std::string& s) { return std::stoull(s, nullptr, 16); }

std::uint64_t fold_digest(const std::vector<std::uint64_t>& hashes) {
  std::uint64_t d = 0x5eed5eed5eed5eedULL;
  for (auto h : hashes) d = stable_hash(d, h);
  return d;
}

std::string label_line(const stimulus::StimulusRecord& r, bool images) {
  if (!images) return fmt::format("{},0,0,0,{:.17g},{:.17g}\n", r.image_id, r.truth, r.bin);
  return fmt::format("{},{},{},{},{:.17g},{:.2f}\n", r.image_id, static_cast<int>(r.chart_type), r.pair.h, r.pair.H,
                     r.truth, r.bin);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

std::vector<RoleSpec> roles_from_plan(const sampling::SamplingPlan& plan, std::size_t train_count,
                                      std::size_t validation_count, std::size_t test_count) {
  return {{SplitRole::Train, plan.order, train_count},
          {SplitRole::Validation, plan.split.validation, validation_count},
          {SplitRole::Test, plan.split.test, test_count}};
}

bool renders_images(domain::DomainLabel label) {
  return label == domain::DomainLabel::RatioBin || label == domain::DomainLabel::TallerHeight;
}

std::vector<stimulus::StimulusRecord> build_records(const DatasetSpec& spec) {
  const bool divided = spec.chart_type == stimulus::ChartType::Divided;
  const auto table = domain::enumerate_pairs(divided, spec.appearance.type5_sum_bound);
  std::vector<stimulus::StimulusRecord> records;
  std::uint64_t image_index = 0;
  for (const auto& role : spec.roles) {
    if (role.count > 0 && role.values.empty()) {
      throw ArgumentError(fmt::format("split '{}' has images but no domain values", stimulus::to_string(role.role)));
    }
    for (std::size_t k = 0; k < role.count; ++k, ++image_index) {
      Rng rng(stable_hash(spec.master_seed, image_index));
      const auto value = role.values[static_cast<std::size_t>(rng.below(role.values.size()))];
      auto id = fmt::format("{}{}_{:06d}", spec.id_prefix, stimulus::to_string(role.role), k);
      switch (spec.domain) {
        case domain::DomainLabel::RatioBin: {
          const auto pair = stimulus::choose_pair(static_cast<int>(value) - 5, table, rng);
          records.push_back(stimulus::make_record(std::move(id), spec.chart_type, pair, rng.next(), role.role));
          break;
        }
        case domain::DomainLabel::TallerHeight: {
          const auto members = table.pairs_with_taller(static_cast<int>(value));
          if (members.empty()) throw DomainError(fmt::format("no height pair has taller bar {}", value));
          const auto pair = members[static_cast<std::size_t>(rng.below(members.size()))];
          records.push_back(stimulus::make_record(std::move(id), spec.chart_type, pair, rng.next(), role.role));
          break;
        }
        default: {
          stimulus::StimulusRecord r;
          r.image_id = std::move(id);
          r.chart_type = spec.chart_type;
          r.truth = static_cast<double>(value);
          r.bin = static_cast<double>(value);
          r.distractor_seed = rng.next();
          r.role = role.role;
          records.push_back(std::move(r));
        }
      }
    }
  }
  return records;
}

std::size_t DatasetManifest::count(SplitRole role) const {
  std::size_t n = 0;
  for (const auto& r : roles)
    if (r.role == role) n += r.count;
  return n;
}

nlohmann::json to_json(const DatasetManifest& m) {
  const auto scale = sampling::tick_scale(m.spec.domain);
  nlohmann::json roles = nlohmann::json::array();
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& r : m.roles) {
    nlohmann::json hashes = nlohmann::json::array();
    for (auto h : r.image_hashes) hashes.push_back(hex64(h));
    nlohmann::json values = nlohmann::json::array();
    for (auto v : r.values) values.push_back(static_cast<double>(v) / static_cast<double>(scale));
    roles.push_back({{"role", stimulus::to_string(r.role)},
                     {"values", values},
                     {"count", r.count},
                     {"digest", hex64(r.digest)},
                     {"image_hashes", hashes}});
    counts[std::string(stimulus::to_string(r.role))] = r.count;
  }
  nlohmann::json plans = nlohmann::json::array();
  for (const auto& p : m.spec.plans) plans.push_back(sampling::to_json(p));
  return {{"format_version", m.format_version},
          {"generated_at", m.generated_at},
          {"domain", domain::to_string(m.spec.domain)},
          {"chart_type", static_cast<int>(m.spec.chart_type)},
          {"master_seed", m.spec.master_seed},
          {"id_prefix", m.spec.id_prefix},
          {"image_format", renders_images(m.spec.domain) ? "png-gray8" : "none"},
          {"appearance", stimulus::to_json(m.spec.appearance)},
          {"image_counts", counts},
          {"plans", plans},
          {"roles", roles}};
}

DatasetManifest manifest_from_json(const nlohmann::json& doc) {
  try {
    DatasetManifest m;
    m.format_version = doc.at("format_version");
    if (m.format_version != kManifestFormatVersion) {
      throw ArgumentError(fmt::format("unsupported manifest format version {}", m.format_version));
    }
    m.generated_at = doc.value("generated_at", "");
    m.spec.domain = domain::parse_domain_label(doc.at("domain").get<std::string>());
    m.spec.chart_type = stimulus::chart_type_from_int(doc.at("chart_type"));
    m.spec.master_seed = doc.at("master_seed");
    m.spec.id_prefix = doc.value("id_prefix", "");
    m.spec.appearance = stimulus::appearance_from_json(doc.at("appearance"));
    for (const auto& p : doc.at("plans")) m.spec.plans.push_back(sampling::plan_from_json(p));
    const auto scale = sampling::tick_scale(m.spec.domain);
    for (const auto& r : doc.at("roles")) {
      RoleSummary s;
      s.role = stimulus::parse_split_role(r.at("role").get<std::string>());
      for (const auto& v : r.at("values")) s.values.push_back(std::llround(v.get<double>() * static_cast<double>(scale)));
      s.count = r.at("count");
      s.digest = parse_hex64(r.at("digest"));
      for (const auto& h : r.at("image_hashes")) s.image_hashes.push_back(parse_hex64(h));
      m.spec.roles.push_back({s.role, s.values, s.count});
      m.roles.push_back(std::move(s));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(fmt::format("malformed dataset manifest: {}", e.what()));
  }
}

DatasetManifest read_manifest(const fs::path& dataset_dir) {
  std::ifstream in(dataset_dir / "manifest.json");
  if (!in) throw IoError(fmt::format("no manifest.json in {}", dataset_dir.string()));
  return manifest_from_json(nlohmann::json::parse(in));
}

RenderedDataset render_dataset(const DatasetSpec& spec, unsigned workers) {
  RenderedDataset out;
  out.records = build_records(spec);
  const std::size_t n = out.records.size();
  out.png.resize(n);
  out.hashes.resize(n);
  const bool images = renders_images(spec.domain);
  parallel_for(n, workers, [&](std::size_t i) {
    if (images) {
      out.png[i] = encode_png(stimulus::render(out.records[i], spec.appearance));
      out.hashes[i] = fnv1a(out.png[i]);
    } else {
      out.hashes[i] = fnv1a(label_line(out.records[i], false));
    }
  });
  return out;
}

DatasetManifest write_dataset(const DatasetSpec& spec, const RenderedDataset& rendered, const fs::path& out_dir) {
  const fs::path marker = out_dir / "INCOMPLETE";
  fs::create_directories(out_dir);
  {
    std::ofstream m(marker);
    m << "dataset generation in progress\n";
  }
  const bool images = renders_images(spec.domain);

  DatasetManifest manifest;
  manifest.generated_at = utc_timestamp();
  manifest.spec = spec;
  std::ofstream labels(out_dir / "labels.csv", std::ios::trunc);
  if (!labels) throw IoError(fmt::format("cannot create {}", (out_dir / "labels.csv").string()));
  labels << "image_id,type,h,H,truth,bin\n";

  std::size_t offset = 0;
  for (const auto& role : spec.roles) {
    RoleSummary summary{role.role, role.values, role.count, 0, {}};
    const fs::path split_dir = out_dir / stimulus::to_string(role.role);
    if (images) fs::create_directories(split_dir);
    for (std::size_t k = 0; k < role.count; ++k) {
      const std::size_t i = offset + k;
      const auto& record = rendered.records[i];
      if (images) write_file(split_dir / (record.image_id + ".png"), rendered.png[i]);
      labels << label_line(record, images);
      summary.image_hashes.push_back(rendered.hashes[i]);
    }
    summary.digest = fold_digest(summary.image_hashes);
    manifest.roles.push_back(std::move(summary));
    offset += role.count;
  }
  labels.close();
  if (!labels) throw IoError("failed writing labels.csv");

  std::ofstream mf(out_dir / "manifest.json", std::ios::trunc);
  mf << to_json(manifest).dump(2) << "\n";
  mf.close();
  if (!mf) throw IoError("failed writing manifest.json");
  fs::remove(marker);
  return manifest;
}

DatasetManifest generate_dataset(const DatasetSpec& spec, const fs::path& out_dir, unsigned workers) {
  for (const auto& role : spec.roles) {
    if (role.count == 0) throw ArgumentError(fmt::format("split '{}' needs at least one image", stimulus::to_string(role.role)));
  }
  return write_dataset(spec, render_dataset(spec, workers), out_dir);
}

ReplayResult replay_dataset(const DatasetManifest& manifest, unsigned workers) {
  const auto rendered = render_dataset(manifest.spec, workers);
  ReplayResult result;
  result.images = rendered.records.size();
  std::size_t offset = 0;
  for (const auto& role : manifest.roles) {
    for (std::size_t k = 0; k < role.count; ++k) {
      const std::size_t i = offset + k;
      if (i >= rendered.hashes.size() || k >= role.image_hashes.size() || rendered.hashes[i] != role.image_hashes[k]) {
        result.mismatched_ids.push_back(i < rendered.records.size() ? rendered.records[i].image_id : std::to_string(i));
      }
    }
    offset += role.count;
  }
  result.identical = result.mismatched_ids.empty() && offset == rendered.records.size();
  return result;
}

std::vector<LabelRow> read_labels(const fs::path& dataset_dir) {
  std::ifstream in(dataset_dir / "labels.csv");
  if (!in) throw IoError(fmt::format("no labels.csv in {}", dataset_dir.string()));
  std::string line;
  std::getline(in, line);
  std::vector<LabelRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 6) throw IoError(fmt::format("labels.csv: malformed row '{}'", line));
    rows.push_back({cells[0], std::stoi(cells[1]), std::stoi(cells[2]), std::stoi(cells[3]), std::stod(cells[4]),
                    std::stod(cells[5])});
  }
  return rows;
}

LoadedSplit load_split(const fs::path& dataset_dir, SplitRole role) {
  const auto manifest = read_manifest(dataset_dir);
  const auto labels = read_labels(dataset_dir);
  LoadedSplit out;
  std::size_t offset = 0;
  for (const auto& r : manifest.roles) {
    if (r.role == role) {
      for (std::size_t k = 0; k < r.count; ++k) {
        const auto& row = labels.at(offset + k);
        out.labels.push_back(row);
        out.images.push_back(read_png(dataset_dir / stimulus::to_string(role) / (row.image_id + ".png")));
      }
    }
    offset += r.count;
  }
  return out;
}

unsigned default_workers() {
  if (const char* env = std::getenv("CHARTSAMPLE_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return static_cast<unsigned>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04d}-{:02d}-{:02d}T{:02d}:{:02d}:{:02d}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec);
}

}  // namespace chartsample::dataset
