#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "dmg/grading.hpp"
#include "dmg/instances.hpp"
#include "dmg/manifest.hpp"
#include "dmg/narration.hpp"
#include "dmg/partition.hpp"
#include "dmg/raster_io.hpp"
#include "dmg/zonal_stats.hpp"

namespace dmg {

struct AnnotateOptions {
  std::string image_id = "image";
  Connectivity connectivity = Connectivity::Eight;
  GradingMode grading_mode = GradingMode::Literal;
};

struct AnnotationResult {
  std::vector<BuildingInstance> instances;
  SceneStats stats;
  DamageAssessment assessment;
  AnnotationDocument document;
  std::string json;     // serialized document
  std::string sidecar;  // YOLO-OBB lines
};

// Partition, extract, grade, narrate and compile one mask.
inline AnnotationResult annotate_mask(const SegmentationMask& mask, const AnnotateOptions& options,
                                      TextBackend& backend) {
  AnnotationResult r;
  const ZoneGeometry geom(mask.height(), mask.width());
  r.instances = extract_instances(mask, options.connectivity);
  locate_instances(r.instances, geom);
  r.stats = compute_zone_stats(mask, r.instances, geom);
  r.assessment = assess(r.stats.global.pixel_counts, options.grading_mode);
  auto texts = narrate(r.stats, r.assessment, backend);

  AnnotationMetadata meta;
  meta.image_id = options.image_id;
  meta.height = mask.height();
  meta.width = mask.width();
  meta.connectivity = options.connectivity;
  meta.grading_mode = options.grading_mode;
  meta.backend = backend.name();
  r.document = compile_annotation(mask, r.instances, r.stats, r.assessment, std::move(texts),
                                  std::move(meta));
  r.json = serialize(r.document);
  r.sidecar = yolo_obb_sidecar(r.instances, mask.height(), mask.width());
  return r;
}

inline void write_text_file(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
  if (!out) throw Error("cannot write " + path.string());
}

// Writes <out>/<id>.annotation.json and <out>/<id>.obb.txt.
inline void write_annotation(const fs::path& out_dir, const std::string& id,
                             const AnnotationResult& r) {
  write_text_file(out_dir / (id + ".annotation.json"), r.json);
  write_text_file(out_dir / (id + ".obb.txt"), r.sidecar);
}

// ---------------------------------------------------------------------------
// Batch

struct BatchOptions {
  fs::path out_dir;
  unsigned workers = 0;  // 0 = hardware concurrency
  LoadOptions load;
  Connectivity connectivity = Connectivity::Eight;
  GradingMode grading_mode = GradingMode::Literal;
};

struct EntryOutcome {
  std::string id;
  bool ok = false;
  std::string error;
};

struct BatchSummary {
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::vector<EntryOutcome> entries;  // manifest order

  int exit_code() const noexcept { return failed == 0 ? 0 : 1; }
};

inline nlohmann::ordered_json to_json(const BatchSummary& s) {
  nlohmann::ordered_json failures = nlohmann::ordered_json::array();
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : s.entries) {
    entries.push_back({{"id", e.id}, {"status", e.ok ? "ok" : "failed"}});
    if (!e.ok) failures.push_back({{"id", e.id}, {"error", e.error}});
  }
  return {{"ok", s.ok}, {"failed", s.failed}, {"failures", std::move(failures)},
          {"entries", std::move(entries)}};
}

inline unsigned resolve_workers(unsigned requested) {
  if (requested > 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Annotates every entry. Failures are recorded per entry; only an unusable
// output directory aborts the run.
inline BatchSummary batch_annotate(const Manifest& manifest, const BatchOptions& options,
                                   TextBackend& backend) {
  manifest.validate(false);
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec || !fs::is_directory(options.out_dir)) {
    throw Error("cannot create output directory " + options.out_dir.string() +
                (ec ? ": " + ec.message() : ""));
  }

  const std::size_t n = manifest.entries.size();
  std::vector<EntryOutcome> outcomes(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      const auto& entry = manifest.entries[i];
      auto& outcome = outcomes[i];
      outcome.id = entry.id;
      try {
        const auto mask = load_mask(entry.mask, options.load);
        AnnotateOptions ao;
        ao.image_id = entry.id;
        ao.connectivity = options.connectivity;
        ao.grading_mode = options.grading_mode;
        write_annotation(options.out_dir, entry.id, annotate_mask(mask, ao, backend));
        outcome.ok = true;
      } catch (const std::exception& e) {
        outcome.error = e.what();
      }
    }
  };

  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(resolve_workers(options.workers), std::max<std::size_t>(n, 1)));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
  }

  BatchSummary summary;
  summary.entries = std::move(outcomes);
  for (const auto& o : summary.entries) (o.ok ? summary.ok : summary.failed)++;
  write_text_file(options.out_dir / "run_summary.json", to_json(summary).dump(2) + "\n");
  return summary;
}

// ---------------------------------------------------------------------------
// Dataset statistics

struct DatasetStatsOptions {
  LoadOptions load;
  Connectivity connectivity = Connectivity::Eight;
  std::uint64_t presence_threshold = 1;
  // When set, word frequencies come from these texts instead of the
  // template annotations of each mask.
  std::optional<std::vector<std::string>> corpus;
};

struct DatasetStats {
  std::map<Split, CategoryCounts> split_pixels;
  std::map<Split, ClassBalance> class_balance;
  std::optional<SplitConsistency> consistency;
  PerCategory<SizeSummary> sizes;
  CooccurrenceMatrix cooccurrence;
  WordFrequency words;
};

inline DatasetStats compute_dataset_stats(const Manifest& manifest,
                                          const DatasetStatsOptions& options) {
  if (manifest.entries.empty()) throw InvalidArgument("manifest is empty");
  manifest.validate(true);
  DatasetStats out;
  SizeDistribution sizes;
  CooccurrenceCounter cooc(options.presence_threshold);
  WordCounter words;
  TemplateBackend backend;

  for (const auto& entry : manifest.entries) {
    const auto mask = load_mask(entry.mask, options.load);
    const auto hist = category_histogram(mask);
    auto& acc = out.split_pixels[entry.split];
    for (auto c : kAllCategories) acc[c] += hist[c];
    cooc.add(hist);
    if (options.corpus) {
      sizes.add(extract_instances(mask, options.connectivity));
    } else {
      AnnotateOptions ao;
      ao.image_id = entry.id;
      ao.connectivity = options.connectivity;
      auto r = annotate_mask(mask, ao, backend);
      sizes.add(r.instances);
      for (auto z : kAllZones) words.add(r.document.texts.zone_descriptions[z]);
      words.add(r.document.texts.counting_text);
      words.add(r.document.texts.summary_text);
    }
  }
  if (options.corpus) {
    for (const auto& t : *options.corpus) words.add(t);
  }
  for (const auto& [split, counts] : out.split_pixels) {
    try {
      out.class_balance.emplace(split, class_balance_from_counts(counts));
    } catch (const InvalidArgument&) {
      throw InvalidArgument("split '" + std::string(name_of(split)) + "' has no building pixels");
    }
  }
  if (out.split_pixels.size() == kAllSplits.size()) {
    out.consistency = split_consistency_from_counts(out.split_pixels);
  }
  out.sizes = sizes.summary();
  out.cooccurrence = cooc.result();
  out.words = words.result();
  return out;
}

// Loads every mask and compares building-class fractions across splits.
inline SplitConsistency check_split_consistency(const Manifest& manifest,
                                                const LoadOptions& load = {}) {
  std::map<Split, CategoryCounts> counts;
  for (const auto& entry : manifest.entries) {
    const auto hist = category_histogram(load_mask(entry.mask, load));
    auto& acc = counts[entry.split];
    for (auto c : kAllCategories) acc[c] += hist[c];
  }
  return split_consistency_from_counts(counts);
}

inline nlohmann::ordered_json to_json(const DatasetStats& s) {
  using nlohmann::ordered_json;
  auto fractions = [](const ClassBalance& b) {
    ordered_json j;
    for (auto c : kBuildingCategories) j[std::string(name_of(c))] = b.fraction[c];
    j["building_pixels"] = b.building_pixels;
    return j;
  };
  ordered_json balance = ordered_json::object();
  for (const auto& [split, b] : s.class_balance) balance[std::string(name_of(split))] = fractions(b);

  ordered_json consistency = nullptr;
  if (s.consistency) {
    consistency = ordered_json::object();
    ordered_json gaps;
    for (auto c : kBuildingCategories) gaps[std::string(name_of(c))] = s.consistency->gap[c];
    consistency["gap"] = std::move(gaps);
    consistency["max_gap"] = s.consistency->max_gap;
  }

  ordered_json sizes;
  for (auto c : kBuildingCategories) {
    const auto& sz = s.sizes[c];
    ordered_json j;
    j["count"] = sz.count;
    auto opt = [](const std::optional<double>& x) { return x ? ordered_json(*x) : ordered_json(nullptr); };
    j["min"] = opt(sz.min);
    j["q1"] = opt(sz.q1);
    j["median"] = opt(sz.median);
    j["q3"] = opt(sz.q3);
    j["max"] = opt(sz.max);
    sizes[std::string(name_of(c))] = std::move(j);
  }

  ordered_json cooc;
  cooc["images"] = s.cooccurrence.images;
  ordered_json rows;
  for (int r = 0; r < 3; ++r) {
    ordered_json row;
    row["support"] = s.cooccurrence.support[r];
    for (int c = 0; c < 3; ++c) {
      row[std::string(name_of(kBuildingCategories[c]))] = s.cooccurrence.probability[r][c];
    }
    rows[std::string(name_of(kBuildingCategories[r]))] = std::move(row);
  }
  cooc["p_column_given_row"] = std::move(rows);

  ordered_json words;
  ordered_json spatial;
  for (auto z : kAllZones) spatial[std::string(name_of(z))] = s.words.spatial[z];
  words["spatial_keywords"] = std::move(spatial);
  ordered_json counts = ordered_json::object();
  for (const auto& [tok, n] : s.words.counts) counts[tok] = n;
  words["counts"] = std::move(counts);

  return {{"class_balance", std::move(balance)},
          {"split_consistency", std::move(consistency)},
          {"size_distribution", std::move(sizes)},
          {"cooccurrence", std::move(cooc)},
          {"word_frequency", std::move(words)}};
}

// Plot-ready CSV tables next to the JSON report.
inline void write_stats_csv(const fs::path& dir, const DatasetStats& s) {
  fs::create_directories(dir);
  {
    std::string out = "split,intact,damaged,destroyed,building_pixels\n";
    for (const auto& [split, b] : s.class_balance) {
      out += std::string(name_of(split));
      for (auto c : kBuildingCategories) out += "," + nlohmann::json(b.fraction[c]).dump();
      out += "," + std::to_string(b.building_pixels) + "\n";
    }
    write_text_file(dir / "class_balance.csv", out);
  }
  {
    std::string out = "category,count,min,q1,median,q3,max\n";
    for (auto c : kBuildingCategories) {
      const auto& sz = s.sizes[c];
      auto cell = [](const std::optional<double>& x) { return x ? nlohmann::json(*x).dump() : std::string(); };
      out += std::string(name_of(c)) + "," + std::to_string(sz.count) + "," + cell(sz.min) + "," +
             cell(sz.q1) + "," + cell(sz.median) + "," + cell(sz.q3) + "," + cell(sz.max) + "\n";
    }
    write_text_file(dir / "size_distribution.csv", out);
  }
  {
    std::string out = "row,support,intact,damaged,destroyed\n";
    for (int r = 0; r < 3; ++r) {
      out += std::string(name_of(kBuildingCategories[r])) + "," +
             std::to_string(s.cooccurrence.support[r]);
      for (int c = 0; c < 3; ++c) out += "," + nlohmann::json(s.cooccurrence.probability[r][c]).dump();
      out += "\n";
    }
    write_text_file(dir / "cooccurrence.csv", out);
  }
  {
    std::vector<std::pair<std::string, std::uint64_t>> ranked(s.words.counts.begin(), s.words.counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    std::string out = "token,count\n";
    for (const auto& [tok, n] : ranked) out += tok + "," + std::to_string(n) + "\n";
    write_text_file(dir / "word_frequency.csv", out);
  }
}

}  // namespace dmg
