#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmg/error.hpp"
#include "dmg/instances.hpp"
#include "dmg/mask.hpp"
#include "dmg/partition.hpp"
#include "dmg/text.hpp"

namespace dmg {

// Pixel and instance tallies for one zone, or for the whole image when
// `zone` is empty. Background never has instances.
struct ZoneStats {
  std::optional<Zone> zone;
  CategoryCounts pixel_counts;
  CategoryCounts instance_counts;

  std::uint64_t building_pixels() const noexcept {
    return pixel_counts[DamageCategory::Intact] + pixel_counts[DamageCategory::Damaged] +
           pixel_counts[DamageCategory::Destroyed];
  }
  std::uint64_t building_instances() const noexcept {
    return instance_counts[DamageCategory::Intact] + instance_counts[DamageCategory::Damaged] +
           instance_counts[DamageCategory::Destroyed];
  }

  friend bool operator==(const ZoneStats&, const ZoneStats&) = default;
};

inline std::string scope_name(const ZoneStats& s) {
  return s.zone ? std::string(name_of(*s.zone)) : std::string("global");
}

struct SceneStats {
  PerZone<ZoneStats> zones;
  ZoneStats global;
};

inline SceneStats compute_zone_stats(const SegmentationMask& mask,
                                     std::span<const BuildingInstance> instances,
                                     const ZoneGeometry& geom) {
  if (geom.height() != mask.height() || geom.width() != mask.width()) {
    throw InconsistentInput("zone geometry " + std::to_string(geom.height()) + "x" +
                            std::to_string(geom.width()) + " does not match mask " +
                            std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  }
  SceneStats stats;
  for (auto z : kAllZones) stats.zones[z].zone = z;

  for (int v = 0; v < mask.height(); ++v) {
    for (int u = 0; u < mask.width(); ++u) {
      ++stats.zones[geom.zone_at(u, v)].pixel_counts[mask.at(u, v)];
    }
  }
  for (const auto& inst : instances) {
    if (!inst.zone) {
      throw InvalidArgument("instance " + std::to_string(inst.id) + " has no assigned zone");
    }
    if (!is_building(inst.category)) {
      throw InvalidArgument("instance " + std::to_string(inst.id) + " is background");
    }
    ++stats.zones[*inst.zone].instance_counts[inst.category];
  }
  for (auto z : kAllZones) {
    for (auto c : kAllCategories) {
      stats.global.pixel_counts[c] += stats.zones[z].pixel_counts[c];
      stats.global.instance_counts[c] += stats.zones[z].instance_counts[c];
    }
  }
  return stats;
}

// ---------------------------------------------------------------------------
// Dataset analytics

struct ClassBalance {
  std::uint64_t building_pixels = 0;
  PerCategory<double> fraction;  // Background stays 0
};

inline ClassBalance class_balance_from_counts(const CategoryCounts& counts) {
  ClassBalance b;
  for (auto c : kBuildingCategories) b.building_pixels += counts[c];
  if (b.building_pixels == 0) throw InvalidArgument("split has no building pixels");
  for (auto c : kBuildingCategories) {
    b.fraction[c] = static_cast<double>(counts[c]) / static_cast<double>(b.building_pixels);
  }
  return b;
}

// Pixel-weighted category fractions per split.
inline std::map<std::string, ClassBalance> class_balance(
    const std::map<std::string, std::vector<SegmentationMask>>& splits) {
  std::map<std::string, ClassBalance> out;
  for (const auto& [split, masks] : splits) {
    if (masks.empty()) throw InvalidArgument("split '" + split + "' is empty");
    CategoryCounts total;
    for (const auto& m : masks) {
      auto h = category_histogram(m);
      for (auto c : kAllCategories) total[c] += h[c];
    }
    try {
      out.emplace(split, class_balance_from_counts(total));
    } catch (const InvalidArgument&) {
      throw InvalidArgument("split '" + split + "' has no building pixels");
    }
  }
  return out;
}

struct SizeSummary {
  std::uint64_t count = 0;
  // Empty when count == 0.
  std::optional<double> min, q1, median, q3, max;
};

// Linear-interpolation quantile (type 7) of sorted data.
inline double quantile_linear(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidArgument("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline SizeSummary summarize_sizes(std::vector<double> areas) {
  SizeSummary s;
  s.count = areas.size();
  if (areas.empty()) return s;
  std::sort(areas.begin(), areas.end());
  s.min = areas.front();
  s.q1 = quantile_linear(areas, 0.25);
  s.median = quantile_linear(areas, 0.5);
  s.q3 = quantile_linear(areas, 0.75);
  s.max = areas.back();
  return s;
}

// Collects instance areas across many masks.
class SizeDistribution {
 public:
  void add(const BuildingInstance& inst) {
    areas_[inst.category].push_back(static_cast<double>(inst.pixel_count()));
  }
  void add(std::span<const BuildingInstance> instances) {
    for (const auto& i : instances) add(i);
  }
  PerCategory<SizeSummary> summary() const {
    PerCategory<SizeSummary> out;
    for (auto c : kBuildingCategories) out[c] = summarize_sizes(areas_[c]);
    return out;
  }

 private:
  PerCategory<std::vector<double>> areas_;
};

inline PerCategory<SizeSummary> size_distribution(std::span<const BuildingInstance> instances) {
  SizeDistribution d;
  d.add(instances);
  return d.summary();
}

// P(column present | row present) over building categories, row/column
// index 0..2 = Intact, Damaged, Destroyed.
struct CooccurrenceMatrix {
  std::array<std::array<double, 3>, 3> probability{};
  std::array<std::uint64_t, 3> support{};
  std::array<std::array<std::uint64_t, 3>, 3> joint{};
  std::uint64_t images = 0;
};

class CooccurrenceCounter {
 public:
  explicit CooccurrenceCounter(std::uint64_t presence_threshold = 1)
      : threshold_(std::max<std::uint64_t>(presence_threshold, 1)) {}

  void add(const CategoryCounts& histogram) {
    ++m_.images;
    std::array<bool, 3> present{};
    for (int i = 0; i < 3; ++i) present[i] = histogram[kBuildingCategories[i]] >= threshold_;
    for (int r = 0; r < 3; ++r) {
      if (!present[r]) continue;
      ++m_.support[r];
      for (int c = 0; c < 3; ++c) {
        if (present[c]) ++m_.joint[r][c];
      }
    }
  }
  void add(const SegmentationMask& mask) { add(category_histogram(mask)); }

  CooccurrenceMatrix result() const {
    CooccurrenceMatrix out = m_;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) {
        out.probability[r][c] =
            out.support[r] == 0 ? 0.0
                                : static_cast<double>(out.joint[r][c]) / static_cast<double>(out.support[r]);
      }
    }
    return out;
  }

 private:
  std::uint64_t threshold_;
  CooccurrenceMatrix m_;
};

inline CooccurrenceMatrix cooccurrence(std::span<const SegmentationMask> masks,
                                       std::uint64_t presence_threshold = 1) {
  if (masks.empty()) throw InvalidArgument("co-occurrence needs at least one mask");
  CooccurrenceCounter counter(presence_threshold);
  for (const auto& m : masks) counter.add(m);
  return counter.result();
}

struct WordFrequency {
  std::map<std::string, std::uint64_t> counts;
  PerZone<std::uint64_t> spatial;  // occurrences of each zone keyword
};

class WordCounter {
 public:
  void add(std::string_view text) {
    for (auto& tok : tokenize(text)) ++counts_[std::move(tok)];
  }
  WordFrequency result() const {
    WordFrequency out;
    out.counts = counts_;
    for (auto z : kAllZones) {
      auto it = counts_.find(std::string(name_of(z)));
      out.spatial[z] = it == counts_.end() ? 0 : it->second;
    }
    return out;
  }

 private:
  std::map<std::string, std::uint64_t> counts_;
};

inline WordFrequency word_frequency(std::span<const std::string> corpus) {
  WordCounter counter;
  for (const auto& text : corpus) counter.add(text);
  return counter.result();
}

}  // namespace dmg
