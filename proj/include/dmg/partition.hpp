#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "dmg/error.hpp"
#include "dmg/mask.hpp"

namespace dmg {

enum class Zone : std::uint8_t { Top = 0, Central = 1, Bottom = 2, Left = 3, Right = 4 };

inline constexpr int kZoneCount = 5;

// Serialization and report order.
inline constexpr std::array<Zone, 5> kAllZones = {Zone::Top, Zone::Central, Zone::Bottom,
                                                  Zone::Left, Zone::Right};

// Tie-break order for majority assignment: earlier wins.
inline constexpr std::array<Zone, 5> kZonePriority = {Zone::Central, Zone::Top, Zone::Bottom,
                                                      Zone::Left, Zone::Right};

constexpr int index_of(Zone z) noexcept { return static_cast<int>(z); }

constexpr std::string_view name_of(Zone z) noexcept {
  switch (z) {
    case Zone::Top: return "top";
    case Zone::Central: return "central";
    case Zone::Bottom: return "bottom";
    case Zone::Left: return "left";
    case Zone::Right: return "right";
  }
  return "unknown";
}

inline std::optional<Zone> zone_from_name(std::string_view name) {
  for (auto z : kAllZones) {
    if (name_of(z) == name) return z;
  }
  return std::nullopt;
}

template <typename T>
struct PerZone {
  std::array<T, 5> values{};

  constexpr T& operator[](Zone z) noexcept { return values[index_of(z)]; }
  constexpr const T& operator[](Zone z) const noexcept { return values[index_of(z)]; }
  friend constexpr bool operator==(const PerZone&, const PerZone&) = default;
};

// Boundaries of the five-zone layout. Central covers rows [r1, r2) and
// columns [c1, c2); Left and Right are full-height strips outside [c1, c2);
// Top and Bottom are the bands above and below Central between c1 and c2.
class ZoneGeometry {
 public:
  ZoneGeometry(int height, int width) : height_(height), width_(width) {
    if (height < 1 || width < 1) {
      throw InvalidArgument("zone geometry needs positive dimensions");
    }
    // Integer forms of floor(0.25H), floor(0.75H), floor(0.2W), floor(0.8W).
    r1_ = static_cast<int>(std::int64_t(height) / 4);
    r2_ = static_cast<int>(std::int64_t(height) * 3 / 4);
    c1_ = static_cast<int>(std::int64_t(width) / 5);
    c2_ = static_cast<int>(std::int64_t(width) * 4 / 5);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int r1() const noexcept { return r1_; }
  int r2() const noexcept { return r2_; }
  int c1() const noexcept { return c1_; }
  int c2() const noexcept { return c2_; }

  bool contains(int u, int v) const noexcept {
    return u >= 0 && u < width_ && v >= 0 && v < height_;
  }

  // Unchecked lookup for hot loops; callers guarantee the pixel is in range.
  Zone zone_at(int u, int v) const noexcept {
    if (u < c1_) return Zone::Left;
    if (u >= c2_) return Zone::Right;
    if (v < r1_) return Zone::Top;
    if (v >= r2_) return Zone::Bottom;
    return Zone::Central;
  }

  // Pixel count of each zone, from the boundary arithmetic alone.
  PerZone<std::uint64_t> zone_areas() const noexcept {
    PerZone<std::uint64_t> a;
    const std::uint64_t band = std::uint64_t(c2_ - c1_);
    a[Zone::Left] = std::uint64_t(c1_) * height_;
    a[Zone::Right] = std::uint64_t(width_ - c2_) * height_;
    a[Zone::Top] = band * r1_;
    a[Zone::Central] = band * (r2_ - r1_);
    a[Zone::Bottom] = band * (height_ - r2_);
    return a;
  }

  friend bool operator==(const ZoneGeometry&, const ZoneGeometry&) = default;

 private:
  int height_, width_;
  int r1_, r2_, c1_, c2_;
};

inline Zone zone_of_pixel(Pixel p, const ZoneGeometry& geom) {
  if (!geom.contains(p.u, p.v)) {
    throw InvalidArgument("pixel (" + std::to_string(p.u) + "," + std::to_string(p.v) +
                          ") outside " + std::to_string(geom.height()) + "x" +
                          std::to_string(geom.width()) + " image");
  }
  return geom.zone_at(p.u, p.v);
}

// Per-zone pixel tallies for a set of pixels.
inline PerZone<std::uint64_t> zone_overlap(std::span<const Pixel> pixels, const ZoneGeometry& geom) {
  PerZone<std::uint64_t> counts;
  for (const auto& p : pixels) ++counts[zone_of_pixel(p, geom)];
  return counts;
}

// Majority-overlap assignment; ties resolved by kZonePriority.
inline Zone assign_zone(std::span<const Pixel> pixels, const ZoneGeometry& geom) {
  if (pixels.empty()) throw InvalidArgument("cannot assign a zone to an empty pixel list");
  const auto counts = zone_overlap(pixels, geom);
  Zone best = kZonePriority[0];
  for (auto z : kZonePriority) {
    if (counts[z] > counts[best]) best = z;
  }
  return best;
}

}  // namespace dmg
