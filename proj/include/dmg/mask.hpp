#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dmg/error.hpp"

namespace dmg {

enum class DamageCategory : std::uint8_t {
  Background = 0,
  Intact = 1,
  Damaged = 2,
  Destroyed = 3,
};

inline constexpr int kCategoryCount = 4;

inline constexpr std::array<DamageCategory, 4> kAllCategories = {
    DamageCategory::Background, DamageCategory::Intact, DamageCategory::Damaged,
    DamageCategory::Destroyed};

// The three categories that denote a building, in code order.
inline constexpr std::array<DamageCategory, 3> kBuildingCategories = {
    DamageCategory::Intact, DamageCategory::Damaged, DamageCategory::Destroyed};

constexpr int code_of(DamageCategory c) noexcept { return static_cast<int>(c); }

constexpr bool is_building(DamageCategory c) noexcept {
  return c != DamageCategory::Background;
}

inline std::optional<DamageCategory> category_from_code(int code) noexcept {
  if (code < 0 || code >= kCategoryCount) return std::nullopt;
  return static_cast<DamageCategory>(code);
}

// Lowercase serialization name.
constexpr std::string_view name_of(DamageCategory c) noexcept {
  switch (c) {
    case DamageCategory::Background: return "background";
    case DamageCategory::Intact: return "intact";
    case DamageCategory::Damaged: return "damaged";
    case DamageCategory::Destroyed: return "destroyed";
  }
  return "unknown";
}

inline std::optional<DamageCategory> category_from_name(std::string_view name) {
  std::string lowered(name);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  for (auto c : kAllCategories) {
    if (name_of(c) == lowered) return c;
  }
  return std::nullopt;
}

// Fixed-size table indexed by category.
template <typename T>
struct PerCategory {
  std::array<T, 4> values{};

  constexpr T& operator[](DamageCategory c) noexcept { return values[code_of(c)]; }
  constexpr const T& operator[](DamageCategory c) const noexcept {
    return values[code_of(c)];
  }
  friend constexpr bool operator==(const PerCategory&, const PerCategory&) = default;
};

using CategoryCounts = PerCategory<std::uint64_t>;

struct Pixel {
  int u = 0;  // column
  int v = 0;  // row
  friend constexpr bool operator==(const Pixel&, const Pixel&) = default;
  friend constexpr auto operator<=>(const Pixel&, const Pixel&) = default;
};

// Row-major grid of categories; (v, u) with v growing downward.
class SegmentationMask {
 public:
  SegmentationMask(int height, int width, std::vector<DamageCategory> labels)
      : height_(height), width_(width), labels_(std::move(labels)) {
    if (height < 1 || width < 1) {
      throw InvalidArgument("mask dimensions must be positive, got " +
                            std::to_string(height) + "x" + std::to_string(width));
    }
    if (labels_.size() != static_cast<std::size_t>(height) * width) {
      throw InvalidArgument("mask label count " + std::to_string(labels_.size()) +
                            " does not match " + std::to_string(height) + "x" +
                            std::to_string(width));
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (code_of(labels_[i]) >= kCategoryCount) {
        throw InvalidArgument("invalid category code " + std::to_string(code_of(labels_[i])) +
                              " at index " + std::to_string(i));
      }
    }
  }

  // All-background mask.
  SegmentationMask(int height, int width)
      : SegmentationMask(height, width,
                         std::vector<DamageCategory>(
                             static_cast<std::size_t>(std::max(height, 0)) *
                                 static_cast<std::size_t>(std::max(width, 0)),
                             DamageCategory::Background)) {}

  // Builds a mask from raw category codes, rejecting anything outside 0..3.
  static SegmentationMask from_codes(int height, int width,
                                     std::span<const std::uint8_t> codes) {
    if (height < 1 || width < 1 ||
        codes.size() != static_cast<std::size_t>(height) * width) {
      throw InvalidArgument("code grid does not match mask dimensions");
    }
    std::vector<DamageCategory> labels(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
      auto c = category_from_code(codes[i]);
      if (!c) {
        throw MaskFormatError("value " + std::to_string(codes[i]) +
                              " outside category range at (" + std::to_string(i % width) +
                              "," + std::to_string(i / width) + ")");
      }
      labels[i] = *c;
    }
    return SegmentationMask(height, width, std::move(labels));
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return labels_.size(); }

  DamageCategory at(int u, int v) const noexcept {
    return labels_[static_cast<std::size_t>(v) * width_ + u];
  }
  std::span<const DamageCategory> labels() const noexcept { return labels_; }

  // Copy with one cell changed.
  SegmentationMask with(int u, int v, DamageCategory c) const {
    auto labels = labels_;
    labels.at(static_cast<std::size_t>(v) * width_ + u) = c;
    return SegmentationMask(height_, width_, std::move(labels));
  }

  friend bool operator==(const SegmentationMask&, const SegmentationMask&) = default;

 private:
  int height_;
  int width_;
  std::vector<DamageCategory> labels_;
};

inline CategoryCounts category_histogram(const SegmentationMask& mask) {
  CategoryCounts counts;
  for (auto c : mask.labels()) ++counts[c];
  return counts;
}

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend constexpr bool operator==(const Rgb&, const Rgb&) = default;
};

inline std::string to_string(const Rgb& c) {
  return "(" + std::to_string(c.r) + "," + std::to_string(c.g) + "," + std::to_string(c.b) + ")";
}

// One color per category, injective.
class Palette {
 public:
  Palette() = default;

  explicit Palette(PerCategory<Rgb> colors) : colors_(colors) {
    for (int i = 0; i < kCategoryCount; ++i) {
      for (int j = i + 1; j < kCategoryCount; ++j) {
        if (colors_.values[i] == colors_.values[j]) {
          throw InvalidArgument("palette maps " + to_string(colors_.values[i]) +
                                " to both " +
                                std::string(name_of(static_cast<DamageCategory>(i))) +
                                " and " + std::string(name_of(static_cast<DamageCategory>(j))));
        }
      }
    }
  }

  const Rgb& color_of(DamageCategory c) const noexcept { return colors_[c]; }

  // Exact match when tolerance is 0; otherwise every channel may differ by up
  // to `tolerance`. A color within tolerance of two categories is rejected.
  std::optional<DamageCategory> decode(const Rgb& px, int tolerance = 0) const {
    std::optional<DamageCategory> found;
    for (auto c : kAllCategories) {
      const Rgb& ref = colors_[c];
      if (std::abs(int(px.r) - int(ref.r)) <= tolerance &&
          std::abs(int(px.g) - int(ref.g)) <= tolerance &&
          std::abs(int(px.b) - int(ref.b)) <= tolerance) {
        if (found) {
          throw InvalidArgument("color " + to_string(px) + " is ambiguous at tolerance " +
                                std::to_string(tolerance));
        }
        found = c;
      }
    }
    return found;
  }

  friend bool operator==(const Palette&, const Palette&) = default;

 private:
  PerCategory<Rgb> colors_{{Rgb{0, 0, 0}, Rgb{0, 255, 0}, Rgb{0, 0, 255}, Rgb{255, 0, 0}}};
};

// Parses `R,G,B=category_name` lines. Blank lines and `#` comments are
// ignored; categories not listed keep their default color.
inline Palette parse_palette_config(std::string_view text) {
  PerCategory<Rgb> colors{{Rgb{0, 0, 0}, Rgb{0, 255, 0}, Rgb{0, 0, 255}, Rgb{255, 0, 0}}};
  PerCategory<bool> seen;
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  auto trim = [](std::string s) {
    auto not_space = [](unsigned char ch) { return !std::isspace(ch); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto bad = [&](const std::string& why) {
      return InvalidArgument("palette line " + std::to_string(line_no) + ": " + why);
    };
    auto eq = line.find('=');
    if (eq == std::string::npos) throw bad("expected R,G,B=category");
    auto category = category_from_name(trim(line.substr(eq + 1)));
    if (!category) throw bad("unknown category '" + trim(line.substr(eq + 1)) + "'");
    if (seen[*category]) throw bad("category listed twice");
    seen[*category] = true;

    std::array<int, 3> channel{};
    std::istringstream rgb(line.substr(0, eq));
    std::string part;
    int n = 0;
    while (std::getline(rgb, part, ',')) {
      if (n == 3) throw bad("too many channels");
      part = trim(part);
      char* end = nullptr;
      long value = std::strtol(part.c_str(), &end, 10);
      if (part.empty() || *end != '\0' || value < 0 || value > 255) {
        throw bad("channel '" + part + "' is not an integer in 0..255");
      }
      channel[n++] = static_cast<int>(value);
    }
    if (n != 3) throw bad("expected three channels");
    colors[*category] = Rgb{static_cast<std::uint8_t>(channel[0]),
                            static_cast<std::uint8_t>(channel[1]),
                            static_cast<std::uint8_t>(channel[2])};
  }
  return Palette(colors);
}

inline Palette load_palette(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open palette file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_palette_config(buf.str());
}

}  // namespace dmg
