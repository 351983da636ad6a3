#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "dmg/error.hpp"
#include "dmg/mask.hpp"

namespace dmg {

enum class GradingMode {
  Literal,      // Level 1 requires damaged pixels
  StrictMinor,  // Level 1 requires damaged or destroyed pixels
};

struct DamageAssessment {
  std::uint64_t n_total = 0;
  std::uint64_t n_damaged = 0;
  std::uint64_t n_destroyed = 0;
  double rho_dest = 0;
  double rho_dam = 0;
  int level = 0;

  std::string_view level_name() const noexcept;
  friend bool operator==(const DamageAssessment&, const DamageAssessment&) = default;
};

inline constexpr std::array<std::string_view, 5> kLevelNames = {"No Damage", "Minor", "Moderate",
                                                                "Severe", "Destroyed"};

inline std::string_view DamageAssessment::level_name() const noexcept {
  return kLevelNames[static_cast<std::size_t>(level)];
}

namespace detail {

// numerator / total >= num / den, without rounding.
constexpr bool ratio_at_least(std::uint64_t numerator, std::uint64_t total, std::uint64_t num,
                              std::uint64_t den) noexcept {
  return static_cast<unsigned __int128>(numerator) * den >=
         static_cast<unsigned __int128>(total) * num;
}

struct Threshold {
  std::uint64_t num, den;
};

// {destroyed cutoff, damaged-or-destroyed cutoff} for levels 4, 3, 2.
inline constexpr std::array<std::array<Threshold, 2>, 3> kLevelThresholds = {{
    {{{3, 5}, {17, 20}}},   // 0.6, 0.85
    {{{3, 10}, {3, 5}}},    // 0.3, 0.6
    {{{1, 10}, {7, 20}}},   // 0.1, 0.35
}};

}  // namespace detail

// Dual-threshold grade from building-pixel counts. Branches are tested from
// Level 4 downward and the first match wins; every cutoff is inclusive.
inline DamageAssessment assess(std::uint64_t intact, std::uint64_t damaged, std::uint64_t destroyed,
                               GradingMode mode = GradingMode::Literal) {
  DamageAssessment a;
  a.n_damaged = damaged;
  a.n_destroyed = destroyed;
  a.n_total = intact + damaged + destroyed;
  if (a.n_total == 0) return a;

  const std::uint64_t hit = damaged + destroyed;
  a.rho_dest = static_cast<double>(destroyed) / static_cast<double>(a.n_total);
  a.rho_dam = static_cast<double>(hit) / static_cast<double>(a.n_total);

  for (std::size_t i = 0; i < detail::kLevelThresholds.size(); ++i) {
    const auto& [dest, dam] = detail::kLevelThresholds[i];
    if (detail::ratio_at_least(destroyed, a.n_total, dest.num, dest.den) ||
        detail::ratio_at_least(hit, a.n_total, dam.num, dam.den)) {
      a.level = 4 - static_cast<int>(i);
      return a;
    }
  }
  const bool minor = mode == GradingMode::Literal ? damaged > 0 : hit > 0;
  a.level = minor ? 1 : 0;
  return a;
}

inline DamageAssessment assess(const CategoryCounts& pixel_counts,
                               GradingMode mode = GradingMode::Literal) {
  return assess(pixel_counts[DamageCategory::Intact], pixel_counts[DamageCategory::Damaged],
                pixel_counts[DamageCategory::Destroyed], mode);
}

// Signed-count entry point for callers holding possibly negative tallies.
inline DamageAssessment assess_signed(std::int64_t intact, std::int64_t damaged,
                                      std::int64_t destroyed,
                                      GradingMode mode = GradingMode::Literal) {
  if (intact < 0 || damaged < 0 || destroyed < 0) {
    throw InvalidArgument("pixel counts must be non-negative");
  }
  return assess(static_cast<std::uint64_t>(intact), static_cast<std::uint64_t>(damaged),
                static_cast<std::uint64_t>(destroyed), mode);
}

}  // namespace dmg
