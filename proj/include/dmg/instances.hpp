#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dmg/error.hpp"
#include "dmg/mask.hpp"
#include "dmg/partition.hpp"

namespace dmg {

enum class Connectivity { Four = 4, Eight = 8 };

inline Connectivity connectivity_from_int(int n) {
  if (n == 4) return Connectivity::Four;
  if (n == 8) return Connectivity::Eight;
  throw InvalidArgument("connectivity must be 4 or 8, got " + std::to_string(n));
}

struct Aabb {
  int u_min = 0, v_min = 0, u_max = 0, v_max = 0;
  friend constexpr bool operator==(const Aabb&, const Aabb&) = default;
};

// Rotated rectangle in pixel-center coordinates. Long-edge convention:
// w >= h and theta in [-pi/2, pi/2) is the direction of the w edge.
struct OrientedBox {
  double cx = 0, cy = 0;
  double w = 1, h = 1;
  double theta = 0;
};

struct BuildingInstance {
  int id = 0;
  DamageCategory category = DamageCategory::Intact;
  std::vector<Pixel> pixels;  // raster order
  Aabb aabb;
  std::optional<Zone> zone;
  std::optional<OrientedBox> obb;

  std::size_t pixel_count() const noexcept { return pixels.size(); }
};

// Maximal same-category components of building pixels. Ids follow the
// raster position of each component's first pixel.
inline std::vector<BuildingInstance> extract_instances(const SegmentationMask& mask,
                                                       Connectivity connectivity = Connectivity::Eight) {
  const int H = mask.height();
  const int W = mask.width();
  constexpr int kUnlabeled = -1;
  std::vector<int> label(mask.size(), kUnlabeled);
  std::vector<BuildingInstance> out;

  static constexpr int kDu[8] = {1, -1, 0, 0, 1, 1, -1, -1};
  static constexpr int kDv[8] = {0, 0, 1, -1, 1, -1, 1, -1};
  const int neighbors = connectivity == Connectivity::Four ? 4 : 8;

  std::vector<std::size_t> stack;
  std::vector<std::size_t> sizes;
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const std::size_t start = std::size_t(v) * W + u;
      const DamageCategory c = mask.at(u, v);
      if (!is_building(c) || label[start] != kUnlabeled) continue;

      const int id = static_cast<int>(out.size());
      BuildingInstance inst;
      inst.id = id;
      inst.category = c;
      inst.aabb = Aabb{u, v, u, v};
      std::size_t count = 0;
      label[start] = id;
      stack.push_back(start);
      while (!stack.empty()) {
        const std::size_t cur = stack.back();
        stack.pop_back();
        ++count;
        const int cu = static_cast<int>(cur % W);
        const int cv = static_cast<int>(cur / W);
        inst.aabb.u_min = std::min(inst.aabb.u_min, cu);
        inst.aabb.u_max = std::max(inst.aabb.u_max, cu);
        inst.aabb.v_min = std::min(inst.aabb.v_min, cv);
        inst.aabb.v_max = std::max(inst.aabb.v_max, cv);
        for (int k = 0; k < neighbors; ++k) {
          const int nu = cu + kDu[k];
          const int nv = cv + kDv[k];
          if (nu < 0 || nu >= W || nv < 0 || nv >= H) continue;
          const std::size_t n = std::size_t(nv) * W + nu;
          if (label[n] == kUnlabeled && mask.at(nu, nv) == c) {
            label[n] = id;
            stack.push_back(n);
          }
        }
      }
      sizes.push_back(count);
      out.push_back(std::move(inst));
    }
  }

  // Second sweep lays each component's pixels out in raster order.
  for (std::size_t i = 0; i < out.size(); ++i) out[i].pixels.reserve(sizes[i]);
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const int id = label[std::size_t(v) * W + u];
      if (id != kUnlabeled) out[id].pixels.push_back(Pixel{u, v});
    }
  }
  return out;
}

// Folds an angle into [-pi/2, pi/2).
inline double fold_half_turn(double theta) {
  constexpr double kPi = std::numbers::pi;
  theta = std::fmod(theta, kPi);
  if (theta < -kPi / 2) theta += kPi;
  if (theta >= kPi / 2) theta -= kPi;
  return theta;
}

// Relative singular-value gap below which the orientation is treated as
// undefined and fixed to 0.
inline constexpr double kIsotropyTolerance = 1e-9;

// PCA box: orientation from the first right singular vector of the centered
// pixel-center matrix, extents from projections padded by one pixel.
inline OrientedBox fit_obb(std::span<const Pixel> pixels) {
  if (pixels.empty()) throw InvalidArgument("cannot fit a box to an empty instance");
  const auto n = static_cast<Eigen::Index>(pixels.size());

  double mean_u = 0, mean_v = 0;
  for (const auto& p : pixels) {
    mean_u += p.u;
    mean_v += p.v;
  }
  mean_u /= static_cast<double>(n);
  mean_v /= static_cast<double>(n);

  Eigen::MatrixX2d centered(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    centered(i, 0) = pixels[i].u - mean_u;
    centered(i, 1) = pixels[i].v - mean_v;
  }

  double theta = 0.0;
  if (n > 1) {
    Eigen::JacobiSVD<Eigen::MatrixX2d> svd(centered, Eigen::ComputeFullV);
    const auto& s = svd.singularValues();
    const bool isotropic = s(0) <= 0.0 || (s(0) - s(1)) <= kIsotropyTolerance * s(0);
    if (!isotropic) {
      const double vx = svd.matrixV()(0, 0);
      const double vy = svd.matrixV()(1, 0);
      theta = fold_half_turn(std::atan2(vy, vx));
    }
  }

  const double ax = std::cos(theta), ay = std::sin(theta);
  double lo1 = std::numeric_limits<double>::infinity(), hi1 = -lo1;
  double lo2 = lo1, hi2 = hi1;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = centered(i, 0), y = centered(i, 1);
    const double p1 = x * ax + y * ay;
    const double p2 = -x * ay + y * ax;
    lo1 = std::min(lo1, p1);
    hi1 = std::max(hi1, p1);
    lo2 = std::min(lo2, p2);
    hi2 = std::max(hi2, p2);
  }
  const double mid1 = (lo1 + hi1) / 2, mid2 = (lo2 + hi2) / 2;

  OrientedBox box;
  box.cx = mean_u + mid1 * ax - mid2 * ay;
  box.cy = mean_v + mid1 * ay + mid2 * ax;
  box.w = (hi1 - lo1) + 1.0;
  box.h = (hi2 - lo2) + 1.0;
  box.theta = theta;
  if (box.w < box.h) {
    std::swap(box.w, box.h);
    box.theta = fold_half_turn(theta + std::numbers::pi / 2);
  }
  return box;
}

inline OrientedBox fit_obb(const BuildingInstance& instance) { return fit_obb(instance.pixels); }

// Assigns zones and fits boxes in place.
inline void locate_instances(std::vector<BuildingInstance>& instances, const ZoneGeometry& geom) {
  for (auto& inst : instances) {
    inst.zone = assign_zone(inst.pixels, geom);
    inst.obb = fit_obb(inst.pixels);
  }
}

namespace detail {
inline double clean_zero(double x) { return std::abs(x) < 5e-7 ? 0.0 : x; }
}  // namespace detail

// `code cx/W cy/H w/W h/H theta`, six decimals each.
inline std::string to_yolo_obb(DamageCategory category, const OrientedBox& box, int height,
                               int width) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d %.6f %.6f %.6f %.6f %.6f", code_of(category),
                detail::clean_zero(box.cx / width), detail::clean_zero(box.cy / height),
                box.w / width, box.h / height, detail::clean_zero(box.theta));
  return buf;
}

inline std::string to_yolo_obb(const BuildingInstance& instance, int height, int width) {
  if (!instance.obb) {
    throw InvalidArgument("instance " + std::to_string(instance.id) + " has no oriented box");
  }
  return to_yolo_obb(instance.category, *instance.obb, height, width);
}

// Sidecar file body: one record per line, LF-terminated, id order.
inline std::string yolo_obb_sidecar(std::span<const BuildingInstance> instances, int height,
                                    int width) {
  std::string out;
  for (const auto& inst : instances) {
    out += to_yolo_obb(inst, height, width);
    out += '\n';
  }
  return out;
}

}  // namespace dmg
