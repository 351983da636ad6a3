#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmg/error.hpp"
#include "dmg/mask.hpp"
#include "dmg/zonal_stats.hpp"

namespace dmg {

namespace fs = std::filesystem;

enum class Split { Train, Val, Test };

inline constexpr std::array<Split, 3> kAllSplits = {Split::Train, Split::Val, Split::Test};

constexpr std::string_view name_of(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "unknown";
}

inline std::optional<Split> split_from_name(std::string_view name) {
  for (auto s : kAllSplits) {
    if (name_of(s) == name) return s;
  }
  return std::nullopt;
}

struct ManifestEntry {
  std::string id;
  fs::path mask;
  std::optional<fs::path> pre_image;
  std::optional<fs::path> post_image;
  Split split = Split::Train;
};

struct Manifest {
  std::vector<ManifestEntry> entries;

  // Unique ids always; existing mask files when `check_files` is set.
  void validate(bool check_files) const {
    std::set<std::string> ids;
    for (const auto& e : entries) {
      if (e.id.empty()) throw ManifestError("manifest entry with empty id");
      if (!ids.insert(e.id).second) throw ManifestError("duplicate manifest id '" + e.id + "'");
      if (check_files && !fs::is_regular_file(e.mask)) {
        throw ManifestError("mask for '" + e.id + "' not found: " + e.mask.string());
      }
    }
  }
};

// Directory layout searched by build_manifest. With split folders present
// masks live in <root>/<split>/<mask_dir>; otherwise in <root>/<mask_dir> or
// <root> itself, tagged with `default_split`.
struct ManifestLayout {
  std::string mask_dir = "masks";
  std::string pre_dir = "pre";
  std::string post_dir = "post";
  std::vector<std::string> mask_extensions = {".png", ".raw"};
  Split default_split = Split::Train;
};

struct ManifestBuild {
  Manifest manifest;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> files;
  std::error_code ec;
  fs::directory_iterator it(dir, ec);
  if (ec) throw ManifestError("cannot read directory " + dir.string() + ": " + ec.message());
  for (const auto& entry : it) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end(),
            [](const fs::path& a, const fs::path& b) { return a.filename() < b.filename(); });
  return files;
}

// stem -> path for every regular file in dir; empty when dir is absent.
inline std::map<std::string, fs::path> files_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& f : sorted_files(dir)) out.emplace(f.stem().string(), f);
  return out;
}

}  // namespace detail

inline ManifestBuild build_manifest(const fs::path& root, const ManifestLayout& layout = {}) {
  if (!fs::is_directory(root)) throw ManifestError("not a readable directory: " + root.string());

  struct Group {
    Split split;
    fs::path base;
  };
  std::vector<Group> groups;
  std::vector<std::string> split_names;
  for (auto s : kAllSplits) split_names.emplace_back(name_of(s));
  std::sort(split_names.begin(), split_names.end());
  for (const auto& name : split_names) {
    if (fs::is_directory(root / name)) groups.push_back({*split_from_name(name), root / name});
  }
  if (groups.empty()) groups.push_back({layout.default_split, root});

  ManifestBuild result;
  std::map<std::string, std::string> seen;  // stem -> where it was found
  for (const auto& g : groups) {
    const fs::path mask_dir =
        fs::is_directory(g.base / layout.mask_dir) ? g.base / layout.mask_dir : g.base;
    const auto pre = detail::files_by_stem(g.base / layout.pre_dir);
    const auto post = detail::files_by_stem(g.base / layout.post_dir);
    const bool has_pre = fs::is_directory(g.base / layout.pre_dir);
    const bool has_post = fs::is_directory(g.base / layout.post_dir);

    std::set<std::string> stems;
    for (const auto& f : detail::sorted_files(mask_dir)) {
      const auto ext = f.extension().string();
      if (std::find(layout.mask_extensions.begin(), layout.mask_extensions.end(), ext) ==
          layout.mask_extensions.end()) {
        continue;
      }
      const std::string stem = f.stem().string();
      auto [it, fresh] = seen.emplace(stem, f.string());
      if (!fresh) {
        throw ManifestError("duplicate mask stem '" + stem + "': " + it->second + " and " +
                            f.string());
      }
      stems.insert(stem);
      ManifestEntry e;
      e.id = stem;
      e.mask = f;
      e.split = g.split;
      if (auto p = pre.find(stem); p != pre.end()) e.pre_image = p->second;
      else if (has_pre) result.warnings.push_back("mask '" + stem + "' has no pre-event image");
      if (auto p = post.find(stem); p != post.end()) e.post_image = p->second;
      else if (has_post) result.warnings.push_back("mask '" + stem + "' has no post-event image");
      result.manifest.entries.push_back(std::move(e));
    }
    for (const auto* images : {&pre, &post}) {
      for (const auto& [stem, path] : *images) {
        if (!stems.contains(stem)) {
          result.warnings.push_back("image " + path.string() + " has no matching mask");
        }
      }
    }
  }
  if (result.manifest.entries.empty()) {
    result.warnings.push_back("no masks found under " + root.string());
  }
  return result;
}

// Paths are written relative to the manifest file's directory.
inline nlohmann::ordered_json to_json(const Manifest& m, const fs::path& base_dir) {
  auto rel = [&](const fs::path& p) {
    std::error_code ec;
    auto r = fs::relative(p, base_dir, ec);
    return (ec || r.empty() ? p : r).generic_string();
  };
  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  for (const auto& e : m.entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["mask"] = rel(e.mask);
    j["pre"] = e.pre_image ? nlohmann::ordered_json(rel(*e.pre_image)) : nullptr;
    j["post"] = e.post_image ? nlohmann::ordered_json(rel(*e.post_image)) : nullptr;
    j["split"] = std::string(name_of(e.split));
    entries.push_back(std::move(j));
  }
  return {{"version", 1}, {"entries", std::move(entries)}};
}

inline void save_manifest(const fs::path& path, const Manifest& m) {
  auto base = path.parent_path().empty() ? fs::current_path() : fs::absolute(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ManifestError("cannot write manifest " + path.string());
  out << to_json(m, base).dump(2) << "\n";
}

inline Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ManifestError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  const fs::path base = path.parent_path();
  auto resolve = [&](const std::string& p) {
    fs::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  Manifest m;
  try {
    for (const auto& e : j.at("entries")) {
      ManifestEntry entry;
      entry.id = e.at("id").get<std::string>();
      entry.mask = resolve(e.at("mask").get<std::string>());
      if (e.contains("pre") && !e["pre"].is_null()) entry.pre_image = resolve(e["pre"].get<std::string>());
      if (e.contains("post") && !e["post"].is_null()) entry.post_image = resolve(e["post"].get<std::string>());
      const auto split = e.value("split", std::string("train"));
      auto s = split_from_name(split);
      if (!s) throw ManifestError("entry '" + entry.id + "' has invalid split '" + split + "'");
      entry.split = *s;
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError("malformed manifest " + path.string() + ": " + e.what());
  }
  m.validate(false);
  return m;
}

// ---------------------------------------------------------------------------

struct SplitConsistency {
  std::map<Split, ClassBalance> balance;
  PerCategory<double> gap;  // max |fraction_a - fraction_b| per category
  double max_gap = 0;
};

inline SplitConsistency split_consistency_from_counts(const std::map<Split, CategoryCounts>& counts) {
  SplitConsistency out;
  for (auto s : kAllSplits) {
    auto it = counts.find(s);
    if (it == counts.end()) {
      throw InvalidArgument("split '" + std::string(name_of(s)) + "' is missing");
    }
    try {
      out.balance.emplace(s, class_balance_from_counts(it->second));
    } catch (const InvalidArgument&) {
      throw InvalidArgument("split '" + std::string(name_of(s)) + "' has no building pixels");
    }
  }
  for (auto c : kBuildingCategories) {
    for (auto a : kAllSplits) {
      for (auto b : kAllSplits) {
        const double d = std::abs(out.balance[a].fraction[c] - out.balance[b].fraction[c]);
        out.gap[c] = std::max(out.gap[c], d);
      }
    }
    out.max_gap = std::max(out.max_gap, out.gap[c]);
  }
  return out;
}

}  // namespace dmg
