#include <gtest/gtest.h>

#include <random>

#include "dmg/manifest.hpp"
#include "dmg/pipeline.hpp"
#include "support/synth.hpp"
#include "support/tempdir.hpp"

namespace {

namespace fs = std::filesystem;
using dmg::DamageCategory;
using dmg::Split;

dmg::SegmentationMask filled(int h, int w, DamageCategory c) {
  synth::Canvas canvas(h, w);
  canvas.rect(0, 0, w, h, c);
  return canvas.mask();
}

void save(const fs::path& p, const dmg::SegmentationMask& m) {
  fs::create_directories(p.parent_path());
  dmg::save_mask(p, m, dmg::MaskEncoding::PngIndexed);
}

TEST(BuildManifest, FlatDirectoryInLexicographicOrder) {
  synth::TempDir dir("manifest_flat");
  save(dir / "b.png", filled(4, 4, DamageCategory::Intact));
  save(dir / "a.png", filled(4, 4, DamageCategory::Damaged));
  synth::spit(dir / "notes.txt", "ignored");
  auto built = dmg::build_manifest(dir.path());
  ASSERT_EQ(built.manifest.entries.size(), 2u);
  EXPECT_EQ(built.manifest.entries[0].id, "a");
  EXPECT_EQ(built.manifest.entries[1].id, "b");
  EXPECT_EQ(built.manifest.entries[0].split, Split::Train);
  EXPECT_TRUE(built.warnings.empty());
}

TEST(BuildManifest, EmptyDirectoryWarns) {
  synth::TempDir dir("manifest_empty");
  auto built = dmg::build_manifest(dir.path());
  EXPECT_TRUE(built.manifest.entries.empty());
  ASSERT_EQ(built.warnings.size(), 1u);
  EXPECT_NE(built.warnings[0].find("no masks"), std::string::npos);
}

TEST(BuildManifest, MissingRootIsAnError) {
  EXPECT_THROW(dmg::build_manifest("/nonexistent/dmg/root"), dmg::ManifestError);
}

TEST(BuildManifest, DuplicateStemAcrossSplitsNamesTheStem) {
  synth::TempDir dir("manifest_dup");
  save(dir / "train/masks/x7.png", filled(2, 2, DamageCategory::Intact));
  save(dir / "test/masks/x7.png", filled(2, 2, DamageCategory::Intact));
  try {
    dmg::build_manifest(dir.path());
    FAIL() << "expected ManifestError";
  } catch (const dmg::ManifestError& e) {
    EXPECT_NE(std::string(e.what()).find("'x7'"), std::string::npos) << e.what();
  }
}

TEST(BuildManifest, SplitFoldersAndImageTriplets) {
  synth::TempDir dir("manifest_splits");
  save(dir / "train/masks/t1.png", filled(2, 2, DamageCategory::Intact));
  synth::spit(dir / "train/pre/t1.tif", "x");
  synth::spit(dir / "train/post/t1.tif", "x");
  save(dir / "val/masks/v1.png", filled(2, 2, DamageCategory::Intact));
  synth::spit(dir / "val/pre/v1.tif", "x");
  synth::spit(dir / "val/post/orphan.tif", "x");
  save(dir / "test/masks/s1.png", filled(2, 2, DamageCategory::Intact));

  auto built = dmg::build_manifest(dir.path());
  std::vector<std::string> ids;
  for (const auto& e : built.manifest.entries) ids.push_back(e.id);
  // split folders visited as test, train, val
  EXPECT_EQ(ids, (std::vector<std::string>{"s1", "t1", "v1"}));
  const auto& t1 = built.manifest.entries[1];
  EXPECT_EQ(t1.split, Split::Train);
  ASSERT_TRUE(t1.pre_image && t1.post_image);
  EXPECT_EQ(t1.pre_image->filename(), "t1.tif");
  const auto& v1 = built.manifest.entries[2];
  EXPECT_TRUE(v1.pre_image);
  EXPECT_FALSE(v1.post_image);
  // v1 lacks a post image; orphan.tif lacks a mask
  ASSERT_EQ(built.warnings.size(), 2u);
  EXPECT_NE(built.warnings[0].find("v1"), std::string::npos);
  EXPECT_NE(built.warnings[1].find("orphan"), std::string::npos);
}

TEST(Manifest, SaveLoadRoundTripUsesRelativePaths) {
  synth::TempDir dir("manifest_io");
  save(dir / "data/masks/a.png", filled(2, 2, DamageCategory::Intact));
  synth::spit(dir / "data/pre/a.png", "x");
  auto built = dmg::build_manifest(dir / "data");
  dmg::save_manifest(dir / "manifest.json", built.manifest);
  auto text = synth::slurp(dir / "manifest.json");
  EXPECT_NE(text.find("\"data/masks/a.png\""), std::string::npos) << text;

  auto loaded = dmg::load_manifest(dir / "manifest.json");
  ASSERT_EQ(loaded.entries.size(), 1u);
  EXPECT_TRUE(fs::equivalent(loaded.entries[0].mask, built.manifest.entries[0].mask));
  EXPECT_TRUE(fs::equivalent(*loaded.entries[0].pre_image, *built.manifest.entries[0].pre_image));
  EXPECT_FALSE(loaded.entries[0].post_image);
}

TEST(Manifest, LoadRejectsBadContent) {
  synth::TempDir dir("manifest_bad");
  synth::spit(dir / "a.json", "{not json");
  EXPECT_THROW(dmg::load_manifest(dir / "a.json"), dmg::ManifestError);
  synth::spit(dir / "b.json", R"({"entries":[{"id":"x","mask":"x.png","split":"holdout"}]})");
  EXPECT_THROW(dmg::load_manifest(dir / "b.json"), dmg::ManifestError);
  synth::spit(dir / "c.json", R"({"entries":[{"id":"x","mask":"x.png"},{"id":"x","mask":"y.png"}]})");
  EXPECT_THROW(dmg::load_manifest(dir / "c.json"), dmg::ManifestError);
  EXPECT_THROW(dmg::load_manifest(dir / "missing.json"), dmg::ManifestError);
}

dmg::Manifest three_splits(const synth::TempDir& dir, const std::map<Split, dmg::SegmentationMask>& masks) {
  dmg::Manifest m;
  for (const auto& [split, mask] : masks) {
    const std::string id = std::string(dmg::name_of(split)) + "_0";
    save(dir / (id + ".png"), mask);
    m.entries.push_back({id, dir / (id + ".png"), std::nullopt, std::nullopt, split});
  }
  return m;
}

TEST(SplitConsistency, IdenticalSplitsHaveNoGap) {
  synth::TempDir dir("splits_same");
  std::mt19937_64 rng(2);
  auto mask = synth::random_mask(rng, 16, 16, 0.5);
  auto m = three_splits(dir, {{Split::Train, mask}, {Split::Val, mask}, {Split::Test, mask}});
  EXPECT_EQ(dmg::check_split_consistency(m).max_gap, 0.0);
}

TEST(SplitConsistency, OppositeSplitsHaveFullGap) {
  synth::TempDir dir("splits_opposite");
  auto m = three_splits(dir, {{Split::Train, filled(4, 4, DamageCategory::Intact)},
                              {Split::Val, filled(4, 4, DamageCategory::Intact)},
                              {Split::Test, filled(4, 4, DamageCategory::Destroyed)}});
  auto r = dmg::check_split_consistency(m);
  EXPECT_EQ(r.gap[DamageCategory::Intact], 1.0);
  EXPECT_EQ(r.max_gap, 1.0);
}

TEST(SplitConsistency, DesignedFractionsFromCounts) {
  dmg::CategoryCounts c{};
  c[DamageCategory::Intact] = 2;
  c[DamageCategory::Damaged] = 1;
  c[DamageCategory::Destroyed] = 1;
  auto c2 = c;
  for (auto cat : dmg::kAllCategories) c2[cat] *= 10;
  auto r = dmg::split_consistency_from_counts({{Split::Train, c}, {Split::Val, c2}, {Split::Test, c}});
  EXPECT_EQ(r.max_gap, 0.0);
  EXPECT_EQ(r.balance[Split::Val].fraction[DamageCategory::Damaged], 0.25);
  EXPECT_THROW(dmg::split_consistency_from_counts({{Split::Train, c}, {Split::Val, c}}),
               dmg::InvalidArgument);
}

dmg::Manifest batch_fixture(const synth::TempDir& dir, int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> side(8, 48);
  dmg::Manifest m;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "m%03d", i);
    auto path = dir / (std::string("in/") + id + ".png");
    save(path, synth::random_mask(rng, side(rng), side(rng), 0.35));
    m.entries.push_back({id, path, std::nullopt, std::nullopt, Split::Train});
  }
  return m;
}

TEST(BatchAnnotate, SingleEntry) {
  synth::TempDir dir("batch_one");
  auto m = batch_fixture(dir, 1, 1);
  dmg::TemplateBackend backend;
  dmg::BatchOptions o;
  o.out_dir = dir / "out";
  auto s = dmg::batch_annotate(m, o, backend);
  EXPECT_EQ(s.ok, 1u);
  EXPECT_EQ(s.failed, 0u);
  EXPECT_EQ(s.exit_code(), 0);
  EXPECT_TRUE(fs::exists(dir / "out/m000.annotation.json"));
  EXPECT_TRUE(fs::exists(dir / "out/m000.obb.txt"));
  auto summary = nlohmann::json::parse(synth::slurp(dir / "out/run_summary.json"));
  EXPECT_EQ(summary["ok"], 1);
  EXPECT_EQ(summary["failed"], 0);
}

TEST(BatchAnnotate, CorruptEntryIsIsolated) {
  synth::TempDir dir("batch_corrupt");
  auto m = batch_fixture(dir, 4, 2);
  synth::spit(m.entries[2].mask, "\x89PNG\r\n\x1a\nbroken");
  m.entries.push_back({"missing", dir / "in/missing.png", std::nullopt, std::nullopt, Split::Train});
  dmg::TemplateBackend backend;
  dmg::BatchOptions o;
  o.out_dir = dir / "out";
  o.workers = 3;
  auto s = dmg::batch_annotate(m, o, backend);
  EXPECT_EQ(s.ok, 3u);
  EXPECT_EQ(s.failed, 2u);
  EXPECT_NE(s.exit_code(), 0);
  ASSERT_EQ(s.entries.size(), 5u);
  EXPECT_FALSE(s.entries[2].ok);
  EXPECT_NE(s.entries[2].error.find("m002"), std::string::npos) << s.entries[2].error;
  EXPECT_FALSE(fs::exists(dir / "out/m002.annotation.json"));
  EXPECT_TRUE(fs::exists(dir / "out/m003.annotation.json"));
}

TEST(BatchAnnotate, UnwritableOutputIsFatal) {
  synth::TempDir dir("batch_fatal");
  auto m = batch_fixture(dir, 1, 3);
  synth::spit(dir / "blocker", "file in the way");
  dmg::TemplateBackend backend;
  dmg::BatchOptions o;
  o.out_dir = dir / "blocker/out";
  EXPECT_THROW(dmg::batch_annotate(m, o, backend), dmg::Error);
}

TEST(BatchAnnotate, OutputsIndependentOfWorkerCount) {
  synth::TempDir dir("batch_workers");
  auto m = batch_fixture(dir, 12, 4);
  dmg::TemplateBackend backend;
  std::map<std::string, std::string> reference;
  for (unsigned workers : {1u, 3u, 8u}) {
    dmg::BatchOptions o;
    o.out_dir = dir / ("out" + std::to_string(workers));
    o.workers = workers;
    ASSERT_EQ(dmg::batch_annotate(m, o, backend).failed, 0u);
    std::map<std::string, std::string> files;
    for (const auto& f : fs::directory_iterator(o.out_dir)) {
      files[f.path().filename().string()] = synth::slurp(f.path());
    }
    EXPECT_EQ(files.size(), 12u * 2 + 1);
    if (reference.empty()) reference = files;
    else EXPECT_TRUE(files == reference) << "workers=" << workers;
  }
}

TEST(DatasetStats, DesignedFractionsAndCooccurrence) {
  synth::TempDir dir("stats");
  // Four 10x10 masks, 400 px in all: 340 intact, 20 damaged, 40 destroyed.
  dmg::Manifest m;
  auto add = [&](const std::string& id, const synth::Canvas& c) {
    save(dir / (id + ".png"), c.mask());
    m.entries.push_back({id, dir / (id + ".png"), std::nullopt, std::nullopt, Split::Train});
  };
  synth::Canvas a(10, 10), b(10, 10), c(10, 10), d(10, 10);
  a.rect(0, 0, 10, 9, DamageCategory::Intact);     // 90
  a.rect(0, 9, 10, 1, DamageCategory::Damaged);    // 10
  b.rect(0, 0, 10, 8, DamageCategory::Intact);     // 80
  b.rect(0, 8, 10, 1, DamageCategory::Damaged);    // 10
  b.rect(0, 9, 10, 1, DamageCategory::Destroyed);  // 10
  c.rect(0, 0, 10, 7, DamageCategory::Intact);     // 70
  c.rect(0, 7, 10, 3, DamageCategory::Destroyed);  // 30
  d.rect(0, 0, 10, 10, DamageCategory::Intact);    // 100
  add("a", a);
  add("b", b);
  add("c", c);
  add("d", d);

  auto s = dmg::compute_dataset_stats(m, {});
  const auto& bal = s.class_balance.at(Split::Train);
  EXPECT_EQ(bal.fraction[DamageCategory::Intact], 0.85);
  EXPECT_EQ(bal.fraction[DamageCategory::Damaged], 0.05);
  EXPECT_EQ(bal.fraction[DamageCategory::Destroyed], 0.10);
  // damaged appears in a, b; destroyed in b, c
  EXPECT_EQ(s.cooccurrence.probability[1][2], 0.5);
  EXPECT_EQ(s.cooccurrence.probability[2][1], 0.5);
  EXPECT_EQ(s.cooccurrence.probability[0][0], 1.0);
  EXPECT_FALSE(s.consistency);
  EXPECT_EQ(s.sizes[DamageCategory::Intact].count, 4u);
  EXPECT_GT(s.words.counts.at("intact"), 0u);

  synth::TempDir csv("stats_csv");
  dmg::write_stats_csv(csv.path(), s);
  for (auto name : {"class_balance.csv", "size_distribution.csv", "cooccurrence.csv", "word_frequency.csv"}) {
    EXPECT_TRUE(fs::exists(csv / name)) << name;
  }
  EXPECT_NE(synth::slurp(csv / "class_balance.csv").find("train,0.85,0.05,0.1,400"), std::string::npos);
  auto j = dmg::to_json(s);
  EXPECT_EQ(j["cooccurrence"]["p_column_given_row"]["damaged"]["destroyed"], 0.5);
}

TEST(DatasetStats, CorpusOverridesTemplateWords) {
  synth::TempDir dir("stats_corpus");
  save(dir / "a.png", filled(4, 4, DamageCategory::Intact));
  dmg::Manifest m;
  m.entries.push_back({"a", dir / "a.png", std::nullopt, std::nullopt, Split::Train});
  dmg::DatasetStatsOptions o;
  o.corpus = std::vector<std::string>{"Top zone collapse.", "top TOP"};
  auto s = dmg::compute_dataset_stats(m, o);
  EXPECT_EQ(s.words.counts.at("top"), 3u);
  EXPECT_EQ(s.words.spatial[dmg::Zone::Top], 3u);
  EXPECT_EQ(s.words.counts.count("intact"), 0u);
}

}  // namespace
