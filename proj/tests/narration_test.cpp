#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <regex>
#include <set>

#include "dmg/narration.hpp"
#include "dmg/pipeline.hpp"
#include "support/fake_server.hpp"
#include "support/synth.hpp"

namespace {

using dmg::DamageCategory;
using dmg::Zone;

dmg::ZoneStats zone_stats(std::optional<Zone> z, std::uint64_t intact_n, std::uint64_t intact_px,
                          std::uint64_t dam_n = 0, std::uint64_t dam_px = 0, std::uint64_t dest_n = 0,
                          std::uint64_t dest_px = 0) {
  dmg::ZoneStats s;
  s.zone = z;
  s.instance_counts[DamageCategory::Intact] = intact_n;
  s.pixel_counts[DamageCategory::Intact] = intact_px;
  s.instance_counts[DamageCategory::Damaged] = dam_n;
  s.pixel_counts[DamageCategory::Damaged] = dam_px;
  s.instance_counts[DamageCategory::Destroyed] = dest_n;
  s.pixel_counts[DamageCategory::Destroyed] = dest_px;
  return s;
}

dmg::RetryPolicy fast_retry() {
  dmg::RetryPolicy p;
  p.initial_backoff = std::chrono::milliseconds(1);
  p.timeout = std::chrono::milliseconds(2000);
  return p;
}

TEST(BuildPrompt, StatisticsBlockComesFirst) {
  auto p = dmg::build_prompt(zone_stats(Zone::Top, 2, 40), "Describe the zone.");
  EXPECT_EQ(p.text.rfind("statistics (top):\nintact: 2 buildings (40 px)\n", 0), 0u) << p.text;
  EXPECT_LT(p.text.find("intact:"), p.text.find("Describe the zone."));
  EXPECT_THROW(dmg::build_prompt(zone_stats(Zone::Top, 0, 0), ""), dmg::InvalidArgument);
}

TEST(BuildPrompt, ZeroStatsListEveryCategory) {
  auto p = dmg::build_prompt(zone_stats(Zone::Left, 0, 0));
  EXPECT_NE(p.text.find("intact: 0 buildings (0 px)"), std::string::npos);
  EXPECT_NE(p.text.find("damaged: 0 buildings (0 px)"), std::string::npos);
  EXPECT_NE(p.text.find("destroyed: 0 buildings (0 px)"), std::string::npos);
}

TEST(BuildPrompt, GlobalListsCategoriesInOrder) {
  auto p = dmg::build_prompt(zone_stats(std::nullopt, 3, 90, 1, 12, 2, 30));
  const auto i = p.text.find("intact: 3 buildings (90 px)");
  const auto d = p.text.find("damaged: 1 building (12 px)");
  const auto x = p.text.find("destroyed: 2 buildings (30 px)");
  ASSERT_NE(i, std::string::npos);
  ASSERT_NE(d, std::string::npos);
  ASSERT_NE(x, std::string::npos);
  EXPECT_LT(i, d);
  EXPECT_LT(d, x);
  EXPECT_EQ(p.text.rfind("statistics (global):", 0), 0u);
}

TEST(TemplateBackend, ZeroBucket) {
  dmg::TemplateBackend backend;
  auto text = dmg::generate_description(dmg::build_prompt(zone_stats(Zone::Top, 0, 0)), backend);
  EXPECT_EQ(text, "The top zone contains no building structures.");
}

TEST(TemplateBackend, MixedZoneMentionsCountsAndCategories) {
  dmg::TemplateBackend backend;
  auto s = zone_stats(Zone::Central, 3, 120, 0, 0, 1, 40);
  auto text = dmg::generate_description(dmg::build_prompt(s), backend);
  auto ints = dmg::extract_integers(text);
  EXPECT_NE(std::find(ints.begin(), ints.end(), 3u), ints.end()) << text;
  EXPECT_NE(std::find(ints.begin(), ints.end(), 1u), ints.end()) << text;
  EXPECT_NE(text.find("intact"), std::string::npos);
  EXPECT_NE(text.find("destroyed"), std::string::npos);
  EXPECT_NE(text.find("1 destroyed building "), std::string::npos) << text;
}

TEST(TemplateBackend, SeverityFollowsZoneGrade) {
  dmg::TemplateBackend backend;
  auto devastated = backend.describe(zone_stats(Zone::Right, 1, 10, 0, 0, 2, 90));
  EXPECT_NE(devastated.find("widespread devastation"), std::string::npos) << devastated;
  EXPECT_NE(devastated.find("predominantly destroyed"), std::string::npos);
  auto calm = backend.describe(zone_stats(Zone::Right, 4, 100));
  EXPECT_NE(calm.find("No significant damage"), std::string::npos) << calm;
  EXPECT_NE(calm.find("largely intact"), std::string::npos);
}

TEST(TemplateBackend, SpilloverPixelsWithoutOwnInstances) {
  dmg::TemplateBackend backend;
  auto s = zone_stats(Zone::Top, 0, 4);
  auto text = dmg::generate_description(dmg::build_prompt(s), backend);
  EXPECT_NE(text.find("no building structures of its own"), std::string::npos) << text;
  EXPECT_NE(text.find("4 px of intact structure"), std::string::npos) << text;
}

TEST(Groundedness, FlagsInventedAndMissingNumbers) {
  auto s = zone_stats(Zone::Top, 2, 40);
  EXPECT_TRUE(dmg::groundedness_violations("2 intact buildings cover 40 px.", s).empty());
  EXPECT_EQ(dmg::groundedness_violations("3 intact buildings cover 40 px.", s).size(), 2u);
  EXPECT_EQ(dmg::groundedness_violations("Some intact buildings.", s).size(), 2u);
}

TEST(CompileCounting, TotalsAndZeroStatements) {
  dmg::SceneStats s;
  for (auto z : dmg::kAllZones) s.zones[z].zone = z;
  s.zones[Zone::Top].instance_counts[DamageCategory::Intact] = 3;
  s.zones[Zone::Central].instance_counts[DamageCategory::Intact] = 2;
  s.zones[Zone::Central].instance_counts[DamageCategory::Destroyed] = 2;
  s.global.instance_counts[DamageCategory::Intact] = 5;
  s.global.instance_counts[DamageCategory::Destroyed] = 2;
  auto text = dmg::compile_counting(s);
  EXPECT_NE(text.find("5 intact buildings"), std::string::npos) << text;
  EXPECT_NE(text.find("2 destroyed buildings"), std::string::npos) << text;
  EXPECT_NE(text.find("no damaged buildings"), std::string::npos) << text;
  EXPECT_NE(text.find("3 in the top zone and 2 in the central zone"), std::string::npos) << text;
}

TEST(CompileCounting, EmptyScene) {
  dmg::SceneStats s;
  EXPECT_EQ(dmg::compile_counting(s), "No building structures detected.");
}

TEST(CompileCounting, SingleBuildingNamesItsZone) {
  dmg::SceneStats s;
  s.zones[Zone::Left].instance_counts[DamageCategory::Intact] = 1;
  s.global.instance_counts[DamageCategory::Intact] = 1;
  auto text = dmg::compile_counting(s);
  EXPECT_NE(text.find("There is 1 intact building, located in the left zone."), std::string::npos) << text;
}

dmg::AnnotationResult annotate(const dmg::SegmentationMask& m, dmg::TextBackend& backend,
                               dmg::GradingMode mode = dmg::GradingMode::Literal) {
  dmg::AnnotateOptions o;
  o.image_id = "sample";
  o.grading_mode = mode;
  return dmg::annotate_mask(m, o, backend);
}

TEST(CompileAnnotation, SingleBlobInTop) {
  synth::Canvas c(100, 100);
  c.rect(45, 5, 6, 4, DamageCategory::Intact);
  dmg::TemplateBackend backend;
  auto r = annotate(c.mask(), backend);
  EXPECT_EQ(r.document.component_table[Zone::Top][DamageCategory::Intact], 1u);
  EXPECT_EQ(r.document.obb_records.size(), 1u);
  EXPECT_EQ(r.document.evaluation.level, 0);
  auto j = nlohmann::json::parse(r.json);
  EXPECT_EQ(j["quantitative"]["component_table"]["top"]["intact"], 1);
  EXPECT_EQ(j["semantic"]["evaluation"]["level"], 0);
  EXPECT_EQ(j["semantic"]["evaluation"]["name"], "No Damage");
}

TEST(CompileAnnotation, EmptyMask) {
  dmg::TemplateBackend backend;
  auto r = annotate(dmg::SegmentationMask(32, 32), backend);
  EXPECT_TRUE(r.document.obb_records.empty());
  EXPECT_TRUE(r.sidecar.empty());
  for (auto z : dmg::kAllZones) {
    for (auto cat : dmg::kBuildingCategories) EXPECT_EQ(r.document.component_table[z][cat], 0u);
  }
  EXPECT_EQ(r.document.evaluation.level, 0);
  EXPECT_EQ(r.document.texts.counting_text, "No building structures detected.");
}

TEST(CompileAnnotation, HeavyDestructionGradesLevelFour) {
  synth::Canvas c(40, 40);
  c.rect(0, 0, 25, 10, DamageCategory::Intact);      // 250
  c.rect(0, 12, 25, 4, DamageCategory::Damaged);     // 100
  c.rect(0, 18, 25, 22, DamageCategory::Destroyed);  // 550
  c.rect(30, 0, 10, 10, DamageCategory::Destroyed);  // 100
  dmg::TemplateBackend backend;
  auto r = annotate(c.mask(), backend);
  EXPECT_EQ(r.assessment.n_total, 1000u);
  EXPECT_DOUBLE_EQ(r.assessment.rho_dest, 0.65);
  EXPECT_EQ(r.document.evaluation.level, 4);
  EXPECT_EQ(nlohmann::json::parse(r.json)["semantic"]["evaluation"]["level"], 4);
}

TEST(CompileAnnotation, DocumentLayoutAndDeterminism) {
  std::mt19937_64 rng(31);
  auto m = synth::random_mask(rng, 64, 48, 0.3);
  dmg::TemplateBackend backend;
  auto a = annotate(m, backend);
  auto b = annotate(m, backend);
  EXPECT_EQ(a.json, b.json);
  EXPECT_EQ(a.sidecar, b.sidecar);

  auto j = nlohmann::ordered_json::parse(a.json);
  std::vector<std::string> top, semantic, quantitative;
  for (auto& [k, v] : j.items()) top.push_back(k);
  for (auto& [k, v] : j["quantitative"].items()) quantitative.push_back(k);
  for (auto& [k, v] : j["semantic"].items()) semantic.push_back(k);
  EXPECT_EQ(top, (std::vector<std::string>{"schema_version", "metadata", "quantitative", "semantic"}));
  EXPECT_EQ(quantitative, (std::vector<std::string>{"component_table", "pixel_counts", "obb_records"}));
  EXPECT_EQ(semantic, (std::vector<std::string>{"zone_descriptions", "counting_text", "summary_text",
                                                "evaluation", "zone_evaluations"}));
  EXPECT_EQ(j["semantic"]["zone_descriptions"].size(), 5u);
  for (auto z : dmg::kAllZones) EXPECT_TRUE(j["semantic"]["zone_descriptions"].contains(std::string(dmg::name_of(z))));
  EXPECT_EQ(j["metadata"]["prompt_template_version"], dmg::kPromptTemplateVersion);
}

TEST(CompileAnnotation, RejectsInconsistentInputs) {
  synth::Canvas c(20, 20);
  c.rect(2, 2, 3, 3, DamageCategory::Damaged);
  const auto m = c.mask();
  dmg::ZoneGeometry g(20, 20);
  auto inst = dmg::extract_instances(m);
  dmg::locate_instances(inst, g);
  auto stats = dmg::compute_zone_stats(m, inst, g);
  auto a = dmg::assess(stats.global.pixel_counts);
  dmg::AnnotationMetadata meta;
  meta.height = 20;
  meta.width = 20;
  EXPECT_NO_THROW(dmg::compile_annotation(m, inst, stats, a, {}, meta));

  auto wrong_grade = a;
  wrong_grade.level = 3;
  EXPECT_THROW(dmg::compile_annotation(m, inst, stats, wrong_grade, {}, meta), dmg::InconsistentInput);
  EXPECT_THROW(dmg::compile_annotation(m, {}, stats, a, {}, meta), dmg::InconsistentInput);
  auto other = c;
  other.set(19, 19, DamageCategory::Intact);
  EXPECT_THROW(dmg::compile_annotation(other.mask(), inst, stats, a, {}, meta), dmg::InconsistentInput);
  auto bad_meta = meta;
  bad_meta.width = 21;
  EXPECT_THROW(dmg::compile_annotation(m, inst, stats, a, {}, bad_meta), dmg::InconsistentInput);
}

// ---------------------------------------------------------------------------
// External backend against a local server.

TEST(ChatCompletionBackend, SendsStatisticsFirstPromptAtTemperatureZero) {
  fake::Server server([](const nlohmann::json&, httplib::Response& res) {
    fake::reply_chat(res, "The top zone holds 2 intact buildings spanning 40 px.");
  });
  dmg::ChatBackendConfig cfg;
  cfg.endpoint = server.url("/v1/chat/completions");
  cfg.api_key = "secret";
  cfg.model = "test-model";
  cfg.retry = fast_retry();
  dmg::ChatCompletionBackend backend(cfg);
  auto prompt = dmg::build_prompt(zone_stats(Zone::Top, 2, 40));
  EXPECT_EQ(dmg::generate_description(prompt, backend),
            "The top zone holds 2 intact buildings spanning 40 px.");

  auto req = server.requests().at(0);
  EXPECT_EQ(req["model"], "test-model");
  EXPECT_EQ(req["temperature"], 0);
  EXPECT_EQ(req["messages"][0]["role"], "system");
  EXPECT_EQ(req["messages"][1]["role"], "user");
  EXPECT_EQ(req["messages"][1]["content"], prompt.text);
  EXPECT_EQ(server.auth_headers().at(0), "Bearer secret");
}

TEST(ChatCompletionBackend, UngroundedReplyIsRejected) {
  fake::Server server([](const nlohmann::json&, httplib::Response& res) {
    fake::reply_chat(res, "The top zone holds 5 intact buildings.");
  });
  dmg::ChatBackendConfig cfg;
  cfg.endpoint = server.url("/v1/chat/completions");
  cfg.retry = fast_retry();
  dmg::ChatCompletionBackend backend(cfg);
  EXPECT_THROW(dmg::generate_description(dmg::build_prompt(zone_stats(Zone::Top, 2, 40)), backend),
               dmg::ValidationError);
}

TEST(ChatCompletionBackend, RetriesServerErrorsThenSucceeds) {
  std::atomic<int> n{0};
  fake::Server server([&](const nlohmann::json&, httplib::Response& res) {
    if (n++ < 2) {
      res.status = 503;
      return;
    }
    fake::reply_chat(res, "The left zone contains no building structures.");
  });
  dmg::ChatBackendConfig cfg;
  cfg.endpoint = server.url("/chat");
  cfg.retry = fast_retry();
  dmg::ChatCompletionBackend backend(cfg);
  EXPECT_EQ(dmg::generate_description(dmg::build_prompt(zone_stats(Zone::Left, 0, 0)), backend),
            "The left zone contains no building structures.");
  EXPECT_EQ(server.calls(), 3);
}

TEST(ChatCompletionBackend, UnreachableEndpointIsRetryableAfterAllAttempts) {
  dmg::ChatBackendConfig cfg;
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(fake::closed_port()) + "/v1/chat/completions";
  cfg.retry = fast_retry();
  dmg::ChatCompletionBackend backend(cfg);
  try {
    backend.complete(dmg::build_prompt(zone_stats(Zone::Top, 0, 0)));
    FAIL() << "expected BackendError";
  } catch (const dmg::BackendError& e) {
    EXPECT_TRUE(e.retryable());
    EXPECT_EQ(e.attempts(), 3);
  }
}

TEST(ChatCompletionBackend, ClientErrorsAreNotRetried) {
  fake::Server server([](const nlohmann::json&, httplib::Response& res) { res.status = 401; });
  dmg::ChatBackendConfig cfg;
  cfg.endpoint = server.url("/chat");
  cfg.retry = fast_retry();
  dmg::ChatCompletionBackend backend(cfg);
  try {
    backend.complete(dmg::build_prompt(zone_stats(Zone::Top, 0, 0)));
    FAIL() << "expected BackendError";
  } catch (const dmg::BackendError& e) {
    EXPECT_FALSE(e.retryable());
  }
  EXPECT_EQ(server.calls(), 1);
}

TEST(ChatCompletionBackend, FullDocumentThroughExternalBackend) {
  // Echo back the statistics block, which is grounded by construction.
  fake::Server server([](const nlohmann::json& req, httplib::Response& res) {
    std::string prompt = req["messages"][1]["content"];
    fake::reply_chat(res, prompt.substr(0, prompt.find("\n\n")));
  });
  dmg::ChatBackendConfig cfg;
  cfg.endpoint = server.url("/chat");
  cfg.model = "echo";
  cfg.retry = fast_retry();
  dmg::ChatCompletionBackend backend(cfg);
  synth::Canvas c(50, 50);
  c.rect(20, 20, 5, 5, DamageCategory::Destroyed);
  auto r = annotate(c.mask(), backend);
  EXPECT_EQ(server.calls(), 6);  // five zones plus the summary
  EXPECT_EQ(r.document.metadata.backend, "external:echo");
  EXPECT_NE(r.document.texts.zone_descriptions[Zone::Central].find("destroyed: 1 building (25 px)"),
            std::string::npos);
}

TEST(RetryPolicy, ExponentialBackoff) {
  dmg::RetryPolicy p;
  EXPECT_EQ(p.max_attempts, 3);
  EXPECT_EQ(p.timeout, std::chrono::seconds(30));
  EXPECT_EQ(p.backoff_before(2), std::chrono::milliseconds(1000));
  EXPECT_EQ(p.backoff_before(3), std::chrono::milliseconds(2000));
}

}  // namespace
