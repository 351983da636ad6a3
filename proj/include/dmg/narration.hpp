#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <future>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dmg/error.hpp"
#include "dmg/grading.hpp"
#include "dmg/http_client.hpp"
#include "dmg/instances.hpp"
#include "dmg/mask.hpp"
#include "dmg/partition.hpp"
#include "dmg/text.hpp"
#include "dmg/zonal_stats.hpp"

namespace dmg {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kSchemaVersion = "1.0";
inline constexpr const char* kPromptTemplateVersion = "stats-first/1";

// ---------------------------------------------------------------------------
// Prompts

// The statistics block always comes first; the instruction follows it.
struct GenerationPrompt {
  ZoneStats stats;
  std::string instruction;
  std::string text;
};

namespace detail {

inline std::string plural(std::uint64_t n, const char* one, const char* many) {
  return std::to_string(n) + " " + (n == 1 ? one : many);
}

inline std::string join_list(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += (i + 1 == parts.size()) ? " and " : ", ";
    out += parts[i];
  }
  return out;
}

inline std::string subject_of(const ZoneStats& s) {
  return s.zone ? "the " + std::string(name_of(*s.zone)) + " zone" : std::string("the scene");
}

inline std::string capitalize(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace detail

inline std::string serialize_stats_block(const ZoneStats& stats) {
  std::string out = "statistics (" + scope_name(stats) + "):\n";
  for (auto c : kBuildingCategories) {
    out += std::string(name_of(c)) + ": " +
           detail::plural(stats.instance_counts[c], "building", "buildings") + " (" +
           std::to_string(stats.pixel_counts[c]) + " px)\n";
  }
  return out;
}

inline std::string default_instruction(const ZoneStats& stats) {
  return "Using only the statistics above, describe the building damage in " +
         detail::subject_of(stats) +
         ". Report every count exactly as given and do not introduce any other numbers.";
}

inline GenerationPrompt build_prompt(const ZoneStats& stats, std::string instruction) {
  if (instruction.empty()) throw InvalidArgument("prompt instruction must not be empty");
  GenerationPrompt p;
  p.stats = stats;
  p.instruction = std::move(instruction);
  p.text = serialize_stats_block(stats) + "\n" + p.instruction + "\n";
  return p;
}

inline GenerationPrompt build_prompt(const ZoneStats& stats) {
  return build_prompt(stats, default_instruction(stats));
}

// ---------------------------------------------------------------------------
// Groundedness

// Every integer in `text` must be one of the prompt's counts, and every
// nonzero count must appear. Returns the violations, empty when grounded.
inline std::vector<std::string> groundedness_violations(std::string_view text,
                                                        const ZoneStats& stats) {
  std::set<std::uint64_t> allowed;
  std::set<std::uint64_t> required;
  for (auto c : kBuildingCategories) {
    for (auto n : {stats.instance_counts[c], stats.pixel_counts[c]}) {
      allowed.insert(n);
      if (n > 0) required.insert(n);
    }
  }
  std::vector<std::string> problems;
  std::set<std::uint64_t> seen;
  for (auto n : extract_integers(text)) {
    seen.insert(n);
    if (!allowed.contains(n)) problems.push_back("number " + std::to_string(n) + " is not in the statistics");
  }
  for (auto n : required) {
    if (!seen.contains(n)) problems.push_back("count " + std::to_string(n) + " is missing");
  }
  return problems;
}

// ---------------------------------------------------------------------------
// Backends

class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual std::string name() const = 0;
  virtual std::string complete(const GenerationPrompt& prompt) = 0;
  // Whether complete() may be called from several threads at once.
  virtual bool concurrent() const { return false; }
};

// Deterministic descriptions assembled from count buckets.
class TemplateBackend final : public TextBackend {
 public:
  explicit TemplateBackend(GradingMode mode = GradingMode::Literal) : mode_(mode) {}

  std::string name() const override { return "template"; }

  std::string complete(const GenerationPrompt& prompt) override { return describe(prompt.stats); }

  std::string describe(const ZoneStats& s) const {
    const std::string subject = detail::subject_of(s);
    if (s.building_instances() == 0 && s.building_pixels() == 0) {
      return detail::capitalize(subject) + " contains no building structures.";
    }

    std::vector<std::string> owned, spill;
    for (auto c : kBuildingCategories) {
      const auto n = s.instance_counts[c];
      const auto px = s.pixel_counts[c];
      if (n > 0) {
        owned.push_back(detail::plural(n, (std::string(name_of(c)) + " building").c_str(),
                                       (std::string(name_of(c)) + " buildings").c_str()) +
                        " covering " + std::to_string(px) + " px");
      } else if (px > 0) {
        spill.push_back(std::to_string(px) + " px of " + std::string(name_of(c)) + " structure");
      }
    }

    std::string out;
    if (owned.empty()) {
      out = detail::capitalize(subject) + " contains no building structures of its own.";
    } else {
      out = detail::capitalize(subject) + " contains " + detail::join_list(owned) + ".";
    }
    if (!spill.empty()) {
      out += " Buildings assigned to neighboring zones extend into it with " +
             detail::join_list(spill) + ".";
    }
    if (s.building_pixels() > 0) {
      out += " Building pixels here are " + dominant_phrase(s) + ". " +
             severity_sentence(assess(s.pixel_counts, mode_).level);
    }
    return out;
  }

 private:
  static std::string dominant_phrase(const ZoneStats& s) {
    // Ties go to the more severe category.
    DamageCategory best = DamageCategory::Intact;
    for (auto c : kBuildingCategories) {
      if (s.pixel_counts[c] >= s.pixel_counts[best]) best = c;
    }
    switch (best) {
      case DamageCategory::Intact: return "largely intact";
      case DamageCategory::Damaged: return "predominantly damaged";
      default: return "predominantly destroyed";
    }
  }

  static std::string severity_sentence(int level) {
    switch (level) {
      case 0: return "No significant damage is evident.";
      case 1: return "Damage is minor and localized.";
      case 2: return "Damage is moderate, with several structures affected.";
      case 3: return "The area shows widespread devastation with severe structural damage.";
      default: return "The area shows widespread devastation with most structures destroyed.";
    }
  }

  GradingMode mode_;
};

struct ChatBackendConfig {
  std::string endpoint;  // full URL of the chat-completions route
  std::string api_key;
  std::string model;
  RetryPolicy retry;
  std::string system_prompt =
      "You are a disaster damage analyst. You write concise descriptions of building damage "
      "from the statistics you are given, and you never state a number that is not in them.";
};

// Environment variables selecting the external text backend.
inline constexpr const char* kEnvLlmEndpoint = "DMG_LLM_ENDPOINT";
inline constexpr const char* kEnvLlmApiKey = "DMG_LLM_API_KEY";
inline constexpr const char* kEnvLlmModel = "DMG_LLM_MODEL";

inline std::optional<ChatBackendConfig> chat_config_from_env() {
  auto endpoint = env_var(kEnvLlmEndpoint);
  if (!endpoint) return std::nullopt;
  ChatBackendConfig cfg;
  cfg.endpoint = *endpoint;
  cfg.api_key = env_var(kEnvLlmApiKey).value_or("");
  cfg.model = env_var(kEnvLlmModel).value_or("gpt-4o-mini");
  return cfg;
}

// OpenAI-style chat-completion client at temperature 0.
class ChatCompletionBackend final : public TextBackend {
 public:
  explicit ChatCompletionBackend(ChatBackendConfig config) : config_(std::move(config)) {}

  std::string name() const override { return "external:" + config_.model; }
  bool concurrent() const override { return true; }

  nlohmann::json request_body(const GenerationPrompt& prompt) const {
    return nlohmann::json{
        {"model", config_.model},
        {"temperature", 0},
        {"messages",
         nlohmann::json::array({{{"role", "system"}, {"content", config_.system_prompt}},
                                {{"role", "user"}, {"content", prompt.text}}})}};
  }

  std::string complete(const GenerationPrompt& prompt) override {
    auto reply = post_json_with_retry(config_.endpoint, config_.api_key, request_body(prompt),
                                      config_.retry);
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw BackendError("malformed chat-completion reply: " + std::string(e.what()), false);
    }
  }

 private:
  ChatBackendConfig config_;
};

// Runs the backend and rejects text that is not grounded in the prompt's
// statistics.
inline std::string generate_description(const GenerationPrompt& prompt, TextBackend& backend) {
  std::string text = backend.complete(prompt);
  auto problems = groundedness_violations(text, prompt.stats);
  if (!problems.empty()) {
    std::string msg = backend.name() + " description of " + scope_name(prompt.stats) +
                      " failed validation: ";
    for (std::size_t i = 0; i < problems.size(); ++i) {
      if (i) msg += "; ";
      msg += problems[i];
    }
    throw ValidationError(msg);
  }
  return text;
}

// ---------------------------------------------------------------------------
// Counting text

inline std::string compile_counting(const SceneStats& stats) {
  if (stats.global.building_instances() == 0) return "No building structures detected.";
  std::vector<std::string> sentences;
  for (auto c : kBuildingCategories) {
    const std::string cat(name_of(c));
    const auto total = stats.global.instance_counts[c];
    if (total == 0) {
      sentences.push_back("There are no " + cat + " buildings.");
      continue;
    }
    std::vector<std::string> clauses;
    std::vector<Zone> holders;
    for (auto z : kAllZones) {
      const auto n = stats.zones[z].instance_counts[c];
      if (n == 0) continue;
      clauses.push_back(std::to_string(n) + " in the " + std::string(name_of(z)) + " zone");
      holders.push_back(z);
    }
    std::string s = std::string(total == 1 ? "There is " : "There are ") +
                    detail::plural(total, (cat + " building").c_str(), (cat + " buildings").c_str());
    if (holders.size() == 1) {
      s += total == 1 ? ", located in the " : ", all in the ";
      s += std::string(name_of(holders[0])) + " zone.";
    } else {
      s += ": " + detail::join_list(clauses) + ".";
    }
    sentences.push_back(std::move(s));
  }
  std::string out;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    if (i) out += ' ';
    out += sentences[i];
  }
  return out;
}

inline std::string evaluation_sentence(const DamageAssessment& a) {
  if (a.n_total == 0) {
    return "Overall damage level: 0 (No Damage); no building pixels are present.";
  }
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "Overall damage level: %d (%s); %.2f%% of building pixels are destroyed and "
                "%.2f%% are damaged or destroyed.",
                a.level, std::string(a.level_name()).c_str(), 100.0 * a.rho_dest, 100.0 * a.rho_dam);
  return buf;
}

// ---------------------------------------------------------------------------
// Annotation document

struct AnnotationMetadata {
  std::string image_id;
  int height = 0;
  int width = 0;
  Connectivity connectivity = Connectivity::Eight;
  GradingMode grading_mode = GradingMode::Literal;
  std::string backend = "template";
};

struct SemanticTexts {
  PerZone<std::string> zone_descriptions;
  std::string counting_text;
  std::string summary_text;
};

struct AnnotationDocument {
  AnnotationMetadata metadata;
  PerZone<CategoryCounts> component_table;
  CategoryCounts component_totals;
  PerZone<CategoryCounts> pixel_table;
  CategoryCounts pixel_totals;
  std::vector<std::string> obb_records;
  SemanticTexts texts;
  DamageAssessment evaluation;
  PerZone<DamageAssessment> zone_evaluations;
};

inline nlohmann::ordered_json assessment_json(const DamageAssessment& a) {
  return nlohmann::ordered_json{{"level", a.level},
                                {"name", std::string(a.level_name())},
                                {"rho_dest", a.rho_dest},
                                {"rho_dam", a.rho_dam}};
}

inline nlohmann::ordered_json to_json(const AnnotationDocument& d) {
  using nlohmann::ordered_json;
  auto counts_json = [](const CategoryCounts& c, bool with_background) {
    ordered_json j = ordered_json::object();
    for (auto cat : kAllCategories) {
      if (!with_background && !is_building(cat)) continue;
      j[std::string(name_of(cat))] = c[cat];
    }
    return j;
  };

  ordered_json meta;
  meta["image_id"] = d.metadata.image_id;
  meta["height"] = d.metadata.height;
  meta["width"] = d.metadata.width;
  meta["connectivity"] = static_cast<int>(d.metadata.connectivity);
  meta["grading_mode"] = d.metadata.grading_mode == GradingMode::Literal ? "literal" : "strict-minor";
  meta["backend"] = d.metadata.backend;
  meta["tool_version"] = kToolVersion;
  meta["prompt_template_version"] = kPromptTemplateVersion;

  ordered_json components, pixels, descriptions, zone_evals;
  for (auto z : kAllZones) {
    const std::string zn(name_of(z));
    components[zn] = counts_json(d.component_table[z], false);
    pixels[zn] = counts_json(d.pixel_table[z], true);
    descriptions[zn] = d.texts.zone_descriptions[z];
    zone_evals[zn] = assessment_json(d.zone_evaluations[z]);
  }
  components["total"] = counts_json(d.component_totals, false);
  pixels["total"] = counts_json(d.pixel_totals, true);

  ordered_json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["metadata"] = std::move(meta);
  doc["quantitative"] = {{"component_table", std::move(components)},
                         {"pixel_counts", std::move(pixels)},
                         {"obb_records", d.obb_records}};
  doc["semantic"] = {{"zone_descriptions", std::move(descriptions)},
                     {"counting_text", d.texts.counting_text},
                     {"summary_text", d.texts.summary_text},
                     {"evaluation", assessment_json(d.evaluation)},
                     {"zone_evaluations", std::move(zone_evals)}};
  return doc;
}

inline std::string serialize(const AnnotationDocument& d) { return to_json(d).dump(2) + "\n"; }

// Assembles the document after checking that every input describes the
// same mask.
inline AnnotationDocument compile_annotation(const SegmentationMask& mask,
                                             std::span<const BuildingInstance> instances,
                                             const SceneStats& stats,
                                             const DamageAssessment& assessment,
                                             SemanticTexts texts, AnnotationMetadata metadata) {
  if (metadata.height != mask.height() || metadata.width != mask.width()) {
    throw InconsistentInput("metadata dimensions do not match the mask");
  }
  const auto hist = category_histogram(mask);
  if (hist != stats.global.pixel_counts) {
    throw InconsistentInput("zone statistics pixel totals disagree with the mask histogram");
  }
  CategoryCounts from_instances;
  for (const auto& inst : instances) {
    if (!inst.obb || !inst.zone) {
      throw InconsistentInput("instance " + std::to_string(inst.id) + " lacks a zone or box");
    }
    ++from_instances[inst.category];
  }
  if (from_instances != stats.global.instance_counts) {
    throw InconsistentInput("instance list disagrees with zone statistics instance counts");
  }
  if (assessment != assess(stats.global.pixel_counts, metadata.grading_mode)) {
    throw InconsistentInput("assessment does not match the global pixel counts");
  }

  AnnotationDocument d;
  d.metadata = std::move(metadata);
  for (auto z : kAllZones) {
    d.component_table[z] = stats.zones[z].instance_counts;
    d.pixel_table[z] = stats.zones[z].pixel_counts;
    d.zone_evaluations[z] = assess(stats.zones[z].pixel_counts, d.metadata.grading_mode);
  }
  d.component_totals = stats.global.instance_counts;
  d.pixel_totals = stats.global.pixel_counts;
  d.obb_records.reserve(instances.size());
  for (const auto& inst : instances) {
    d.obb_records.push_back(to_yolo_obb(inst, mask.height(), mask.width()));
  }
  d.texts = std::move(texts);
  d.evaluation = assessment;
  return d;
}

// Zone descriptions, counting text and summary for one scene. Backends that
// allow it describe the five zones concurrently.
inline SemanticTexts narrate(const SceneStats& stats, const DamageAssessment& assessment,
                             TextBackend& backend) {
  SemanticTexts t;
  if (backend.concurrent()) {
    PerZone<std::future<std::string>> pending;
    for (auto z : kAllZones) {
      pending[z] = std::async(std::launch::async, [&, z] {
        return generate_description(build_prompt(stats.zones[z]), backend);
      });
    }
    for (auto z : kAllZones) t.zone_descriptions[z] = pending[z].get();
  } else {
    for (auto z : kAllZones) {
      t.zone_descriptions[z] = generate_description(build_prompt(stats.zones[z]), backend);
    }
  }
  t.counting_text = compile_counting(stats);
  t.summary_text = generate_description(build_prompt(stats.global), backend) + " " +
                   evaluation_sentence(assessment);
  return t;
}

}  // namespace dmg
