// dmg: building-damage mask annotation toolkit.

#include <filesystem>
#include <iostream>
#include <memory>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dmg/dmg.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitFatal = 2;

struct MaskInputFlags {
  std::string mode = "auto";
  std::string palette_file;
  int tolerance = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--mode", mode, "How to decode pixels")
        ->check(CLI::IsMember({"auto", "indexed", "palette"}));
    cmd->add_option("--palette", palette_file, "Palette config (R,G,B=category per line)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--tolerance", tolerance, "Per-channel palette tolerance")
        ->check(CLI::Range(0, 255));
  }

  dmg::LoadOptions options() const {
    dmg::LoadOptions o;
    o.mode = mode == "indexed" ? dmg::LoadMode::Indexed
             : mode == "palette" ? dmg::LoadMode::Palette
                                 : dmg::LoadMode::Auto;
    if (!palette_file.empty()) o.palette = dmg::load_palette(palette_file);
    o.tolerance = tolerance;
    return o;
  }
};

struct PipelineFlags {
  int connectivity = 8;
  std::string backend = "auto";
  bool strict_minor = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--connectivity", connectivity, "Pixel adjacency for instances")
        ->check(CLI::IsMember({4, 8}));
    cmd->add_option("--backend", backend,
                    "Text backend; auto uses the external one when DMG_LLM_ENDPOINT is set")
        ->check(CLI::IsMember({"auto", "template", "external"}));
    cmd->add_flag("--strict-minor", strict_minor,
                  "Grade Level 1 on any damaged or destroyed pixel");
  }

  dmg::GradingMode grading() const {
    return strict_minor ? dmg::GradingMode::StrictMinor : dmg::GradingMode::Literal;
  }

  std::unique_ptr<dmg::TextBackend> make_backend() const {
    auto cfg = dmg::chat_config_from_env();
    if (backend == "external" || (backend == "auto" && cfg)) {
      if (!cfg) {
        throw dmg::InvalidArgument(std::string("external backend needs ") + dmg::kEnvLlmEndpoint);
      }
      return std::make_unique<dmg::ChatCompletionBackend>(*cfg);
    }
    return std::make_unique<dmg::TemplateBackend>(grading());
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turn building-damage segmentation masks into grounded annotation documents"};
  app.require_subcommand(1);
  app.set_version_flag("--version", dmg::kToolVersion);

  // annotate
  auto* annotate = app.add_subcommand("annotate", "Annotate a single mask");
  std::string mask_path, out_dir, image_id;
  MaskInputFlags annotate_input;
  PipelineFlags annotate_flags;
  annotate->add_option("--mask", mask_path, "Mask raster (PNG or raw)")->required()->check(CLI::ExistingFile);
  annotate->add_option("--out", out_dir, "Output directory")->required();
  annotate->add_option("--id", image_id, "Image id (default: mask file stem)");
  annotate_input.attach(annotate);
  annotate_flags.attach(annotate);

  // batch
  auto* batch = app.add_subcommand("batch", "Annotate every entry of a manifest");
  std::string manifest_path, batch_out;
  unsigned workers = 0;
  MaskInputFlags batch_input;
  PipelineFlags batch_flags;
  batch->add_option("--manifest", manifest_path, "Manifest JSON")->required()->check(CLI::ExistingFile);
  batch->add_option("--out", batch_out, "Output directory")->required();
  batch->add_option("--workers", workers, "Worker threads (default: CPU count)");
  batch_input.attach(batch);
  batch_flags.attach(batch);

  // stats
  auto* stats = app.add_subcommand("stats", "Dataset statistics report");
  std::string stats_manifest, stats_out, csv_dir, corpus_file;
  std::uint64_t presence = 1;
  int stats_connectivity = 8;
  MaskInputFlags stats_input;
  stats->add_option("--manifest", stats_manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  stats->add_option("--out", stats_out, "Report JSON path")->required();
  stats->add_option("--csv-dir", csv_dir, "Also write CSV tables here");
  stats->add_option("--presence-threshold", presence,
                    "Pixels needed for a category to count as present in an image")
      ->check(CLI::PositiveNumber);
  stats->add_option("--corpus", corpus_file,
                    "Text file (one annotation per line) for word frequencies");
  stats->add_option("--connectivity", stats_connectivity)->check(CLI::IsMember({4, 8}));
  stats_input.attach(stats);

  // grade
  auto* grade = app.add_subcommand("grade", "Print the damage assessment of a mask");
  std::string grade_mask;
  bool grade_strict = false, grade_zones = false;
  MaskInputFlags grade_input;
  grade->add_option("--mask", grade_mask, "Mask raster")->required()->check(CLI::ExistingFile);
  grade->add_flag("--strict-minor", grade_strict);
  grade->add_flag("--zones", grade_zones, "Also grade each zone");
  grade_input.attach(grade);

  // eval
  auto* eval = app.add_subcommand("eval", "Score predictions against references");
  std::string pred_file, ref_file, metrics = "rouge,meteor,scs", embedding = "bow";
  bool scs_signed = false;
  eval->add_option("--pred", pred_file, "Predictions, one per line")->required()->check(CLI::ExistingFile);
  eval->add_option("--ref", ref_file, "References, one per line")->required()->check(CLI::ExistingFile);
  eval->add_option("--metrics", metrics, "Comma-separated subset of rouge,meteor,scs");
  eval->add_option("--embedding", embedding, "Embedding provider for SCS")
      ->check(CLI::IsMember({"bow", "external"}));
  eval->add_flag("--scs-signed", scs_signed, "Use cos^3 without the sign factor");

  // manifest
  auto* manifest = app.add_subcommand("manifest", "Build a manifest from a directory tree");
  std::string root_dir, manifest_out;
  manifest->add_option("--root", root_dir, "Dataset root")->required();
  manifest->add_option("--out", manifest_out, "Manifest JSON path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitFatal;
  }

  try {
    if (*annotate) {
      const auto mask = dmg::load_mask(mask_path, annotate_input.options());
      dmg::AnnotateOptions opts;
      opts.image_id = image_id.empty() ? fs::path(mask_path).stem().string() : image_id;
      opts.connectivity = dmg::connectivity_from_int(annotate_flags.connectivity);
      opts.grading_mode = annotate_flags.grading();
      auto backend = annotate_flags.make_backend();
      const auto result = dmg::annotate_mask(mask, opts, *backend);
      fs::create_directories(out_dir);
      dmg::write_annotation(out_dir, opts.image_id, result);
      std::cout << (fs::path(out_dir) / (opts.image_id + ".annotation.json")).string() << "\n";
      return kExitOk;
    }
    if (*batch) {
      const auto m = dmg::load_manifest(manifest_path);
      dmg::BatchOptions opts;
      opts.out_dir = batch_out;
      opts.workers = workers;
      opts.load = batch_input.options();
      opts.connectivity = dmg::connectivity_from_int(batch_flags.connectivity);
      opts.grading_mode = batch_flags.grading();
      auto backend = batch_flags.make_backend();
      const auto summary = dmg::batch_annotate(m, opts, *backend);
      std::cout << "ok: " << summary.ok << ", failed: " << summary.failed << "\n";
      for (const auto& e : summary.entries) {
        if (!e.ok) std::cerr << e.id << ": " << e.error << "\n";
      }
      return summary.exit_code();
    }
    if (*stats) {
      const auto m = dmg::load_manifest(stats_manifest);
      dmg::DatasetStatsOptions opts;
      opts.load = stats_input.options();
      opts.connectivity = dmg::connectivity_from_int(stats_connectivity);
      opts.presence_threshold = presence;
      if (!corpus_file.empty()) opts.corpus = dmg::read_lines(corpus_file);
      const auto report = dmg::compute_dataset_stats(m, opts);
      dmg::write_text_file(stats_out, dmg::to_json(report).dump(2) + "\n");
      if (!csv_dir.empty()) dmg::write_stats_csv(csv_dir, report);
      return kExitOk;
    }
    if (*grade) {
      const auto mask = dmg::load_mask(grade_mask, grade_input.options());
      const auto mode = grade_strict ? dmg::GradingMode::StrictMinor : dmg::GradingMode::Literal;
      const auto a = dmg::assess(dmg::category_histogram(mask), mode);
      auto j = dmg::assessment_json(a);
      j["n_total"] = a.n_total;
      j["n_damaged"] = a.n_damaged;
      j["n_destroyed"] = a.n_destroyed;
      if (grade_zones) {
        const dmg::ZoneGeometry geom(mask.height(), mask.width());
        auto inst = dmg::extract_instances(mask);
        dmg::locate_instances(inst, geom);
        const auto s = dmg::compute_zone_stats(mask, inst, geom);
        nlohmann::ordered_json zones;
        for (auto z : dmg::kAllZones) {
          zones[std::string(dmg::name_of(z))] = dmg::assessment_json(dmg::assess(s.zones[z].pixel_counts, mode));
        }
        j["zones"] = std::move(zones);
      }
      std::cout << j.dump(2) << "\n";
      return kExitOk;
    }
    if (*eval) {
      const auto preds = dmg::read_lines(pred_file);
      const auto refs = dmg::read_lines(ref_file);
      auto sel = dmg::parse_metric_list(metrics);
      sel.scs_sign = scs_signed ? dmg::ScsSign::Preserve : dmg::ScsSign::Literal;
      std::unique_ptr<dmg::EmbeddingProvider> embedder;
      if (sel.scs) {
        if (embedding == "external") {
          auto cfg = dmg::embedding_config_from_env();
          if (!cfg) {
            throw dmg::InvalidArgument(std::string("external embeddings need ") + dmg::kEnvEmbedEndpoint);
          }
          embedder = std::make_unique<dmg::HttpEmbeddingProvider>(*cfg);
        } else {
          std::vector<std::string> corpus(preds);
          corpus.insert(corpus.end(), refs.begin(), refs.end());
          embedder = std::make_unique<dmg::BagOfWordsProvider>(corpus);
        }
      }
      const auto report = dmg::corpus_eval(preds, refs, sel, embedder.get());
      std::cout << dmg::to_json(report).dump(2) << "\n";
      return kExitOk;
    }
    if (*manifest) {
      const auto built = dmg::build_manifest(root_dir);
      for (const auto& w : built.warnings) std::cerr << "warning: " << w << "\n";
      dmg::save_manifest(manifest_out, built.manifest);
      std::cout << built.manifest.entries.size() << " entries\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
  return kExitFatal;
}
