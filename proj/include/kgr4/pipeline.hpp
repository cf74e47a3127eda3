#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "kgr4/corpus.hpp"
#include "kgr4/generator.hpp"
#include "kgr4/refiner.hpp"
#include "kgr4/rethink_eval.hpp"
#include "kgr4/scorer.hpp"
#include "kgr4/seq2seq.hpp"

namespace kgr4 {

/// Stage switches used by ablations. With everything off the pipeline is a
/// plain generator trained from scratch on the training pairs.
struct Toggles {
  bool pretraining = true;
  bool retrieval = true;
  bool retrospective_training = true;
  bool retrospective_augmentation = true;
  bool refine = true;
  bool rethink = true;

  static Toggles none();
  /// Names as used in configs: pretraining, retrieval, retrospective_training,
  /// retrospective_augmentation, refine, rethink.
  static const std::vector<std::string>& names();
  /// Throws kgr4::Error on an unknown name.
  void set(const std::string& name, bool on);
  bool get(const std::string& name) const;
  std::vector<std::string> enabled() const;

  friend bool operator==(const Toggles&, const Toggles&) = default;
};

struct PipelineConfig {
  std::filesystem::path workdir = "work";
  std::filesystem::path corpus;
  CorpusFormat corpus_format = CorpusFormat::PlainLines;
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path graph;  // optional

  std::uint64_t seed = 1;
  std::size_t pseudo_concepts = 5;
  std::size_t neg_ratio = 3;
  std::size_t pool = 100;

  ScorerConfig scorer;
  Seq2SeqConfig model;
  FitConfig pretrain;
  FitConfig finetune;
  Seq2SeqConfig refiner_model;
  FitConfig refiner_fit;
  PerturbationSpec perturbation;

  std::vector<double> lambdas{0.0, 0.1, 0.5, 0.9, 1.0};
  double lambda_default = 0.1;
  DecodeConfig decode;
  Toggles toggles;
  std::vector<std::size_t> rep_ns{2, 3, 4};

  nlohmann::json to_json() const;
  /// Relative paths are resolved against `base_dir`. Unknown keys are errors.
  static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
  /// Hash of the canonical JSON form.
  std::string hash() const;
  /// Checks ranges and that every input file exists.
  void validate() const;
  /// Mixing weights the generator is trained with under the current toggles.
  std::vector<double> active_lambdas() const;
};

/// Built-in defaults as JSON.
nlohmann::json default_config_json();

/// Applies one "dotted.key=value" override; the value is parsed as JSON and
/// taken as a plain string when that fails.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, then the file (if any), then the overrides in order.
PipelineConfig load_config(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});

struct StageRecord {
  std::string name;
  std::string key;          // hash of the stage inputs and settings
  std::string output_hash;  // hash of the produced artifact
  std::string status;       // ran, cached, failed, skipped
  double seconds = 0.0;
  std::string error;
};

struct RunManifest {
  std::string config_hash;
  std::filesystem::path run_dir;
  std::vector<StageRecord> stages;
  bool ok = true;

  const StageRecord* find(const std::string& name) const;
  nlohmann::json to_json() const;
};

/// Executes the enabled stages in dependency order. Stage artifacts live in
/// workdir/artifacts/<stage>-<key>/ and are reused when the key matches. The
/// run directory workdir/runs/<config hash>/ receives manifest.json,
/// predictions.jsonl and report.{json,txt,csv}. A failing stage is recorded
/// and its dependents are skipped; the manifest is still written.
RunManifest run(const PipelineConfig& config);

/// Artifact directory of a stage recorded in a manifest.
std::filesystem::path artifact_dir(const PipelineConfig& config, const StageRecord& stage);

struct Variant {
  std::string name;
  Toggles toggles;
};

/// The cumulative ablation rows: +pretraining, +retrieval, +retrospective
/// training, +retrospective augmentation, +refine, +rethink; `with_base`
/// prepends the all-off base row.
std::vector<Variant> ablation_variants(bool with_base = false);

/// Parses "name=toggle+toggle" (or a bare row name from ablation_variants).
Variant parse_variant(const std::string& spec);

struct AblationRow {
  std::string variant;
  MetricSet metrics;
  std::filesystem::path run_dir;
  bool ok = true;
};

/// Runs every variant in the shared workdir, reusing upstream artifacts.
std::vector<AblationRow> ablation(const PipelineConfig& config, const std::vector<Variant>& variants);

std::string ablation_table(const std::vector<AblationRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace kgr4
