#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cberl/augment.hpp"
#include "cberl/classify.hpp"
#include "cberl/context.hpp"
#include "cberl/corpus.hpp"
#include "cberl/fusion.hpp"
#include "cberl/graph.hpp"
#include "cberl/metrics.hpp"
#include "cberl/pipeline.hpp"

namespace cberl::harness {

struct Toggles {
  bool augmentation = true;
  bool feature_fusion = true;
  bool gamma_factor = true;
  bool graph_mask = true;
  bool adaboost = true;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir;  // empty -> no artifacts written

  // corpus source: a directory takes precedence, then a named preset, then
  // an inline spec
  std::string corpus_dir;
  std::string corpus_preset = "longtail7";
  std::optional<ImbalanceSpec> corpus_spec;
  SplitPolicy split_policy = SplitPolicy::kRatio;

  Toggles toggles;
  context::InputMode input_mode = context::InputMode::kLatent;
  classify::Hyperparams hp;

  // model sizes
  int d_h = 16;
  graph::GnnConfig gnn;
  graph::WindowSpec window;
  fusion::FusionConfig fusion_cfg;
  fusion::FusionTrainConfig fusion_train;

  // augmentation
  int gan_hidden_mult = 4;
  int gan_steps = 600;
  int gan_batch = 32;
  int gan_pretrain_epochs = 40;
  double gan_lr = 2e-4;
  std::string aug_preset = "longtail7";
  std::vector<long> aug_counts;  // explicit per-class counts override

  classify::BoostConfig boost;
};

ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON of every field (out_dir included); used for logging.
std::string config_to_json(const ExperimentConfig& cfg);
/// Hash over the canonical JSON minus out_dir.
std::string config_hash(const ExperimentConfig& cfg);

ImbalanceSpec imbalance_spec_from_json_file(const std::filesystem::path& path);

struct RunResult {
  MetricsReport report;
  std::vector<int> minority_classes;  // prevalence <= 5% in the source corpus
  double minority_f1 = 0.0;
  pipeline::Pipeline::FitResult fit;
};

/// Full pipeline run: (optional) GAN augmentation -> DJVAE fit -> joint
/// BiLSTM/graph/classifier training -> evaluation on the test split.
/// Writes report.json, confusion.csv/.svg, embeddings.jsonl and
/// loss_curves.csv under out_dir (when set).
RunResult run_experiment(const ExperimentConfig& cfg);

/// All 16 combinations of {feature_fusion, gamma_factor, graph_mask,
/// adaboost} with a shared seed, emitted in the published table order.
struct AblationRow {
  Toggles toggles;
  RunResult result;
};
std::vector<AblationRow> ablation_grid(const ExperimentConfig& base);

struct GammaRow {
  double gamma;
  RunResult result;
};
std::vector<GammaRow> gamma_sweep(const ExperimentConfig& base,
                                  const std::vector<double>& values);

struct AugStudy {
  RunResult without_aug;
  RunResult with_aug;
};
AugStudy augmentation_study(const ExperimentConfig& base);

/// Copies a completed run's embedding dump; throws MissingRun otherwise.
void export_embeddings(const std::filesystem::path& run_dir,
                       const std::filesystem::path& out_file);

/// Trains the deployed classifier (fusion + context/graph + head + optional
/// boost ensemble) and stores everything in one checkpoint blob.
RunResult fit_and_save_model(const ExperimentConfig& cfg,
                             const std::filesystem::path& ckpt_path);

/// Runs a saved model over a corpus directory, one JSON line per utterance.
void predict_with_model(const std::filesystem::path& ckpt_path,
                        const std::filesystem::path& corpus_dir,
                        const std::filesystem::path& out_jsonl);

/// Classes whose prevalence is at most `threshold` in the corpus.
std::vector<int> minority_classes(const Corpus& corpus,
                                  double threshold = 0.05);

}  // namespace cberl::harness
