// Command-line front end: corpus synthesis/statistics, GAN augmentation,
// fusion training/encoding, classifier fit/predict, graph inspection, and
// the experiment harness (single runs, ablation grid, gamma sweep,
// augmentation study, embedding export).

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cberl/augment.hpp"
#include "cberl/context.hpp"
#include "cberl/corpus.hpp"
#include "cberl/experiment.hpp"
#include "cberl/fusion.hpp"
#include "cberl/graph.hpp"
#include "cberl/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t seed_override(std::uint64_t seed) {
  if (const char* env = std::getenv("CBERL_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return seed;
}

cberl::harness::ExperimentConfig load_cfg(const std::string& path) {
  auto cfg = cberl::harness::load_config(path);
  cfg.seed = seed_override(cfg.seed);
  return cfg;
}

void print_report_line(const cberl::harness::RunResult& r) {
  std::cout << "waa=" << r.report.waa << " waf1=" << r.report.waf1
            << " minority_f1=" << r.minority_f1 << " seed=" << r.report.seed
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CBERL: class-boundary enhanced representation learning"};
  app.require_subcommand(1);

  // ---- corpus ----
  auto* corpus_cmd = app.add_subcommand("corpus", "corpus utilities");
  corpus_cmd->require_subcommand(1);

  std::string spec_path, out_dir, preset = "longtail7";
  auto* synth = corpus_cmd->add_subcommand("synth", "synthesize a corpus");
  synth->add_option("--spec", spec_path, "ImbalanceSpec JSON file");
  synth->add_option("--preset", preset, "longtail7 | meld_like");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->callback([&] {
    cberl::ImbalanceSpec spec =
        !spec_path.empty()
            ? cberl::harness::imbalance_spec_from_json_file(spec_path)
            : (preset == "meld_like" ? cberl::meld_like_spec()
                                     : cberl::longtail7_spec());
    if (const char* env = std::getenv("CBERL_SEED"))
      spec.seed = std::strtoull(env, nullptr, 10);
    cberl::Corpus corpus = cberl::synthesize_corpus(spec);
    cberl::write_corpus(corpus, out_dir);
    std::cout << "wrote " << corpus.total_utterances() << " utterances in "
              << corpus.dialogues.size() << " dialogues to " << out_dir
              << "\n";
  });

  std::string stats_dir;
  auto* stats = corpus_cmd->add_subcommand("stats", "label histogram");
  stats->add_option("dir", stats_dir, "corpus directory")->required();
  stats->callback([&] {
    cberl::Corpus corpus = cberl::load_corpus(stats_dir);
    auto hist = cberl::class_histogram(corpus);
    std::cout << "dialogues: " << corpus.dialogues.size()
              << " utterances: " << corpus.total_utterances() << "\n";
    for (int c = 0; c < corpus.num_classes; ++c)
      std::cout << corpus.class_names[c] << ": " << hist.counts[c] << " ("
                << hist.proportions[c] << ")\n";
  });

  // ---- augment ----
  auto* augment_cmd = app.add_subcommand("augment", "GAN augmentation");
  augment_cmd->require_subcommand(1);

  std::string aug_corpus, aug_ckpt;
  int gan_steps = 600, gan_pretrain = 40;
  std::uint64_t aug_seed = 1;
  auto* aug_train = augment_cmd->add_subcommand("train", "train the GAN");
  aug_train->add_option("--corpus", aug_corpus)->required();
  aug_train->add_option("--out", aug_ckpt)->required();
  aug_train->add_option("--steps", gan_steps);
  aug_train->add_option("--pretrain-epochs", gan_pretrain);
  aug_train->add_option("--seed", aug_seed);
  aug_train->callback([&] {
    aug_seed = seed_override(aug_seed);
    cberl::Corpus corpus = cberl::load_corpus(aug_corpus);
    cberl::augment::GanConfig gc;
    gc.dims = corpus.dims;
    gc.num_classes = corpus.num_classes;
    cberl::augment::GanModel gan(gc, aug_seed);
    cberl::augment::PretrainConfig pre;
    pre.epochs = gan_pretrain;
    pre.seed = aug_seed;
    cberl::augment::pretrain_classifier(gan, corpus, pre);
    cberl::augment::GanTrainConfig gt;
    gt.steps = gan_steps;
    gt.seed = aug_seed;
    cberl::augment::train_gan(gan, corpus, gt);
    gan.save(aug_ckpt);
    std::cout << "saved GAN checkpoint to " << aug_ckpt << "\n";
  });

  std::string gen_ckpt, counts_path, gen_out;
  std::uint64_t gen_seed = 1;
  auto* aug_gen = augment_cmd->add_subcommand("generate", "sample the GAN");
  aug_gen->add_option("--ckpt", gen_ckpt)->required();
  aug_gen->add_option("--counts", counts_path, "JSON: array or {preset,n}")
      ->required();
  aug_gen->add_option("--out", gen_out)->required();
  aug_gen->add_option("--seed", gen_seed);
  aug_gen->callback([&] {
    gen_seed = seed_override(gen_seed);
    auto gan = cberl::augment::GanModel::load(gen_ckpt);
    std::ifstream in(counts_path);
    if (!in) throw cberl::MissingFile("counts file: " + counts_path);
    json j = json::parse(in);
    std::vector<long> counts;
    if (j.is_array())
      counts = j.get<std::vector<long>>();
    else
      counts = cberl::augment::preset_counts(j.at("preset"),
                                             j.value("n", 10000));
    auto samples = cberl::augment::generate_samples(gan, counts, gen_seed);
    cberl::Corpus out;
    out.num_classes = gan.config().num_classes;
    out.dims = gan.config().dims;
    for (int c = 0; c < out.num_classes; ++c)
      out.class_names.push_back("class" + std::to_string(c));
    cberl::Dialogue dia;
    dia.id = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (dia.utterances.size() == 10) {
        out.dialogues.push_back(dia);
        dia = cberl::Dialogue{};
        dia.id = static_cast<int>(out.dialogues.size());
      }
      dia.utterances.push_back(samples[i]);
    }
    if (!dia.utterances.empty()) out.dialogues.push_back(dia);
    cberl::write_corpus(out, gen_out);
    std::cout << "wrote " << samples.size() << " synthetic utterances to "
              << gen_out << "\n";
  });

  // ---- fusion ----
  auto* fusion_cmd = app.add_subcommand("fusion", "DJVAE fusion");
  fusion_cmd->require_subcommand(1);

  std::string fus_corpus, fus_ckpt;
  int fus_epochs = 30;
  std::uint64_t fus_seed = 1;
  auto* fus_train = fusion_cmd->add_subcommand("train", "train the DJVAE");
  fus_train->add_option("--corpus", fus_corpus)->required();
  fus_train->add_option("--out", fus_ckpt)->required();
  fus_train->add_option("--epochs", fus_epochs);
  fus_train->add_option("--seed", fus_seed);
  fus_train->callback([&] {
    fus_seed = seed_override(fus_seed);
    cberl::Corpus corpus = cberl::load_corpus(fus_corpus);
    cberl::fusion::FusionModel model(corpus.dims, {}, fus_seed);
    cberl::fusion::FusionTrainConfig cfg;
    cfg.epochs = fus_epochs;
    cfg.seed = fus_seed;
    auto losses = cberl::fusion::train_fusion(model, corpus, cfg);
    model.save(fus_ckpt);
    std::cout << "final mean loss " << losses.back() << "; saved to "
              << fus_ckpt << "\n";
  });

  std::string enc_corpus, enc_ckpt, enc_out;
  auto* fus_enc = fusion_cmd->add_subcommand("encode", "emit latent codes");
  fus_enc->add_option("--corpus", enc_corpus)->required();
  fus_enc->add_option("--ckpt", enc_ckpt)->required();
  fus_enc->add_option("--out", enc_out)->required();
  fus_enc->callback([&] {
    cberl::Corpus corpus = cberl::load_corpus(enc_corpus);
    auto model = cberl::fusion::FusionModel::load(enc_ckpt);
    std::ostringstream buf;
    for (const auto& d : corpus.dialogues) {
      for (const auto& u : d.utterances) {
        const cberl::Vec z = cberl::fusion::fuse(model, u);
        json rec;
        rec["id"] = u.id;
        rec["label"] = u.label;
        json arr = json::array();
        for (int i = 0; i < z.size(); ++i) arr.push_back(z[i]);
        rec["embedding"] = arr;
        buf << rec.dump() << "\n";
      }
    }
    cberl::harness::write_text_atomic(enc_out, buf.str());
    std::cout << "wrote " << corpus.total_utterances() << " codes to "
              << enc_out << "\n";
  });

  // ---- classify ----
  auto* classify_cmd = app.add_subcommand("classify", "deployed classifier");
  classify_cmd->require_subcommand(1);

  std::string fit_config, fit_out;
  auto* cls_fit = classify_cmd->add_subcommand("fit", "train and save");
  cls_fit->add_option("--config", fit_config)->required();
  cls_fit->add_option("--out", fit_out)->required();
  cls_fit->callback([&] {
    auto cfg = load_cfg(fit_config);
    auto result = cberl::harness::fit_and_save_model(cfg, fit_out);
    print_report_line(result);
    std::cout << "saved model to " << fit_out << "\n";
  });

  std::string pred_ckpt, pred_corpus, pred_out = "predictions.jsonl";
  auto* cls_pred = classify_cmd->add_subcommand("predict", "run a saved model");
  cls_pred->add_option("--ckpt", pred_ckpt)->required();
  cls_pred->add_option("--corpus", pred_corpus)->required();
  cls_pred->add_option("--out", pred_out);
  cls_pred->callback([&] {
    cberl::harness::predict_with_model(pred_ckpt, pred_corpus, pred_out);
    std::cout << "wrote predictions to " << pred_out << "\n";
  });

  // ---- graph ----
  auto* graph_cmd = app.add_subcommand("graph", "graph utilities");
  graph_cmd->require_subcommand(1);

  std::string gi_corpus, gi_out;
  int gi_dialogue = 0, gi_past = 4, gi_future = 4;
  double gi_mask = 0.0;
  std::uint64_t gi_seed = 1;
  auto* gi = graph_cmd->add_subcommand("inspect", "dump a dialogue graph");
  gi->add_option("--corpus", gi_corpus)->required();
  gi->add_option("--dialogue", gi_dialogue);
  gi->add_option("--past", gi_past);
  gi->add_option("--future", gi_future);
  gi->add_option("--mask-rate", gi_mask);
  gi->add_option("--seed", gi_seed);
  gi->add_option("--out", gi_out, "write JSON here instead of stdout");
  gi->callback([&] {
    cberl::Corpus corpus = cberl::load_corpus(gi_corpus);
    const cberl::Dialogue* dia = nullptr;
    for (const auto& d : corpus.dialogues)
      if (d.id == gi_dialogue) dia = &d;
    if (!dia) throw cberl::MissingRun("no dialogue with id " +
                                      std::to_string(gi_dialogue));
    std::vector<const cberl::Utterance*> ptrs;
    std::vector<int> speakers;
    for (const auto& u : dia->utterances) {
      ptrs.push_back(&u);
      speakers.push_back(u.speaker);
    }
    const cberl::Mat feats = cberl::context::make_inputs(
        ptrs, cberl::context::InputMode::kConcat, nullptr);
    auto g = cberl::graph::build_graph(feats, speakers,
                                       {gi_past, gi_future});
    auto mask = gi_mask > 0.0 ? cberl::graph::apply_mask(g, gi_mask, gi_seed)
                              : cberl::graph::MaskPlan::none(g.num_nodes());
    const std::string dump = cberl::graph::dump_graph_json(g, mask);
    if (gi_out.empty())
      std::cout << dump << "\n";
    else
      cberl::harness::write_text_atomic(gi_out, dump);
  });

  // ---- harness ----
  std::string run_config;
  auto* run = app.add_subcommand("run", "single experiment run");
  run->add_option("--config", run_config)->required();
  run->callback([&] {
    auto result = cberl::harness::run_experiment(load_cfg(run_config));
    print_report_line(result);
  });

  std::string abl_config;
  auto* ablate = app.add_subcommand("ablate", "16-row toggle ablation grid");
  ablate->add_option("--config", abl_config)->required();
  ablate->callback([&] {
    auto rows = cberl::harness::ablation_grid(load_cfg(abl_config));
    std::cout << "fusion gamma mask ada | waf1 minority_f1\n";
    for (const auto& row : rows)
      std::cout << row.toggles.feature_fusion << "      "
                << row.toggles.gamma_factor << "     "
                << row.toggles.graph_mask << "    " << row.toggles.adaboost
                << "   | " << row.result.report.waf1 << " "
                << row.result.minority_f1 << "\n";
  });

  std::string sweep_config;
  std::vector<double> sweep_values = {0, 1, 2, 3, 4, 5};
  auto* sweep = app.add_subcommand("sweep-gamma", "adjustment factor sweep");
  sweep->add_option("--config", sweep_config)->required();
  sweep->add_option("--values", sweep_values);
  sweep->callback([&] {
    auto rows = cberl::harness::gamma_sweep(load_cfg(sweep_config),
                                            sweep_values);
    for (const auto& row : rows)
      std::cout << "gamma=" << row.gamma << " waf1=" << row.result.report.waf1
                << " minority_f1=" << row.result.minority_f1 << "\n";
  });

  std::string study_config;
  auto* study = app.add_subcommand("study-aug", "with/without augmentation");
  study->add_option("--config", study_config)->required();
  study->callback([&] {
    auto result = cberl::harness::augmentation_study(load_cfg(study_config));
    std::cout << "no_aug minority_f1=" << result.without_aug.minority_f1
              << " aug minority_f1=" << result.with_aug.minority_f1 << "\n";
  });

  std::string exp_run, exp_out;
  auto* exp = app.add_subcommand("export-emb", "copy a run's embedding dump");
  exp->add_option("--run", exp_run)->required();
  exp->add_option("--out", exp_out)->required();
  exp->callback(
      [&] { cberl::harness::export_embeddings(exp_run, exp_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const cberl::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
