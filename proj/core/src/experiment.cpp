#include "cberl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include <memory>

#include <nlohmann/json.hpp>

#include "cberl/checkpoint.hpp"
#include "cberl/report.hpp"

namespace cberl::harness {

using nlohmann::json;

namespace {

json spec_to_json(const ImbalanceSpec& s) {
  json j;
  j["class_proportions"] = s.class_proportions;
  j["class_names"] = s.class_names;
  j["num_dialogues"] = s.num_dialogues;
  j["min_utterances"] = s.min_utterances;
  j["max_utterances"] = s.max_utterances;
  j["min_speakers"] = s.min_speakers;
  j["max_speakers"] = s.max_speakers;
  j["num_sessions"] = s.num_sessions;
  j["class_separation"] = s.class_separation;
  j["noise_scale"] = s.noise_scale;
  j["label_run_length"] = s.label_run_length;
  j["seed"] = s.seed;
  j["long_tail"] = s.long_tail;
  j["d_w"] = s.dims.d_w;
  j["d_a"] = s.dims.d_a;
  j["d_v"] = s.dims.d_v;
  return j;
}

ImbalanceSpec spec_from_json(const json& j) {
  ImbalanceSpec s;
  s.class_proportions = j.at("class_proportions").get<std::vector<double>>();
  if (j.contains("class_names"))
    s.class_names = j.at("class_names").get<std::vector<std::string>>();
  s.num_dialogues = j.value("num_dialogues", s.num_dialogues);
  s.min_utterances = j.value("min_utterances", s.min_utterances);
  s.max_utterances = j.value("max_utterances", s.max_utterances);
  s.min_speakers = j.value("min_speakers", s.min_speakers);
  s.max_speakers = j.value("max_speakers", s.max_speakers);
  s.num_sessions = j.value("num_sessions", s.num_sessions);
  s.class_separation = j.value("class_separation", s.class_separation);
  s.noise_scale = j.value("noise_scale", s.noise_scale);
  s.label_run_length = j.value("label_run_length", s.label_run_length);
  s.seed = j.value("seed", s.seed);
  s.long_tail = j.value("long_tail", s.long_tail);
  s.dims.d_w = j.value("d_w", s.dims.d_w);
  s.dims.d_a = j.value("d_a", s.dims.d_a);
  s.dims.d_v = j.value("d_v", s.dims.d_v);
  return s;
}

}  // namespace

ImbalanceSpec imbalance_spec_from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("spec file not found: " + path.string());
  return spec_from_json(json::parse(in));
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["out_dir"] = c.out_dir;
  j["corpus_dir"] = c.corpus_dir;
  j["corpus_preset"] = c.corpus_preset;
  if (c.corpus_spec) j["corpus_spec"] = spec_to_json(*c.corpus_spec);
  j["split_policy"] =
      c.split_policy == SplitPolicy::kRatio ? "ratio" : "session";
  j["toggles"] = {{"augmentation", c.toggles.augmentation},
                  {"feature_fusion", c.toggles.feature_fusion},
                  {"gamma_factor", c.toggles.gamma_factor},
                  {"graph_mask", c.toggles.graph_mask},
                  {"adaboost", c.toggles.adaboost}};
  j["input_mode"] = context::to_string(c.input_mode);
  j["hyperparams"] = {
      {"gamma", c.hp.gamma},         {"weight_decay", c.hp.weight_decay},
      {"xi1", c.hp.xi1},             {"xi2", c.hp.xi2},
      {"lr", c.hp.lr},               {"dropout", c.hp.dropout},
      {"batch_size", c.hp.batch_size}, {"max_epochs", c.hp.max_epochs},
      {"patience", c.hp.patience},   {"mask_rate", c.hp.mask_rate},
      {"squared_l2", c.hp.squared_l2}};
  j["model"] = {{"d_h", c.d_h},
                {"gnn_width", c.gnn.width},
                {"attn_hidden", c.gnn.attn_hidden},
                {"recon_hidden", c.gnn.recon_hidden},
                {"gnn_layers", c.gnn.layers},
                {"window_past", c.window.past},
                {"window_future", c.window.future},
                {"d_z", c.fusion_cfg.d_z},
                {"code_width", c.fusion_cfg.code_width},
                {"text_chunk", c.fusion_cfg.text_chunk},
                {"text_hidden", c.fusion_cfg.text_hidden},
                {"conv_filters", c.fusion_cfg.conv_filters},
                {"conv_kernel", c.fusion_cfg.conv_kernel},
                {"conv_stride", c.fusion_cfg.conv_stride},
                {"dec_hidden", c.fusion_cfg.dec_hidden}};
  j["fusion_train"] = {{"epochs", c.fusion_train.epochs},
                       {"batch_size", c.fusion_train.batch_size},
                       {"lr", c.fusion_train.lr}};
  j["gan"] = {{"hidden_mult", c.gan_hidden_mult},
              {"steps", c.gan_steps},
              {"batch_size", c.gan_batch},
              {"pretrain_epochs", c.gan_pretrain_epochs},
              {"lr", c.gan_lr},
              {"counts_preset", c.aug_preset},
              {"counts", c.aug_counts}};
  j["boost"] = {{"rounds", c.boost.rounds}, {"max_depth", c.boost.max_depth}};
  return j.dump(2) + "\n";
}

namespace {

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.seed = j.value("seed", c.seed);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.corpus_dir = j.value("corpus_dir", c.corpus_dir);
  c.corpus_preset = j.value("corpus_preset", c.corpus_preset);
  if (j.contains("corpus_spec"))
    c.corpus_spec = spec_from_json(j.at("corpus_spec"));
  if (j.contains("split_policy")) {
    const std::string p = j.at("split_policy");
    if (p == "ratio")
      c.split_policy = SplitPolicy::kRatio;
    else if (p == "session")
      c.split_policy = SplitPolicy::kSession;
    else
      throw ConfigError("unknown split policy: " + p);
  }
  if (j.contains("toggles")) {
    const json& t = j.at("toggles");
    c.toggles.augmentation = t.value("augmentation", c.toggles.augmentation);
    c.toggles.feature_fusion =
        t.value("feature_fusion", c.toggles.feature_fusion);
    c.toggles.gamma_factor = t.value("gamma_factor", c.toggles.gamma_factor);
    c.toggles.graph_mask = t.value("graph_mask", c.toggles.graph_mask);
    c.toggles.adaboost = t.value("adaboost", c.toggles.adaboost);
  }
  if (j.contains("input_mode"))
    c.input_mode = context::input_mode_from_string(j.at("input_mode"));
  if (j.contains("hyperparams")) {
    const json& h = j.at("hyperparams");
    c.hp.gamma = h.value("gamma", c.hp.gamma);
    c.hp.weight_decay = h.value("weight_decay", c.hp.weight_decay);
    c.hp.xi1 = h.value("xi1", c.hp.xi1);
    c.hp.xi2 = h.value("xi2", c.hp.xi2);
    c.hp.lr = h.value("lr", c.hp.lr);
    c.hp.dropout = h.value("dropout", c.hp.dropout);
    c.hp.batch_size = h.value("batch_size", c.hp.batch_size);
    c.hp.max_epochs = h.value("max_epochs", c.hp.max_epochs);
    c.hp.patience = h.value("patience", c.hp.patience);
    c.hp.mask_rate = h.value("mask_rate", c.hp.mask_rate);
    c.hp.squared_l2 = h.value("squared_l2", c.hp.squared_l2);
  }
  if (j.contains("model")) {
    const json& m = j.at("model");
    c.d_h = m.value("d_h", c.d_h);
    c.gnn.width = m.value("gnn_width", c.gnn.width);
    c.gnn.attn_hidden = m.value("attn_hidden", c.gnn.attn_hidden);
    c.gnn.recon_hidden = m.value("recon_hidden", c.gnn.recon_hidden);
    c.gnn.layers = m.value("gnn_layers", c.gnn.layers);
    c.window.past = m.value("window_past", c.window.past);
    c.window.future = m.value("window_future", c.window.future);
    c.fusion_cfg.d_z = m.value("d_z", c.fusion_cfg.d_z);
    c.fusion_cfg.code_width = m.value("code_width", c.fusion_cfg.code_width);
    c.fusion_cfg.text_chunk = m.value("text_chunk", c.fusion_cfg.text_chunk);
    c.fusion_cfg.text_hidden = m.value("text_hidden", c.fusion_cfg.text_hidden);
    c.fusion_cfg.conv_filters =
        m.value("conv_filters", c.fusion_cfg.conv_filters);
    c.fusion_cfg.conv_kernel = m.value("conv_kernel", c.fusion_cfg.conv_kernel);
    c.fusion_cfg.conv_stride = m.value("conv_stride", c.fusion_cfg.conv_stride);
    c.fusion_cfg.dec_hidden = m.value("dec_hidden", c.fusion_cfg.dec_hidden);
  }
  if (j.contains("fusion_train")) {
    const json& f = j.at("fusion_train");
    c.fusion_train.epochs = f.value("epochs", c.fusion_train.epochs);
    c.fusion_train.batch_size =
        f.value("batch_size", c.fusion_train.batch_size);
    c.fusion_train.lr = f.value("lr", c.fusion_train.lr);
  }
  if (j.contains("gan")) {
    const json& g = j.at("gan");
    c.gan_hidden_mult = g.value("hidden_mult", c.gan_hidden_mult);
    c.gan_steps = g.value("steps", c.gan_steps);
    c.gan_batch = g.value("batch_size", c.gan_batch);
    c.gan_pretrain_epochs = g.value("pretrain_epochs", c.gan_pretrain_epochs);
    c.gan_lr = g.value("lr", c.gan_lr);
    c.aug_preset = g.value("counts_preset", c.aug_preset);
    if (g.contains("counts"))
      c.aug_counts = g.at("counts").get<std::vector<long>>();
  }
  if (j.contains("boost")) {
    const json& b = j.at("boost");
    c.boost.rounds = b.value("rounds", c.boost.rounds);
    c.boost.max_depth = b.value("max_depth", c.boost.max_depth);
  }
  return c;
}

}  // namespace

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingFile("config not found: " + path.string());
  return config_from_json(json::parse(in));
}

std::string config_hash(const ExperimentConfig& cfg) {
  json j = json::parse(config_to_json(cfg));
  j.erase("out_dir");
  const std::string s = j.dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

std::vector<int> minority_classes(const Corpus& corpus, double threshold) {
  Histogram h = class_histogram(corpus);
  std::vector<int> out;
  for (int c = 0; c < corpus.num_classes; ++c)
    if (h.proportions[c] <= threshold) out.push_back(c);
  return out;
}

namespace {

Corpus source_corpus(const ExperimentConfig& cfg) {
  if (!cfg.corpus_dir.empty()) return load_corpus(cfg.corpus_dir);
  if (cfg.corpus_spec) return synthesize_corpus(*cfg.corpus_spec);
  ImbalanceSpec spec;
  if (cfg.corpus_preset == "longtail7")
    spec = longtail7_spec();
  else if (cfg.corpus_preset == "meld_like")
    spec = meld_like_spec();
  else
    throw ConfigError("unknown corpus preset: " + cfg.corpus_preset);
  return synthesize_corpus(spec);
}

int max_utterance_id(const Corpus& c) {
  int mx = -1;
  for (const auto& d : c.dialogues)
    for (const auto& u : d.utterances) mx = std::max(mx, u.id);
  return mx;
}

/// Synthetic samples are grouped into pseudo-dialogues (training split only)
/// so they receive context and graph treatment like real data.
void append_pseudo_dialogues(Corpus& train, std::vector<Utterance> synth,
                             std::uint64_t seed) {
  if (synth.empty()) return;
  std::vector<int> lengths;
  for (const auto& d : train.dialogues)
    lengths.push_back(static_cast<int>(d.utterances.size()));
  std::sort(lengths.begin(), lengths.end());
  const int chunk = lengths.empty() ? 10 : lengths[lengths.size() / 2];

  Rng rng(derive_seed(seed, "aug.chunks"));
  rng.shuffle(synth);
  int next_dialogue = 0;
  for (const auto& d : train.dialogues)
    next_dialogue = std::max(next_dialogue, d.id + 1);
  for (std::size_t i = 0; i < synth.size(); i += chunk) {
    Dialogue dia;
    dia.id = next_dialogue++;
    dia.session = 0;
    const std::size_t hi = std::min(synth.size(), i + chunk);
    for (std::size_t k = i; k < hi; ++k) {
      synth[k].speaker = rng.uniform_int(2);
      dia.utterances.push_back(std::move(synth[k]));
    }
    train.dialogues.push_back(std::move(dia));
  }
}

std::vector<pipeline::DialogueData> prepare_dialogues(
    const Corpus& corpus, context::InputMode mode,
    const fusion::FusionModel* fm) {
  std::vector<pipeline::DialogueData> out;
  for (const auto& d : corpus.dialogues) {
    pipeline::DialogueData dd;
    std::vector<const Utterance*> ptrs;
    for (const auto& u : d.utterances) {
      ptrs.push_back(&u);
      dd.speakers.push_back(u.speaker);
      dd.labels.push_back(u.label);
    }
    dd.inputs = context::make_inputs(ptrs, mode, fm);
    out.push_back(std::move(dd));
  }
  return out;
}

template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(std::string(name) + ": " + e.what());
  }
}

}  // namespace

namespace {

struct FittedRun {
  context::InputMode mode = context::InputMode::kConcat;
  std::optional<fusion::FusionModel> fm;
  std::unique_ptr<pipeline::Pipeline> pipe;
  std::optional<classify::BoostEnsemble> ensemble;
  CorpusSplit parts;
  std::vector<int> minorities;
  std::vector<std::string> class_names;
  int num_classes = 0;
  std::vector<pipeline::DialogueData> test_data;
  pipeline::Pipeline::FitResult fitres;
};

Mat embeddings_as_rows(const Mat& emb) {
  Mat X(emb.cols(), emb.rows());
  for (int c = 0; c < emb.cols(); ++c) X.row(c) = emb.col(c);
  return X;
}

FittedRun fit_run(const ExperimentConfig& cfg) {
  cfg.hp.validate();
  FittedRun fr;

  Corpus corpus = stage("corpus", [&] { return source_corpus(cfg); });
  fr.parts =
      stage("split", [&] { return split(corpus, cfg.split_policy, cfg.seed); });
  fr.minorities = minority_classes(corpus);
  fr.class_names = corpus.class_names;
  fr.num_classes = corpus.num_classes;

  Corpus train = fr.parts.train;
  if (cfg.toggles.augmentation) {
    stage("augment", [&] {
      augment::GanConfig gc;
      gc.dims = corpus.dims;
      gc.num_classes = corpus.num_classes;
      gc.hidden_mult = cfg.gan_hidden_mult;
      gc.lr = cfg.gan_lr;
      augment::GanModel gan(gc, derive_seed(cfg.seed, "run.gan"));
      augment::PretrainConfig pre;
      pre.epochs = cfg.gan_pretrain_epochs;
      pre.seed = derive_seed(cfg.seed, "run.gan.pretrain");
      augment::pretrain_classifier(gan, train, pre);
      augment::GanTrainConfig gt;
      gt.steps = cfg.gan_steps;
      gt.batch_size = cfg.gan_batch;
      gt.seed = derive_seed(cfg.seed, "run.gan.train");
      augment::train_gan(gan, train, gt);
      const std::vector<long> counts =
          cfg.aug_counts.empty()
              ? augment::preset_counts(cfg.aug_preset, train.total_utterances())
              : cfg.aug_counts;
      auto synth =
          augment::generate_samples(gan, counts,
                                    derive_seed(cfg.seed, "run.gan.generate"),
                                    max_utterance_id(corpus) + 1);
      append_pseudo_dialogues(train, std::move(synth), cfg.seed);
      return 0;
    });
  }

  fr.mode = cfg.toggles.feature_fusion ? cfg.input_mode
                                       : context::InputMode::kConcat;
  if (fr.mode != context::InputMode::kConcat) {
    stage("fusion", [&] {
      fr.fm.emplace(corpus.dims, cfg.fusion_cfg,
                    derive_seed(cfg.seed, "run.fusion"));
      fusion::FusionTrainConfig ft = cfg.fusion_train;
      ft.seed = derive_seed(cfg.seed, "run.fusion.train");
      fusion::train_fusion(*fr.fm, train, ft);
      return 0;
    });
  }

  const fusion::FusionModel* fmp = fr.fm ? &*fr.fm : nullptr;
  auto train_data = stage(
      "inputs", [&] { return prepare_dialogues(train, fr.mode, fmp); });
  auto val_data = prepare_dialogues(fr.parts.val, fr.mode, fmp);
  fr.test_data = prepare_dialogues(fr.parts.test, fr.mode, fmp);

  pipeline::PipelineConfig pc;
  pc.input_dim = static_cast<int>(train_data.front().inputs.rows());
  pc.num_classes = corpus.num_classes;
  pc.d_h = cfg.d_h;
  pc.gnn = cfg.gnn;
  pc.window = cfg.window;
  pc.hp = cfg.hp;
  pc.use_gamma = cfg.toggles.gamma_factor;
  pc.use_mask = cfg.toggles.graph_mask;
  fr.pipe = std::make_unique<pipeline::Pipeline>(
      pc, derive_seed(cfg.seed, "run.pipeline"));
  fr.fitres =
      stage("train", [&] { return fr.pipe->fit(train_data, val_data); });

  if (cfg.toggles.adaboost) {
    stage("boost", [&] {
      long n_train = 0;
      for (const auto& d : train_data) n_train += d.inputs.cols();
      Mat X(n_train, cfg.gnn.width);
      std::vector<int> y;
      long row = 0;
      for (const auto& d : train_data) {
        const Mat emb = fr.pipe->embed(d);
        for (int c = 0; c < emb.cols(); ++c) X.row(row++) = emb.col(c);
        y.insert(y.end(), d.labels.begin(), d.labels.end());
      }
      fr.ensemble = classify::boost_fit(X, y, corpus.num_classes, cfg.boost);
      return 0;
    });
  }
  return fr;
}

std::vector<int> predict_embeddings(const FittedRun& fr, const Mat& emb) {
  if (fr.ensemble)
    return classify::boost_predict(*fr.ensemble, embeddings_as_rows(emb));
  const Mat probs = fr.pipe->head_probs(emb);
  std::vector<int> pred(probs.cols());
  for (int c = 0; c < probs.cols(); ++c) {
    int best = 0;
    for (int r = 1; r < probs.rows(); ++r)
      if (probs(r, c) > probs(best, c)) best = r;
    pred[c] = best;
  }
  return pred;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  FittedRun fr = fit_run(cfg);

  std::vector<int> y_true, y_pred;
  std::vector<Mat> test_emb;
  for (const auto& d : fr.test_data) {
    test_emb.push_back(fr.pipe->embed(d));
    y_true.insert(y_true.end(), d.labels.begin(), d.labels.end());
    auto pred = predict_embeddings(fr, test_emb.back());
    y_pred.insert(y_pred.end(), pred.begin(), pred.end());
  }

  RunResult out;
  out.fit = fr.fitres;
  out.report = compute_metrics(y_true, y_pred, fr.num_classes);
  out.report.config_hash = config_hash(cfg);
  out.report.seed = cfg.seed;
  out.report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  out.minority_classes = fr.minorities;
  out.minority_f1 = out.report.mean_f1_over(fr.minorities);

  const CorpusSplit& parts = fr.parts;
  const std::vector<int>& minorities = fr.minorities;
  const Corpus& corpus = fr.parts.test;  // class metadata matches the source

  if (!cfg.out_dir.empty()) {
    const std::filesystem::path dir(cfg.out_dir);
    write_text_atomic(dir / "config.json", config_to_json(cfg));
    write_text_atomic(dir / "report.json",
                      report_json(out.report, minorities, corpus.class_names));
    write_text_atomic(dir / "confusion.csv",
                      confusion_csv(out.report, corpus.class_names));
    write_text_atomic(dir / "confusion.svg",
                      svg_heatmap("confusion (rows=true)",
                                  out.report.confusion, corpus.class_names));
    std::ostringstream curves;
    curves << "epoch,train_total,train_recon,train_focal,val_waf1\n";
    for (std::size_t e = 0; e < out.fit.train_total.size(); ++e) {
      curves << e << "," << out.fit.train_total[e] << ","
             << out.fit.train_recon[e] << "," << out.fit.train_focal[e] << ",";
      if (e < out.fit.val_waf1.size()) curves << out.fit.val_waf1[e];
      curves << "\n";
    }
    write_text_atomic(dir / "loss_curves.csv", curves.str());

    std::ostringstream emb_out;
    std::size_t di = 0;
    for (const auto& d : parts.test.dialogues) {
      const Mat& emb = test_emb[di];
      for (std::size_t k = 0; k < d.utterances.size(); ++k) {
        json rec;
        rec["id"] = d.utterances[k].id;
        rec["label"] = d.utterances[k].label;
        json arr = json::array();
        for (int r = 0; r < emb.rows(); ++r)
          arr.push_back(emb(r, static_cast<int>(k)));
        rec["embedding"] = arr;
        emb_out << rec.dump() << "\n";
      }
      ++di;
    }
    write_text_atomic(dir / "embeddings.jsonl", emb_out.str());
  }
  return out;
}

std::vector<AblationRow> ablation_grid(const ExperimentConfig& base) {
  // Published table order: singles, pairs, triples, the empty row, all four.
  static const int kRows[16][4] = {
      {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1},
      {1, 1, 0, 0}, {1, 0, 1, 0}, {1, 0, 0, 1}, {0, 1, 1, 0},
      {0, 1, 0, 1}, {0, 0, 1, 1}, {1, 1, 1, 0}, {1, 0, 1, 1},
      {1, 1, 0, 1}, {0, 1, 1, 1}, {0, 0, 0, 0}, {1, 1, 1, 1}};
  std::vector<AblationRow> rows;
  for (int k = 0; k < 16; ++k) {
    ExperimentConfig cfg = base;
    cfg.toggles.feature_fusion = kRows[k][0];
    cfg.toggles.gamma_factor = kRows[k][1];
    cfg.toggles.graph_mask = kRows[k][2];
    cfg.toggles.adaboost = kRows[k][3];
    if (!base.out_dir.empty())
      cfg.out_dir = base.out_dir + "/row" + (k < 9 ? "0" : "") +
                    std::to_string(k + 1);
    rows.push_back({cfg.toggles, run_experiment(cfg)});
  }
  if (!base.out_dir.empty()) {
    std::ostringstream csv;
    csv << "feature_fusion,gamma,graph_mask,adaboost,waa,waf1,minority_f1\n";
    for (const auto& row : rows)
      csv << row.toggles.feature_fusion << "," << row.toggles.gamma_factor
          << "," << row.toggles.graph_mask << "," << row.toggles.adaboost
          << "," << row.result.report.waa << "," << row.result.report.waf1
          << "," << row.result.minority_f1 << "\n";
    write_text_atomic(std::filesystem::path(base.out_dir) / "ablation.csv",
                      csv.str());
  }
  return rows;
}

std::vector<GammaRow> gamma_sweep(const ExperimentConfig& base,
                                  const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("gamma_sweep: empty value set");
  std::vector<GammaRow> rows;
  for (double g : values) {
    ExperimentConfig cfg = base;
    cfg.toggles.gamma_factor = true;
    cfg.hp.gamma = g;
    if (!base.out_dir.empty()) {
      std::ostringstream tag;
      tag << "gamma_" << g;
      cfg.out_dir = base.out_dir + "/" + tag.str();
    }
    rows.push_back({g, run_experiment(cfg)});
  }
  if (!base.out_dir.empty()) {
    std::ostringstream csv;
    csv << "gamma,waa,waf1,minority_f1\n";
    std::vector<double> xs;
    Series waa{"waa", {}}, waf1{"waf1", {}}, mf1{"minority_f1", {}};
    for (const auto& row : rows) {
      csv << row.gamma << "," << row.result.report.waa << ","
          << row.result.report.waf1 << "," << row.result.minority_f1 << "\n";
      xs.push_back(row.gamma);
      waa.ys.push_back(row.result.report.waa);
      waf1.ys.push_back(row.result.report.waf1);
      mf1.ys.push_back(row.result.minority_f1);
    }
    const std::filesystem::path dir(base.out_dir);
    write_text_atomic(dir / "gamma_sweep.csv", csv.str());
    write_text_atomic(dir / "gamma_sweep.svg",
                      svg_line_chart("adjustment factor sweep", xs,
                                     {waa, waf1, mf1}));
  }
  return rows;
}

AugStudy augmentation_study(const ExperimentConfig& base) {
  ExperimentConfig off = base;
  off.toggles.augmentation = false;
  if (!base.out_dir.empty()) off.out_dir = base.out_dir + "/no_aug";
  ExperimentConfig on = base;
  on.toggles.augmentation = true;
  if (!base.out_dir.empty()) on.out_dir = base.out_dir + "/aug";

  AugStudy study{run_experiment(off), run_experiment(on)};
  if (!base.out_dir.empty()) {
    std::ostringstream csv;
    csv << "class,f1_no_aug,f1_aug,delta\n";
    for (int c = 0; c < study.with_aug.report.num_classes; ++c)
      csv << c << "," << study.without_aug.report.per_class_f1[c] << ","
          << study.with_aug.report.per_class_f1[c] << ","
          << study.with_aug.report.per_class_f1[c] -
                 study.without_aug.report.per_class_f1[c]
          << "\n";
    write_text_atomic(std::filesystem::path(base.out_dir) / "aug_study.csv",
                      csv.str());
  }
  return study;
}

void export_embeddings(const std::filesystem::path& run_dir,
                       const std::filesystem::path& out_file) {
  const auto src = run_dir / "embeddings.jsonl";
  if (!std::filesystem::exists(run_dir / "report.json") ||
      !std::filesystem::exists(src))
    throw MissingRun("no completed run at " + run_dir.string());
  std::ifstream in(src, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  write_text_atomic(out_file, buf.str());
}

namespace {

json boost_to_json(const classify::BoostEnsemble& ens) {
  json j;
  j["num_classes"] = ens.num_classes;
  j["alphas"] = ens.alphas;
  json learners = json::array();
  for (const auto& tree : ens.learners) {
    json nodes = json::array();
    for (const auto& n : tree.nodes)
      nodes.push_back({{"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"leaf_class", n.leaf_class}});
    learners.push_back(nodes);
  }
  j["learners"] = learners;
  return j;
}

classify::BoostEnsemble boost_from_json(const json& j) {
  classify::BoostEnsemble ens;
  ens.num_classes = j.at("num_classes");
  ens.alphas = j.at("alphas").get<std::vector<double>>();
  for (const auto& nodes : j.at("learners")) {
    classify::WeakTree tree;
    for (const auto& n : nodes)
      tree.nodes.push_back({n.at("feature"), n.at("threshold"), n.at("left"),
                            n.at("right"), n.at("leaf_class")});
    ens.learners.push_back(std::move(tree));
  }
  return ens;
}

}  // namespace

RunResult fit_and_save_model(const ExperimentConfig& cfg,
                             const std::filesystem::path& ckpt_path) {
  RunResult result = run_experiment(cfg);
  // Re-fit returns identical state for a fixed seed, but saving needs the
  // live objects; run once more without artifacts to capture them.
  ExperimentConfig quiet = cfg;
  quiet.out_dir.clear();
  FittedRun fr = fit_run(quiet);

  Checkpoint ck;
  ck.kind = "pipeline";
  json j = json::parse(config_to_json(cfg));
  j["deploy"] = {{"input_dim", fr.pipe->config().input_dim},
                 {"num_classes", fr.num_classes},
                 {"class_names", fr.class_names},
                 {"input_mode", context::to_string(fr.mode)},
                 {"has_fusion", fr.fm.has_value()},
                 {"has_boost", fr.ensemble.has_value()}};
  if (fr.ensemble) j["boost_ensemble"] = boost_to_json(*fr.ensemble);
  ck.config_json = j.dump();
  ck.put_params(fr.pipe->params(), "pipe/");
  if (fr.fm) ck.put_params(fr.fm->params(), "fusion/");
  ck.save(ckpt_path);
  if (fr.fm) {
    // side file so `fusion encode` can reuse the jointly produced encoder
    fr.fm->save(ckpt_path.string() + ".fusion");
  }
  return result;
}

void predict_with_model(const std::filesystem::path& ckpt_path,
                        const std::filesystem::path& corpus_dir,
                        const std::filesystem::path& out_jsonl) {
  Checkpoint ck = Checkpoint::load(ckpt_path);
  if (ck.kind != "pipeline")
    throw Error("not a pipeline checkpoint: " + ckpt_path.string());
  json j = json::parse(ck.config_json);
  const json& dep = j.at("deploy");
  const ExperimentConfig cfg = config_from_json(j);

  Corpus corpus = load_corpus(corpus_dir);
  const context::InputMode mode =
      context::input_mode_from_string(dep.at("input_mode"));

  std::optional<fusion::FusionModel> fm;
  if (dep.at("has_fusion").get<bool>()) {
    fm.emplace(corpus.dims, cfg.fusion_cfg, 0);
    ck.load_params(fm->params(), "fusion/");
    fm->trained = true;
  }

  pipeline::PipelineConfig pc;
  pc.input_dim = dep.at("input_dim");
  pc.num_classes = dep.at("num_classes");
  pc.d_h = cfg.d_h;
  pc.gnn = cfg.gnn;
  pc.window = cfg.window;
  pc.hp = cfg.hp;
  pipeline::Pipeline pipe(pc, 0);
  ck.load_params(pipe.params(), "pipe/");

  std::optional<classify::BoostEnsemble> ens;
  if (dep.at("has_boost").get<bool>())
    ens = boost_from_json(j.at("boost_ensemble"));

  const fusion::FusionModel* fmp = fm ? &*fm : nullptr;
  auto data = prepare_dialogues(corpus, mode, fmp);

  std::ostringstream out;
  std::size_t di = 0;
  for (const auto& d : corpus.dialogues) {
    const Mat emb = pipe.embed(data[di]);
    std::vector<int> pred;
    if (ens)
      pred = classify::boost_predict(*ens, embeddings_as_rows(emb));
    else {
      const Mat probs = pipe.head_probs(emb);
      for (int c = 0; c < probs.cols(); ++c) {
        int best = 0;
        for (int r = 1; r < probs.rows(); ++r)
          if (probs(r, c) > probs(best, c)) best = r;
        pred.push_back(best);
      }
    }
    for (std::size_t k = 0; k < d.utterances.size(); ++k) {
      json rec;
      rec["id"] = d.utterances[k].id;
      rec["label"] = d.utterances[k].label;
      rec["predicted"] = pred[k];
      out << rec.dump() << "\n";
    }
    ++di;
  }
  write_text_atomic(out_jsonl, out.str());
}

}  // namespace cberl::harness
