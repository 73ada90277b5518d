#include "cberl/augment.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "cberl/checkpoint.hpp"

namespace cberl::augment {

using ad::Expr;
using ad::Tape;

GanModel::GanModel(GanConfig cfg, std::uint64_t seed)
    : cfg_(cfg),
      gen_opt_({.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2}),
      disc_opt_({.lr = cfg.lr, .beta1 = cfg.beta1, .beta2 = cfg.beta2}) {
  if (cfg_.num_classes < 1) throw ConfigError("gan: num_classes must be >= 1");
  const int d = cfg_.feature_dim();
  const int h = cfg_.hidden_mult * d;
  const int C = cfg_.num_classes;
  Rng rng(derive_seed(seed, "gan.init"));
  g_s2t_ = nn::make_mlp(gen_params_, "g_s2t", {d, h, h, d}, rng,
                        nn::Act::kLeakyRelu, nn::Act::kNone, cfg_.leaky_alpha);
  g_t2s_ = nn::make_mlp(gen_params_, "g_t2s", {d + C, h, h, d}, rng,
                        nn::Act::kLeakyRelu, nn::Act::kNone, cfg_.leaky_alpha);
  disc_ = nn::make_mlp(disc_params_, "disc", {d, h, h, 1}, rng,
                       nn::Act::kLeakyRelu, nn::Act::kSigmoid,
                       cfg_.leaky_alpha);
  ec_ = nn::make_mlp(ec_params_, "ec", {d + C, cfg_.ec_hidden, C}, rng,
                     nn::Act::kLeakyRelu, nn::Act::kNone, cfg_.leaky_alpha);
  // State-vector columns start (and stay) at zero: the pretrained classifier
  // scores features, conditioning acts through the generator input.
  ec_.layers[0].W->value.middleCols(d, C).setZero();
  input_mean = Vec::Zero(d);
  input_std = Vec::Ones(d);
}

Expr GanModel::gen_s2t(Tape& tape, Expr x) const {
  return nn::apply(tape, g_s2t_, x);
}

Expr GanModel::gen_t2s(Tape& tape, Expr x, Expr z) const {
  if (z.rows() != cfg_.num_classes || z.cols() != x.cols())
    throw ShapeMismatch("gen_t2s: bad state vector shape");
  return nn::apply(tape, g_t2s_, ad::concat_rows({x, z}));
}

Expr GanModel::disc(Tape& tape, Expr x) const {
  return nn::apply(tape, disc_, x);
}

Expr GanModel::ec_probs(Tape& tape, Expr x, Expr z) const {
  return ad::softmax_cols(nn::apply(tape, ec_, ad::concat_rows({x, z})));
}

Mat GanModel::one_hot_batch(const std::vector<int>& labels) const {
  Mat z = Mat::Zero(cfg_.num_classes, labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= cfg_.num_classes)
      throw UnknownLabel("one_hot: label out of range");
    z(labels[i], static_cast<int>(i)) = 1.0;
  }
  return z;
}

namespace {

struct LossExprs {
  Expr l_c, l_rc, l_adv, l_identity;
};

void check_batch(const GanBatch& batch, const GanModel& model) {
  const int d = model.config().feature_dim();
  if (batch.sources.rows() != d || batch.targets.rows() != d)
    throw ShapeMismatch("gan batch feature dim mismatch");
  if (batch.sources.cols() == 0 || batch.targets.cols() == 0)
    throw ShapeMismatch("gan batch must carry sources and targets");
  if (static_cast<int>(batch.source_labels.size()) != batch.sources.cols())
    throw ShapeMismatch("gan batch label count mismatch");
  if (batch.target_class < 0 ||
      batch.target_class >= model.config().num_classes)
    throw UnknownLabel("gan batch target class out of range");
}

LossExprs build_losses(Tape& tape, const GanBatch& batch,
                       const GanModel& model) {
  check_batch(batch, model);
  const double floor = model.config().log_floor;
  const int Bs = static_cast<int>(batch.sources.cols());
  const int Bt = static_cast<int>(batch.targets.cols());

  Expr S = tape.input(batch.sources);
  Expr T = tape.input(batch.targets);
  Expr Zk = tape.input(model.one_hot_batch(batch.source_labels));
  std::vector<int> r_batch(Bt, batch.target_class);
  Expr Zr = tape.input(model.one_hot_batch(r_batch));

  // Eq. 1: cycle path S -> T -> S and direct path conditioned on Z_k, both
  // scored against the source labels; negated log-likelihood sums.
  Expr fake_t = model.gen_s2t(tape, S);
  Expr cycle = model.gen_t2s(tape, fake_t, Zk);
  Expr direct = model.gen_t2s(tape, S, Zk);
  Expr lp_cycle = ad::log_floor(
      ad::pick_cols(model.ec_probs(tape, cycle, Zk), batch.source_labels),
      floor);
  Expr lp_direct = ad::log_floor(
      ad::pick_cols(model.ec_probs(tape, direct, Zk), batch.source_labels),
      floor);
  Expr l_c = ad::neg(ad::add(ad::sum(lp_cycle), ad::sum(lp_direct)));

  // Eq. 2: targets pushed to the requested class r.
  Expr gen_r = model.gen_t2s(tape, T, Zr);
  Expr lp_r = ad::log_floor(
      ad::pick_cols(model.ec_probs(tape, gen_r, Zr), r_batch), floor);
  Expr l_rc = ad::neg(ad::sum(lp_r));

  // Eq. 3: E_T[log D(T)] + E_S[log(1 - D(Dec(Enc(S))))].
  Expr d_real = model.disc(tape, T);
  Expr d_fake = model.disc(tape, fake_t);
  Expr adv_real = ad::scale(ad::sum(ad::log_floor(d_real, floor)), 1.0 / Bt);
  Expr adv_fake = ad::scale(
      ad::sum(ad::log_floor(ad::one_minus(d_fake), floor)), 1.0 / Bs);
  Expr l_adv = ad::add(adv_real, adv_fake);

  // Eq. 4: each generator should leave the opposite domain unchanged.
  Expr id_s = ad::scale(ad::sum_squares(ad::sub(direct, S)), 1.0 / Bs);
  Expr id_t =
      ad::scale(ad::sum_squares(ad::sub(model.gen_s2t(tape, T), T)), 1.0 / Bt);
  Expr l_identity = ad::add(id_s, id_t);

  return {l_c, l_rc, l_adv, l_identity};
}

Expr weighted_total(Tape& tape, const LossExprs& le, const GanModel& model) {
  const auto& lam = model.config().lambdas;
  (void)tape;
  return ad::add(ad::scale(le.l_identity, lam[0]),
                 ad::add(ad::scale(le.l_adv, lam[1]),
                         ad::scale(ad::add(le.l_c, le.l_rc), lam[2])));
}

}  // namespace

void pretrain_classifier(GanModel& model, const Corpus& train,
                         const PretrainConfig& cfg) {
  std::vector<const Utterance*> all;
  for (const auto& d : train.dialogues)
    for (const auto& u : d.utterances) all.push_back(&u);
  if (all.empty()) throw EmptyCorpus("pretrain_classifier: empty corpus");

  Rng rng(derive_seed(cfg.seed, "gan.pretrain"));
  ad::Adam adam({.lr = cfg.lr});
  const int C = model.config().num_classes;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(all);
    for (std::size_t i = 0; i < all.size(); i += cfg.batch_size) {
      const std::size_t hi = std::min(all.size(), i + cfg.batch_size);
      const int B = static_cast<int>(hi - i);
      Mat X(model.config().feature_dim(), B);
      std::vector<int> y(B);
      for (int b = 0; b < B; ++b) {
        X.col(b) = concat_features(*all[i + b]);
        y[b] = all[i + b]->label;
      }
      Tape tape;
      Expr probs = model.ec_probs(tape, tape.input(X),
                                  tape.input(Mat::Zero(C, B)));
      Expr loss = ad::scale(
          ad::sum(ad::log_floor(ad::pick_cols(probs, y),
                                model.config().log_floor)),
          -1.0 / B);
      model.classifier_params().zero_grad();
      tape.backward(loss);
      adam.step(model.classifier_params());
    }
  }
  model.classifier_trained = true;
  for (auto& p : model.classifier_params().items()) p->frozen = true;
}

std::pair<double, double> classification_loss(const GanBatch& batch,
                                              const GanModel& model) {
  Tape tape;
  LossExprs le = build_losses(tape, batch, model);
  return {le.l_c.scalar(), le.l_rc.scalar()};
}

double adversarial_loss(const GanBatch& batch, const GanModel& model) {
  Tape tape;
  return build_losses(tape, batch, model).l_adv.scalar();
}

double identity_loss(const GanBatch& batch, const GanModel& model) {
  Tape tape;
  return build_losses(tape, batch, model).l_identity.scalar();
}

GanLossBreakdown loss_breakdown(const GanBatch& batch, const GanModel& model) {
  Tape tape;
  LossExprs le = build_losses(tape, batch, model);
  GanLossBreakdown out;
  out.l_c = le.l_c.scalar();
  out.l_rc = le.l_rc.scalar();
  out.l_adv = le.l_adv.scalar();
  out.l_identity = le.l_identity.scalar();
  out.total = weighted_total(tape, le, model).scalar();
  return out;
}

void gan_step(GanModel& model, const GanBatch& batch) {
  // Generator: descend the full weighted objective. The paper's update pair
  // differentiates both w.r.t. the discriminator, which would leave the
  // identity/classification terms without any gradient path; routing the
  // weighted objective to the generator is the reading that trains.
  {
    Tape tape;
    LossExprs le = build_losses(tape, batch, model);
    Expr total = weighted_total(tape, le, model);
    model.generator_params().zero_grad();
    model.discriminator_params().zero_grad();
    model.classifier_params().zero_grad();
    tape.backward(total);
    model.generator_opt().step(model.generator_params());
  }
  // Discriminator: ascend the adversarial log-likelihood.
  {
    Tape tape;
    LossExprs le = build_losses(tape, batch, model);
    Expr objective = ad::scale(le.l_adv, -model.config().lambdas[1]);
    model.generator_params().zero_grad();
    model.discriminator_params().zero_grad();
    model.classifier_params().zero_grad();
    tape.backward(objective);
    model.discriminator_opt().step(model.discriminator_params());
  }
}

void train_gan(GanModel& model, const Corpus& train,
               const GanTrainConfig& cfg) {
  if (!model.classifier_trained)
    throw Error("train_gan: pretrain the classifier first");
  std::vector<const Utterance*> all;
  std::vector<std::vector<const Utterance*>> by_class(
      model.config().num_classes);
  for (const auto& d : train.dialogues)
    for (const auto& u : d.utterances) {
      all.push_back(&u);
      by_class[u.label].push_back(&u);
    }
  if (all.empty()) throw EmptyCorpus("train_gan: empty corpus");

  std::vector<int> classes_present;
  for (int c = 0; c < model.config().num_classes; ++c)
    if (!by_class[c].empty()) classes_present.push_back(c);

  const int d = model.config().feature_dim();
  {
    Mat X(d, all.size());
    for (std::size_t i = 0; i < all.size(); ++i)
      X.col(static_cast<int>(i)) = concat_features(*all[i]);
    model.input_mean = X.rowwise().mean();
    Vec var = (X.colwise() - model.input_mean)
                  .cwiseProduct(X.colwise() - model.input_mean)
                  .rowwise()
                  .mean();
    model.input_std = var.cwiseMax(1e-12).cwiseSqrt().cwiseMax(1e-6);
  }

  Rng rng(derive_seed(cfg.seed, "gan.train"));
  for (int step = 0; step < cfg.steps; ++step) {
    const int r = classes_present[step % classes_present.size()];
    const int Bs = cfg.batch_size;
    const int Bt = cfg.batch_size;
    GanBatch batch;
    batch.sources.resize(d, Bs);
    batch.source_labels.resize(Bs);
    for (int b = 0; b < Bs; ++b) {
      const Utterance* u = all[rng.uniform_int(static_cast<int>(all.size()))];
      batch.sources.col(b) = concat_features(*u);
      batch.source_labels[b] = u->label;
    }
    // Targets are drawn from the whole corpus: the class constraint then
    // teaches the conditioned generator to move any sample toward class r,
    // which is exactly what generation from noise needs.
    batch.targets.resize(d, Bt);
    batch.target_class = r;
    for (int b = 0; b < Bt; ++b) {
      const Utterance* u = all[rng.uniform_int(static_cast<int>(all.size()))];
      batch.targets.col(b) = concat_features(*u);
    }
    gan_step(model, batch);
  }
  model.trained = true;
}

std::vector<Utterance> generate_samples(const GanModel& model,
                                        const std::vector<long>& counts,
                                        std::uint64_t seed, int first_id) {
  if (!model.trained)
    throw UntrainedGenerator("generate_samples before training");
  if (static_cast<int>(counts.size()) != model.config().num_classes)
    throw ShapeMismatch("generate_samples: counts size != num_classes");
  for (long c : counts)
    if (c < 0) throw ShapeMismatch("generate_samples: negative count");

  const auto& dims = model.config().dims;
  const int d = model.config().feature_dim();
  Rng rng(derive_seed(seed, "gan.generate"));
  std::vector<Utterance> out;
  int next_id = first_id;
  for (int c = 0; c < model.config().num_classes; ++c) {
    if (counts[c] == 0) continue;
    const int B = static_cast<int>(counts[c]);
    Mat noise(d, B);
    for (int b = 0; b < B; ++b)
      noise.col(b) =
          model.input_mean + model.input_std.cwiseProduct(rng.gaussian_vec(d));
    Tape tape;
    std::vector<int> cls(B, c);
    Expr gen = model.gen_t2s(tape, tape.input(noise),
                             tape.input(model.one_hot_batch(cls)));
    const Mat& G = gen.value();
    for (int b = 0; b < B; ++b) {
      Utterance u;
      u.id = next_id++;
      u.speaker = 0;
      u.label = c;
      u.synthetic = true;
      u.text = {G.col(b).head(dims.d_w), Modality::kText};
      u.audio = {G.col(b).segment(dims.d_w, dims.d_a), Modality::kAudio};
      u.visual = {G.col(b).tail(dims.d_v), Modality::kVisual};
      out.push_back(std::move(u));
    }
  }
  return out;
}

std::vector<long> preset_counts(const std::string& name,
                                std::size_t n_utterances) {
  std::vector<long> per10k;
  if (name == "iemocap") {
    per10k = {250, 120, 80, 250, 120, 80};  // happy sad neutral angry excited frustrated
  } else if (name == "meld") {
    per10k = {60, 200, 200, 0, 0, 60, 0};  // anger disgust fear joy neutral sadness surprise
  } else if (name == "longtail7") {
    per10k = {0, 0, 0, 0, 0, 1500, 1500};
  } else {
    throw ConfigError("unknown augmentation preset: " + name);
  }
  std::vector<long> out(per10k.size());
  for (std::size_t i = 0; i < per10k.size(); ++i)
    out[i] = std::lround(static_cast<double>(per10k[i]) *
                         static_cast<double>(n_utterances) / 10000.0);
  return out;
}

void GanModel::save(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.kind = "gan";
  nlohmann::json j;
  j["d_w"] = cfg_.dims.d_w;
  j["d_a"] = cfg_.dims.d_a;
  j["d_v"] = cfg_.dims.d_v;
  j["num_classes"] = cfg_.num_classes;
  j["hidden_mult"] = cfg_.hidden_mult;
  j["ec_hidden"] = cfg_.ec_hidden;
  j["leaky_alpha"] = cfg_.leaky_alpha;
  j["log_floor"] = cfg_.log_floor;
  j["lambdas"] = cfg_.lambdas;
  j["lr"] = cfg_.lr;
  j["beta1"] = cfg_.beta1;
  j["beta2"] = cfg_.beta2;
  j["classifier_trained"] = classifier_trained;
  j["trained"] = trained;
  ck.config_json = j.dump();
  ck.put_params(gen_params_, "gen/");
  ck.put_params(disc_params_, "disc/");
  ck.put_params(ec_params_, "ec/");
  ck.put("stats/mean", input_mean);
  ck.put("stats/std", input_std);
  ck.save(path);
}

GanModel GanModel::load(const std::filesystem::path& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.kind != "gan") throw Error("not a gan checkpoint: " + path.string());
  nlohmann::json j = nlohmann::json::parse(ck.config_json);
  GanConfig cfg;
  cfg.dims = {j.at("d_w"), j.at("d_a"), j.at("d_v")};
  cfg.num_classes = j.at("num_classes");
  cfg.hidden_mult = j.at("hidden_mult");
  cfg.ec_hidden = j.at("ec_hidden");
  cfg.leaky_alpha = j.at("leaky_alpha");
  cfg.log_floor = j.at("log_floor");
  cfg.lambdas = j.at("lambdas");
  cfg.lr = j.at("lr");
  cfg.beta1 = j.at("beta1");
  cfg.beta2 = j.at("beta2");
  GanModel model(cfg, 0);
  ck.load_params(model.gen_params_, "gen/");
  ck.load_params(model.disc_params_, "disc/");
  ck.load_params(model.ec_params_, "ec/");
  model.input_mean = ck.get("stats/mean");
  model.input_std = ck.get("stats/std");
  model.classifier_trained = j.at("classifier_trained");
  model.trained = j.at("trained");
  if (model.classifier_trained)
    for (auto& p : model.classifier_params().items()) p->frozen = true;
  return model;
}

}  // namespace cberl::augment
