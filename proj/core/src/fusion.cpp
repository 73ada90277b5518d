#include "cberl/fusion.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "cberl/checkpoint.hpp"

namespace cberl::fusion {

using ad::Expr;
using ad::Tape;

namespace {

int conv_out_len(int len, int kernel, int stride) {
  return (len - kernel) / stride + 1;
}

/// Stacked sliding windows of each batch column, concatenated horizontally:
/// (kernel) x (B * L_out).
Mat im2col(const Mat& x, int kernel, int stride) {
  const int L = static_cast<int>(x.rows());
  const int B = static_cast<int>(x.cols());
  const int out = conv_out_len(L, kernel, stride);
  Mat cols(kernel, B * out);
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < out; ++j)
      cols.col(b * out + j) = x.block(j * stride, b, kernel, 1);
  return cols;
}

struct BatchMats {
  Mat text, audio, visual, concat;
};

BatchMats batch_mats(const std::vector<const Utterance*>& batch,
                     const CorpusDims& dims) {
  const int B = static_cast<int>(batch.size());
  BatchMats m;
  m.text.resize(dims.d_w, B);
  m.audio.resize(dims.d_a, B);
  m.visual.resize(dims.d_v, B);
  m.concat.resize(dims.d_w + dims.d_a + dims.d_v, B);
  for (int b = 0; b < B; ++b) {
    const Utterance& u = *batch[b];
    if (u.text.values.size() != dims.d_w ||
        u.audio.values.size() != dims.d_a ||
        u.visual.values.size() != dims.d_v)
      throw ShapeMismatch("fusion: utterance dims do not match model dims");
    m.text.col(b) = u.text.values;
    m.audio.col(b) = u.audio.values;
    m.visual.col(b) = u.visual.values;
    m.concat.col(b) << u.text.values, u.audio.values, u.visual.values;
  }
  return m;
}

}  // namespace

FusionModel::FusionModel(CorpusDims dims, FusionConfig cfg, std::uint64_t seed)
    : dims_(dims), cfg_(cfg) {
  Rng rng(derive_seed(seed, "fusion.init"));
  if (dims_.d_w % cfg_.text_chunk != 0)
    throw ShapeMismatch("text dim must be divisible by text_chunk");
  text_lstm_ = nn::make_lstm(params_, "enc.text.lstm", cfg_.text_chunk,
                             cfg_.text_hidden, rng);
  text_head_ = nn::make_dense(params_, "enc.text.head", cfg_.text_hidden,
                              cfg_.code_width, rng);
  conv_audio_ = params_.add("enc.audio.conv", cfg_.conv_filters,
                            cfg_.conv_kernel, rng,
                            1.0 / std::sqrt(cfg_.conv_kernel));
  audio_head_ = nn::make_dense(params_, "enc.audio.head", cfg_.conv_filters,
                               cfg_.code_width, rng);
  conv_visual_ = params_.add("enc.visual.conv", cfg_.conv_filters,
                             cfg_.conv_kernel, rng,
                             1.0 / std::sqrt(cfg_.conv_kernel));
  visual_head_ = nn::make_dense(params_, "enc.visual.head", cfg_.conv_filters,
                                cfg_.code_width, rng);
  // Zero heads: a fresh encoder emits exactly N(0, I).
  mu_head_ = nn::make_dense(params_, "enc.mu", cfg_.code_width, cfg_.d_z, rng);
  mu_head_.W->value.setZero();
  logvar_head_ =
      nn::make_dense(params_, "enc.logvar", cfg_.code_width, cfg_.d_z, rng);
  logvar_head_.W->value.setZero();
  decoder_ = nn::make_mlp(
      params_, "dec",
      {cfg_.d_z, cfg_.dec_hidden, dims_.d_w + dims_.d_a + dims_.d_v}, rng,
      nn::Act::kLeakyRelu, nn::Act::kNone);
}

FusionModel::Encoded FusionModel::encode_expr(
    Tape& tape, const std::vector<const Utterance*>& batch) const {
  if (batch.empty()) throw ShapeMismatch("encode: empty batch");
  const int B = static_cast<int>(batch.size());
  const BatchMats mats = batch_mats(batch, dims_);

  // Text: recurrent over fixed-size chunks, batch in columns.
  nn::LstmState st = nn::lstm_zero_state(tape, text_lstm_, B);
  const int steps = dims_.d_w / cfg_.text_chunk;
  for (int t = 0; t < steps; ++t) {
    Expr x = tape.input(Mat(mats.text.middleRows(t * cfg_.text_chunk,
                                                 cfg_.text_chunk)));
    st = nn::lstm_step(tape, text_lstm_, x, st);
  }
  Expr text_code = nn::apply(tape, text_head_, st.h);

  auto conv_code = [&](const Mat& x, ad::Param* conv, const nn::Dense& head) {
    const int out = conv_out_len(static_cast<int>(x.rows()),
                                 cfg_.conv_kernel, cfg_.conv_stride);
    Expr cols = tape.input(im2col(x, cfg_.conv_kernel, cfg_.conv_stride));
    Expr fmap = ad::relu(ad::matmul(tape.param(*conv), cols));
    Expr pooled = ad::pool_cols_mean(fmap, out);  // filters x B
    return nn::apply(tape, head, pooled);
  };
  Expr audio_code = conv_code(mats.audio, conv_audio_, audio_head_);
  Expr visual_code = conv_code(mats.visual, conv_visual_, visual_head_);

  Expr joint = ad::add(ad::add(text_code, audio_code), visual_code);
  return {nn::apply(tape, mu_head_, joint), nn::apply(tape, logvar_head_, joint)};
}

Expr FusionModel::decode_expr(Tape& tape, Expr z) const {
  return nn::apply(tape, decoder_, z);
}

FusionModel::LossExprs FusionModel::loss_expr(
    Tape& tape, const std::vector<const Utterance*>& batch, Rng& noise) const {
  const int B = static_cast<int>(batch.size());
  const BatchMats mats = batch_mats(batch, dims_);
  Encoded enc = encode_expr(tape, batch);

  Expr eps = tape.input(noise.gaussian_mat(cfg_.d_z, B));
  Expr sigma = ad::exp_(ad::scale(enc.logvar, 0.5));
  Expr z = ad::add(enc.mu, ad::cmul(sigma, eps));
  Expr xhat = decode_expr(tape, z);

  Expr x = tape.input(mats.concat);
  Expr recon = ad::scale(ad::sum_squares(ad::sub(x, xhat)), 0.5);

  // 0.5 * sum(mu^2 + sigma^2 - 1 - log sigma^2)
  Expr mu2 = ad::cmul(enc.mu, enc.mu);
  Expr var = ad::exp_(enc.logvar);
  Expr kl_terms =
      ad::sub(ad::add(mu2, var), ad::affine_const(enc.logvar, 1.0, 1.0));
  Expr kl = ad::scale(ad::sum(kl_terms), 0.5);

  return {recon, kl, ad::add(recon, kl)};
}

double kl_standard_normal(const Vec& mu, const Vec& sigma) {
  if (mu.size() != sigma.size())
    throw ShapeMismatch("kl_standard_normal: size mismatch");
  double acc = 0.0;
  for (int i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > 0.0))
      throw NonPositiveSigma("sigma must be positive elementwise");
    const double s2 = sigma[i] * sigma[i];
    acc += mu[i] * mu[i] + s2 - 1.0 - std::log(s2);
  }
  return 0.5 * acc;
}

LatentCode encode(const FusionModel& model, const Utterance& u,
                  std::uint64_t noise_seed) {
  Tape tape;
  auto enc = model.encode_expr(tape, {&u});
  Rng noise(noise_seed);
  LatentCode code;
  code.mu = enc.mu.value().col(0);
  code.sigma = (0.5 * enc.logvar.value().col(0).array()).exp();
  code.eps = noise.gaussian_vec(model.config().d_z);
  code.sample = code.mu + code.sigma.cwiseProduct(code.eps);
  return code;
}

DjvaeLoss djvae_loss(const FusionModel& model,
                     const std::vector<const Utterance*>& batch,
                     std::uint64_t noise_seed) {
  if (batch.empty()) throw ShapeMismatch("djvae_loss: empty batch");
  Tape tape;
  Rng noise(noise_seed);
  auto loss = model.loss_expr(tape, batch, noise);
  return {loss.reconstruction.scalar(), loss.kl.scalar(), loss.total.scalar()};
}

Vec fuse(const FusionModel& model, const Utterance& u) {
  if (!model.trained)
    throw UntrainedFusion("fuse called before training");
  Tape tape;
  auto enc = model.encode_expr(tape, {&u});
  return enc.mu.value().col(0);
}

Mat fuse_all(const FusionModel& model,
             const std::vector<const Utterance*>& batch) {
  if (!model.trained)
    throw UntrainedFusion("fuse_all called before training");
  Tape tape;
  auto enc = model.encode_expr(tape, batch);
  return enc.mu.value();
}

void FusionModel::save(const std::filesystem::path& path) const {
  Checkpoint ck;
  ck.kind = "fusion";
  nlohmann::json j;
  j["d_w"] = dims_.d_w;
  j["d_a"] = dims_.d_a;
  j["d_v"] = dims_.d_v;
  j["d_z"] = cfg_.d_z;
  j["code_width"] = cfg_.code_width;
  j["text_chunk"] = cfg_.text_chunk;
  j["text_hidden"] = cfg_.text_hidden;
  j["conv_filters"] = cfg_.conv_filters;
  j["conv_kernel"] = cfg_.conv_kernel;
  j["conv_stride"] = cfg_.conv_stride;
  j["dec_hidden"] = cfg_.dec_hidden;
  j["trained"] = trained;
  ck.config_json = j.dump();
  ck.put_params(params_, "fusion/");
  ck.save(path);
}

FusionModel FusionModel::load(const std::filesystem::path& path) {
  Checkpoint ck = Checkpoint::load(path);
  if (ck.kind != "fusion")
    throw Error("not a fusion checkpoint: " + path.string());
  nlohmann::json j = nlohmann::json::parse(ck.config_json);
  CorpusDims dims{j.at("d_w"), j.at("d_a"), j.at("d_v")};
  FusionConfig cfg;
  cfg.d_z = j.at("d_z");
  cfg.code_width = j.at("code_width");
  cfg.text_chunk = j.at("text_chunk");
  cfg.text_hidden = j.at("text_hidden");
  cfg.conv_filters = j.at("conv_filters");
  cfg.conv_kernel = j.at("conv_kernel");
  cfg.conv_stride = j.at("conv_stride");
  cfg.dec_hidden = j.at("dec_hidden");
  FusionModel model(dims, cfg, 0);
  ck.load_params(model.params_, "fusion/");
  model.trained = j.at("trained");
  return model;
}

std::vector<double> train_fusion(FusionModel& model, const Corpus& corpus,
                                 const FusionTrainConfig& cfg) {
  std::vector<const Utterance*> all;
  for (const auto& d : corpus.dialogues)
    for (const auto& u : d.utterances) all.push_back(&u);
  if (all.empty()) throw EmptyCorpus("train_fusion: empty corpus");

  Rng order_rng(derive_seed(cfg.seed, "fusion.order"));
  Rng noise(derive_seed(cfg.seed, "fusion.noise"));
  ad::Adam adam({.lr = cfg.lr, .beta1 = 0.9, .beta2 = 0.999});

  std::vector<double> epoch_losses;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(all);
    double total = 0.0;
    std::size_t nb = 0;
    for (std::size_t i = 0; i < all.size(); i += cfg.batch_size) {
      const std::size_t hi = std::min(all.size(), i + cfg.batch_size);
      std::vector<const Utterance*> batch(all.begin() + i, all.begin() + hi);
      Tape tape;
      auto loss = model.loss_expr(tape, batch, noise);
      Expr objective =
          ad::scale(loss.total, 1.0 / static_cast<double>(batch.size()));
      model.params().zero_grad();
      tape.backward(objective);
      adam.step(model.params());
      total += objective.scalar();
      ++nb;
    }
    epoch_losses.push_back(total / static_cast<double>(nb));
  }
  model.trained = true;
  return epoch_losses;
}

}  // namespace cberl::fusion
