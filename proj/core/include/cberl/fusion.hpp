#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cberl/ad.hpp"
#include "cberl/corpus.hpp"
#include "cberl/nn.hpp"

namespace cberl::fusion {

struct FusionConfig {
  int d_z = 8;
  int code_width = 16;  // shared width of the three modality codes
  int text_chunk = 4;   // recurrent text encoder consumes chunks of this size
  int text_hidden = 8;
  int conv_filters = 8;
  int conv_kernel = 5;
  int conv_stride = 2;
  int dec_hidden = 32;
};

/// Gaussian latent of one utterance; sample = mu + sigma .* eps with the
/// noise recorded so the draw is reproducible and differentiable.
struct LatentCode {
  Vec mu;
  Vec sigma;
  Vec sample;
  Vec eps;
};

/// Per-modality encoders into a shared Gaussian latent plus a joint decoder.
/// The (mu, log-variance) heads start at zero: a fresh model encodes to
/// exactly N(0, I).
class FusionModel {
 public:
  FusionModel(CorpusDims dims, FusionConfig cfg, std::uint64_t seed);

  struct Encoded {
    ad::Expr mu;      // d_z x B
    ad::Expr logvar;  // d_z x B
  };

  /// Batched encoder over utterances (columns are samples).
  Encoded encode_expr(ad::Tape& tape, const std::vector<const Utterance*>& batch) const;
  ad::Expr decode_expr(ad::Tape& tape, ad::Expr z) const;

  /// Reconstruction (0.5*||x-x_hat||^2, Gaussian unit variance with the
  /// constant dropped), KL against N(0, I), and their sum, each summed over
  /// the batch.
  struct LossExprs {
    ad::Expr reconstruction;
    ad::Expr kl;
    ad::Expr total;
  };
  LossExprs loss_expr(ad::Tape& tape, const std::vector<const Utterance*>& batch,
                      Rng& noise) const;

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  const FusionConfig& config() const { return cfg_; }
  const CorpusDims& dims() const { return dims_; }

  void save(const std::filesystem::path& path) const;
  static FusionModel load(const std::filesystem::path& path);

  bool trained = false;

 private:
  CorpusDims dims_;
  FusionConfig cfg_;
  ad::ParamSet params_;
  nn::LstmParams text_lstm_;
  nn::Dense text_head_;
  ad::Param* conv_audio_ = nullptr;
  nn::Dense audio_head_;
  ad::Param* conv_visual_ = nullptr;
  nn::Dense visual_head_;
  nn::Dense mu_head_;
  nn::Dense logvar_head_;
  nn::Mlp decoder_;
};

/// Closed-form KL( N(mu, diag sigma^2) || N(0, I) ).
double kl_standard_normal(const Vec& mu, const Vec& sigma);

/// Single-utterance encoding with recorded noise.
LatentCode encode(const FusionModel& model, const Utterance& u,
                  std::uint64_t noise_seed);

struct DjvaeLoss {
  double reconstruction = 0.0;
  double kl = 0.0;
  double total = 0.0;
};

DjvaeLoss djvae_loss(const FusionModel& model,
                     const std::vector<const Utterance*>& batch,
                     std::uint64_t noise_seed);

/// Latent mean at inference time. Throws UntrainedFusion before training.
Vec fuse(const FusionModel& model, const Utterance& u);

/// Batched fuse (columns are utterances); inference mode, no sampling.
Mat fuse_all(const FusionModel& model,
             const std::vector<const Utterance*>& batch);

struct FusionTrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Minimizes the mean negative ELBO; returns the per-epoch mean loss.
std::vector<double> train_fusion(FusionModel& model, const Corpus& corpus,
                                 const FusionTrainConfig& cfg);

}  // namespace cberl::fusion
