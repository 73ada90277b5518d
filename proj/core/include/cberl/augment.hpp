#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cberl/ad.hpp"
#include "cberl/corpus.hpp"
#include "cberl/nn.hpp"

namespace cberl::augment {

struct GanConfig {
  CorpusDims dims;
  int num_classes = 0;
  int hidden_mult = 4;  // generator/discriminator hidden width = mult * d
  int ec_hidden = 32;
  double leaky_alpha = 0.2;
  double log_floor = 1e-12;
  std::array<double, 3> lambdas = {1.0, 0.5, 0.5};  // identity, adversarial, classification
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;

  int feature_dim() const { return dims.d_w + dims.d_a + dims.d_v; }
};

/// One training batch: labeled source samples, target samples of one
/// requested class r (columns are samples).
struct GanBatch {
  Mat sources;  // d x Bs
  std::vector<int> source_labels;
  Mat targets;  // d x Bt
  int target_class = 0;
};

struct GanLossBreakdown {
  double l_c = 0.0;
  double l_rc = 0.0;
  double l_adv = 0.0;
  double l_identity = 0.0;
  double total = 0.0;
};

/// Joint GAN over the concatenated tri-modal vector. Two generators
/// (source->target as Dec(Enc(.)), target->source conditioned on the one-hot
/// emotion state vector), a sigmoid discriminator, and a frozen pretrained
/// classifier. The classifier accepts an optional state vector input whose
/// weights are pinned to zero: class conditioning acts through the generator,
/// the classifier scores features.
class GanModel {
 public:
  GanModel(GanConfig cfg, std::uint64_t seed);

  // tape appliers (columns are batch samples)
  ad::Expr gen_s2t(ad::Tape& tape, ad::Expr x) const;
  ad::Expr gen_t2s(ad::Tape& tape, ad::Expr x, ad::Expr z) const;
  ad::Expr disc(ad::Tape& tape, ad::Expr x) const;  // 1 x B in (0,1)
  ad::Expr ec_probs(ad::Tape& tape, ad::Expr x, ad::Expr z) const;  // C x B

  Mat one_hot_batch(const std::vector<int>& labels) const;

  ad::ParamSet& generator_params() { return gen_params_; }
  ad::ParamSet& discriminator_params() { return disc_params_; }
  ad::ParamSet& classifier_params() { return ec_params_; }
  const ad::ParamSet& generator_params() const { return gen_params_; }
  const ad::ParamSet& discriminator_params() const { return disc_params_; }
  const ad::ParamSet& classifier_params() const { return ec_params_; }

  const GanConfig& config() const { return cfg_; }
  ad::Adam& generator_opt() { return gen_opt_; }
  ad::Adam& discriminator_opt() { return disc_opt_; }

  // direct weight access for inspection and hand-crafted test fixtures
  nn::Mlp& g_s2t_mlp() { return g_s2t_; }
  nn::Mlp& g_t2s_mlp() { return g_t2s_; }
  nn::Mlp& disc_mlp() { return disc_; }
  nn::Mlp& ec_mlp() { return ec_; }

  bool classifier_trained = false;
  bool trained = false;
  Vec input_mean;  // training feature statistics used for generation noise
  Vec input_std;

  void save(const std::filesystem::path& path) const;
  static GanModel load(const std::filesystem::path& path);

 private:
  GanConfig cfg_;
  ad::ParamSet gen_params_, disc_params_, ec_params_;
  nn::Mlp g_s2t_, g_t2s_, disc_, ec_;
  ad::Adam gen_opt_, disc_opt_;
};

struct PretrainConfig {
  int epochs = 40;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Trains the emotion classifier EC_s on real data, then freezes it.
void pretrain_classifier(GanModel& model, const Corpus& train,
                         const PretrainConfig& cfg);

/// (l_c, l_rc) of Eqs. 1-2 as negated log-likelihood sums over the batch.
std::pair<double, double> classification_loss(const GanBatch& batch,
                                              const GanModel& model);

/// E_T[log D(T)] + E_S[log(1 - D(Dec(Enc(S))))], log-floored.
double adversarial_loss(const GanBatch& batch, const GanModel& model);

/// Mean squared deviation of each generator from the identity map on the
/// opposite domain.
double identity_loss(const GanBatch& batch, const GanModel& model);

/// Weighted recombination (lambda1 * identity + lambda2 * adv +
/// lambda3 * (l_c + l_rc)).
GanLossBreakdown loss_breakdown(const GanBatch& batch, const GanModel& model);

/// One alternating update: generator step on the full weighted objective,
/// then discriminator ascent on the adversarial term. EC_s is untouched.
void gan_step(GanModel& model, const GanBatch& batch);

struct GanTrainConfig {
  int steps = 600;
  int batch_size = 32;
  std::uint64_t seed = 0;
};

void train_gan(GanModel& model, const Corpus& train, const GanTrainConfig& cfg);

/// counts[c] synthetic utterances conditioned on class c; tagged synthetic.
/// first_id seeds the utterance id counter of the generated samples.
std::vector<Utterance> generate_samples(const GanModel& model,
                                        const std::vector<long>& counts,
                                        std::uint64_t seed, int first_id = 0);

/// Per-class generation counts from the published augmentation tables,
/// scaled as count * n_utterances / 10000 (rounded).
std::vector<long> preset_counts(const std::string& name,
                                std::size_t n_utterances);

}  // namespace cberl::augment
