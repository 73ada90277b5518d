#pragma once

#include <cstdint>
#include <vector>

#include "cberl/ad.hpp"

namespace cberl::classify {

/// Training hyperparameters; defaults follow the published settings
/// (lr 3e-4, dropout 0.5, weight decay 1e-5, xi = (0.3, 0.7), gamma 3,
/// 60 epochs, batch 32).
struct Hyperparams {
  double gamma = 3.0;
  double weight_decay = 1e-5;  // lambda in the focal objective
  double xi1 = 0.3;
  double xi2 = 0.7;
  double lr = 3e-4;
  double dropout = 0.5;
  int batch_size = 32;  // dialogues per optimizer step
  int max_epochs = 60;
  int patience = 10;
  double mask_rate = 0.3;
  bool squared_l2 = false;  // Eq. form uses ||theta||_2 (not squared)
  std::uint64_t seed = 0;

  void validate() const;
};

/// Focal loss with adjustment factor gamma and an L2 penalty:
///   -(1/N) sum_i (1 - P_i[y_i])^gamma log P_i[y_i] + lambda * ||theta||_2.
/// P rows are per-sample probability vectors. theta may be null (no penalty).
double focal_loss(const Mat& probs, const std::vector<int>& labels,
                  double gamma, double lambda,
                  const ad::ParamSet* theta = nullptr,
                  bool squared_norm = false);

/// Tape version over column-major probabilities (C x N). `normalizer` is the
/// total utterance count of the batch. The L2 penalty is added separately via
/// l2_penalty_expr so callers control which parameters count as theta.
ad::Expr focal_term_expr(ad::Tape& tape, ad::Expr probs_cols,
                         const std::vector<int>& labels, double gamma,
                         int normalizer);

ad::Expr l2_penalty_expr(ad::Tape& tape, const std::vector<ad::Param*>& theta,
                         double lambda, bool squared_norm);

/// xi1 * l_recon + xi2 * l_focal (Eq. 25).
double combined_loss(double l_recon, double l_focal, double xi1, double xi2);

// ---- Adaboost (SAMME) -------------------------------------------------------

struct TreeNode {
  int feature = -1;      // -1 marks a leaf
  double threshold = 0;  // goes left when x[feature] < threshold
  int left = -1;
  int right = -1;
  int leaf_class = 0;
};

/// Axis-aligned decision tree of small fixed depth.
struct WeakTree {
  std::vector<TreeNode> nodes;
  int predict(const Vec& x) const;
};

struct BoostConfig {
  int rounds = 20;
  int max_depth = 2;
};

struct BoostEnsemble {
  std::vector<WeakTree> learners;
  std::vector<double> alphas;
  Vec sample_weights;                    // distribution after the last round
  std::vector<Vec> weight_history;       // distribution after every round
  int num_classes = 0;

  bool fitted() const { return !learners.empty(); }
};

/// Multiclass SAMME over sample rows of X. Throws DegenerateRound when the
/// first weak learner is no better than chance.
BoostEnsemble boost_fit(const Mat& X, const std::vector<int>& labels,
                        int num_classes, const BoostConfig& cfg);

/// Weighted vote; ties break toward the lowest class index.
std::vector<int> boost_predict(const BoostEnsemble& ensemble, const Mat& X,
                               Mat* scores = nullptr);

}  // namespace cberl::classify
