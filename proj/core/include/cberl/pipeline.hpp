#pragma once

#include <cstdint>
#include <vector>

#include "cberl/ad.hpp"
#include "cberl/classify.hpp"
#include "cberl/context.hpp"
#include "cberl/graph.hpp"

namespace cberl::pipeline {

/// One dialogue prepared for the joint model: per-utterance input vectors
/// (columns, temporal order), speakers, labels.
struct DialogueData {
  Mat inputs;
  std::vector<int> speakers;
  std::vector<int> labels;
};

struct PipelineConfig {
  int input_dim = 0;
  int num_classes = 0;
  int d_h = 16;
  graph::GnnConfig gnn;
  graph::WindowSpec window;
  classify::Hyperparams hp;
  bool use_gamma = true;  // off -> plain cross-entropy
  bool use_mask = true;   // off -> full neighborhoods
};

/// BiLSTM context encoder, masked relational GNN, reconstruction head and a
/// linear softmax head, trained jointly on the weighted multi-task loss.
class Pipeline {
 public:
  Pipeline(PipelineConfig cfg, std::uint64_t seed);

  struct FitResult {
    std::vector<double> train_total;
    std::vector<double> train_recon;
    std::vector<double> train_focal;
    std::vector<double> val_waf1;
    int best_epoch = -1;
    int epochs_run = 0;
  };

  FitResult fit(const std::vector<DialogueData>& train,
                const std::vector<DialogueData>& val);

  /// Final node embeddings (width x T); evaluation mode: no mask, no dropout.
  Mat embed(const DialogueData& dialogue) const;

  /// Softmax head over embeddings (C x T).
  Mat head_probs(const Mat& embeddings) const;

  std::vector<int> predict_head(const DialogueData& dialogue) const;

  ad::ParamSet& params() { return params_; }
  const ad::ParamSet& params() const { return params_; }
  const PipelineConfig& config() const { return cfg_; }

 private:
  struct BatchLoss {
    ad::Expr total;
    ad::Expr recon;
    ad::Expr focal;
  };
  BatchLoss batch_loss(ad::Tape& tape,
                       const std::vector<const DialogueData*>& batch,
                       const std::vector<graph::ConversationGraph>& graphs,
                       const std::vector<graph::MaskPlan>& masks,
                       Rng* dropout_rng);

  PipelineConfig cfg_;
  std::uint64_t seed_;
  Rng init_rng_;  // consumed by member construction, declaration order matters
  ad::ParamSet params_;
  context::ContextEncoder ctx_;
  graph::GnnModel gnn_;
  nn::Dense head_;
};

/// Graph structure for a dialogue (edges depend only on length, speakers and
/// the window; node features are attached during the forward pass).
graph::ConversationGraph dialogue_structure(const DialogueData& d,
                                            graph::WindowSpec window);

}  // namespace cberl::pipeline
