#include "cberl/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include "cberl/metrics.hpp"

namespace cberl::pipeline {

using ad::Expr;
using ad::Tape;

graph::ConversationGraph dialogue_structure(const DialogueData& d,
                                            graph::WindowSpec window) {
  const int T = static_cast<int>(d.inputs.cols());
  return graph::build_graph(Mat::Zero(1, T), d.speakers, window);
}

Pipeline::Pipeline(PipelineConfig cfg, std::uint64_t seed)
    : cfg_(cfg),
      seed_(seed),
      init_rng_(derive_seed(seed, "pipeline.init")),
      ctx_(params_, cfg.input_dim, cfg.d_h, init_rng_),
      gnn_(params_, 2 * cfg.d_h, cfg.gnn, init_rng_),
      head_(nn::make_dense(params_, "head", cfg.gnn.width, cfg.num_classes,
                           init_rng_)) {
  cfg_.hp.validate();
}

Pipeline::BatchLoss Pipeline::batch_loss(
    Tape& tape, const std::vector<const DialogueData*>& batch,
    const std::vector<graph::ConversationGraph>& graphs,
    const std::vector<graph::MaskPlan>& masks, Rng* dropout_rng) {
  std::vector<Expr> prob_blocks;
  std::vector<int> labels;
  Expr recon_ssq;  // sum over nodes of ||y - y_hat||^2 / d
  long total_nodes = 0;
  bool first = true;

  for (std::size_t k = 0; k < batch.size(); ++k) {
    const DialogueData& d = *batch[k];
    const int T = static_cast<int>(d.inputs.cols());
    Expr inputs = tape.input(d.inputs);
    Expr l = ctx_.forward_expr(tape, inputs);
    if (dropout_rng && cfg_.hp.dropout > 0.0) {
      const double keep = 1.0 - cfg_.hp.dropout;
      Mat mask_mat(l.rows(), l.cols());
      for (int c = 0; c < mask_mat.cols(); ++c)
        for (int r = 0; r < mask_mat.rows(); ++r)
          mask_mat(r, c) = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
      l = ad::cmul(l, tape.input(std::move(mask_mat)));
    }
    auto fw = gnn_.forward_expr(tape, graphs[k], masks[k], l);
    // recon_loss is (1/(N*d)) * ssq; rescale to per-dialogue node sum.
    Expr node_sum = ad::scale(fw.recon_loss, static_cast<double>(T));
    recon_ssq = first ? node_sum : ad::add(recon_ssq, node_sum);
    first = false;
    total_nodes += T;

    prob_blocks.push_back(
        ad::softmax_cols(nn::apply(tape, head_, fw.embeddings)));
    labels.insert(labels.end(), d.labels.begin(), d.labels.end());
  }

  Expr recon = ad::scale(recon_ssq, 1.0 / static_cast<double>(total_nodes));
  Expr probs = prob_blocks.size() == 1 ? prob_blocks[0]
                                       : ad::concat_cols(prob_blocks);
  const double gamma = cfg_.use_gamma ? cfg_.hp.gamma : 0.0;
  Expr focal = classify::focal_term_expr(tape, probs, labels, gamma,
                                         static_cast<int>(labels.size()));
  if (cfg_.hp.weight_decay > 0.0) {
    std::vector<ad::Param*> theta;
    for (const auto& p : params_.items()) theta.push_back(p.get());
    focal = ad::add(focal,
                    classify::l2_penalty_expr(tape, theta, cfg_.hp.weight_decay,
                                              cfg_.hp.squared_l2));
  }
  Expr total = ad::add(ad::scale(recon, cfg_.hp.xi1),
                       ad::scale(focal, cfg_.hp.xi2));
  return {total, recon, focal};
}

Pipeline::FitResult Pipeline::fit(const std::vector<DialogueData>& train,
                                  const std::vector<DialogueData>& val) {
  if (train.empty()) throw EmptyCorpus("pipeline fit: no training dialogues");

  std::vector<graph::ConversationGraph> structures;
  structures.reserve(train.size());
  for (const auto& d : train)
    structures.push_back(dialogue_structure(d, cfg_.window));

  ad::Adam adam({.lr = cfg_.hp.lr});
  Rng order_rng(derive_seed(seed_, "pipeline.order"));
  Rng dropout_rng(derive_seed(seed_, "pipeline.dropout"));

  FitResult out;
  double best_val = -1.0;
  std::vector<Mat> best_params;
  int since_best = 0;
  const double mask_rate = cfg_.use_mask ? cfg_.hp.mask_rate : 0.0;

  std::vector<int> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg_.hp.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    double ep_total = 0, ep_recon = 0, ep_focal = 0;
    int nb = 0;
    for (std::size_t i = 0; i < order.size();
         i += static_cast<std::size_t>(cfg_.hp.batch_size)) {
      const std::size_t hi = std::min(
          order.size(), i + static_cast<std::size_t>(cfg_.hp.batch_size));
      std::vector<const DialogueData*> batch;
      std::vector<graph::ConversationGraph> graphs;
      std::vector<graph::MaskPlan> masks;
      for (std::size_t k = i; k < hi; ++k) {
        const int idx = order[k];
        batch.push_back(&train[idx]);
        graphs.push_back(structures[idx]);
        const std::string tag =
            "mask." + std::to_string(epoch) + "." + std::to_string(idx);
        masks.push_back(mask_rate > 0.0
                            ? graph::apply_mask(structures[idx], mask_rate,
                                                derive_seed(seed_, tag))
                            : graph::MaskPlan::none(
                                  structures[idx].num_nodes()));
      }
      Tape tape;
      BatchLoss loss = batch_loss(tape, batch, graphs, masks, &dropout_rng);
      params_.zero_grad();
      tape.backward(loss.total);
      adam.step(params_);
      ep_total += loss.total.scalar();
      ep_recon += loss.recon.scalar();
      ep_focal += loss.focal.scalar();
      ++nb;
    }
    out.train_total.push_back(ep_total / nb);
    out.train_recon.push_back(ep_recon / nb);
    out.train_focal.push_back(ep_focal / nb);
    out.epochs_run = epoch + 1;

    if (!val.empty()) {
      std::vector<int> y_true, y_pred;
      for (const auto& d : val) {
        auto pred = predict_head(d);
        y_pred.insert(y_pred.end(), pred.begin(), pred.end());
        y_true.insert(y_true.end(), d.labels.begin(), d.labels.end());
      }
      const double waf1 =
          compute_metrics(y_true, y_pred, cfg_.num_classes).waf1;
      out.val_waf1.push_back(waf1);
      if (waf1 > best_val + 1e-12) {
        best_val = waf1;
        out.best_epoch = epoch;
        since_best = 0;
        best_params.clear();
        for (const auto& p : params_.items()) best_params.push_back(p->value);
      } else if (++since_best >= cfg_.hp.patience) {
        break;
      }
    }
  }
  if (!best_params.empty()) {
    std::size_t i = 0;
    for (const auto& p : params_.items()) p->value = best_params[i++];
  }
  return out;
}

Mat Pipeline::embed(const DialogueData& dialogue) const {
  Tape tape;
  auto g = dialogue_structure(dialogue, cfg_.window);
  Expr l = ctx_.forward_expr(tape, tape.input(dialogue.inputs));
  auto fw = gnn_.forward_expr(tape, g, graph::MaskPlan::none(g.num_nodes()), l);
  return fw.embeddings.value();
}

Mat Pipeline::head_probs(const Mat& embeddings) const {
  Mat logits = (head_.W->value * embeddings).colwise() +
               Vec(head_.b->value.col(0));
  Mat probs(logits.rows(), logits.cols());
  for (int c = 0; c < logits.cols(); ++c) {
    Vec col = logits.col(c);
    const double mx = col.maxCoeff();
    Vec e = (col.array() - mx).exp();
    probs.col(c) = e / e.sum();
  }
  return probs;
}

std::vector<int> Pipeline::predict_head(const DialogueData& dialogue) const {
  const Mat probs = head_probs(embed(dialogue));
  std::vector<int> pred(probs.cols());
  for (int c = 0; c < probs.cols(); ++c) {
    int best = 0;
    for (int r = 1; r < probs.rows(); ++r)
      if (probs(r, c) > probs(best, c)) best = r;
    pred[c] = best;
  }
  return pred;
}

}  // namespace cberl::pipeline
