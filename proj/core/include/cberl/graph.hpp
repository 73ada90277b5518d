#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cberl/ad.hpp"
#include "cberl/nn.hpp"

namespace cberl::graph {

/// Typed directed relations: (same vs cross speaker) x (past vs future),
/// plus the self loop every node carries.
enum class Relation : int {
  kSelf = 0,
  kSameSpeakerPast = 1,
  kSameSpeakerFuture = 2,
  kCrossSpeakerPast = 3,
  kCrossSpeakerFuture = 4,
};
constexpr int kNumRelations = 5;

std::string to_string(Relation r);

/// Edge (i <- j): node j feeds node i's aggregation. An entry in the edge
/// list is exactly a Pi_ij = 1 indicator.
struct GraphEdge {
  int dst = 0;  // i, the receiver
  int src = 0;  // j, the neighbor
  Relation rel = Relation::kSelf;
};

struct WindowSpec {
  int past = 4;
  int future = 4;
};

struct ConversationGraph {
  Mat nodes;  // d_g x N context vectors
  std::vector<int> speakers;
  std::vector<GraphEdge> edges;
  WindowSpec window;

  int num_nodes() const { return static_cast<int>(nodes.cols()); }
  int feature_dim() const { return static_cast<int>(nodes.rows()); }
};

/// Edges between utterance i and every j with -past <= j-i <= future, typed
/// by speaker identity and temporal direction; every node gets a self loop.
ConversationGraph build_graph(const Mat& contexts,
                              const std::vector<int>& speakers,
                              WindowSpec window);

struct MaskPlan {
  std::vector<char> masked;  // per node
  double rate = 0.0;
  std::uint64_t seed = 0;

  bool is_masked(int node) const { return masked[node] != 0; }
  std::vector<int> masked_ids() const;
  static MaskPlan none(int num_nodes);
};

/// Uniform node subset without replacement, |masked| = round(rate * N).
MaskPlan apply_mask(const ConversationGraph& g, double rate,
                    std::uint64_t seed);

/// Per-edge attention scores and their per-(node, relation) softmax weights.
/// Edges whose sender is masked, and all neighbor edges of a masked
/// receiver, carry weight 0. Groups that lose every sender to the mask are
/// reported in omitted_groups.
struct EdgeWeights {
  Vec scores;   // aligned with graph.edges
  Vec weights;  // aligned with graph.edges
  std::vector<std::pair<int, Relation>> omitted_groups;
};

struct GnnConfig {
  int width = 16;        // node state width
  int attn_hidden = 16;  // hidden width of the scoring MLP
  int recon_hidden = 32;
  int layers = 2;
};

/// Relational masked-aggregation network. Parameters live in a caller
/// ParamSet so the model can train jointly with the context encoder.
class GnnModel {
 public:
  GnnModel(ad::ParamSet& ps, int input_dim, GnnConfig cfg, Rng& rng);

  struct ForwardExprs {
    ad::Expr scores;      // 1 x E
    ad::Expr weights;     // 1 x E
    ad::Expr embeddings;  // width x N
    ad::Expr recon;       // d_g x N
    ad::Expr recon_loss;  // scalar, Eq. 18 averaging
  };

  /// Full differentiable forward from raw node features (d_g x N).
  ForwardExprs forward_expr(ad::Tape& tape, const ConversationGraph& g,
                            const MaskPlan& mask, ad::Expr node_feats) const;

  /// Aggregation layers with externally supplied edge weights.
  ad::Expr propagate_expr(ad::Tape& tape, const ConversationGraph& g,
                          const MaskPlan& mask, ad::Expr phi0,
                          ad::Expr weights) const;

  ad::Expr scores_expr(ad::Tape& tape, const ConversationGraph& g,
                       ad::Expr phi0) const;
  ad::Expr weights_expr(ad::Tape& tape, const ConversationGraph& g,
                        const MaskPlan& mask, ad::Expr scores,
                        std::vector<std::pair<int, Relation>>* omitted) const;
  ad::Expr input_proj_expr(ad::Tape& tape, ad::Expr node_feats) const;

  const GnnConfig& config() const { return cfg_; }
  int input_dim() const { return input_dim_; }

  // raw weights, used by inspection and test oracles
  ad::Param& input_weight() const { return *W_in_; }
  ad::Param& relation_weight(Relation r) const {
    return *W_rel_.at(static_cast<int>(r) - 1);
  }
  ad::Param& self_weight() const { return *W_self_; }
  const nn::Dense& attn_inner() const { return attn_inner_; }
  const nn::Dense& attn_outer() const { return attn_outer_; }

 private:
  int input_dim_;
  GnnConfig cfg_;
  ad::Param* W_in_ = nullptr;
  nn::Dense attn_inner_;               // W_theta2
  nn::Dense attn_outer_;               // W_theta1 (scalar row)
  std::vector<ad::Param*> W_rel_;      // one per non-self relation
  ad::Param* W_self_ = nullptr;        // W_zeta
  nn::Mlp recon_head_;
};

// ---- value-level operations -------------------------------------------------

Vec edge_scores(const ConversationGraph& g, const GnnModel& model);

EdgeWeights edge_weights(const Vec& scores, const ConversationGraph& g,
                         const MaskPlan& mask, const GnnModel& model);

/// Two aggregation layers with the given weights; masked nodes receive only
/// their self-loop term but contribute to no neighborhood.
Mat propagate(const ConversationGraph& g, const EdgeWeights& weights,
              const MaskPlan& mask, const GnnModel& model);

/// (1/N) * sum_i ||y_i - y_hat_i||^2 / d  (columns are nodes).
double reconstruction_loss(const Mat& original, const Mat& reconstructed);

/// Debug dump (nodes, typed edges, mask) as a JSON string.
std::string dump_graph_json(const ConversationGraph& g, const MaskPlan& mask);

}  // namespace cberl::graph
