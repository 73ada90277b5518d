#include "cberl/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace cberl::graph {

using ad::Expr;
using ad::Tape;

std::string to_string(Relation r) {
  switch (r) {
    case Relation::kSelf:
      return "self";
    case Relation::kSameSpeakerPast:
      return "same-speaker-past";
    case Relation::kSameSpeakerFuture:
      return "same-speaker-future";
    case Relation::kCrossSpeakerPast:
      return "cross-speaker-past";
    case Relation::kCrossSpeakerFuture:
      return "cross-speaker-future";
  }
  return "?";
}

ConversationGraph build_graph(const Mat& contexts,
                              const std::vector<int>& speakers,
                              WindowSpec window) {
  const int N = static_cast<int>(contexts.cols());
  if (N == 0) throw EmptySequence("build_graph: no nodes");
  if (static_cast<int>(speakers.size()) != N)
    throw ShapeMismatch("build_graph: speaker list size mismatch");

  ConversationGraph g;
  g.nodes = contexts;
  g.speakers = speakers;
  g.window = window;
  for (int i = 0; i < N; ++i) {
    g.edges.push_back({i, i, Relation::kSelf});
    for (int j = std::max(0, i - window.past);
         j <= std::min(N - 1, i + window.future); ++j) {
      if (j == i) continue;
      const bool same = speakers[i] == speakers[j];
      const bool past = j < i;
      Relation rel = same ? (past ? Relation::kSameSpeakerPast
                                  : Relation::kSameSpeakerFuture)
                          : (past ? Relation::kCrossSpeakerPast
                                  : Relation::kCrossSpeakerFuture);
      g.edges.push_back({i, j, rel});
    }
  }
  return g;
}

std::vector<int> MaskPlan::masked_ids() const {
  std::vector<int> ids;
  for (std::size_t i = 0; i < masked.size(); ++i)
    if (masked[i]) ids.push_back(static_cast<int>(i));
  return ids;
}

MaskPlan MaskPlan::none(int num_nodes) {
  MaskPlan p;
  p.masked.assign(num_nodes, 0);
  return p;
}

MaskPlan apply_mask(const ConversationGraph& g, double rate,
                    std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw InvalidRate("mask rate must be in [0, 1)");
  const int N = g.num_nodes();
  MaskPlan plan;
  plan.rate = rate;
  plan.seed = seed;
  plan.masked.assign(N, 0);
  const int count = static_cast<int>(std::lround(rate * N));
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "graph.mask"));
  rng.shuffle(order);
  for (int k = 0; k < count; ++k) plan.masked[order[k]] = 1;
  return plan;
}

namespace {

/// Partition of edges after masking. A neighbor edge is active when both
/// endpoints are unmasked; masked receivers keep only their self loop.
struct EdgePartition {
  std::vector<char> active;                 // per edge
  std::vector<std::vector<int>> groups;     // softmax groups (edge indices)
  std::vector<double> inv_count;            // per edge: 1/c_{i,r}
  std::vector<std::pair<int, Relation>> omitted;
};

EdgePartition partition_edges(const ConversationGraph& g,
                              const MaskPlan& mask) {
  const int N = g.num_nodes();
  EdgePartition part;
  part.active.assign(g.edges.size(), 0);
  part.inv_count.assign(g.edges.size(), 1.0);

  // (receiver, relation) -> active edge indices; relation index 1..4.
  std::vector<std::vector<int>> by_group(static_cast<std::size_t>(N) *
                                         kNumRelations);
  std::vector<char> structural(static_cast<std::size_t>(N) * kNumRelations, 0);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const GraphEdge& ed = g.edges[e];
    if (ed.rel == Relation::kSelf) {
      part.active[e] = 1;
      part.groups.push_back({static_cast<int>(e)});
      continue;
    }
    const auto key = static_cast<std::size_t>(ed.dst) * kNumRelations +
                     static_cast<int>(ed.rel);
    structural[key] = 1;
    if (!mask.is_masked(ed.dst) && !mask.is_masked(ed.src)) {
      part.active[e] = 1;
      by_group[key].push_back(static_cast<int>(e));
    }
  }
  for (int i = 0; i < N; ++i) {
    for (int r = 1; r < kNumRelations; ++r) {
      const auto key = static_cast<std::size_t>(i) * kNumRelations + r;
      if (!by_group[key].empty()) {
        for (int e : by_group[key])
          part.inv_count[e] = 1.0 / static_cast<double>(by_group[key].size());
        part.groups.push_back(by_group[key]);
      } else if (structural[key] && !mask.is_masked(i)) {
        part.omitted.emplace_back(i, static_cast<Relation>(r));
      }
    }
  }
  return part;
}

}  // namespace

GnnModel::GnnModel(ad::ParamSet& ps, int input_dim, GnnConfig cfg, Rng& rng)
    : input_dim_(input_dim), cfg_(cfg) {
  W_in_ = ps.add("gnn.W_in", cfg.width, input_dim, rng,
                 1.0 / std::sqrt(static_cast<double>(input_dim)));
  attn_inner_ = nn::make_dense(ps, "gnn.attn_inner", 2 * cfg.width + 1,
                               cfg.attn_hidden, rng);
  attn_outer_ = nn::make_dense(ps, "gnn.attn_outer", cfg.attn_hidden, 1, rng);
  for (int r = 1; r < kNumRelations; ++r)
    W_rel_.push_back(ps.add("gnn.W_rel" + std::to_string(r), cfg.width,
                            cfg.width, rng,
                            1.0 / std::sqrt(static_cast<double>(cfg.width))));
  W_self_ = ps.add("gnn.W_self", cfg.width, cfg.width, rng,
                   1.0 / std::sqrt(static_cast<double>(cfg.width)));
  recon_head_ = nn::make_mlp(ps, "gnn.recon",
                             {cfg.width, cfg.recon_hidden, input_dim}, rng,
                             nn::Act::kLeakyRelu, nn::Act::kNone);
}

Expr GnnModel::input_proj_expr(Tape& tape, Expr node_feats) const {
  return ad::matmul(tape.param(*W_in_), node_feats);
}

Expr GnnModel::scores_expr(Tape& tape, const ConversationGraph& g,
                           Expr phi0) const {
  const int E = static_cast<int>(g.edges.size());
  // Assemble [g_i + g_j + Pi_ij] columns per edge with unit gathers.
  std::vector<ad::EdgeRef> gi, gj;
  gi.reserve(E);
  gj.reserve(E);
  for (int e = 0; e < E; ++e) {
    gi.push_back({g.edges[e].dst, e, -1, 1.0});
    gj.push_back({g.edges[e].src, e, -1, 1.0});
  }
  Expr ones = tape.input(Mat::Ones(1, E));
  Expr Gi = ad::edge_gather(phi0, ones, gi, E);
  Expr Gj = ad::edge_gather(phi0, ones, gj, E);
  Expr cat = ad::concat_rows({Gi, Gj, ones});
  Expr hidden = ad::relu(nn::apply(tape, attn_inner_, cat));
  return nn::apply(tape, attn_outer_, hidden);  // 1 x E
}

Expr GnnModel::weights_expr(Tape& tape, const ConversationGraph& g,
                            const MaskPlan& mask, Expr scores,
                            std::vector<std::pair<int, Relation>>* omitted)
    const {
  EdgePartition part = partition_edges(g, mask);
  if (omitted) *omitted = part.omitted;
  return ad::group_softmax(scores, std::move(part.groups));
}

Expr GnnModel::propagate_expr(Tape& tape, const ConversationGraph& g,
                              const MaskPlan& mask, Expr phi0,
                              Expr weights) const {
  const int N = g.num_nodes();
  EdgePartition part = partition_edges(g, mask);

  std::vector<std::vector<ad::EdgeRef>> rel_refs(kNumRelations);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (!part.active[e]) continue;
    const GraphEdge& ed = g.edges[e];
    rel_refs[static_cast<int>(ed.rel)].push_back(
        {ed.src, ed.dst, static_cast<int>(e), part.inv_count[e]});
  }

  Expr phi = phi0;
  for (int layer = 0; layer < cfg_.layers; ++layer) {
    Expr acc = ad::edge_gather(ad::matmul(tape.param(*W_self_), phi), weights,
                               rel_refs[0], N);
    for (int r = 1; r < kNumRelations; ++r) {
      if (rel_refs[r].empty()) continue;
      Expr msg = ad::matmul(tape.param(*W_rel_[r - 1]), phi);
      acc = ad::add(acc, ad::edge_gather(msg, weights, rel_refs[r], N));
    }
    phi = ad::relu(acc);
  }
  return phi;
}

GnnModel::ForwardExprs GnnModel::forward_expr(Tape& tape,
                                              const ConversationGraph& g,
                                              const MaskPlan& mask,
                                              Expr node_feats) const {
  if (node_feats.rows() != input_dim_)
    throw ShapeMismatch("gnn: node feature dim mismatch");
  ForwardExprs out;
  Expr phi0 = input_proj_expr(tape, node_feats);
  out.scores = scores_expr(tape, g, phi0);
  out.weights = weights_expr(tape, g, mask, out.scores, nullptr);
  out.embeddings = propagate_expr(tape, g, mask, phi0, out.weights);
  out.recon = nn::apply(tape, recon_head_, out.embeddings);
  const double inv =
      1.0 / (static_cast<double>(g.num_nodes()) * node_feats.rows());
  out.recon_loss =
      ad::scale(ad::sum_squares(ad::sub(node_feats, out.recon)), inv);
  return out;
}

Vec edge_scores(const ConversationGraph& g, const GnnModel& model) {
  Tape tape;
  Expr phi0 = model.input_proj_expr(tape, tape.input(g.nodes));
  Expr s = model.scores_expr(tape, g, phi0);
  return s.value().row(0);
}

EdgeWeights edge_weights(const Vec& scores, const ConversationGraph& g,
                         const MaskPlan& mask, const GnnModel& model) {
  if (scores.size() != static_cast<long>(g.edges.size()))
    throw ShapeMismatch("edge_weights: score count mismatch");
  Tape tape;
  Mat row(1, scores.size());
  row.row(0) = scores;
  EdgeWeights out;
  out.scores = scores;
  Expr w = model.weights_expr(tape, g, mask, tape.input(row), &out.omitted_groups);
  out.weights = w.value().row(0);
  return out;
}

Mat propagate(const ConversationGraph& g, const EdgeWeights& weights,
              const MaskPlan& mask, const GnnModel& model) {
  Tape tape;
  Mat row(1, weights.weights.size());
  row.row(0) = weights.weights;
  Expr phi0 = model.input_proj_expr(tape, tape.input(g.nodes));
  Expr phi =
      model.propagate_expr(tape, g, mask, phi0, tape.input(row));
  return phi.value();
}

double reconstruction_loss(const Mat& original, const Mat& reconstructed) {
  if (original.rows() != reconstructed.rows() ||
      original.cols() != reconstructed.cols())
    throw ShapeMismatch("reconstruction_loss: shape mismatch");
  const double n = static_cast<double>(original.cols());
  const double d = static_cast<double>(original.rows());
  return (original - reconstructed).squaredNorm() / (n * d);
}

std::string dump_graph_json(const ConversationGraph& g, const MaskPlan& mask) {
  nlohmann::json j;
  j["num_nodes"] = g.num_nodes();
  j["window"] = {{"past", g.window.past}, {"future", g.window.future}};
  j["speakers"] = g.speakers;
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : g.edges)
    edges.push_back({{"i", e.dst}, {"j", e.src}, {"relation", to_string(e.rel)}});
  j["edges"] = edges;
  j["masked"] = mask.masked_ids();
  nlohmann::json nodes = nlohmann::json::array();
  for (int c = 0; c < g.nodes.cols(); ++c) {
    nlohmann::json row = nlohmann::json::array();
    for (int r = 0; r < g.nodes.rows(); ++r) row.push_back(g.nodes(r, c));
    nodes.push_back(row);
  }
  j["nodes"] = nodes;
  return j.dump(2);
}

}  // namespace cberl::graph
