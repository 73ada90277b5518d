// Dense relational-aggregation oracle: a from-scratch loop implementation of
// the masked message passing, independent of the tape path it checks.
#pragma once

#include <vector>

#include "cberl/graph.hpp"

namespace cberl::testing {

inline Mat dense_propagate_oracle(const graph::ConversationGraph& g,
                                  const Vec& weights,
                                  const graph::MaskPlan& mask,
                                  const graph::GnnModel& model) {
  const int N = g.num_nodes();
  const int width = model.config().width;
  Mat phi = model.input_weight().value * g.nodes;

  // active neighbor edges and their group sizes
  std::vector<char> active(g.edges.size(), 0);
  std::vector<std::vector<int>> count(N, std::vector<int>(5, 0));
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto& ed = g.edges[e];
    if (ed.rel == graph::Relation::kSelf) {
      active[e] = 1;
      continue;
    }
    if (!mask.is_masked(ed.dst) && !mask.is_masked(ed.src)) {
      active[e] = 1;
      count[ed.dst][static_cast<int>(ed.rel)]++;
    }
  }

  for (int layer = 0; layer < model.config().layers; ++layer) {
    Mat next = Mat::Zero(width, N);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
      if (!active[e]) continue;
      const auto& ed = g.edges[e];
      if (ed.rel == graph::Relation::kSelf) {
        next.col(ed.dst) +=
            weights[e] * (model.self_weight().value * phi.col(ed.src));
      } else {
        const double c = count[ed.dst][static_cast<int>(ed.rel)];
        next.col(ed.dst) +=
            (weights[e] / c) *
            (model.relation_weight(ed.rel).value * phi.col(ed.src));
      }
    }
    phi = next.cwiseMax(0.0);
  }
  return phi;
}

}  // namespace cberl::testing
