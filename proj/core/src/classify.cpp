#include "cberl/classify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cberl::classify {

namespace {
constexpr double kProbFloor = 1e-12;
}

void Hyperparams::validate() const {
  if (gamma < 0 || weight_decay < 0 || xi1 < 0 || xi2 < 0 || lr < 0 ||
      dropout < 0 || dropout >= 1 || batch_size < 1 || max_epochs < 1 ||
      mask_rate < 0 || mask_rate >= 1)
    throw ConfigError("hyperparameters out of range");
}

double focal_loss(const Mat& probs, const std::vector<int>& labels,
                  double gamma, double lambda, const ad::ParamSet* theta,
                  bool squared_norm) {
  const int n = static_cast<int>(probs.rows());
  const int C = static_cast<int>(probs.cols());
  if (static_cast<int>(labels.size()) != n)
    throw ShapeMismatch("focal_loss: label count mismatch");
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    double row_sum = 0.0;
    for (int c = 0; c < C; ++c) {
      if (probs(i, c) < -1e-9)
        throw NotAProbability("negative probability entry");
      row_sum += probs(i, c);
    }
    if (std::abs(row_sum - 1.0) > 1e-6)
      throw NotAProbability("row does not sum to 1");
    if (labels[i] < 0 || labels[i] >= C)
      throw ShapeMismatch("focal_loss: label out of range");
    const double p = probs(i, labels[i]);
    const double factor = std::pow(std::max(1.0 - p, 0.0), gamma);
    acc -= factor * std::log(std::max(p, kProbFloor));
  }
  double loss = acc / static_cast<double>(n);
  if (theta && lambda > 0.0) {
    double sq = 0.0;
    for (const auto& p : theta->items()) sq += p->value.squaredNorm();
    loss += lambda * (squared_norm ? sq : std::sqrt(sq));
  }
  return loss;
}

ad::Expr focal_term_expr(ad::Tape& tape, ad::Expr probs_cols,
                         const std::vector<int>& labels, double gamma,
                         int normalizer) {
  if (probs_cols.cols() != static_cast<int>(labels.size()))
    throw ShapeMismatch("focal_term_expr: label count mismatch");
  ad::Expr p_true = ad::pick_cols(probs_cols, labels);
  ad::Expr log_p = ad::log_floor(p_true, kProbFloor);
  ad::Expr weighted = log_p;
  if (gamma != 0.0) {
    ad::Expr factor =
        ad::pow_const(ad::clamp_min(ad::one_minus(p_true), 0.0), gamma);
    weighted = ad::cmul(factor, log_p);
  }
  return ad::scale(ad::sum(weighted), -1.0 / static_cast<double>(normalizer));
}

ad::Expr l2_penalty_expr(ad::Tape& tape, const std::vector<ad::Param*>& theta,
                         double lambda, bool squared_norm) {
  std::vector<ad::Expr> sq;
  sq.reserve(theta.size());
  for (ad::Param* p : theta) sq.push_back(ad::sum_squares(tape.param(*p)));
  ad::Expr total = sq[0];
  for (std::size_t i = 1; i < sq.size(); ++i) total = ad::add(total, sq[i]);
  if (!squared_norm) total = ad::sqrt_floor(total, 1e-24);
  return ad::scale(total, lambda);
}

double combined_loss(double l_recon, double l_focal, double xi1, double xi2) {
  if (!std::isfinite(l_recon) || !std::isfinite(l_focal))
    throw Error("combined_loss: non-finite input");
  return xi1 * l_recon + xi2 * l_focal;
}

// ---- weak learner ------------------------------------------------------------

int WeakTree::predict(const Vec& x) const {
  int node = 0;
  while (nodes[node].feature >= 0) {
    node = x[nodes[node].feature] < nodes[node].threshold ? nodes[node].left
                                                          : nodes[node].right;
  }
  return nodes[node].leaf_class;
}

namespace {

int weighted_majority(const Mat& X, const std::vector<int>& y, const Vec& w,
                      const std::vector<int>& idx, int C) {
  std::vector<double> mass(C, 0.0);
  for (int i : idx) mass[y[i]] += w[i];
  return static_cast<int>(std::max_element(mass.begin(), mass.end()) -
                          mass.begin());
  (void)X;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();
};

/// Weighted Gini split search over midpoints of sorted feature values.
SplitChoice best_split(const Mat& X, const std::vector<int>& y, const Vec& w,
                       const std::vector<int>& idx, int C) {
  SplitChoice best;
  const int d = static_cast<int>(X.cols());
  const double total_w =
      std::accumulate(idx.begin(), idx.end(), 0.0,
                      [&](double a, int i) { return a + w[i]; });
  if (total_w <= 0.0) return best;

  std::vector<int> order(idx);
  for (int f = 0; f < d; ++f) {
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      if (X(a, f) != X(b, f)) return X(a, f) < X(b, f);
      return a < b;
    });
    std::vector<double> left(C, 0.0), right(C, 0.0);
    double wl = 0.0, wr = total_w;
    for (int i : order) right[y[i]] += w[i];
    for (std::size_t k = 0; k + 1 < order.size(); ++k) {
      const int i = order[k];
      left[y[i]] += w[i];
      right[y[i]] -= w[i];
      wl += w[i];
      wr -= w[i];
      if (X(order[k], f) == X(order[k + 1], f)) continue;
      auto gini = [&](const std::vector<double>& m, double tw) {
        if (tw <= 0.0) return 0.0;
        double s = 1.0;
        for (double v : m) s -= (v / tw) * (v / tw);
        return s;
      };
      const double imp =
          (wl * gini(left, wl) + wr * gini(right, wr)) / total_w;
      if (imp < best.impurity - 1e-15) {
        best.impurity = imp;
        best.feature = f;
        best.threshold = 0.5 * (X(order[k], f) + X(order[k + 1], f));
      }
    }
  }
  return best;
}

int grow(WeakTree& tree, const Mat& X, const std::vector<int>& y, const Vec& w,
         const std::vector<int>& idx, int C, int depth, int max_depth) {
  const int me = static_cast<int>(tree.nodes.size());
  tree.nodes.push_back({});
  bool pure = true;
  for (std::size_t k = 1; k < idx.size(); ++k)
    if (y[idx[k]] != y[idx[0]]) {
      pure = false;
      break;
    }
  if (depth >= max_depth || idx.size() < 2 || pure) {
    tree.nodes[me].leaf_class = weighted_majority(X, y, w, idx, C);
    return me;
  }
  SplitChoice split = best_split(X, y, w, idx, C);
  if (split.feature < 0) {
    tree.nodes[me].leaf_class = weighted_majority(X, y, w, idx, C);
    return me;
  }
  std::vector<int> left_idx, right_idx;
  for (int i : idx) {
    (X(i, split.feature) < split.threshold ? left_idx : right_idx).push_back(i);
  }
  if (left_idx.empty() || right_idx.empty()) {
    tree.nodes[me].leaf_class = weighted_majority(X, y, w, idx, C);
    return me;
  }
  tree.nodes[me].feature = split.feature;
  tree.nodes[me].threshold = split.threshold;
  tree.nodes[me].left = grow(tree, X, y, w, left_idx, C, depth + 1, max_depth);
  tree.nodes[me].right =
      grow(tree, X, y, w, right_idx, C, depth + 1, max_depth);
  return me;
}

WeakTree fit_tree(const Mat& X, const std::vector<int>& y, const Vec& w, int C,
                  int max_depth) {
  WeakTree tree;
  std::vector<int> idx(X.rows());
  std::iota(idx.begin(), idx.end(), 0);
  grow(tree, X, y, w, idx, C, 0, max_depth);
  return tree;
}

}  // namespace

BoostEnsemble boost_fit(const Mat& X, const std::vector<int>& labels,
                        int num_classes, const BoostConfig& cfg) {
  const int n = static_cast<int>(X.rows());
  if (cfg.rounds < 1) throw ConfigError("boost_fit: rounds must be >= 1");
  if (static_cast<int>(labels.size()) != n)
    throw ShapeMismatch("boost_fit: label count mismatch");
  {
    std::vector<char> present(num_classes, 0);
    int distinct = 0;
    for (int c : labels) {
      if (c < 0 || c >= num_classes) throw ShapeMismatch("label out of range");
      if (!present[c]) {
        present[c] = 1;
        ++distinct;
      }
    }
    if (distinct < 2)
      throw DegenerateRound("boost_fit needs at least two classes present");
  }

  BoostEnsemble ens;
  ens.num_classes = num_classes;
  Vec w = Vec::Constant(n, 1.0 / n);
  const double chance_bound = 1.0 - 1.0 / static_cast<double>(num_classes);

  for (int m = 0; m < cfg.rounds; ++m) {
    WeakTree tree = fit_tree(X, labels, w, num_classes, cfg.max_depth);
    double err = 0.0;
    std::vector<char> wrong(n, 0);
    for (int i = 0; i < n; ++i) {
      if (tree.predict(X.row(i)) != labels[i]) {
        wrong[i] = 1;
        err += w[i];
      }
    }
    if (err >= chance_bound) {
      if (m == 0)
        throw DegenerateRound("weak learner no better than chance");
      break;  // discard this round
    }
    const double eps = std::clamp(err, 1e-12, 1.0 - 1e-12);
    const double alpha =
        std::log((1.0 - eps) / eps) + std::log(num_classes - 1.0);
    ens.learners.push_back(std::move(tree));
    ens.alphas.push_back(alpha);

    for (int i = 0; i < n; ++i)
      if (wrong[i]) w[i] *= std::exp(alpha);
    w /= w.sum();
    ens.weight_history.push_back(w);
    if (err <= 1e-12) break;  // perfect learner; further rounds are no-ops
  }
  ens.sample_weights = w;
  return ens;
}

std::vector<int> boost_predict(const BoostEnsemble& ensemble, const Mat& X,
                               Mat* scores) {
  if (!ensemble.fitted()) throw UnfittedEnsemble("predict on unfitted ensemble");
  const int n = static_cast<int>(X.rows());
  Mat vote = Mat::Zero(n, ensemble.num_classes);
  for (std::size_t m = 0; m < ensemble.learners.size(); ++m) {
    for (int i = 0; i < n; ++i)
      vote(i, ensemble.learners[m].predict(X.row(i))) += ensemble.alphas[m];
  }
  std::vector<int> pred(n);
  for (int i = 0; i < n; ++i) {
    int best = 0;
    for (int c = 1; c < ensemble.num_classes; ++c)
      if (vote(i, c) > vote(i, best)) best = c;  // ties keep the lower index
    pred[i] = best;
  }
  if (scores) *scores = vote;
  return pred;
}

}  // namespace cberl::classify
