// Shared test oracles, independent of the library's autodiff path:
// finite-difference gradient checking, a plain logistic-regression probe,
// and a Monte Carlo KL estimator.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "cberl/ad.hpp"
#include "cberl/corpus.hpp"
#include "cberl/rng.hpp"

namespace cberl::testing {

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
};

/// Central-difference check of `loss` against gradients accumulated in the
/// params. `loss` must recompute the full objective from current values.
/// Caller runs backward once (grads populated) before calling.
///
/// Each slice is retried at shrinking step sizes: a step that straddles a
/// relu kink reports a bogus difference that heals once h drops below the
/// distance to the kink, while a genuinely wrong gradient stays wrong at
/// every h.
inline GradCheckResult grad_check(ad::ParamSet& params,
                                  const std::function<double()>& loss,
                                  int slices, Rng& rng) {
  std::vector<ad::Param*> flat;
  for (auto& p : params.items())
    if (!p->frozen && p->value.size() > 0) flat.push_back(p.get());
  GradCheckResult res;
  for (int k = 0; k < slices; ++k) {
    ad::Param* p = flat[rng.uniform_int(static_cast<int>(flat.size()))];
    const int i = rng.uniform_int(p->rows());
    const int j = rng.uniform_int(p->cols());
    const double saved = p->value(i, j);
    const double an = p->grad(i, j);
    double best = std::numeric_limits<double>::infinity();
    for (double h : {1e-6, 1e-7, 1e-8}) {
      const double step = h * std::max(1.0, std::abs(saved));
      p->value(i, j) = saved + step;
      const double fp = loss();
      p->value(i, j) = saved - step;
      const double fm = loss();
      p->value(i, j) = saved;
      const double fd = (fp - fm) / (2.0 * step);
      const double rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
      best = std::min(best, rel);
      if (best < 1e-5) break;
    }
    res.max_rel_err = std::max(res.max_rel_err, best);
    ++res.checked;
  }
  return res;
}

/// Multinomial logistic regression trained by plain full-batch gradient
/// descent; rows of X are samples. Used as an implementation-independent
/// separability probe.
struct Probe {
  Mat W;  // C x d
  Vec b;  // C

  std::vector<int> predict(const Mat& X) const {
    std::vector<int> out(X.rows());
    for (int i = 0; i < X.rows(); ++i) {
      Vec s = W * X.row(i).transpose() + b;
      int best = 0;
      for (int c = 1; c < s.size(); ++c)
        if (s[c] > s[best]) best = c;
      out[i] = best;
    }
    return out;
  }
};

inline Probe fit_probe(const Mat& X, const std::vector<int>& y, int C,
                       int iters = 400, double lr = 0.5) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  Probe probe;
  probe.W = Mat::Zero(C, d);
  probe.b = Vec::Zero(C);
  for (int it = 0; it < iters; ++it) {
    Mat gW = Mat::Zero(C, d);
    Vec gb = Vec::Zero(C);
    for (int i = 0; i < n; ++i) {
      Vec s = probe.W * X.row(i).transpose() + probe.b;
      const double mx = s.maxCoeff();
      Vec p = (s.array() - mx).exp();
      p /= p.sum();
      p[y[i]] -= 1.0;
      gW += p * X.row(i);
      gb += p;
    }
    probe.W -= (lr / n) * gW;
    probe.b -= (lr / n) * gb;
  }
  return probe;
}

inline double accuracy(const std::vector<int>& y_true,
                       const std::vector<int>& y_pred) {
  int ok = 0;
  for (std::size_t i = 0; i < y_true.size(); ++i)
    ok += y_true[i] == y_pred[i];
  return static_cast<double>(ok) / static_cast<double>(y_true.size());
}

/// Monte Carlo estimate of KL(N(mu, sigma^2) || N(0,1)) for one dimension,
/// with its standard error.
struct McKl {
  double estimate;
  double stderr_;
};

inline McKl mc_kl(double mu, double sigma, long n, Rng& rng) {
  double sum = 0.0, sumsq = 0.0;
  const double log_sigma = std::log(sigma);
  for (long i = 0; i < n; ++i) {
    const double x = mu + sigma * rng.gaussian();
    // log q(x) - log p(x) with the common -0.5*log(2*pi) cancelling
    const double zq = (x - mu) / sigma;
    const double lq = -0.5 * zq * zq - log_sigma;
    const double lp = -0.5 * x * x;
    const double v = lq - lp;
    sum += v;
    sumsq += v * v;
  }
  const double mean = sum / n;
  const double var = sumsq / n - mean * mean;
  return {mean, std::sqrt(var / n)};
}

/// Flat utterance list of a corpus.
inline std::vector<const Utterance*> all_utterances(const Corpus& c) {
  std::vector<const Utterance*> out;
  for (const auto& d : c.dialogues)
    for (const auto& u : d.utterances) out.push_back(&u);
  return out;
}

inline Mat features_as_rows(const Corpus& c) {
  auto utts = all_utterances(c);
  Mat X(utts.size(), concat_features(*utts[0]).size());
  for (std::size_t i = 0; i < utts.size(); ++i)
    X.row(static_cast<int>(i)) = concat_features(*utts[i]).transpose();
  return X;
}

inline std::vector<int> labels_of(const Corpus& c) {
  std::vector<int> y;
  for (const auto& d : c.dialogues)
    for (const auto& u : d.utterances) y.push_back(u.label);
  return y;
}

}  // namespace cberl::testing
