#include <doctest.h>

#include <cmath>

#include "cberl/classify.hpp"
#include "support.hpp"

using namespace cberl;

namespace {

Mat random_probs(Rng& rng, int n, int C) {
  Mat P(n, C);
  for (int i = 0; i < n; ++i) {
    Vec raw = rng.gaussian_vec(C);
    Vec e = (raw.array() - raw.maxCoeff()).exp();
    P.row(i) = (e / e.sum()).transpose();
  }
  return P;
}

double cross_entropy_oracle(const Mat& P, const std::vector<int>& y) {
  double acc = 0;
  for (int i = 0; i < P.rows(); ++i)
    acc -= std::log(std::max(P(i, y[i]), 1e-12));
  return acc / static_cast<double>(P.rows());
}

}  // namespace

TEST_CASE("focal identities: gamma 0 is cross entropy, perfect prob is zero") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + rng.uniform_int(20);
    const int C = 2 + rng.uniform_int(5);
    Mat P = random_probs(rng, n, C);
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[i] = rng.uniform_int(C);
    CHECK(classify::focal_loss(P, y, 0.0, 0.0) ==
          doctest::Approx(cross_entropy_oracle(P, y)).epsilon(1e-10));
  }

  Mat sure(1, 3);
  sure << 0, 1, 0;
  CHECK(classify::focal_loss(sure, {1}, 3.0, 0.0) == doctest::Approx(0.0));
}

TEST_CASE("focal hand value: p=0.5, gamma=2 -> 0.25 ln 2") {
  Mat P(1, 2);
  P << 0.5, 0.5;
  CHECK(classify::focal_loss(P, {0}, 2.0, 0.0) ==
        doctest::Approx(0.25 * std::log(2.0)).epsilon(1e-12));
  CHECK(classify::focal_loss(P, {0}, 2.0, 0.0) ==
        doctest::Approx(0.17329).epsilon(1e-4));
}

TEST_CASE("focal validates probability rows") {
  Mat bad(1, 2);
  bad << 0.7, 0.6;
  CHECK_THROWS_AS(classify::focal_loss(bad, {0}, 1.0, 0.0), NotAProbability);
  bad << -0.1, 1.1;
  CHECK_THROWS_AS(classify::focal_loss(bad, {0}, 1.0, 0.0), NotAProbability);
}

TEST_CASE("focal is monotone non-increasing in the true-class probability") {
  for (double gamma : {0.0, 0.5, 1.0, 2.0, 3.0, 5.0}) {
    double prev = 1e300;
    for (double p = 0.02; p < 0.999; p += 0.02) {
      Mat P(1, 2);
      P << p, 1 - p;
      const double loss = classify::focal_loss(P, {0}, gamma, 0.0);
      CHECK(loss <= prev + 1e-12);
      prev = loss;
    }
  }
}

TEST_CASE("gamma > 0 shifts loss share toward the hard sample") {
  const double p_easy = 0.9, p_hard = 0.3;
  auto share = [&](double gamma) {
    Mat Pe(1, 2), Ph(1, 2);
    Pe << p_easy, 1 - p_easy;
    Ph << p_hard, 1 - p_hard;
    const double le = classify::focal_loss(Pe, {0}, gamma, 0.0);
    const double lh = classify::focal_loss(Ph, {0}, gamma, 0.0);
    return lh / (le + lh);
  };
  CHECK(share(2.0) > share(0.0));
  CHECK(share(5.0) > share(2.0));
}

TEST_CASE("focal L2 penalty uses the plain norm, squared on request") {
  ad::ParamSet theta;
  ad::Param* p = theta.add("w", 2, 1);
  p->value << 3.0, 4.0;  // norm 5
  Mat P(1, 2);
  P << 0.5, 0.5;
  const double base = classify::focal_loss(P, {0}, 0.0, 0.0);
  CHECK(classify::focal_loss(P, {0}, 0.0, 0.1, &theta, false) ==
        doctest::Approx(base + 0.5));
  CHECK(classify::focal_loss(P, {0}, 0.0, 0.1, &theta, true) ==
        doctest::Approx(base + 2.5));
}

TEST_CASE("focal + L2 gradient matches finite differences") {
  Rng rng(5);
  ad::ParamSet ps;
  ad::Param* W = ps.add("W", 4, 6, rng, 0.8);
  std::vector<int> labels = {0, 3, 1, 2, 2, 0};

  auto loss_value = [&]() {
    ad::Tape tape;
    ad::Expr probs = ad::softmax_cols(tape.param(*W));
    ad::Expr focal = classify::focal_term_expr(tape, probs, labels, 2.0, 6);
    ad::Expr pen = classify::l2_penalty_expr(tape, {W}, 0.01, false);
    return ad::add(focal, pen).scalar();
  };
  {
    ad::Tape tape;
    ad::Expr probs = ad::softmax_cols(tape.param(*W));
    ad::Expr focal = classify::focal_term_expr(tape, probs, labels, 2.0, 6);
    ad::Expr pen = classify::l2_penalty_expr(tape, {W}, 0.01, false);
    ps.zero_grad();
    tape.backward(ad::add(focal, pen));
  }
  auto res = testing::grad_check(ps, loss_value, 25, rng);
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("combined loss weighted sum") {
  CHECK(classify::combined_loss(1.0, 2.0, 0.3, 0.7) == doctest::Approx(1.7));
  CHECK(classify::combined_loss(5.0, 2.0, 0.0, 0.7) == doctest::Approx(1.4));
  CHECK(classify::combined_loss(5.0, 2.0, 0.3, 0.0) == doctest::Approx(1.5));
}

TEST_CASE("boost: separable toy reaches zero training error within 5 rounds") {
  Rng rng(7);
  const int n = 60;
  Mat X(n, 2);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = i % 2;
    X(i, 0) = (y[i] == 0 ? -2.0 : 2.0) + 0.3 * rng.gaussian();
    X(i, 1) = rng.gaussian();
  }
  auto ens = classify::boost_fit(X, y, 2, {.rounds = 5, .max_depth = 2});
  auto pred = classify::boost_predict(ens, X);
  CHECK(testing::accuracy(y, pred) == doctest::Approx(1.0));
}

TEST_CASE("boost: weights stay a distribution after every round") {
  Rng rng(8);
  const int n = 80;
  Mat X(n, 3);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = rng.uniform_int(3);
    X.row(i) = (rng.gaussian_vec(3) + Vec::Constant(3, y[i])).transpose();
  }
  auto ens = classify::boost_fit(X, y, 3, {.rounds = 12, .max_depth = 2});
  for (const Vec& w : ens.weight_history) {
    CHECK(w.minCoeff() >= 0.0);
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-9));
  }
  CHECK(ens.fitted());
}

TEST_CASE("boost: single round equals the lone weak learner") {
  Rng rng(9);
  const int n = 40;
  Mat X(n, 2);
  std::vector<int> y(n);
  for (int i = 0; i < n; ++i) {
    y[i] = i < n / 2 ? 0 : 1;
    X(i, 0) = (y[i] == 0 ? -1.0 : 1.0) + 0.5 * rng.gaussian();
    X(i, 1) = rng.gaussian();
  }
  auto ens = classify::boost_fit(X, y, 2, {.rounds = 1, .max_depth = 2});
  REQUIRE(ens.learners.size() == 1);
  auto pred = classify::boost_predict(ens, X);
  for (int i = 0; i < n; ++i)
    CHECK(pred[i] == ens.learners[0].predict(X.row(i)));
}

TEST_CASE("boost: degenerate data throws, unfitted predict throws") {
  Mat X = Mat::Zero(10, 2);
  std::vector<int> y(10, 0);
  CHECK_THROWS_AS(classify::boost_fit(X, y, 2, {.rounds = 3}),
                  DegenerateRound);
  classify::BoostEnsemble empty;
  empty.num_classes = 2;
  CHECK_THROWS_AS(classify::boost_predict(empty, X), UnfittedEnsemble);
}

TEST_CASE("predict: weighted vote and lowest-index tie break") {
  classify::BoostEnsemble ens;
  ens.num_classes = 4;
  // learner 0 always says class 0; learner 1 always says class 1
  classify::WeakTree t0, t1;
  t0.nodes.push_back({-1, 0, -1, -1, 0});
  t1.nodes.push_back({-1, 0, -1, -1, 1});
  ens.learners = {t0, t1};

  Mat X = Mat::Zero(1, 2);
  ens.alphas = {2.0, 1.0};
  CHECK(classify::boost_predict(ens, X)[0] == 0);

  ens.alphas = {1.0, 1.0};  // exact tie between 0 and 1 -> lowest index
  CHECK(classify::boost_predict(ens, X)[0] == 0);

  // tie between classes 1 and 3
  classify::WeakTree t3;
  t3.nodes.push_back({-1, 0, -1, -1, 3});
  ens.learners = {t1, t3};
  ens.alphas = {1.0, 1.0};
  CHECK(classify::boost_predict(ens, X)[0] == 1);
}

TEST_CASE("hyperparameter validation") {
  classify::Hyperparams hp;
  hp.validate();
  hp.gamma = -1;
  CHECK_THROWS_AS(hp.validate(), ConfigError);
}
