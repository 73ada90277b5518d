#include <doctest.h>

#include "cberl/ad.hpp"
#include "cberl/nn.hpp"
#include "support.hpp"

using namespace cberl;

TEST_CASE("elementwise and matmul forward values") {
  ad::Tape tape;
  Mat a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  auto ea = tape.input(a), eb = tape.input(b);
  CHECK(ad::add(ea, eb).value()(1, 1) == doctest::Approx(12));
  CHECK(ad::cmul(ea, eb).value()(0, 1) == doctest::Approx(12));
  CHECK(ad::matmul(ea, eb).value()(0, 0) == doctest::Approx(19));
  CHECK(ad::sum(ea).scalar() == doctest::Approx(10));
  CHECK(ad::one_minus(ea).value()(0, 0) == doctest::Approx(0));
}

TEST_CASE("softmax columns normalize and backward matches finite differences") {
  Rng rng(7);
  ad::ParamSet ps;
  ad::Param* W = ps.add("W", 3, 4, rng, 0.5);

  auto loss_value = [&]() {
    ad::Tape tape;
    ad::Expr x = tape.param(*W);
    ad::Expr s = ad::softmax_cols(x);
    ad::Expr pick = ad::pick_cols(s, {0, 2, 1, 0});
    return ad::sum(ad::cmul(pick, pick)).scalar();
  };
  {
    ad::Tape tape;
    ad::Expr x = tape.param(*W);
    ad::Expr s = ad::softmax_cols(x);
    for (int c = 0; c < 4; ++c) {
      double col = s.value().col(c).sum();
      CHECK(col == doctest::Approx(1.0).epsilon(1e-12));
    }
    ad::Expr pick = ad::pick_cols(s, {0, 2, 1, 0});
    ps.zero_grad();
    tape.backward(ad::sum(ad::cmul(pick, pick)));
  }
  auto res = testing::grad_check(ps, loss_value, 12, rng);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("group softmax normalizes inside groups and zeroes outside") {
  ad::Tape tape;
  Mat row(1, 5);
  row << 1, 2, 3, -1, 0.5;
  ad::Expr w = ad::group_softmax(tape.input(row), {{0, 1}, {2, 3}});
  const Mat& v = w.value();
  CHECK(v(0, 0) + v(0, 1) == doctest::Approx(1.0));
  CHECK(v(0, 2) + v(0, 3) == doctest::Approx(1.0));
  CHECK(v(0, 4) == 0.0);
  CHECK(v(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("edge gather forward and gradient") {
  Rng rng(11);
  ad::ParamSet ps;
  ad::Param* V = ps.add("V", 3, 4, rng, 1.0);
  ad::Param* W = ps.add("W", 1, 3, rng, 1.0);
  std::vector<ad::EdgeRef> edges = {
      {0, 1, 0, 0.5}, {2, 1, 1, 1.0}, {3, 0, 2, 2.0}, {1, 2, -1, 1.0}};

  auto loss_value = [&]() {
    ad::Tape tape;
    ad::Expr out =
        ad::edge_gather(tape.param(*V), tape.param(*W), edges, 3);
    return ad::sum(ad::cmul(out, out)).scalar();
  };
  {
    ad::Tape tape;
    ad::Expr out = ad::edge_gather(tape.param(*V), tape.param(*W), edges, 3);
    // column 1 receives 0.5*w0*V[:,0] + w1*V[:,2]
    Vec expect = 0.5 * W->value(0, 0) * V->value.col(0) +
                 W->value(0, 1) * V->value.col(2);
    CHECK((out.value().col(1) - expect).norm() == doctest::Approx(0.0));
    ps.zero_grad();
    tape.backward(ad::sum(ad::cmul(out, out)));
  }
  auto res = testing::grad_check(ps, loss_value, 14, rng);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("lstm step gradient through a scalar readout") {
  Rng rng(3);
  ad::ParamSet ps;
  nn::LstmParams cell = nn::make_lstm(ps, "cell", 3, 4, rng);
  Mat x = rng.gaussian_mat(3, 2);

  auto loss_value = [&]() {
    ad::Tape tape;
    auto st = nn::lstm_zero_state(tape, cell, 2);
    st = nn::lstm_step(tape, cell, tape.input(x), st);
    st = nn::lstm_step(tape, cell, tape.input(x), st);
    return ad::sum(ad::cmul(st.h, st.h)).scalar();
  };
  {
    ad::Tape tape;
    auto st = nn::lstm_zero_state(tape, cell, 2);
    st = nn::lstm_step(tape, cell, tape.input(x), st);
    st = nn::lstm_step(tape, cell, tape.input(x), st);
    ps.zero_grad();
    tape.backward(ad::sum(ad::cmul(st.h, st.h)));
  }
  auto res = testing::grad_check(ps, loss_value, 20, rng);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("mlp apply_values matches the tape forward") {
  Rng rng(5);
  ad::ParamSet ps;
  nn::Mlp mlp = nn::make_mlp(ps, "m", {4, 8, 3}, rng, nn::Act::kLeakyRelu,
                             nn::Act::kSigmoid, 0.2);
  Mat x = rng.gaussian_mat(4, 6);
  ad::Tape tape;
  Mat via_tape = nn::apply(tape, mlp, tape.input(x)).value();
  Mat via_values = nn::apply_values(mlp, x);
  CHECK((via_tape - via_values).cwiseAbs().maxCoeff() ==
        doctest::Approx(0.0));
}

TEST_CASE("adam rejects non-finite gradients and leaves values intact") {
  ad::ParamSet ps;
  ad::Param* p = ps.add("p", 2, 2);
  p->value.setConstant(1.0);
  p->grad.setConstant(std::numeric_limits<double>::quiet_NaN());
  ad::Adam adam({.lr = 0.1});
  CHECK_THROWS_AS(adam.step(ps), NonFiniteGradient);
  CHECK(p->value(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("rng determinism and shuffle coverage") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.gaussian() == b.gaussian());
  std::vector<int> v(10);
  std::iota(v.begin(), v.end(), 0);
  Rng c(1);
  c.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}
