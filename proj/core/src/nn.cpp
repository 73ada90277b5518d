#include "cberl/nn.hpp"

#include <cmath>

namespace cberl::nn {

namespace {

ad::Expr activate(ad::Expr x, Act act, double alpha) {
  switch (act) {
    case Act::kNone:
      return x;
    case Act::kRelu:
      return ad::relu(x);
    case Act::kLeakyRelu:
      return ad::leaky_relu(x, alpha);
    case Act::kSigmoid:
      return ad::sigmoid(x);
    case Act::kTanh:
      return ad::tanh_(x);
  }
  throw Error("activate: bad enum");
}

Mat activate_values(Mat x, Act act, double alpha) {
  switch (act) {
    case Act::kNone:
      return x;
    case Act::kRelu:
      return x.cwiseMax(0.0);
    case Act::kLeakyRelu:
      return (x.array() > 0.0).select(x, alpha * x);
    case Act::kSigmoid:
      return (1.0 / (1.0 + (-x.array()).exp())).matrix();
    case Act::kTanh:
      return x.array().tanh().matrix();
  }
  throw Error("activate_values: bad enum");
}

}  // namespace

Dense make_dense(ad::ParamSet& ps, const std::string& prefix, int in, int out,
                 Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  Dense d;
  d.W = ps.add(prefix + ".W", out, in, rng, s);
  d.b = ps.add(prefix + ".b", out, 1);
  return d;
}

ad::Expr apply(ad::Tape& tape, const Dense& d, ad::Expr x) {
  return ad::add_colwise(ad::matmul(tape.param(*d.W), x), tape.param(*d.b));
}

Mlp make_mlp(ad::ParamSet& ps, const std::string& prefix,
             const std::vector<int>& dims, Rng& rng, Act hidden, Act output,
             double leaky_alpha) {
  Mlp mlp;
  mlp.hidden = hidden;
  mlp.output = output;
  mlp.leaky_alpha = leaky_alpha;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    mlp.layers.push_back(make_dense(
        ps, prefix + ".l" + std::to_string(i), dims[i], dims[i + 1], rng));
  return mlp;
}

ad::Expr apply(ad::Tape& tape, const Mlp& mlp, ad::Expr x) {
  ad::Expr h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    h = apply(tape, mlp.layers[i], h);
    const bool last = (i + 1 == mlp.layers.size());
    h = activate(h, last ? mlp.output : mlp.hidden, mlp.leaky_alpha);
  }
  return h;
}

Mat apply_values(const Mlp& mlp, const Mat& x) {
  Mat h = x;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    h = (mlp.layers[i].W->value * h).colwise() +
        Vec(mlp.layers[i].b->value.col(0));
    const bool last = (i + 1 == mlp.layers.size());
    h = activate_values(std::move(h), last ? mlp.output : mlp.hidden,
                        mlp.leaky_alpha);
  }
  return h;
}

LstmParams make_lstm(ad::ParamSet& ps, const std::string& prefix, int input,
                     int hidden, Rng& rng) {
  const int dk = input + hidden;
  const double s = 1.0 / std::sqrt(static_cast<double>(dk));
  LstmParams p;
  p.input = input;
  p.hidden = hidden;
  p.W_i = ps.add(prefix + ".W_i", hidden, dk, rng, s);
  p.W_f = ps.add(prefix + ".W_f", hidden, dk, rng, s);
  p.W_o = ps.add(prefix + ".W_o", hidden, dk, rng, s);
  p.W_c = ps.add(prefix + ".W_c", hidden, dk, rng, s);
  p.b_i = ps.add(prefix + ".b_i", hidden, 1);
  p.b_f = ps.add(prefix + ".b_f", hidden, 1);
  p.b_f->value.setOnes();
  p.b_o = ps.add(prefix + ".b_o", hidden, 1);
  p.b_c = ps.add(prefix + ".b_c", hidden, 1);
  return p;
}

LstmState lstm_step(ad::Tape& tape, const LstmParams& p, ad::Expr x,
                    const LstmState& prev) {
  ad::Expr z = ad::concat_rows({prev.h, x});
  auto gate = [&](ad::Param* W, ad::Param* b) {
    return ad::add_colwise(ad::matmul(tape.param(*W), z), tape.param(*b));
  };
  ad::Expr i = ad::sigmoid(gate(p.W_i, p.b_i));
  ad::Expr f = ad::sigmoid(gate(p.W_f, p.b_f));
  ad::Expr o = ad::sigmoid(gate(p.W_o, p.b_o));
  ad::Expr cand = ad::tanh_(gate(p.W_c, p.b_c));
  ad::Expr c = ad::add(ad::cmul(f, prev.c), ad::cmul(i, cand));
  ad::Expr h = ad::cmul(o, ad::tanh_(c));
  return {h, c};
}

LstmState lstm_zero_state(ad::Tape& tape, const LstmParams& p, int batch) {
  return {tape.input(Mat::Zero(p.hidden, batch)),
          tape.input(Mat::Zero(p.hidden, batch))};
}

}  // namespace cberl::nn
