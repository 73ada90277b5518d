#include "cberl/context.hpp"

namespace cberl::context {

using ad::Expr;
using ad::Tape;

ContextEncoder::ContextEncoder(ad::ParamSet& ps, int input_dim, int hidden_dim,
                               Rng& rng)
    : input_dim_(input_dim), hidden_dim_(hidden_dim) {
  fwd_ = nn::make_lstm(ps, "ctx.fwd", input_dim, hidden_dim, rng);
  bwd_ = nn::make_lstm(ps, "ctx.bwd", input_dim, hidden_dim, rng);
}

Expr ContextEncoder::forward_expr(Tape& tape, Expr inputs) const {
  const int T = inputs.cols();
  if (T == 0) throw EmptySequence("bilstm over empty sequence");
  if (inputs.rows() != input_dim_)
    throw ShapeMismatch("bilstm input dim " + std::to_string(inputs.rows()) +
                        " != " + std::to_string(input_dim_));

  std::vector<Expr> fwd_h(T), bwd_h(T);
  nn::LstmState st = nn::lstm_zero_state(tape, fwd_, 1);
  for (int t = 0; t < T; ++t) {
    st = nn::lstm_step(tape, fwd_, ad::slice_cols(inputs, t, 1), st);
    fwd_h[t] = st.h;
  }
  st = nn::lstm_zero_state(tape, bwd_, 1);
  for (int t = T - 1; t >= 0; --t) {
    st = nn::lstm_step(tape, bwd_, ad::slice_cols(inputs, t, 1), st);
    bwd_h[t] = st.h;
  }

  std::vector<Expr> cols(T);
  for (int t = 0; t < T; ++t) cols[t] = ad::concat_rows({fwd_h[t], bwd_h[t]});
  return ad::concat_cols(cols);
}

ContextSequence bilstm_forward(const ContextEncoder& encoder, const Mat& seq) {
  Tape tape;
  Expr out = encoder.forward_expr(tape, tape.input(seq));
  return {out.value()};
}

InputMode input_mode_from_string(const std::string& s) {
  if (s == "latent") return InputMode::kLatent;
  if (s == "concat") return InputMode::kConcat;
  if (s == "hybrid") return InputMode::kHybrid;
  throw ConfigError("unknown input mode: " + s);
}

std::string to_string(InputMode mode) {
  switch (mode) {
    case InputMode::kLatent:
      return "latent";
    case InputMode::kConcat:
      return "concat";
    case InputMode::kHybrid:
      return "hybrid";
  }
  return "?";
}

Vec make_input(const Utterance& u, InputMode mode,
               const fusion::FusionModel* fused) {
  switch (mode) {
    case InputMode::kConcat:
      return concat_features(u);
    case InputMode::kLatent: {
      if (!fused) throw UntrainedFusion("latent input mode needs a fusion model");
      return fusion::fuse(*fused, u);
    }
    case InputMode::kHybrid: {
      if (!fused) throw UntrainedFusion("hybrid input mode needs a fusion model");
      const Vec z = fusion::fuse(*fused, u);
      const Vec c = concat_features(u);
      Vec out(z.size() + c.size());
      out << z, c;
      return out;
    }
  }
  throw Error("make_input: bad enum");
}

Mat make_inputs(const std::vector<const Utterance*>& batch, InputMode mode,
                const fusion::FusionModel* fused) {
  if (batch.empty()) throw EmptySequence("make_inputs: empty batch");
  if (mode == InputMode::kLatent || mode == InputMode::kHybrid) {
    if (!fused) throw UntrainedFusion("latent input mode needs a fusion model");
    const Mat z = fusion::fuse_all(*fused, batch);
    if (mode == InputMode::kLatent) return z;
    Mat out(z.rows() + concat_features(*batch[0]).size(), batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Vec c = concat_features(*batch[b]);
      out.col(b) << z.col(b), c;
    }
    return out;
  }
  Mat out(concat_features(*batch[0]).size(), batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b)
    out.col(b) = concat_features(*batch[b]);
  return out;
}

int input_dim(InputMode mode, const CorpusDims& dims, int d_z) {
  const int concat = dims.d_w + dims.d_a + dims.d_v;
  switch (mode) {
    case InputMode::kLatent:
      return d_z;
    case InputMode::kConcat:
      return concat;
    case InputMode::kHybrid:
      return d_z + concat;
  }
  return 0;
}

}  // namespace cberl::context
