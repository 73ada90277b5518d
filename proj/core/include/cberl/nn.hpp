#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cberl/ad.hpp"

namespace cberl::nn {

enum class Act { kNone, kRelu, kLeakyRelu, kSigmoid, kTanh };

struct Dense {
  ad::Param* W = nullptr;
  ad::Param* b = nullptr;
};

Dense make_dense(ad::ParamSet& ps, const std::string& prefix, int in, int out,
                 Rng& rng);

/// W x + b, columns are batch samples.
ad::Expr apply(ad::Tape& tape, const Dense& d, ad::Expr x);

struct Mlp {
  std::vector<Dense> layers;
  Act hidden = Act::kLeakyRelu;
  Act output = Act::kNone;
  double leaky_alpha = 0.2;
};

Mlp make_mlp(ad::ParamSet& ps, const std::string& prefix,
             const std::vector<int>& dims, Rng& rng,
             Act hidden = Act::kLeakyRelu, Act output = Act::kNone,
             double leaky_alpha = 0.2);

ad::Expr apply(ad::Tape& tape, const Mlp& mlp, ad::Expr x);

/// Tape-free forward pass for inference paths; matches apply() exactly.
Mat apply_values(const Mlp& mlp, const Mat& x);

/// LSTM cell with the cited gate form. d_k = input + hidden; each gate
/// weight is hidden x d_k over the concatenation [h_{t-1}, x_t].
struct LstmParams {
  ad::Param* W_i = nullptr;
  ad::Param* W_f = nullptr;
  ad::Param* W_o = nullptr;
  ad::Param* W_c = nullptr;
  ad::Param* b_i = nullptr;
  ad::Param* b_f = nullptr;
  ad::Param* b_o = nullptr;
  ad::Param* b_c = nullptr;
  int input = 0;
  int hidden = 0;
};

/// Forget-gate bias starts at 1, everything else uniform small.
LstmParams make_lstm(ad::ParamSet& ps, const std::string& prefix, int input,
                     int hidden, Rng& rng);

struct LstmState {
  ad::Expr h;
  ad::Expr c;
};

LstmState lstm_step(ad::Tape& tape, const LstmParams& p, ad::Expr x,
                    const LstmState& prev);

/// Zero initial state with the given batch width.
LstmState lstm_zero_state(ad::Tape& tape, const LstmParams& p, int batch);

}  // namespace cberl::nn
