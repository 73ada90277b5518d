#pragma once

#include <vector>

#include "cberl/ad.hpp"
#include "cberl/corpus.hpp"
#include "cberl/fusion.hpp"
#include "cberl/nn.hpp"

namespace cberl::context {

/// Per-utterance context vectors l_t = [forward h_t : backward h_t],
/// columns ordered by time.
struct ContextSequence {
  Mat l;  // (2*d_h) x T
};

/// Bidirectional LSTM over a dialogue's sequence of fused vectors. Parameters
/// live in the caller-supplied set so the encoder can train jointly with the
/// rest of the pipeline.
class ContextEncoder {
 public:
  ContextEncoder(ad::ParamSet& ps, int input_dim, int hidden_dim, Rng& rng);

  /// Tape forward over a d_f x T input expression; returns (2*d_h) x T.
  ad::Expr forward_expr(ad::Tape& tape, ad::Expr inputs) const;

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  const nn::LstmParams& forward_cell() const { return fwd_; }
  const nn::LstmParams& backward_cell() const { return bwd_; }

 private:
  int input_dim_;
  int hidden_dim_;
  nn::LstmParams fwd_;
  nn::LstmParams bwd_;
};

/// Value-level forward pass. Throws EmptySequence / ShapeMismatch.
ContextSequence bilstm_forward(const ContextEncoder& encoder, const Mat& seq);

enum class InputMode { kLatent, kConcat, kHybrid };

InputMode input_mode_from_string(const std::string& s);
std::string to_string(InputMode mode);

/// Per-utterance model input: DJVAE latent, raw tri-modal concatenation, or
/// both stacked.
Vec make_input(const Utterance& u, InputMode mode,
               const fusion::FusionModel* fused);

/// Batched variant; columns follow the utterance order.
Mat make_inputs(const std::vector<const Utterance*>& batch, InputMode mode,
                const fusion::FusionModel* fused);

int input_dim(InputMode mode, const CorpusDims& dims, int d_z);

}  // namespace cberl::context
