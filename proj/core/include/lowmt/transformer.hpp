#pragma once

#include <cstddef>
#include <vector>

#include "lowmt/model.hpp"
#include "lowmt/util.hpp"

namespace lowmt::nmt {

// Pre-norm encoder-decoder. The source embedding of every token is the
// concatenation of its token vector (width d_model - factor_dim) with the
// sentence's target-language factor vector (width factor_dim), scaled by
// sqrt(d_model) and summed with sinusoidal positions.

struct ForwardOptions {
  /// Dropout is applied only when an engine is supplied and cfg.dropout > 0.
  Rng* dropout_rng = nullptr;
  bool keep_logits = false;
};

template <typename T>
struct ForwardResult {
  double loss = 0;      // label-smoothed cross-entropy per non-pad target token
  double loss_sum = 0;  // numerator of `loss`
  double nll_sum = 0;   // plain negative log-likelihood summed over tokens
  std::size_t tokens = 0;
  Matrix<T> logits;     // [batch*tgt_len x vocab] when requested
};

template <typename T>
struct GradientResult {
  Parameters<T> grads;
  double loss = 0;
  double nll_sum = 0;
  std::size_t tokens = 0;
};

/// Throws RangeError when an id or factor falls outside the configured vocabularies.
template <typename T>
ForwardResult<T> forward(const Parameters<T>& params, const ModelConfig& cfg, const FactoredBatch& batch,
                         const ForwardOptions& opts = {});

/// Gradient of forward().loss with respect to every tensor.
template <typename T>
GradientResult<T> backward(const Parameters<T>& params, const ModelConfig& cfg, const FactoredBatch& batch,
                           Rng* dropout_rng = nullptr);

/// Decoder self-attention probabilities of one layer, one matrix per
/// (sentence, head) in sentence-major order. Used to inspect the causal mask.
template <typename T>
std::vector<Matrix<T>> decoder_self_attention(const Parameters<T>& params, const ModelConfig& cfg,
                                              const FactoredBatch& batch, int layer);

void check_batch(const ModelConfig& cfg, const FactoredBatch& batch);

}  // namespace lowmt::nmt
