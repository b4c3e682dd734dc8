#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lowmt/corpus.hpp"
#include "lowmt/keyvalue.hpp"

namespace lowmt::nmt {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ModelConfig {
  int enc_layers = 2;
  int dec_layers = 2;
  int heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int token_vocab = 0;
  /// Target-language factor vocabulary; `languages[i]` has factor id i.
  std::vector<LangId> languages;
  int factor_dim = 8;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  int max_len = 64;

  int factor_vocab() const noexcept { return static_cast<int>(languages.size()); }
  int token_dim() const noexcept { return d_model - factor_dim; }
  int head_dim() const noexcept { return d_model / heads; }
  int factor_of(const LangId& lang) const;  // throws RangeError for unknown languages

  void validate() const;
  KeyValue to_kv() const;
  static ModelConfig from_kv(const KeyValue& kv);
  std::string fingerprint() const;

  /// 6+6 layers, 8 heads, width 512.
  static ModelConfig paper_preset(int token_vocab, std::vector<LangId> languages);

  bool operator==(const ModelConfig&) const = default;
};

/// Tensor slot names and shapes, fully determined by the configuration.
struct TensorSpec {
  std::string name;
  int rows;
  int cols;
};

/// Index arithmetic over the flat tensor list. Per-layer slots are
/// contiguous; see the constants below for their order.
struct ParamLayout {
  static constexpr int kSrcEmbed = 0;
  static constexpr int kFactorEmbed = 1;
  static constexpr int kTgtEmbed = 2;
  static constexpr int kFirstLayer = 3;

  // encoder layer slots
  enum Enc { e_ln1_g, e_ln1_b, e_wq, e_bq, e_wk, e_bk, e_wv, e_bv, e_wo, e_bo,
             e_ln2_g, e_ln2_b, e_w1, e_b1, e_w2, e_b2, kEncSlots };
  // decoder layer slots
  enum Dec { d_ln1_g, d_ln1_b, d_sq, d_sbq, d_sk, d_sbk, d_sv, d_sbv, d_so, d_sbo,
             d_ln2_g, d_ln2_b, d_cq, d_cbq, d_ck, d_cbk, d_cv, d_cbv, d_co, d_cbo,
             d_ln3_g, d_ln3_b, d_w1, d_b1, d_w2, d_b2, kDecSlots };

  explicit ParamLayout(const ModelConfig& cfg);

  int enc(int layer, int slot) const { return kFirstLayer + layer * kEncSlots + slot; }
  int enc_norm_g() const { return kFirstLayer + enc_layers * kEncSlots; }
  int enc_norm_b() const { return enc_norm_g() + 1; }
  int dec(int layer, int slot) const { return enc_norm_b() + 1 + layer * kDecSlots + slot; }
  int dec_norm_g() const { return enc_norm_b() + 1 + dec_layers * kDecSlots; }
  int dec_norm_b() const { return dec_norm_g() + 1; }
  int out_w() const { return dec_norm_b() + 1; }
  int out_b() const { return out_w() + 1; }
  int count() const { return out_b() + 1; }

  std::vector<TensorSpec> specs;
  int enc_layers;
  int dec_layers;
};

/// Closed-form parameter count for a configuration.
std::size_t parameter_count(const ModelConfig& cfg);

template <typename T>
struct Parameters {
  std::vector<std::string> names;
  std::vector<Matrix<T>> tensors;

  std::size_t size() const { return tensors.size(); }
  Matrix<T>& operator[](int i) { return tensors[static_cast<std::size_t>(i)]; }
  const Matrix<T>& operator[](int i) const { return tensors[static_cast<std::size_t>(i)]; }
  std::size_t scalar_count() const;
  bool all_finite() const;

  /// Same names and shapes, all zeros.
  Parameters zeros_like() const;

  template <typename U>
  Parameters<U> cast() const {
    Parameters<U> out;
    out.names = names;
    for (const auto& t : tensors) out.tensors.push_back(t.template cast<U>());
    return out;
  }
  bool operator==(const Parameters& o) const;
};

/// Scaled-uniform matrices, unit norm gains, zero biases; same seed gives
/// identical parameters.
template <typename T>
Parameters<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

/// One training or scoring example in token-id form.
struct Example {
  std::vector<int> src;  // without eos; the batch appends it
  std::vector<int> tgt;  // without bos/eos
  int factor = 0;
  std::size_t words = 0;  // whitespace words on the target side
  std::size_t id = 0;     // stable sentence id within its corpus
};

/// Padded id matrices for one batch, row-major [batch x length].
struct FactoredBatch {
  int batch = 0;
  int src_len = 0;
  int tgt_len = 0;
  std::vector<int> src_ids;
  std::vector<int> src_factor;  // one per sentence, broadcast across its tokens
  std::vector<int> tgt_in;      // <s> y1 .. yn, padded
  std::vector<int> tgt_out;     // y1 .. yn </s>, padded
  std::vector<std::uint8_t> src_mask;  // 1 = real token
  std::vector<std::uint8_t> tgt_mask;
  std::size_t word_count = 0;
  std::size_t token_count = 0;  // non-pad target positions
  std::vector<std::size_t> sentence_ids;

  int src(int b, int s) const { return src_ids[static_cast<std::size_t>(b * src_len + s)]; }
};

FactoredBatch make_batch(std::span<const Example> examples);
FactoredBatch make_batch(std::span<const Example* const> examples);

/// Fixed sinusoidal position table [max_len x d].
template <typename T>
Matrix<T> sinusoidal_positions(int max_len, int d);

}  // namespace lowmt::nmt
