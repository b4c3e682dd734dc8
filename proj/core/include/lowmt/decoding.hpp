#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lowmt/model.hpp"
#include "lowmt/subword.hpp"

namespace lowmt::nmt {

enum class DecodeMode { greedy, beam };

struct DecodeOptions {
  DecodeMode mode = DecodeMode::greedy;
  int beam_size = 5;
  /// Maximum generated tokens including </s>; 0 means cfg.max_len - 1.
  int max_len = 0;
  /// Hypotheses are ranked by log-probability / length^length_alpha.
  double length_alpha = 1.0;
};

struct Translation {
  std::string text;  // tabs and line breaks folded to spaces
  std::vector<int> ids;  // without </s>
  bool truncated = false;
  double score = 0;      // summed log-probability
};

/// Encodes `src_text` with the factor of `tgt_lang` and decodes one sentence.
/// Throws RangeError when `tgt_lang` is not in the factor vocabulary.
Translation translate(const Parameters<float>& params, const ModelConfig& cfg, const SubwordModel& subword,
                      std::string_view src_text, const LangId& tgt_lang, const DecodeOptions& opts = {});

/// Greedy decoding of many sentences in lock-step; used for bulk synthesis
/// and evaluation. `tgt_langs` holds one entry per source or a single entry
/// shared by all.
std::vector<Translation> translate_batch(const Parameters<float>& params, const ModelConfig& cfg,
                                         const SubwordModel& subword, std::span<const std::string> sources,
                                         std::span<const LangId> tgt_langs, int max_len = 0, int batch_rows = 64);

/// Log-probabilities the incremental decoder assigns to a forced target
/// sequence, one row per target position (<s> y1..yn). Lets tests compare the
/// cached decoder against the training graph.
Matrix<float> forced_decode_logprobs(const Parameters<float>& params, const ModelConfig& cfg,
                                     std::span<const int> src_ids, int factor, std::span<const int> tgt_in);

}  // namespace lowmt::nmt
