#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lowmt/checkpoint.hpp"
#include "lowmt/corpus.hpp"
#include "lowmt/model.hpp"
#include "lowmt/subword.hpp"

namespace lowmt::nmt {

struct TrainConfig {
  int batch_words = 500;
  int checkpoint_interval = 50;  // updates
  int patience = 8;              // checkpoints
  int max_updates = 20000;
  double learning_rate = 1e-3;   // peak of the warmup / inverse-sqrt schedule
  int warmup = 400;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double adam_eps = 1e-9;
  double clip_norm = 0;          // 0 disables clipping
  /// Constant step size used by fine_tune().
  double fine_tune_rate = 2e-4;
  std::uint64_t seed = 1;

  void validate() const;
  KeyValue to_kv() const;
  /// Keys absent from `kv` keep the values of `defaults`.
  static TrainConfig from_kv(const KeyValue& kv, const TrainConfig& defaults);

  /// batch 6000 words, interval 2000, patience 32.
  static TrainConfig paper_preset();
};

struct EncodeStats {
  std::size_t kept = 0;
  std::size_t skipped_too_long = 0;
};

/// Subword-encodes every pair; the factor is the pair's target language.
/// Pairs whose source or target would exceed cfg.max_len are skipped.
std::vector<Example> encode_pairs(std::span<const ParallelCorpus> corpora, const SubwordModel& subword,
                                  const ModelConfig& cfg, EncodeStats* stats = nullptr);

/// Shuffle, stable sort by length, then greedy packing up to `batch_words`
/// target words. Returns indices into `examples`; every index appears once.
std::vector<std::vector<std::size_t>> make_batches(std::span<const Example> examples, int batch_words,
                                                   std::uint64_t seed);

/// Batches in length order without shuffling, for scoring.
std::vector<std::vector<std::size_t>> make_eval_batches(std::span<const Example> examples, int batch_words);

/// exp(total NLL / total target tokens), no dropout.
double evaluate_perplexity(const Parameters<float>& params, const ModelConfig& cfg,
                           std::span<const Example> data, int batch_words = 2000);

struct HistoryRow {
  std::int64_t step = 0;
  double train_loss = 0;  // mean label-smoothed loss since the previous checkpoint
  double valid_ppl = 0;
  bool is_best = false;
  double wall_seconds = 0;
};

struct TrainResult {
  Checkpoint best;
  std::vector<HistoryRow> history;
  std::int64_t updates = 0;
  std::string stop_reason;  // "patience" or "max_updates"
};

struct TrainHooks {
  /// Directory for latest.ckpt, best.ckpt, index.txt and train.log; empty disables.
  std::filesystem::path checkpoint_dir;
  std::function<void(const HistoryRow&)> on_checkpoint;
  Provenance provenance;
};

/// Adam with linear warmup and inverse-sqrt decay. The initial parameters
/// are scored as checkpoint 0, so a run that never improves returns them
/// unchanged. Throws NumericError on a non-finite loss or update; the last
/// finite best checkpoint stays on disk when checkpoint_dir is set.
TrainResult train(Parameters<float> params, const ModelConfig& cfg, std::span<const Example> train_data,
                  std::span<const Example> valid_data, const TrainConfig& tc, const TrainHooks& hooks = {});

/// Continues from `parent` with fresh optimizer state and the constant
/// fine_tune_rate, under the same early-stopping rule.
TrainResult fine_tune(const Checkpoint& parent, const ModelConfig& cfg, std::span<const Example> train_data,
                      std::span<const Example> valid_data, const TrainConfig& tc, const TrainHooks& hooks = {});

std::string training_log_tsv(std::span<const HistoryRow> rows);

}  // namespace lowmt::nmt
