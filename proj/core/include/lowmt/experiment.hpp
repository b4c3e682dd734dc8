#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lowmt/checkpoint.hpp"
#include "lowmt/corpus.hpp"
#include "lowmt/metrics.hpp"
#include "lowmt/model.hpp"
#include "lowmt/subword.hpp"
#include "lowmt/synthesis.hpp"
#include "lowmt/trainer.hpp"

namespace lowmt::experiment {

// ---------------------------------------------------------------------------
// Prepared data: cleaned, deduplicated, held-out corpora and monolingual sets.

struct PairData {
  Direction pair;  // as declared in the manifest
  std::string role;
  ParallelCorpus train;  // empty for zero-resource pairs
  ParallelCorpus valid;
  ParallelCorpus test;
};

struct PreparedData {
  std::vector<LangId> languages;
  std::vector<PairData> pairs;
  std::map<LangId, std::vector<MonoCorpus>> mono;  // set1, set2, ...
  std::optional<std::filesystem::path> toy_spec;   // present for generated toy suites

  const PairData& pair(const Direction& unordered) const;
  /// Directed test set; reverses the stored one when needed.
  ParallelCorpus test_set(const Direction& d) const;
  ParallelCorpus valid_set(const Direction& d) const;
  ParallelCorpus train_set(const Direction& d) const;
  /// Both directions of every high and low pair, pair order then reverse.
  std::vector<Direction> trained_directions() const;
  /// Both directions of every low pair.
  std::vector<Direction> low_directions() const;
  std::vector<Direction> zero_directions() const;
  std::string hash() const;
};

struct PrepareConfig {
  CleaningConfig cleaning;
  SplitSpec split;
  std::size_t mono_cap = 0;  // 0 keeps every line; otherwise per set
};

/// Cleans and deduplicates every corpus, holds out valid/test proportionally
/// (before any reversal) and down-samples monolingual sets. Writes the
/// result and the cleaning reports under `out_dir`.
PreparedData prepare(const CorpusManifest& manifest, const PrepareConfig& cfg, const std::filesystem::path& out_dir);
PreparedData load_prepared(const std::filesystem::path& dir);

// ---------------------------------------------------------------------------
// Experiment specification

struct StageSpec {
  std::string kind;   // baselines | multilingual | bt | finetune | transfer
  std::string label;  // directory name and reference for later stages
  std::map<std::string, std::string> args;

  std::string arg(const std::string& key, const std::string& fallback = "") const;
};

/// Key-value spec file; see the README for the full key list.
struct ExperimentSpec {
  std::string name = "experiment";
  std::filesystem::path manifest;
  std::uint64_t seed = 1;
  PrepareConfig prepare;
  std::size_t bpe_vocab = 2000;
  nmt::ModelConfig model;  // token_vocab and languages are filled per stage
  nmt::TrainConfig train;
  int eval_batch_rows = 64;
  std::vector<StageSpec> stages;

  static ExperimentSpec parse(const KeyValue& kv, const std::filesystem::path& base_dir);
  static ExperimentSpec load(const std::filesystem::path& path);
  KeyValue to_kv() const;
  std::string hash() const;
  /// Throws ConfigError when a stage references an unknown or later stage.
  void validate() const;

  /// The desk-scale grid over a generated toy suite.
  static ExperimentSpec toy_grid(const std::filesystem::path& manifest);
};

// ---------------------------------------------------------------------------
// Evaluation

struct Evaluation {
  std::vector<metrics::DirectionScore> scores;
  std::map<std::string, std::vector<std::string>> hypotheses;  // direction -> outputs
};

Evaluation evaluate_model(const nmt::Checkpoint& model, const SubwordModel& subword,
                          std::span<const ParallelCorpus> tests, int batch_rows = 64);

// ---------------------------------------------------------------------------
// Running

struct RunOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  /// Stop after this stage label; empty runs every stage.
  std::string until;
  std::function<void(const std::string&)> log;
};

struct StageRecord {
  std::string label;
  std::string kind;
  std::string row;           // results-table label
  std::string fingerprint;   // best checkpoint of the stage (empty for baselines)
  std::string init_hash;     // parameter hash at update 0
  bool reused = false;
};

struct RunResult {
  std::vector<metrics::ScoreReport> rows;  // results table, stage order
  std::vector<StageRecord> stages;
  std::filesystem::path report_dir;
};

/// Executes the stages in order under `opts.out_dir`. Completed stages
/// recorded in state.txt are reused when `resume` is set; a different spec
/// in an existing directory is a StateError.
RunResult run(const ExperimentSpec& spec, const RunOptions& opts);

/// Hash of parameter bytes only, independent of configuration.
std::string params_hash(const nmt::Parameters<float>& p);

/// Names of the files run() writes to the report directory; all of them are
/// byte-identical across reruns with the same spec.
std::vector<std::string> report_files();

}  // namespace lowmt::experiment
