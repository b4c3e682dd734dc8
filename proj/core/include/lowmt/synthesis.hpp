#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lowmt/checkpoint.hpp"
#include "lowmt/corpus.hpp"
#include "lowmt/keyvalue.hpp"
#include "lowmt/subword.hpp"

namespace lowmt::synthesis {

enum class ShareMode { equal_shares, uniform_random };
std::string_view to_string(ShareMode m);
ShareMode share_mode_from_string(std::string_view s);

struct SharePlan {
  LangId source;
  std::vector<LangId> targets;  // the other languages, sorted
  std::vector<int> assignment;  // per monolingual line, an index into `targets`
  ShareMode mode = ShareMode::equal_shares;
  std::uint64_t seed = 0;

  std::vector<std::size_t> counts() const;
};

/// equal_shares: lines are shuffled under `seed` and dealt out so each
/// target receives floor(n/k) lines, the first n mod k targets one more.
/// uniform_random: each line draws its target independently.
SharePlan plan_shares(const MonoCorpus& m, std::span<const LangId> languages, ShareMode mode, std::uint64_t seed);

struct GenerateOptions {
  bool forward_translation = true;
  int batch_rows = 64;
  int max_len = 0;
};

struct SyntheticCorpus {
  std::vector<SentencePair> pairs;
  std::string generator_id;  // fingerprint of the generating checkpoint
  int iteration = 1;
  ShareMode mode = ShareMode::equal_shares;
  std::uint64_t seed = 0;
  std::size_t planned = 0;
  std::size_t dropped_empty = 0;
  std::size_t failed = 0;

  /// Pairs grouped per direction, directions in sorted order.
  std::vector<ParallelCorpus> by_direction() const;
  KeyValue provenance() const;
};

/// Translates every planned line x (language L) into its assigned L' with
/// greedy decoding. Emits the back-translated pair (y -> x, L'->L) and, when
/// enabled, the forward-translated pair (x -> y, L->L'). Empty outputs are
/// dropped; more than 10% failed lines raise DataError.
SyntheticCorpus generate(const nmt::Checkpoint& model, const SubwordModel& subword, const MonoCorpus& m,
                         const SharePlan& plan, const GenerateOptions& opts, int iteration = 1);

/// Concatenates several generate() results from the same generator.
SyntheticCorpus combine(std::span<const SyntheticCorpus> parts);

struct MergeCount {
  Direction direction;
  std::size_t human = 0;
  std::size_t synthetic = 0;
};

struct Merged {
  std::vector<ParallelCorpus> corpora;
  std::vector<MergeCount> counts;
};

/// Human corpora keep their order; synthetic pairs are appended to the
/// matching direction, or form new corpora in sorted direction order.
Merged merge(std::span<const ParallelCorpus> human, std::span<const SyntheticCorpus> synthetic);

/// Input of the second iteration: the first set shuffled under `seed`,
/// followed by the second set.
MonoCorpus second_iteration_input(const MonoCorpus& first, const MonoCorpus& second, std::uint64_t seed);

/// Second iteration for one language: re-plans shares over the combined
/// input with `seed` and translates with the iteration-1 model. Throws
/// StateError when no iteration-1 model is supplied.
SyntheticCorpus iterate(const nmt::Checkpoint* iteration1_model, const SubwordModel& subword,
                        const MonoCorpus& first, const MonoCorpus& second, std::span<const LangId> languages,
                        ShareMode mode, std::uint64_t seed, const GenerateOptions& opts);

/// Writes <dir>/<src>-<tgt>.tsv per direction plus provenance.txt.
void save(const std::filesystem::path& dir, const SyntheticCorpus& s);
SyntheticCorpus load(const std::filesystem::path& dir);

}  // namespace lowmt::synthesis
