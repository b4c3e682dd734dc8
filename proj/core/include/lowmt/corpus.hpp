#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lowmt {

/// Short lowercase language code ("et", "vro", or a toy code such as "la").
class LangId {
 public:
  LangId() = default;
  explicit LangId(std::string code);

  const std::string& code() const noexcept { return code_; }
  auto operator<=>(const LangId&) const = default;

 private:
  std::string code_;
};

/// Ordered language pair, printed as "src-tgt".
struct Direction {
  LangId src;
  LangId tgt;

  std::string str() const { return src.code() + "-" + tgt.code(); }
  Direction reversed() const { return {tgt, src}; }
  static Direction parse(std::string_view text);
  auto operator<=>(const Direction&) const = default;
};

enum class Origin { human, back_translated, forward_translated };
std::string_view to_string(Origin o);
Origin origin_from_string(std::string_view s);

struct SentencePair {
  LangId src_lang;
  LangId tgt_lang;
  std::string src;
  std::string tgt;
  Origin origin = Origin::human;

  bool operator==(const SentencePair&) const = default;
};

struct ParallelCorpus {
  Direction direction;
  std::vector<SentencePair> pairs;

  std::size_t size() const noexcept { return pairs.size(); }
  bool empty() const noexcept { return pairs.empty(); }
  void add(std::string src, std::string tgt, Origin origin = Origin::human);
  bool operator==(const ParallelCorpus&) const = default;
};

struct MonoCorpus {
  LangId lang;
  std::vector<std::string> lines;

  std::size_t size() const noexcept { return lines.size(); }
  bool operator==(const MonoCorpus&) const = default;
};

struct CleaningConfig {
  std::size_t max_len_words = 200;
  double len_ratio_max = 9.0;
  bool normalize_unicode = true;

  void validate() const;
};

struct SplitSpec {
  std::size_t test_total = 0;
  std::size_t valid_total = 0;
  std::uint64_t seed = 0;
};

struct DedupReport {
  std::size_t before = 0;
  std::size_t after = 0;
  std::size_t eliminated = 0;
};

struct CleanReport {
  std::size_t before = 0;
  std::size_t after = 0;
  std::size_t empty_side = 0;
  std::size_t too_long = 0;
  std::size_t bad_ratio = 0;
};

template <typename Report>
struct Filtered {
  ParallelCorpus corpus;
  Report report;
};

struct HoldoutSplit {
  ParallelCorpus train;
  ParallelCorpus valid;
  ParallelCorpus test;
};

namespace corpus {

/// One sentence per line; lines are trimmed and empty ones dropped.
/// Throws DataError naming the byte offset of the first invalid UTF-8 byte.
MonoCorpus load_mono(const std::filesystem::path& path, const LangId& lang);
void save_mono(const std::filesystem::path& path, const MonoCorpus& m);

/// Two line-aligned files; line i of each forms pair i.
ParallelCorpus load_parallel(const std::filesystem::path& src_path,
                             const std::filesystem::path& tgt_path, const Direction& direction);
void save_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                   const ParallelCorpus& c);

/// Two-column tab-separated variant; an optional third column carries the origin tag.
ParallelCorpus load_parallel_tsv(const std::filesystem::path& path, const Direction& direction);
void save_parallel_tsv(const std::filesystem::path& path, const ParallelCorpus& c);

Filtered<DedupReport> dedup(const ParallelCorpus& c);
MonoCorpus dedup(const MonoCorpus& m);
Filtered<CleanReport> clean(const ParallelCorpus& c, const CleaningConfig& cfg);
ParallelCorpus reverse(const ParallelCorpus& c);

/// Splits `total` across buckets proportionally to `sizes` with the
/// largest-remainder method; ties go to the earlier bucket.
std::vector<std::size_t> largest_remainder_quotas(std::span<const std::size_t> sizes, std::size_t total);

std::vector<HoldoutSplit> split_holdout(std::span<const ParallelCorpus> corpora, const SplitSpec& spec);

MonoCorpus downsample(const MonoCorpus& m, std::size_t n, std::uint64_t seed);

/// Every input corpus followed by its reverse.
std::vector<ParallelCorpus> build_multilingual(std::span<const ParallelCorpus> corpora);

std::string clean_report_tsv(std::span<const std::pair<Direction, CleanReport>> rows);
std::string dedup_report_tsv(std::span<const std::pair<Direction, DedupReport>> rows);

}  // namespace corpus

// ---------------------------------------------------------------------------
// Corpus manifest
//
//   languages = la lb lc ld le
//   pair.la-lb.role = high            # high | low | zero
//   pair.la-lb.train = la-lb.train.tsv
//   pair.la-lb.valid = la-lb.valid.tsv
//   pair.la-lb.test = la-lb.test.tsv
//   mono.lc.set1 = mono/lc.1.txt
//   mono.lc.set2 = mono/lc.2.txt
//
// Paths are relative to the manifest's directory. Parallel files are TSV.

struct PairEntry {
  Direction pair;
  std::string role = "low";
  std::optional<std::filesystem::path> train;
  std::optional<std::filesystem::path> valid;
  std::optional<std::filesystem::path> test;
};

struct MonoEntry {
  LangId lang;
  std::vector<std::filesystem::path> sets;
};

struct CorpusManifest {
  std::vector<LangId> languages;
  std::vector<PairEntry> pairs;
  std::vector<MonoEntry> mono;
  std::filesystem::path base_dir;

  static CorpusManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  /// A pair entry value is either one two-column TSV file or two
  /// whitespace-separated paths to line-aligned source and target files.
  ParallelCorpus load_pair_file(const std::string& value, const Direction& direction) const;
  const PairEntry* find_pair(const Direction& unordered) const;
  bool has_language(const LangId& l) const;
};

}  // namespace lowmt
