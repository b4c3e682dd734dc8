#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "lowmt/corpus.hpp"

namespace lowmt::metrics {

/// mteval-v13a tokenization as used by the reference BLEU scorer.
std::vector<std::string> tokenize_13a(std::string_view text);

struct BleuResult {
  double score = 0;  // 0..100
  std::array<std::size_t, 4> correct{};
  std::array<std::size_t, 4> total{};
  std::array<double, 4> precisions{};  // percentages after smoothing
  double brevity_penalty = 0;
  std::size_t sys_len = 0;
  std::size_t ref_len = 0;
};

/// Corpus BLEU: 4-gram, 13a tokens, mixed case, exponential smoothing, one
/// reference. Throws DataError on a length mismatch or an empty corpus.
BleuResult bleu(std::span<const std::string> hyps, std::span<const std::string> refs);

struct ChrfResult {
  double score = 0;  // 0..1
  double precision = 0;
  double recall = 0;
  int effective_order = 0;
};

/// Corpus chrF with character 6-grams, beta 2, whitespace removed.
/// Statistics are summed over segments; precision and recall are averaged
/// over the orders with nonzero counts before the F-score is taken.
ChrfResult chrf(std::span<const std::string> hyps, std::span<const std::string> refs);

std::string bleu_signature(const Direction& dir, std::string_view test_set);
std::string chrf_signature(const Direction& dir, std::string_view test_set);

/// Half-up rounding at `decimals` places of the shortest decimal form that
/// round-trips `v`, so 22.225 becomes 22.2 and 0.15 becomes 0.2.
double round_half_up(double v, int decimals);
std::string format_fixed(double v, int decimals);

struct DirectionScore {
  Direction direction;
  double bleu = 0;
  double chrf = 0;
};

/// One row of a results table.
struct ScoreReport {
  std::string label;
  std::vector<DirectionScore> scores;
  std::optional<double> bleu_low;  // full precision
  std::optional<double> chrf_low;

  const DirectionScore* find(const Direction& d) const;
};

/// Means over `low_directions`. Throws DataError naming the first missing
/// direction.
ScoreReport aggregate(std::string label, std::vector<DirectionScore> scores,
                      std::span<const Direction> low_directions);

struct DeltaRow {
  std::string label;  // "<a> vs <b>"
  std::vector<DirectionScore> deltas;  // a - b per direction
  std::optional<double> bleu_low;
  std::optional<double> chrf_low;
};

/// Per-direction and aggregate differences a - b. Throws DataError when the
/// direction sets differ.
DeltaRow delta(const ScoreReport& a, const ScoreReport& b);

struct Comparison {
  std::vector<Direction> directions;
  std::vector<DeltaRow> rows;  // every report against the baseline
  /// Index of the best report per direction (BLEU), ties to the earlier row.
  std::vector<std::size_t> best_bleu;
  std::vector<std::size_t> best_chrf;
  std::optional<std::size_t> best_bleu_low;
  std::optional<std::size_t> best_chrf_low;
};

Comparison compare(std::span<const ScoreReport> reports, std::size_t baseline = 0);

/// Table with one row per report and one column per direction plus the
/// aggregate; BLEU to 1 decimal, chrF to 3. Best values carry a '*'.
std::string report_tsv(std::span<const ScoreReport> reports, std::span<const Direction> columns,
                       std::string_view test_set);
std::string report_json(std::span<const ScoreReport> reports, std::span<const Direction> columns,
                        std::string_view test_set);
std::string comparison_tsv(const Comparison& c);

/// Reads back a report written by report_json.
std::vector<ScoreReport> reports_from_json(std::string_view json);

}  // namespace lowmt::metrics
