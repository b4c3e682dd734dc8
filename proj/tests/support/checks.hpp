#pragma once

// Checks shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lowmt/experiment.hpp"
#include "lowmt/util.hpp"

namespace lowmt::checks {

struct Outcome {
  bool pass = false;
  std::string detail;
};

// ---------------------------------------------------------------------------
// Metrics

/// Scores tests/fixtures/metrics/{hyp,ref}.txt and compares with expected.txt.
Outcome metric_oracle(const std::filesystem::path& fixture_dir);

/// Aggregates and deltas over published result rows.
Outcome paper_arithmetic();

// ---------------------------------------------------------------------------
// Gradients

struct GradCheck {
  double max_rel_error = 0;
  std::string worst;  // "<tensor>[row,col] analytic numeric"
  std::map<std::string, std::size_t> coords_per_group;
};

/// Double-precision model with 2+2 layers and width 16; every parameter
/// group gets `coords` distinct random coordinates (all of them when the
/// group is smaller) and every tensor at least four.
GradCheck gradient_check(std::uint64_t seed, std::size_t coords = 100);

/// Relative error with a floor on the denominator, so coordinates whose true
/// gradient is ~0 are judged on absolute error.
double relative_error(double analytic, double numeric);

// ---------------------------------------------------------------------------
// Memorization

struct Memorization {
  double valid_ppl = 0;
  double bleu = 0;
  std::int64_t updates = 0;
  double seconds = 0;
};

/// 32 toy pairs, small model, no dropout or label smoothing; scored on the
/// training pairs themselves.
Memorization memorization(std::uint64_t seed);

// ---------------------------------------------------------------------------
// Property suites

/// Random valid UTF-8 mixing ASCII, Latin letters with diacritics, other
/// scripts, emoji, whitespace and the subword marker character.
std::string random_utf8(Rng& rng, std::size_t max_chars);

struct PropertyResult {
  PropertyResult() = default;
  explicit PropertyResult(std::string n) : name(std::move(n)) {}

  std::string name;
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;
  bool pass() const { return cases > 0 && failures == 0; }
};

PropertyResult tokenizer_roundtrip(std::size_t cases, std::uint64_t seed);
std::vector<PropertyResult> corpus_invariants(std::size_t cases, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Toy grid

struct ToyClaims {
  Outcome multilingual_gain;  // (a)
  Outcome bt_no_degradation;  // (b)
  Outcome fine_tune_gain;     // (c)
  Outcome transfer_init;      // (d)
  Outcome zero_shot_target;   // (e)
};

/// Evaluates the claims on a finished run of ExperimentSpec::toy_grid.
ToyClaims toy_claims(const experiment::RunResult& result, const std::filesystem::path& run_dir);

/// Byte comparison of every report file of two runs.
Outcome reports_identical(const std::filesystem::path& a, const std::filesystem::path& b);

}  // namespace lowmt::checks
