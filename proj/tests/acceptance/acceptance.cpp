// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   lowmt_acceptance [--work-dir DIR] [--fixtures DIR] [--skip-toy]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <string>

#include "checks.hpp"
#include "lowmt/experiment.hpp"
#include "lowmt/toy.hpp"

#ifndef LOWMT_FIXTURE_DIR
#define LOWMT_FIXTURE_DIR "tests/fixtures"
#endif

namespace fs = std::filesystem;
using namespace lowmt;

namespace {

int failures = 0;

double since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const std::string& name, bool pass, const std::string& detail, double seconds, double limit) {
  const bool in_time = limit <= 0 || seconds < limit;
  const bool ok = pass && in_time;
  if (!ok) ++failures;
  char t[64];
  std::snprintf(t, sizeof t, "%.1fs", seconds);
  std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << " [" << t;
  if (limit > 0) std::cout << " / limit " << limit << "s";
  std::cout << "]" << std::endl;
}

void timed(const std::string& name, double limit, const std::function<checks::Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  checks::Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(name, o.pass, o.detail, since(t0), limit);
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = "acceptance_work";
  fs::path fixtures = LOWMT_FIXTURE_DIR;
  bool skip_toy = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--fixtures" && i + 1 < argc) {
      fixtures = argv[++i];
    } else if (a == "--skip-toy") {
      skip_toy = true;
    } else {
      std::cerr << "usage: lowmt_acceptance [--work-dir DIR] [--fixtures DIR] [--skip-toy]\n";
      return 2;
    }
  }

  timed("metric oracle", 1.0, [&] { return checks::metric_oracle(fixtures / "metrics"); });
  timed("paper arithmetic", 1.0, [] { return checks::paper_arithmetic(); });
  timed("gradient check", 60.0, [] {
    const auto g = checks::gradient_check(20240611, 100);
    std::size_t min_group = SIZE_MAX, total = 0;
    for (const auto& [k, n] : g.coords_per_group) {
      min_group = std::min(min_group, n);
      total += n;
    }
    char buf[96];
    std::snprintf(buf, sizeof buf, "max relative error %.3g over %zu coordinates (>= %zu per group)",
                  g.max_rel_error, total, min_group);
    return checks::Outcome{g.max_rel_error < 1e-4 && min_group >= 100, std::string(buf) + "; worst " + g.worst};
  });
  timed("memorization", 300.0, [] {
    const auto m = checks::memorization(7);
    char buf[128];
    std::snprintf(buf, sizeof buf, "valid ppl %.4f, train BLEU %.2f after %lld updates", m.valid_ppl, m.bleu,
                  static_cast<long long>(m.updates));
    return checks::Outcome{m.valid_ppl < 1.1 && m.bleu == 100.0, buf};
  });
  timed("tokenizer round-trip", 30.0, [] {
    const auto r = checks::tokenizer_roundtrip(10000, 99);
    return checks::Outcome{r.pass(), std::to_string(r.cases) + " strings, " + std::to_string(r.failures) +
                                         " failures" + (r.failures ? "; first " + r.first_failure : "")};
  });
  timed("corpus invariants", 60.0, [] {
    const auto rs = checks::corpus_invariants(1000, 5);
    bool ok = true;
    std::string detail;
    for (const auto& r : rs) {
      ok = ok && r.pass() && r.cases >= 1000;
      detail += (detail.empty() ? "" : "; ") + r.name + " " + std::to_string(r.cases - r.failures) + "/" +
                std::to_string(r.cases);
      if (r.failures) detail += " (" + r.first_failure + ")";
    }
    return checks::Outcome{ok, detail};
  });

  if (skip_toy) {
    std::cout << "SKIP toy experiment claims and determinism (--skip-toy)" << std::endl;
    return failures == 0 ? 0 : 1;
  }

  fs::remove_all(work);
  fs::create_directories(work);
  const auto log = [](const std::string& m) { std::cerr << "  " << m << '\n'; };
  experiment::RunResult first;
  double grid_seconds = 0;
  bool grid_ok = true;
  {
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const auto manifest = toy::generate_toy_suite(toy::ToyLanguageSpec::desk_default(), 1, work / "toy");
      const auto spec = experiment::ExperimentSpec::toy_grid(manifest);
      first = experiment::run(spec, {work / "run1", false, "", log});
    } catch (const std::exception& e) {
      grid_ok = false;
      report("toy experiment grid", false, std::string("exception: ") + e.what(), since(t0), 1800.0);
    }
    grid_seconds = since(t0);
  }
  if (grid_ok) {
    const auto c = checks::toy_claims(first, work / "run1");
    // The 30-minute budget covers the whole grid; each claim line repeats it.
    report("toy claim (a) multilingual gain", c.multilingual_gain.pass, c.multilingual_gain.detail, grid_seconds, 1800.0);
    report("toy claim (b) BT does not degrade", c.bt_no_degradation.pass, c.bt_no_degradation.detail, grid_seconds, 1800.0);
    report("toy claim (c) fine-tune gain", c.fine_tune_gain.pass, c.fine_tune_gain.detail, grid_seconds, 1800.0);
    report("toy claim (d) transfer init", c.transfer_init.pass, c.transfer_init.detail, grid_seconds, 1800.0);
    report("toy claim (e) zero-shot target language", c.zero_shot_target.pass, c.zero_shot_target.detail, grid_seconds,
           1800.0);

    timed("determinism", 0, [&] {
      const auto manifest = work / "toy" / "manifest.txt";
      const auto spec = experiment::ExperimentSpec::toy_grid(manifest);
      experiment::run(spec, {work / "run2", false, "", log});
      return checks::reports_identical(work / "run1", work / "run2");
    });
  }
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
