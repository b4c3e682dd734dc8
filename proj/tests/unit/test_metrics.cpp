#include <gtest/gtest.h>

#include <filesystem>

#include "checks.hpp"
#include "lowmt/util.hpp"
#include "lowmt/metrics.hpp"

using namespace lowmt;
using namespace lowmt::metrics;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = fs::path(LOWMT_FIXTURE_DIR) / "metrics";

std::string unescape(std::string s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size() && s[i + 1] == 'n') {
      out += '\n';
      ++i;
    } else {
      out += s[i];
    }
  }
  return out;
}

ScoreReport report(const std::string& label, std::vector<double> bleus) {
  const char* dirs[] = {"et-fi", "fi-et", "et-vro", "vro-et"};
  std::vector<DirectionScore> s;
  for (std::size_t i = 0; i < bleus.size(); ++i) s.push_back({Direction::parse(dirs[i]), bleus[i], bleus[i] / 100});
  const std::vector<Direction> low = {Direction::parse("et-vro"), Direction::parse("vro-et")};
  return aggregate(label, s, low);
}

}  // namespace

TEST(Metrics, ReferenceImplementationFixture) {
  const auto o = checks::metric_oracle(kFixtures);
  EXPECT_TRUE(o.pass) << o.detail;
}

TEST(Metrics, BleuStatisticsMatchFixture) {
  const auto b = bleu(read_lines(kFixtures / "hyp.txt"), read_lines(kFixtures / "ref.txt"));
  EXPECT_EQ(b.correct, (std::array<std::size_t, 4>{96, 64, 39, 23}));
  EXPECT_EQ(b.total, (std::array<std::size_t, 4>{115, 95, 76, 57}));
  EXPECT_EQ(b.sys_len, 115u);
  EXPECT_EQ(b.ref_len, 131u);
  EXPECT_NEAR(b.brevity_penalty, 0.8701145278569137, 1e-12);
}

TEST(Metrics, Tokenizer13aMatchesFixture) {
  const auto lines = read_lines(kFixtures / "tok13a.tsv");
  ASSERT_GE(lines.size(), 40u);
  for (const auto& line : lines) {
    const auto tab = line.find('\t');
    ASSERT_NE(tab, std::string::npos) << line;
    const auto input = unescape(line.substr(0, tab));
    EXPECT_EQ(join(tokenize_13a(input), " "), line.substr(tab + 1)) << input;
  }
}

TEST(Metrics, IdentityAndEmpty) {
  const std::vector<std::string> refs = {"Mina elan Tartus.", "Päike paistab."};
  EXPECT_EQ(bleu(refs, refs).score, 100.0);
  EXPECT_EQ(chrf(refs, refs).score, 1.0);
  const std::vector<std::string> empty = {"", ""};
  EXPECT_EQ(bleu(empty, refs).score, 0.0);
  EXPECT_EQ(chrf(empty, refs).score, 0.0);
  EXPECT_THROW(bleu(std::vector<std::string>{"a"}, refs), DataError);
}

TEST(Metrics, ScoresStayInRange) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    std::vector<std::string> h, r;
    for (int k = 0; k < 3; ++k) {
      h.push_back(checks::random_utf8(rng, 30));
      r.push_back("ref " + checks::random_utf8(rng, 30));
    }
    const double b = bleu(h, r).score;
    const double c = chrf(h, r).score;
    EXPECT_GE(b, 0.0);
    EXPECT_LE(b, 100.0);
    EXPECT_GE(c, 0.0);
    EXPECT_LE(c, 1.0);
  }
}

TEST(Metrics, Signatures) {
  const auto d = Direction::parse("et-vro");
  const auto b = bleu_signature(d, "test");
  EXPECT_NE(b.find("BLEU"), std::string::npos);
  EXPECT_NE(b.find("tok.13a"), std::string::npos);
  EXPECT_NE(b.find("et-vro"), std::string::npos);
  EXPECT_NE(chrf_signature(d, "test").find("chrF"), std::string::npos);
}

TEST(Metrics, RoundingIsHalfUp) {
  EXPECT_EQ(format_fixed(22.25, 1), "22.3");
  EXPECT_EQ(format_fixed(23.825, 1), "23.8");
  EXPECT_EQ(format_fixed(14.6375, 1), "14.6");
  EXPECT_EQ(format_fixed(0.125, 2), "0.13");
  EXPECT_DOUBLE_EQ(round_half_up(2.5, 0), 3.0);
}

TEST(Metrics, AggregateUsesLowDirectionsOnly) {
  const auto r = report("x", {30, 20, 10, 14});
  ASSERT_TRUE(r.bleu_low);
  EXPECT_DOUBLE_EQ(*r.bleu_low, 12.0);
  EXPECT_DOUBLE_EQ(r.find(Direction::parse("fi-et"))->bleu, 20.0);
  EXPECT_EQ(r.find(Direction::parse("sme-fi")), nullptr);
}

TEST(Metrics, DeltaIsAntisymmetric) {
  const auto a = report("a", {30, 20, 10, 14});
  const auto b = report("b", {31, 18, 13, 11.5});
  const auto ab = delta(a, b);
  const auto ba = delta(b, a);
  for (std::size_t i = 0; i < ab.deltas.size(); ++i) {
    EXPECT_DOUBLE_EQ(ab.deltas[i].bleu, -ba.deltas[i].bleu);
    EXPECT_DOUBLE_EQ(ab.deltas[i].chrf, -ba.deltas[i].chrf);
  }
  EXPECT_DOUBLE_EQ(*ab.bleu_low, -*ba.bleu_low);
  EXPECT_THROW(delta(a, report("c", {1, 2, 3})), DataError);
}

TEST(Metrics, CompareAgainstSelfIsZero) {
  const auto a = report("a", {30, 20, 10, 14});
  const std::vector<ScoreReport> rows = {a, a};
  const auto c = compare(rows, 0);
  for (const auto& row : c.rows) {
    for (const auto& d : row.deltas) EXPECT_EQ(d.bleu, 0.0);
    EXPECT_EQ(*row.bleu_low, 0.0);
  }
  EXPECT_THROW(compare(rows, 2), ConfigError);
}

TEST(Metrics, JsonReportRoundTrip) {
  const std::vector<ScoreReport> rows = {report("Baselines", {30, 20, 10, 14}), report("ML", {31, 22, 15.25, 16})};
  std::vector<Direction> cols;
  for (const auto& s : rows[0].scores) cols.push_back(s.direction);
  const auto back = reports_from_json(report_json(rows, cols, "test"));
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].label, "ML");
  EXPECT_DOUBLE_EQ(back[1].scores[2].bleu, 15.25);
  EXPECT_DOUBLE_EQ(*back[1].bleu_low, *rows[1].bleu_low);
  const auto tsv = report_tsv(rows, cols, "test");
  EXPECT_NE(tsv.find("15.3"), std::string::npos);
}

TEST(Metrics, PublishedAggregates) {
  const auto o = checks::paper_arithmetic();
  EXPECT_TRUE(o.pass) << o.detail;
}
