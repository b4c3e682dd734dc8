#include <gtest/gtest.h>

#include <filesystem>

#include "checks.hpp"
#include "lowmt/corpus.hpp"
#include "lowmt/util.hpp"

using namespace lowmt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("lowmt_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const Direction kDir{LangId("et"), LangId("vro")};

}  // namespace

TEST(CorpusProperties, InvariantSuitesHold) {
  for (const auto& r : checks::corpus_invariants(1000, 42)) {
    EXPECT_TRUE(r.pass()) << r.name << ": " << r.failures << " of " << r.cases << " failed; first " << r.first_failure;
    EXPECT_GE(r.cases, 1000u) << r.name;
  }
}

TEST(Clean, DropsEmptyLongAndUnbalancedPairs) {
  ParallelCorpus c{kDir, {}};
  c.add("tere", "tere");
  c.add("   ", "midagi");
  c.add("üks kaks kolm neli viis kuus", "üks");
  c.add("a b c", "x y z w");
  CleaningConfig cfg;
  cfg.max_len_words = 5;
  cfg.len_ratio_max = 2.0;
  const auto r = corpus::clean(c, cfg);
  EXPECT_EQ(r.report.before, 4u);
  EXPECT_EQ(r.report.empty_side, 1u);
  EXPECT_EQ(r.report.too_long, 1u);
  EXPECT_EQ(r.report.bad_ratio, 0u);
  EXPECT_EQ(r.report.after, 2u);

  cfg.max_len_words = 10;
  cfg.len_ratio_max = 1.2;
  EXPECT_EQ(corpus::clean(c, cfg).report.bad_ratio, 2u);
}

TEST(Clean, NormalizesAndTrims) {
  ParallelCorpus c{kDir, {}};
  c.add("  vo\xCC\x83ro  ", "x");
  const auto r = corpus::clean(c, {});
  ASSERT_EQ(r.corpus.size(), 1u);
  EXPECT_EQ(r.corpus.pairs[0].src, "v\xC3\xB5ro");
}

TEST(Dedup, KeepsFirstOccurrenceAndCountsEliminated) {
  ParallelCorpus c{kDir, {}};
  c.add("a", "b");
  c.add("a", "c");
  c.add(" a ", "b");
  c.add("vo\xCC\x83", "x");
  c.add("v\xC3\xB5", "x");
  const auto r = corpus::dedup(c);
  EXPECT_EQ(r.report.before, 5u);
  EXPECT_EQ(r.report.after, 3u);
  EXPECT_EQ(r.report.eliminated, 2u);
  EXPECT_EQ(r.corpus.pairs[1].tgt, "c");
}

TEST(Quotas, LargestRemainderExamples) {
  const std::vector<std::size_t> sizes{3000, 700, 800, 250, 500};
  const auto q = corpus::largest_remainder_quotas(sizes, 1000);
  std::size_t sum = 0;
  for (auto v : q) sum += v;
  EXPECT_EQ(sum, 1000u);
  // 1000*3000/5250 = 571.43, 133.33, 152.38, 47.62, 95.24
  EXPECT_EQ(q, (std::vector<std::size_t>{572, 133, 152, 48, 95}));
  // ties go to the earlier bucket
  const std::vector<std::size_t> even{1, 1, 1};
  EXPECT_EQ(corpus::largest_remainder_quotas(even, 2), (std::vector<std::size_t>{1, 1, 0}));
}

TEST(Split, RejectsHoldoutLargerThanData) {
  ParallelCorpus c{kDir, {}};
  for (int i = 0; i < 5; ++i) c.add("s" + std::to_string(i), "t");
  const std::vector<ParallelCorpus> cs{c};
  EXPECT_THROW(corpus::split_holdout(cs, {3, 2, 1}), ConfigError);
  EXPECT_NO_THROW(corpus::split_holdout(cs, {2, 2, 1}));
}

TEST(Multilingual, EachCorpusFollowedByItsReverse) {
  ParallelCorpus a{kDir, {}}, b{{LangId("fi"), LangId("sme")}, {}};
  a.add("x", "y");
  b.add("p", "q");
  const std::vector<ParallelCorpus> in{a, b};
  const auto m = corpus::build_multilingual(in);
  ASSERT_EQ(m.size(), 4u);
  EXPECT_EQ(m[1].direction.str(), "vro-et");
  EXPECT_EQ(m[1].pairs[0].src, "y");
  EXPECT_EQ(m[3].direction.str(), "sme-fi");
}

TEST(Downsample, DeterministicOrderPreservingSubset) {
  MonoCorpus m{LangId("et"), {}};
  for (int i = 0; i < 100; ++i) m.lines.push_back("line " + std::to_string(i));
  const auto a = corpus::downsample(m, 30, 9);
  const auto b = corpus::downsample(m, 30, 9);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 30u);
  EXPECT_TRUE(std::is_sorted(a.lines.begin(), a.lines.end(), [&](const auto& x, const auto& y) {
    return std::stoi(x.substr(5)) < std::stoi(y.substr(5));
  }));
  EXPECT_EQ(corpus::downsample(m, 500, 9), m);
}

TEST(Io, TsvRoundTripKeepsOrigin) {
  const auto d = temp_dir("tsv");
  ParallelCorpus c{kDir, {}};
  c.add("a b", "c", Origin::human);
  c.add("d", "e f", Origin::back_translated);
  corpus::save_parallel_tsv(d / "c.tsv", c);
  EXPECT_EQ(corpus::load_parallel_tsv(d / "c.tsv", kDir), c);
}

TEST(Io, InvalidUtf8ReportsByteOffset) {
  const auto d = temp_dir("utf8");
  write_file(d / "m.txt", "ok\nab\xFF\n");
  try {
    corpus::load_mono(d / "m.txt", LangId("et"));
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("5"), std::string::npos) << e.what();
  }
}

TEST(Io, LineAlignedFilesMustMatch) {
  const auto d = temp_dir("aligned");
  write_file(d / "a.txt", "x\ny\n");
  write_file(d / "b.txt", "x\n");
  EXPECT_THROW(corpus::load_parallel(d / "a.txt", d / "b.txt", kDir), DataError);
}

TEST(Manifest, SaveLoadRoundTrip) {
  const auto d = temp_dir("manifest");
  CorpusManifest m;
  m.base_dir = d;
  m.languages = {LangId("et"), LangId("vro")};
  PairEntry e;
  e.pair = kDir;
  e.role = "low";
  e.train = "p/et-vro.tsv";
  m.pairs.push_back(e);
  m.mono.push_back({LangId("vro"), {"mono/vro.1.txt", "mono/vro.2.txt"}});
  m.save(d / "manifest.txt");
  const auto back = CorpusManifest::load(d / "manifest.txt");
  ASSERT_EQ(back.pairs.size(), 1u);
  EXPECT_EQ(back.pairs[0].role, "low");
  EXPECT_EQ(back.resolve(*back.pairs[0].train), d / "p/et-vro.tsv");
  ASSERT_EQ(back.mono.size(), 1u);
  EXPECT_EQ(back.mono[0].sets.size(), 2u);
  EXPECT_NE(back.find_pair(kDir.reversed()), nullptr);
}

TEST(Manifest, PairEntriesAcceptTsvOrAlignedFiles) {
  const auto dir = fs::temp_directory_path() / "lowmt_manifest_files";
  fs::remove_all(dir);
  fs::create_directories(dir);
  write_lines(dir / "a.tsv", std::vector<std::string>{"tere\tterve", "aitäh\taih"});
  write_lines(dir / "a.et", std::vector<std::string>{"tere", "aitäh"});
  write_lines(dir / "a.vro", std::vector<std::string>{"terve", "aih"});
  write_lines(dir / "short.vro", std::vector<std::string>{"terve"});
  CorpusManifest m;
  m.base_dir = dir;
  const auto d = Direction::parse("et-vro");
  const auto tsv = m.load_pair_file("a.tsv", d);
  EXPECT_EQ(m.load_pair_file("a.et a.vro", d), tsv);
  EXPECT_THROW(m.load_pair_file("a.et short.vro", d), DataError);
  EXPECT_THROW(m.load_pair_file("a b c", d), ConfigError);
  fs::remove_all(dir);
}
