#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>

#include "lowmt/util.hpp"
#include "lowmt/metrics.hpp"
#include "lowmt/toy.hpp"

using namespace lowmt;
using namespace lowmt::toy;
namespace fs = std::filesystem;

namespace {

ToyLanguageSpec small_spec() {
  auto s = ToyLanguageSpec::desk_default();
  for (auto& p : s.pairs) {
    if (p.train) p.train = p.train / 10;
  }
  for (auto& [k, v] : s.mono_set1) v = 20;
  for (auto& [k, v] : s.mono_set2) v = 5;
  return s;
}

std::size_t lines_in(const fs::path& p) { return read_lines(p).size(); }

}  // namespace

TEST(Toy, RenderingIsInjectivePerLanguage) {
  const ToyWorld w(ToyLanguageSpec::desk_default(), 1);
  Rng rng(2);
  for (const auto& lang : w.spec().languages) {
    std::map<std::string, std::string> seen;  // rendering -> canonical form
    for (int i = 0; i < 3000; ++i) {
      const auto s = w.sample(rng);
      std::string key;
      for (const auto& t : s) {
        key += std::to_string(static_cast<int>(t.pos)) + ":" + std::to_string(t.concept_id) + (t.plural ? "p" : "") + " ";
      }
      const auto r = w.render(s, lang.code);
      const auto [it, fresh] = seen.emplace(r, key);
      if (!fresh) EXPECT_EQ(it->second, key) << lang.code.code() << ": " << r;
    }
  }
}

TEST(Toy, SentencesRespectLengthBounds) {
  const ToyWorld w(ToyLanguageSpec::desk_default(), 1);
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto s = w.sample(rng);
    EXPECT_GE(s.size(), w.spec().min_words);
    EXPECT_LE(s.size(), w.spec().max_words);
  }
}

TEST(Toy, IdentifyRecoversLanguage) {
  const ToyWorld w(ToyLanguageSpec::desk_default(), 1);
  Rng rng(4);
  int correct = 0, total = 0;
  for (int i = 0; i < 200; ++i) {
    const auto s = w.sample(rng);
    for (const auto& lang : w.spec().languages) {
      ++total;
      const auto id = w.identify(w.render(s, lang.code));
      if (id && *id == lang.code) ++correct;
    }
  }
  EXPECT_GE(correct, total * 95 / 100);
  EXPECT_FALSE(w.identify("zzzz qqqq"));
}

TEST(Toy, FamiliesShareStemsButNotForms) {
  const ToyWorld w(ToyLanguageSpec::desk_default(), 1);
  const auto& la = w.lexicon(LangId("la"));
  const auto& lb = w.lexicon(LangId("lb"));
  const std::set<std::string> a(la.begin(), la.end());
  std::size_t shared = 0;
  for (const auto& x : lb) shared += a.count(x);
  EXPECT_LT(shared, lb.size() / 4);
}

TEST(Toy, SuiteMatchesSpecAndIsDeterministic) {
  const auto spec = small_spec();
  const auto dir = fs::temp_directory_path() / "lowmt_toy_suite";
  fs::remove_all(dir);
  const auto manifest = generate_toy_suite(spec, 9, dir / "a");
  generate_toy_suite(spec, 9, dir / "b");
  const auto m = CorpusManifest::load(manifest);
  for (const auto& p : spec.pairs) {
    const auto stem = p.pair.str();
    if (p.role == "zero") {
      EXPECT_FALSE(fs::exists(dir / "a" / "raw" / (stem + ".train.tsv")));
      EXPECT_EQ(lines_in(dir / "a" / "raw" / (stem + ".valid.tsv")), p.valid);
      EXPECT_EQ(lines_in(dir / "a" / "raw" / (stem + ".test.tsv")), p.test);
    } else {
      EXPECT_EQ(lines_in(dir / "a" / "raw" / (stem + ".train.tsv")), p.train) << stem;
    }
  }
  for (const auto& [lang, n] : spec.mono_set1) EXPECT_EQ(lines_in(dir / "a" / "mono" / (lang + ".1.txt")), n);
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir / "a");
    EXPECT_EQ(read_file(entry.path()), read_file(dir / "b" / rel)) << rel;
  }
  EXPECT_EQ(m.languages.size(), 5u);
  fs::remove_all(dir);
}

TEST(Toy, ReferencesScoreThemselvesPerfectly) {
  const ToyWorld w(ToyLanguageSpec::desk_default(), 1);
  Rng rng(5);
  std::vector<std::string> refs;
  for (int i = 0; i < 50; ++i) refs.push_back(w.render(w.sample(rng), LangId("le")));
  EXPECT_EQ(metrics::bleu(refs, refs).score, 100.0);
}

TEST(Toy, SpecKeyValueRoundTrip) {
  const auto s = small_spec();
  EXPECT_EQ(ToyLanguageSpec::from_kv(s.to_kv()).to_kv().serialize(), s.to_kv().serialize());
  auto kv = s.to_kv();
  kv.set("min_words", "0");
  EXPECT_THROW(ToyLanguageSpec::from_kv(kv), ConfigError);
}
