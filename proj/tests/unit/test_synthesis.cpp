#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>

#include "lowmt/util.hpp"
#include "lowmt/synthesis.hpp"

using namespace lowmt;
using namespace lowmt::synthesis;
namespace fs = std::filesystem;

namespace {

const std::vector<LangId> kLangs = {LangId("et"), LangId("fi"), LangId("sme"), LangId("vro")};

MonoCorpus mono(std::size_t n, const char* lang = "vro") {
  MonoCorpus m{LangId(lang), {}};
  for (std::size_t i = 0; i < n; ++i) m.lines.push_back("rida " + std::to_string(i));
  return m;
}

struct Generator {
  SubwordModel subword;
  nmt::Checkpoint model;
};

const Generator& generator() {
  static const Generator g = [] {
    Generator x;
    x.subword = SubwordModel::train(mono(40).lines, 280);
    auto& c = x.model.config;
    c.enc_layers = 1;
    c.dec_layers = 1;
    c.heads = 2;
    c.d_model = 16;
    c.d_ff = 32;
    c.factor_dim = 4;
    c.token_vocab = static_cast<int>(x.subword.vocab_size());
    c.languages = kLangs;
    c.max_len = 12;
    x.model.params = nmt::init_params<float>(c, 5);
    return x;
  }();
  return g;
}

}  // namespace

TEST(Shares, EqualSharesFloorAndRemainder) {
  for (std::size_t n : {0u, 1u, 2u, 3u, 7u, 100u, 101u, 1234u}) {
    const auto p = plan_shares(mono(n), kLangs, ShareMode::equal_shares, 9);
    ASSERT_EQ(p.targets, (std::vector<LangId>{LangId("et"), LangId("fi"), LangId("sme")}));
    const auto counts = p.counts();
    ASSERT_EQ(counts.size(), 3u);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(counts[k], n / 3 + (k < n % 3 ? 1 : 0)) << n << " " << k;
  }
}

TEST(Shares, SeededAndModeSpecific) {
  const auto m = mono(300);
  const auto a = plan_shares(m, kLangs, ShareMode::equal_shares, 1);
  EXPECT_EQ(a.assignment, plan_shares(m, kLangs, ShareMode::equal_shares, 1).assignment);
  EXPECT_NE(a.assignment, plan_shares(m, kLangs, ShareMode::equal_shares, 2).assignment);
  const auto u = plan_shares(m, kLangs, ShareMode::uniform_random, 1);
  for (int t : u.assignment) {
    EXPECT_GE(t, 0);
    EXPECT_LT(t, 3);
  }
  EXPECT_EQ(share_mode_from_string(to_string(ShareMode::uniform_random)), ShareMode::uniform_random);
  EXPECT_THROW(share_mode_from_string("round_robin"), ConfigError);
  EXPECT_THROW(plan_shares(mono(3, "xx"), kLangs, ShareMode::equal_shares, 1), ConfigError);
}

TEST(Synthesis, BackAndForwardPairs) {
  const auto& g = generator();
  const auto m = mono(12);
  const auto plan = plan_shares(m, g.model.config.languages, ShareMode::equal_shares, 3);
  GenerateOptions o;
  const auto s = generate(g.model, g.subword, m, plan, o, 1);
  EXPECT_EQ(s.planned, 12u);
  EXPECT_EQ(s.generator_id, g.model.fingerprint());
  EXPECT_EQ(s.pairs.size(), 2 * (12 - s.dropped_empty));
  for (const auto& p : s.pairs) {
    if (p.origin == Origin::back_translated) {
      EXPECT_EQ(p.tgt_lang, LangId("vro"));
      EXPECT_NE(std::find(m.lines.begin(), m.lines.end(), p.tgt), m.lines.end());
    } else {
      ASSERT_EQ(p.origin, Origin::forward_translated);
      EXPECT_EQ(p.src_lang, LangId("vro"));
    }
    EXPECT_FALSE(p.src.empty());
    EXPECT_FALSE(p.tgt.empty());
  }
  o.forward_translation = false;
  const auto bt = generate(g.model, g.subword, m, plan, o, 1);
  EXPECT_EQ(bt.pairs.size(), 12 - bt.dropped_empty);
}

TEST(Synthesis, MergeAppendsAndCounts) {
  ParallelCorpus h{Direction::parse("et-vro"), {}};
  h.add("a", "b");
  SyntheticCorpus s;
  s.pairs = {{LangId("et"), LangId("vro"), "x", "y", Origin::back_translated},
             {LangId("vro"), LangId("et"), "y", "x", Origin::forward_translated},
             {LangId("fi"), LangId("vro"), "z", "w", Origin::back_translated}};
  const std::vector<ParallelCorpus> human = {h};
  const std::vector<SyntheticCorpus> syn = {s};
  const auto m = merge(human, syn);
  ASSERT_EQ(m.corpora.size(), 3u);
  EXPECT_EQ(m.corpora[0].direction.str(), "et-vro");
  EXPECT_EQ(m.corpora[0].pairs[0].src, "a");
  EXPECT_EQ(m.corpora[0].size(), 2u);
  EXPECT_EQ(m.corpora[1].direction.str(), "fi-vro");
  EXPECT_EQ(m.corpora[2].direction.str(), "vro-et");
  EXPECT_EQ(m.counts[0].human, 1u);
  EXPECT_EQ(m.counts[0].synthetic, 1u);
}

TEST(Synthesis, SecondIterationInput) {
  const auto first = mono(20);
  MonoCorpus second{LangId("vro"), {"uus 1", "uus 2"}};
  const auto in = second_iteration_input(first, second, 4);
  ASSERT_EQ(in.size(), 22u);
  EXPECT_EQ(in.lines[20], "uus 1");
  auto head = std::vector<std::string>(in.lines.begin(), in.lines.begin() + 20);
  EXPECT_TRUE(std::is_permutation(head.begin(), head.end(), first.lines.begin()));
  EXPECT_THROW(second_iteration_input(first, mono(2, "et"), 4), ConfigError);
}

TEST(Synthesis, IterateNeedsFirstModel) {
  const auto& g = generator();
  EXPECT_THROW(iterate(nullptr, g.subword, mono(4), mono(2), kLangs, ShareMode::equal_shares, 1, {}), StateError);
  const auto s = iterate(&g.model, g.subword, mono(4), mono(2), kLangs, ShareMode::equal_shares, 1, {});
  EXPECT_EQ(s.iteration, 2);
  EXPECT_EQ(s.planned, 6u);
}

TEST(Synthesis, SaveLoadRoundTrip) {
  const auto& g = generator();
  const auto m = mono(9);
  const auto s = generate(g.model, g.subword, m, plan_shares(m, kLangs, ShareMode::uniform_random, 2), {}, 1);
  const auto dir = fs::temp_directory_path() / "lowmt_synth_test";
  fs::remove_all(dir);
  save(dir, s);
  const auto back = load(dir);
  EXPECT_EQ(back.generator_id, s.generator_id);
  EXPECT_EQ(back.mode, ShareMode::uniform_random);
  EXPECT_EQ(back.by_direction(), s.by_direction());
  fs::remove_all(dir);
}
