#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lowmt/corpus.hpp"
#include "lowmt/keyvalue.hpp"
#include "lowmt/util.hpp"

namespace lowmt::toy {

// Toy languages render one shared sequence of concepts. Languages of the
// same family draw stems from the same pool; each language then applies its
// own letter shift and part-of-speech endings, so word forms are related but
// never identical across languages. Word-level rendering is injective within
// a language, which makes every reference translation exact.

enum class Pos { det, adj, noun, verb, adv, conj };

struct ToyLanguage {
  LangId code;
  std::string family;
  /// Letter substitutions applied to stems, written "k>h t>d".
  std::string shift;
  std::map<Pos, std::string> endings;
  std::string plural;
  bool adj_after_noun = false;
};

struct ToyPair {
  Direction pair;
  std::string role;  // high | low | zero
  std::size_t train = 0;
  std::size_t valid = 0;  // zero-resource pairs only
  std::size_t test = 0;
};

struct ToyLanguageSpec {
  std::vector<ToyLanguage> languages;
  std::vector<ToyPair> pairs;
  std::map<std::string, std::size_t> mono_set1;  // per language code
  std::map<std::string, std::size_t> mono_set2;
  std::size_t nouns = 160;
  std::size_t verbs = 60;
  std::size_t adjectives = 50;
  std::size_t adverbs = 16;
  std::size_t determiners = 6;
  std::size_t conjunctions = 4;
  double zipf = 1.0;
  double plural_rate = 0.3;
  std::size_t min_words = 3;
  std::size_t max_words = 12;

  /// Five languages in two families: one high-resource pair, four
  /// low-resource pairs, one zero-resource pair.
  static ToyLanguageSpec desk_default();
  static ToyLanguageSpec from_kv(const KeyValue& kv);
  KeyValue to_kv() const;
  const ToyLanguage& language(const LangId& code) const;
};

struct Token {
  Pos pos;
  std::size_t concept_id;
  bool plural = false;
};

using Sentence = std::vector<Token>;

/// Deterministic lexicon and sentence sampler for a spec.
class ToyWorld {
 public:
  ToyWorld(ToyLanguageSpec spec, std::uint64_t seed);

  Sentence sample(Rng& rng) const;
  std::string render(const Sentence& s, const LangId& lang) const;
  std::string word(const Token& t, const LangId& lang) const;

  /// Every surface word form of a language (singular and plural).
  const std::vector<std::string>& lexicon(const LangId& lang) const;

  /// Language whose lexicon covers the most words of `text`; nullopt on ties
  /// or when no word is recognised.
  std::optional<LangId> identify(std::string_view text) const;

  const ToyLanguageSpec& spec() const { return spec_; }

 private:
  std::size_t pos_size(Pos p) const;
  std::string stem(const std::string& family, Pos p, std::size_t id) const;

  ToyLanguageSpec spec_;
  std::map<std::string, std::map<Pos, std::vector<std::string>>> stems_;  // family -> pos -> stems
  std::map<std::string, std::vector<std::string>> lexicons_;
  std::map<std::string, std::vector<std::string>> owners_;  // word -> languages using it
  std::map<Pos, std::vector<double>> cdf_;
};

/// Writes raw corpora and a manifest under `out_dir`:
///   raw/<x>-<y>.train.tsv     high and low pairs (hold-out happens in prepare)
///   raw/<x>-<y>.valid.tsv, .test.tsv   zero-resource pairs
///   mono/<l>.1.txt, mono/<l>.2.txt
///   manifest.txt, toy_spec.txt
/// Throws ConfigError when a rendering is not injective.
std::filesystem::path generate_toy_suite(const ToyLanguageSpec& spec, std::uint64_t seed,
                                         const std::filesystem::path& out_dir);

}  // namespace lowmt::toy
