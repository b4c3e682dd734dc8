#include "lowmt/toy.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace lowmt::toy {
namespace {

constexpr Pos kAllPos[] = {Pos::det, Pos::adj, Pos::noun, Pos::verb, Pos::adv, Pos::conj};

std::string_view pos_name(Pos p) {
  switch (p) {
    case Pos::det: return "det";
    case Pos::adj: return "adj";
    case Pos::noun: return "noun";
    case Pos::verb: return "verb";
    case Pos::adv: return "adv";
    case Pos::conj: return "conj";
  }
  return "?";
}

struct Alphabet {
  std::vector<std::string> consonants;
  std::vector<std::string> vowels;
};

Alphabet alphabet_for(const std::string& family) {
  if (family == "saami") {
    return {{"b", "d", "g", "č", "š", "đ", "ŋ", "l", "m", "n", "r", "s", "v", "j"}, {"a", "e", "i", "o", "u", "á"}};
  }
  return {{"p", "t", "k", "s", "l", "m", "n", "v", "h", "j", "r"}, {"a", "e", "i", "o", "u", "ä"}};
}

std::vector<std::pair<std::string, std::string>> parse_shift(const std::string& shift) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto item : split_ws(shift)) {
    const auto gt = item.find('>');
    if (gt == std::string_view::npos || gt == 0 || gt + 1 == item.size()) {
      throw ConfigError("toy spec: malformed shift '" + std::string(item) + "' (expected from>to)");
    }
    out.emplace_back(std::string(item.substr(0, gt)), std::string(item.substr(gt + 1)));
  }
  return out;
}

std::string apply_shift(const std::string& stem, const std::vector<std::pair<std::string, std::string>>& shift) {
  std::string out;
  for (const auto& ch : utf8_chars(stem)) {
    std::string rep = ch;
    for (const auto& [from, to] : shift) {
      if (ch == from) {
        rep = to;
        break;
      }
    }
    out += rep;
  }
  return out;
}

ToyLanguage make_language(const std::string& code, const std::string& family, const std::string& shift,
                          std::map<Pos, std::string> endings, const std::string& plural, bool adj_after_noun) {
  return ToyLanguage{LangId(code), family, shift, std::move(endings), plural, adj_after_noun};
}

std::string empty_dash(const std::string& s) { return s.empty() ? "-" : s; }
std::string dash_empty(const std::string& s) { return s == "-" ? "" : s; }

}  // namespace

ToyLanguageSpec ToyLanguageSpec::desk_default() {
  ToyLanguageSpec s;
  using P = Pos;
  s.languages = {
      make_language("la", "finnic", "",
                    {{P::noun, ""}, {P::adj, "ne"}, {P::verb, "b"}, {P::adv, "sti"}, {P::det, ""}, {P::conj, ""}}, "d",
                    false),
      make_language("lb", "finnic", "k>g t>d",
                    {{P::noun, "i"}, {P::adj, "inen"}, {P::verb, "ä"}, {P::adv, "isti"}, {P::det, "e"}, {P::conj, "ja"}},
                    "t", false),
      make_language("lc", "finnic", "o>õ",
                    {{P::noun, "q"}, {P::adj, "nõ"}, {P::verb, "s"}, {P::adv, "stõ"}, {P::det, "õ"}, {P::conj, "q"}},
                    "tq", false),
      make_language("ld", "saami", "",
                    {{P::noun, ""}, {P::adj, "s"}, {P::verb, "it"}, {P::adv, "t"}, {P::det, ""}, {P::conj, ""}}, "t",
                    true),
      make_language("le", "saami", "č>c š>ž",
                    {{P::noun, "e"}, {P::adj, "es"}, {P::verb, "eh"}, {P::adv, "ht"}, {P::det, "e"}, {P::conj, "e"}},
                    "h", true),
  };
  s.pairs = {
      {Direction::parse("la-lb"), "high", 3000, 0, 0},
      {Direction::parse("la-lc"), "low", 700, 0, 0},
      {Direction::parse("lb-ld"), "low", 800, 0, 0},
      {Direction::parse("lb-le"), "low", 250, 0, 0},
      {Direction::parse("ld-le"), "low", 500, 0, 0},
      {Direction::parse("lc-ld"), "zero", 0, 40, 100},
  };
  s.mono_set1 = {{"la", 1000}, {"lb", 1000}, {"lc", 1500}, {"ld", 600}, {"le", 800}};
  s.mono_set2 = {{"la", 250}, {"lb", 250}, {"lc", 100}, {"ld", 150}, {"le", 150}};
  return s;
}

const ToyLanguage& ToyLanguageSpec::language(const LangId& code) const {
  for (const auto& l : languages) {
    if (l.code == code) return l;
  }
  throw ConfigError("toy spec: unknown language '" + code.code() + "'");
}

KeyValue ToyLanguageSpec::to_kv() const {
  KeyValue kv;
  std::string codes;
  for (const auto& l : languages) codes += (codes.empty() ? "" : " ") + l.code.code();
  kv.set("languages", codes);
  for (const auto& l : languages) {
    const std::string p = "lang." + l.code.code() + ".";
    kv.set(p + "family", l.family);
    kv.set(p + "shift", empty_dash(l.shift));
    for (Pos pos : kAllPos) kv.set(p + "ending." + std::string(pos_name(pos)), empty_dash(l.endings.at(pos)));
    kv.set(p + "plural", empty_dash(l.plural));
    kv.set(p + "adj_after_noun", l.adj_after_noun ? "true" : "false");
  }
  for (const auto& pr : pairs) {
    kv.set("pair." + pr.pair.str(), pr.role + " " + std::to_string(pr.train) + " " + std::to_string(pr.valid) + " " +
                                        std::to_string(pr.test));
  }
  for (const auto& [code, n] : mono_set1) {
    const auto it = mono_set2.find(code);
    kv.set("mono." + code, std::to_string(n) + " " + std::to_string(it == mono_set2.end() ? 0 : it->second));
  }
  kv.set("nouns", std::to_string(nouns));
  kv.set("verbs", std::to_string(verbs));
  kv.set("adjectives", std::to_string(adjectives));
  kv.set("adverbs", std::to_string(adverbs));
  kv.set("determiners", std::to_string(determiners));
  kv.set("conjunctions", std::to_string(conjunctions));
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", zipf);
  kv.set("zipf", buf);
  std::snprintf(buf, sizeof buf, "%.17g", plural_rate);
  kv.set("plural_rate", buf);
  kv.set("min_words", std::to_string(min_words));
  kv.set("max_words", std::to_string(max_words));
  return kv;
}

ToyLanguageSpec ToyLanguageSpec::from_kv(const KeyValue& kv) {
  ToyLanguageSpec s;
  for (const auto& code : kv.get_list("languages")) {
    const std::string p = "lang." + code + ".";
    ToyLanguage l;
    l.code = LangId(code);
    l.family = kv.require(p + "family");
    l.shift = dash_empty(kv.get_or(p + "shift", "-"));
    for (Pos pos : kAllPos) l.endings[pos] = dash_empty(kv.get_or(p + "ending." + std::string(pos_name(pos)), "-"));
    l.plural = dash_empty(kv.get_or(p + "plural", "-"));
    l.adj_after_noun = kv.get_bool(p + "adj_after_noun", false);
    s.languages.push_back(std::move(l));
  }
  if (s.languages.size() < 2) throw ConfigError("toy spec: at least two languages are required");
  for (const auto& key : kv.keys_with_prefix("pair.")) {
    const auto fields = kv.get_list(key);
    if (fields.size() != 4) throw ConfigError("toy spec: " + key + " needs 'role train valid test'");
    ToyPair pr;
    pr.pair = Direction::parse(key.substr(5));
    pr.role = fields[0];
    if (pr.role != "high" && pr.role != "low" && pr.role != "zero") throw ConfigError("toy spec: bad role for " + key);
    pr.train = std::stoul(fields[1]);
    pr.valid = std::stoul(fields[2]);
    pr.test = std::stoul(fields[3]);
    s.language(pr.pair.src);
    s.language(pr.pair.tgt);
    s.pairs.push_back(pr);
  }
  for (const auto& key : kv.keys_with_prefix("mono.")) {
    const auto fields = kv.get_list(key);
    if (fields.empty() || fields.size() > 2) throw ConfigError("toy spec: " + key + " needs 'set1 [set2]'");
    const auto code = key.substr(5);
    s.language(LangId(code));
    s.mono_set1[code] = std::stoul(fields[0]);
    s.mono_set2[code] = fields.size() == 2 ? std::stoul(fields[1]) : 0;
  }
  s.nouns = static_cast<std::size_t>(kv.get_int("nouns", static_cast<long long>(s.nouns)));
  s.verbs = static_cast<std::size_t>(kv.get_int("verbs", static_cast<long long>(s.verbs)));
  s.adjectives = static_cast<std::size_t>(kv.get_int("adjectives", static_cast<long long>(s.adjectives)));
  s.adverbs = static_cast<std::size_t>(kv.get_int("adverbs", static_cast<long long>(s.adverbs)));
  s.determiners = static_cast<std::size_t>(kv.get_int("determiners", static_cast<long long>(s.determiners)));
  s.conjunctions = static_cast<std::size_t>(kv.get_int("conjunctions", static_cast<long long>(s.conjunctions)));
  s.zipf = kv.get_double("zipf", s.zipf);
  s.plural_rate = kv.get_double("plural_rate", s.plural_rate);
  s.min_words = static_cast<std::size_t>(kv.get_int("min_words", static_cast<long long>(s.min_words)));
  s.max_words = static_cast<std::size_t>(kv.get_int("max_words", static_cast<long long>(s.max_words)));
  if (s.min_words == 0 || s.max_words < s.min_words) throw ConfigError("toy spec: need 0 < min_words <= max_words");
  return s;
}

// ---------------------------------------------------------------------------

std::size_t ToyWorld::pos_size(Pos p) const {
  switch (p) {
    case Pos::det: return spec_.determiners;
    case Pos::adj: return spec_.adjectives;
    case Pos::noun: return spec_.nouns;
    case Pos::verb: return spec_.verbs;
    case Pos::adv: return spec_.adverbs;
    case Pos::conj: return spec_.conjunctions;
  }
  return 0;
}

ToyWorld::ToyWorld(ToyLanguageSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  for (Pos p : kAllPos) {
    if (pos_size(p) == 0) throw ConfigError("toy spec: every part of speech needs at least one concept");
  }
  // stems: two CV syllables, unique within a family across all parts of speech
  std::set<std::string> families;
  for (const auto& l : spec_.languages) families.insert(l.family);
  for (const auto& fam : families) {
    Fnv1a h;
    h.update(fam);
    Rng rng(mix_seed(seed, h.digest()));
    const auto abc = alphabet_for(fam);
    std::set<std::string> used;
    for (Pos p : kAllPos) {
      auto& list = stems_[fam][p];
      const std::size_t syllables = (p == Pos::det || p == Pos::conj) ? 1 : 2;
      std::size_t attempts = 0;
      while (list.size() < pos_size(p)) {
        if (++attempts > 1000000) throw ConfigError("toy spec: cannot draw enough distinct stems for family " + fam);
        std::string s;
        for (std::size_t k = 0; k < syllables; ++k) {
          s += abc.consonants[uniform_index(rng, abc.consonants.size())];
          s += abc.vowels[uniform_index(rng, abc.vowels.size())];
        }
        if (used.insert(s).second) list.push_back(s);
      }
    }
  }
  // injectivity per language, and the surface lexicons
  for (const auto& l : spec_.languages) {
    std::map<std::string, std::string> seen;
    auto& lex = lexicons_[l.code.code()];
    for (Pos p : kAllPos) {
      for (std::size_t id = 0; id < pos_size(p); ++id) {
        for (bool plural : {false, true}) {
          if (plural && p != Pos::noun) continue;
          const auto w = word({p, id, plural}, l.code);
          const std::string what = std::string(pos_name(p)) + " " + std::to_string(id) + (plural ? " pl" : "");
          auto [it, fresh] = seen.emplace(w, what);
          if (!fresh) {
            throw ConfigError("toy spec: language " + l.code.code() + " renders both " + it->second + " and " + what +
                              " as '" + w + "'");
          }
          lex.push_back(w);
        }
      }
    }
    std::sort(lex.begin(), lex.end());
    for (const auto& w : lex) owners_[w].push_back(l.code.code());
  }
  for (Pos p : kAllPos) {
    std::vector<double> cdf;
    double acc = 0;
    for (std::size_t r = 0; r < pos_size(p); ++r) {
      acc += 1.0 / std::pow(static_cast<double>(r + 1), spec_.zipf);
      cdf.push_back(acc);
    }
    for (auto& c : cdf) c /= acc;
    cdf_[p] = std::move(cdf);
  }
}

std::string ToyWorld::stem(const std::string& family, Pos p, std::size_t id) const {
  return stems_.at(family).at(p).at(id);
}

std::string ToyWorld::word(const Token& t, const LangId& lang) const {
  const auto& l = spec_.language(lang);
  std::string w = apply_shift(stem(l.family, t.pos, t.concept_id), parse_shift(l.shift)) + l.endings.at(t.pos);
  if (t.plural) w += l.plural;
  return w;
}

Sentence ToyWorld::sample(Rng& rng) const {
  // part-of-speech Markov chain; -1 marks the end of the sentence
  enum State { kStart = -2, kEnd = -1 };
  struct Edge {
    int to;
    double p;
  };
  const auto next = [](int from) -> std::vector<Edge> {
    switch (from) {
      case kStart: return {{int(Pos::det), 0.5}, {int(Pos::adj), 0.2}, {int(Pos::noun), 0.3}};
      case int(Pos::det): return {{int(Pos::adj), 0.4}, {int(Pos::noun), 0.6}};
      case int(Pos::adj): return {{int(Pos::adj), 0.15}, {int(Pos::noun), 0.85}};
      case int(Pos::noun): return {{int(Pos::verb), 0.7}, {int(Pos::conj), 0.15}, {kEnd, 0.15}};
      case int(Pos::verb): return {{int(Pos::det), 0.4}, {int(Pos::noun), 0.25}, {int(Pos::adv), 0.2}, {kEnd, 0.15}};
      case int(Pos::adv): return {{kEnd, 0.5}, {int(Pos::conj), 0.5}};
      case int(Pos::conj): return {{int(Pos::det), 0.5}, {int(Pos::noun), 0.5}};
      default: return {{kEnd, 1.0}};
    }
  };
  const auto draw = [&](const std::vector<double>& cdf) {
    const double u = uniform_real(rng);
    return static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin()) % cdf.size();
  };
  while (true) {
    Sentence s;
    int state = kStart;
    while (s.size() <= spec_.max_words) {
      const auto edges = next(state);
      double u = uniform_real(rng);
      int to = edges.back().to;
      for (const auto& e : edges) {
        if (u < e.p) {
          to = e.to;
          break;
        }
        u -= e.p;
      }
      if (to == kEnd) break;
      const auto pos = static_cast<Pos>(to);
      Token t{pos, draw(cdf_.at(pos)), false};
      if (pos == Pos::noun) t.plural = uniform_real(rng) < spec_.plural_rate;
      s.push_back(t);
      state = to;
    }
    // a noun phrase may not be cut off; the chain only ends after nouns, verbs and adverbs
    if (s.size() >= spec_.min_words && s.size() <= spec_.max_words && state != int(Pos::det) &&
        state != int(Pos::adj) && state != int(Pos::conj)) {
      return s;
    }
  }
}

std::string ToyWorld::render(const Sentence& s, const LangId& lang) const {
  const auto& l = spec_.language(lang);
  std::vector<const Token*> order;
  for (std::size_t i = 0; i < s.size();) {
    if (l.adj_after_noun && s[i].pos == Pos::adj) {
      std::size_t j = i;
      while (j < s.size() && s[j].pos == Pos::adj) ++j;
      if (j < s.size() && s[j].pos == Pos::noun) {
        order.push_back(&s[j]);
        for (std::size_t k = i; k < j; ++k) order.push_back(&s[k]);
        i = j + 1;
        continue;
      }
    }
    order.push_back(&s[i++]);
  }
  std::string out;
  for (const auto* t : order) {
    if (!out.empty()) out += ' ';
    out += word(*t, lang);
  }
  return out + " .";
}

const std::vector<std::string>& ToyWorld::lexicon(const LangId& lang) const {
  const auto it = lexicons_.find(lang.code());
  if (it == lexicons_.end()) throw ConfigError("toy world: unknown language '" + lang.code() + "'");
  return it->second;
}

std::optional<LangId> ToyWorld::identify(std::string_view text) const {
  std::map<std::string, std::size_t> votes;
  for (auto w : split_ws(text)) {
    const auto it = owners_.find(std::string(w));
    if (it == owners_.end()) continue;
    for (const auto& code : it->second) ++votes[code];
  }
  std::optional<LangId> best;
  std::size_t best_n = 0;
  bool tie = false;
  for (const auto& [code, n] : votes) {
    if (n > best_n) {
      best = LangId(code);
      best_n = n;
      tie = false;
    } else if (n == best_n) {
      tie = true;
    }
  }
  if (tie) return std::nullopt;
  return best;
}

std::filesystem::path generate_toy_suite(const ToyLanguageSpec& spec, std::uint64_t seed,
                                         const std::filesystem::path& out_dir) {
  const ToyWorld world(spec, seed);
  std::filesystem::create_directories(out_dir / "raw");
  std::filesystem::create_directories(out_dir / "mono");

  CorpusManifest manifest;
  manifest.base_dir = out_dir;
  for (const auto& l : spec.languages) manifest.languages.push_back(l.code);

  const auto corpus_for = [&](const Direction& d, std::size_t n, std::uint64_t salt) {
    Rng rng(mix_seed(seed, salt));
    ParallelCorpus c;
    c.direction = d;
    for (std::size_t i = 0; i < n; ++i) {
      const auto s = world.sample(rng);
      c.pairs.push_back({d.src, d.tgt, world.render(s, d.src), world.render(s, d.tgt), Origin::human});
    }
    return c;
  };
  const auto salt_of = [](const std::string& name) {
    Fnv1a h;
    h.update(name);
    return h.digest();
  };

  for (const auto& pr : spec.pairs) {
    PairEntry e;
    e.pair = pr.pair;
    e.role = pr.role;
    const std::string base = pr.pair.str();
    if (pr.role == "zero") {
      if (pr.train != 0) throw ConfigError("toy spec: zero-resource pair " + base + " cannot have training data");
      corpus::save_parallel_tsv(out_dir / "raw" / (base + ".valid.tsv"), corpus_for(pr.pair, pr.valid, salt_of(base + "/valid")));
      corpus::save_parallel_tsv(out_dir / "raw" / (base + ".test.tsv"), corpus_for(pr.pair, pr.test, salt_of(base + "/test")));
      e.valid = "raw/" + base + ".valid.tsv";
      e.test = "raw/" + base + ".test.tsv";
    } else {
      corpus::save_parallel_tsv(out_dir / "raw" / (base + ".train.tsv"), corpus_for(pr.pair, pr.train, salt_of(base + "/train")));
      e.train = "raw/" + base + ".train.tsv";
    }
    manifest.pairs.push_back(std::move(e));
  }
  for (const auto& l : spec.languages) {
    MonoEntry m;
    m.lang = l.code;
    int set_no = 1;
    for (const auto* sizes : {&spec.mono_set1, &spec.mono_set2}) {
      const auto it = sizes->find(l.code.code());
      if (it == sizes->end() || it->second == 0) {
        ++set_no;
        continue;
      }
      Rng rng(mix_seed(seed, salt_of("mono/" + l.code.code() + "/" + std::to_string(set_no))));
      MonoCorpus mc;
      mc.lang = l.code;
      for (std::size_t i = 0; i < it->second; ++i) mc.lines.push_back(world.render(world.sample(rng), l.code));
      const auto rel = "mono/" + l.code.code() + "." + std::to_string(set_no) + ".txt";
      corpus::save_mono(out_dir / rel, mc);
      m.sets.push_back(rel);
      ++set_no;
    }
    if (!m.sets.empty()) manifest.mono.push_back(std::move(m));
  }
  auto spec_kv = spec.to_kv();
  spec_kv.set("seed", std::to_string(seed));
  spec_kv.save(out_dir / "toy_spec.txt");
  const auto path = out_dir / "manifest.txt";
  manifest.save(path);
  return path;
}

}  // namespace lowmt::toy
