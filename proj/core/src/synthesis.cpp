#include "lowmt/synthesis.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "lowmt/decoding.hpp"
#include "lowmt/util.hpp"

namespace lowmt::synthesis {

std::string_view to_string(ShareMode m) {
  return m == ShareMode::equal_shares ? "equal_shares" : "uniform_random";
}

ShareMode share_mode_from_string(std::string_view s) {
  if (s == "equal_shares") return ShareMode::equal_shares;
  if (s == "uniform_random") return ShareMode::uniform_random;
  throw ConfigError("unknown share mode '" + std::string(s) + "' (expected equal_shares or uniform_random)");
}

std::vector<std::size_t> SharePlan::counts() const {
  std::vector<std::size_t> c(targets.size(), 0);
  for (int a : assignment) ++c[static_cast<std::size_t>(a)];
  return c;
}

SharePlan plan_shares(const MonoCorpus& m, std::span<const LangId> languages, ShareMode mode, std::uint64_t seed) {
  std::vector<LangId> langs(languages.begin(), languages.end());
  std::sort(langs.begin(), langs.end());
  langs.erase(std::unique(langs.begin(), langs.end()), langs.end());
  if (langs.size() < 2) throw ConfigError("share planning needs at least 2 languages");
  if (!std::binary_search(langs.begin(), langs.end(), m.lang)) {
    throw ConfigError("monolingual language '" + m.lang.code() + "' is not among the experiment languages");
  }
  SharePlan plan;
  plan.source = m.lang;
  plan.mode = mode;
  plan.seed = seed;
  for (const auto& l : langs) {
    if (l != m.lang) plan.targets.push_back(l);
  }
  const std::size_t n = m.lines.size();
  const std::size_t k = plan.targets.size();
  plan.assignment.assign(n, 0);
  Rng rng(mix_seed(seed, 0x5a4e));
  if (mode == ShareMode::equal_shares) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    for (std::size_t p = 0; p < n; ++p) plan.assignment[order[p]] = static_cast<int>(p % k);
  } else {
    for (std::size_t i = 0; i < n; ++i) plan.assignment[i] = static_cast<int>(uniform_index(rng, k));
  }
  return plan;
}

std::vector<ParallelCorpus> SyntheticCorpus::by_direction() const {
  std::map<Direction, ParallelCorpus> groups;
  for (const auto& p : pairs) {
    const Direction d{p.src_lang, p.tgt_lang};
    auto& c = groups[d];
    c.direction = d;
    c.pairs.push_back(p);
  }
  std::vector<ParallelCorpus> out;
  for (auto& [d, c] : groups) out.push_back(std::move(c));
  return out;
}

KeyValue SyntheticCorpus::provenance() const {
  KeyValue kv;
  kv.set("generator", generator_id);
  kv.set("iteration", std::to_string(iteration));
  kv.set("mode", std::string(to_string(mode)));
  kv.set("seed", std::to_string(seed));
  kv.set("planned", std::to_string(planned));
  kv.set("dropped_empty", std::to_string(dropped_empty));
  kv.set("failed", std::to_string(failed));
  kv.set("pairs", std::to_string(pairs.size()));
  return kv;
}

SyntheticCorpus generate(const nmt::Checkpoint& model, const SubwordModel& subword, const MonoCorpus& m,
                         const SharePlan& plan, const GenerateOptions& opts, int iteration) {
  if (plan.assignment.size() != m.lines.size()) throw ConfigError("share plan does not match the monolingual corpus");
  for (const auto& t : plan.targets) model.config.factor_of(t);

  SyntheticCorpus out;
  out.generator_id = model.fingerprint();
  out.iteration = iteration;
  out.mode = plan.mode;
  out.seed = plan.seed;
  out.planned = m.lines.size();

  std::vector<LangId> tgt_langs;
  tgt_langs.reserve(m.lines.size());
  for (int a : plan.assignment) tgt_langs.push_back(plan.targets[static_cast<std::size_t>(a)]);

  std::vector<std::optional<std::string>> outputs(m.lines.size());
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, opts.batch_rows));
  for (std::size_t begin = 0; begin < m.lines.size(); begin += chunk) {
    const std::size_t end = std::min(m.lines.size(), begin + chunk);
    std::span<const std::string> src(m.lines.data() + begin, end - begin);
    std::span<const LangId> tl(tgt_langs.data() + begin, end - begin);
    try {
      const auto res = nmt::translate_batch(model.params, model.config, subword, src, tl, opts.max_len,
                                            static_cast<int>(chunk));
      for (std::size_t i = 0; i < res.size(); ++i) outputs[begin + i] = res[i].text;
    } catch (const Error&) {
      // isolate the failing lines
      for (std::size_t i = begin; i < end; ++i) {
        try {
          nmt::DecodeOptions d;
          d.max_len = opts.max_len;
          outputs[i] = nmt::translate(model.params, model.config, subword, m.lines[i], tgt_langs[i], d).text;
        } catch (const Error&) {
          ++out.failed;
        }
      }
    }
  }
  if (out.failed * 10 > m.lines.size()) {
    throw DataError("synthesis: " + std::to_string(out.failed) + " of " + std::to_string(m.lines.size()) +
                    " lines failed to decode");
  }
  for (std::size_t i = 0; i < m.lines.size(); ++i) {
    if (!outputs[i]) continue;
    const std::string y(trim(*outputs[i]));
    if (y.empty()) {
      ++out.dropped_empty;
      continue;
    }
    const auto& tl = tgt_langs[i];
    out.pairs.push_back({tl, m.lang, y, m.lines[i], Origin::back_translated});
    if (opts.forward_translation) out.pairs.push_back({m.lang, tl, m.lines[i], y, Origin::forward_translated});
  }
  return out;
}

SyntheticCorpus combine(std::span<const SyntheticCorpus> parts) {
  SyntheticCorpus out;
  if (parts.empty()) return out;
  out.generator_id = parts.front().generator_id;
  out.iteration = parts.front().iteration;
  out.mode = parts.front().mode;
  out.seed = parts.front().seed;
  for (const auto& p : parts) {
    if (p.generator_id != out.generator_id) throw StateError("cannot combine synthetic corpora from different generators");
    out.pairs.insert(out.pairs.end(), p.pairs.begin(), p.pairs.end());
    out.planned += p.planned;
    out.dropped_empty += p.dropped_empty;
    out.failed += p.failed;
  }
  return out;
}

Merged merge(std::span<const ParallelCorpus> human, std::span<const SyntheticCorpus> synthetic) {
  Merged out;
  std::map<Direction, std::size_t> index;
  for (const auto& c : human) {
    if (index.contains(c.direction)) {
      auto& dst = out.corpora[index[c.direction]];
      dst.pairs.insert(dst.pairs.end(), c.pairs.begin(), c.pairs.end());
      out.counts[index[c.direction]].human += c.size();
      continue;
    }
    index[c.direction] = out.corpora.size();
    out.corpora.push_back(c);
    out.counts.push_back({c.direction, c.size(), 0});
  }
  std::map<Direction, std::vector<const SentencePair*>> extra;
  for (const auto& s : synthetic) {
    for (const auto& p : s.pairs) {
      const Direction d{p.src_lang, p.tgt_lang};
      if (auto it = index.find(d); it != index.end()) {
        out.corpora[it->second].pairs.push_back(p);
        ++out.counts[it->second].synthetic;
      } else {
        extra[d].push_back(&p);
      }
    }
  }
  for (const auto& [d, ps] : extra) {
    ParallelCorpus c;
    c.direction = d;
    for (const auto* p : ps) c.pairs.push_back(*p);
    out.counts.push_back({d, 0, c.size()});
    out.corpora.push_back(std::move(c));
  }
  return out;
}

MonoCorpus second_iteration_input(const MonoCorpus& first, const MonoCorpus& second, std::uint64_t seed) {
  if (first.lang != second.lang) throw ConfigError("monolingual sets of different languages cannot be combined");
  MonoCorpus out = first;
  Rng rng(mix_seed(seed, 0x2e75));
  shuffle(out.lines, rng);
  out.lines.insert(out.lines.end(), second.lines.begin(), second.lines.end());
  return out;
}

SyntheticCorpus iterate(const nmt::Checkpoint* iteration1_model, const SubwordModel& subword,
                        const MonoCorpus& first, const MonoCorpus& second, std::span<const LangId> languages,
                        ShareMode mode, std::uint64_t seed, const GenerateOptions& opts) {
  if (!iteration1_model) throw StateError("second synthesis iteration requires the iteration-1 model");
  const auto input = second_iteration_input(first, second, seed);
  const auto plan = plan_shares(input, languages, mode, mix_seed(seed, 2));
  return generate(*iteration1_model, subword, input, plan, opts, 2);
}

void save(const std::filesystem::path& dir, const SyntheticCorpus& s) {
  std::filesystem::create_directories(dir);
  std::string listing;
  for (const auto& c : s.by_direction()) {
    corpus::save_parallel_tsv(dir / (c.direction.str() + ".tsv"), c);
    listing += (listing.empty() ? "" : " ") + c.direction.str();
  }
  auto kv = s.provenance();
  kv.set("directions", listing);
  kv.save(dir / "provenance.txt");
}

SyntheticCorpus load(const std::filesystem::path& dir) {
  const auto kv = KeyValue::load(dir / "provenance.txt");
  SyntheticCorpus s;
  s.generator_id = kv.get_or("generator", "");
  s.iteration = static_cast<int>(kv.get_int("iteration", 1));
  s.mode = share_mode_from_string(kv.get_or("mode", "equal_shares"));
  s.seed = kv.get_u64("seed", 0);
  s.planned = static_cast<std::size_t>(kv.get_int("planned", 0));
  s.dropped_empty = static_cast<std::size_t>(kv.get_int("dropped_empty", 0));
  s.failed = static_cast<std::size_t>(kv.get_int("failed", 0));
  for (const auto& d : kv.get_list("directions")) {
    const auto c = corpus::load_parallel_tsv(dir / (d + ".tsv"), Direction::parse(d));
    s.pairs.insert(s.pairs.end(), c.pairs.begin(), c.pairs.end());
  }
  return s;
}

}  // namespace lowmt::synthesis
