#include "lowmt/corpus.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

#include "lowmt/keyvalue.hpp"
#include "lowmt/util.hpp"

namespace lowmt {

LangId::LangId(std::string code) : code_(std::move(code)) {
  if (code_.empty()) throw ConfigError("language code must be nonempty");
  for (char c : code_) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    if (!ok) throw ConfigError("invalid language code '" + code_ + "'");
  }
}

Direction Direction::parse(std::string_view text) {
  const auto dash = text.find('-');
  if (dash == std::string_view::npos || text.find('-', dash + 1) != std::string_view::npos) {
    throw ConfigError("direction must look like 'src-tgt': " + std::string(text));
  }
  Direction d{LangId(std::string(text.substr(0, dash))), LangId(std::string(text.substr(dash + 1)))};
  if (d.src == d.tgt) throw ConfigError("direction has identical languages: " + std::string(text));
  return d;
}

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::human: return "human";
    case Origin::back_translated: return "bt";
    case Origin::forward_translated: return "ft";
  }
  return "human";
}

Origin origin_from_string(std::string_view s) {
  if (s == "human") return Origin::human;
  if (s == "bt") return Origin::back_translated;
  if (s == "ft") return Origin::forward_translated;
  throw DataError("unknown origin tag '" + std::string(s) + "'");
}

void ParallelCorpus::add(std::string src, std::string tgt, Origin origin) {
  pairs.push_back({direction.src, direction.tgt, std::move(src), std::move(tgt), origin});
}

void CleaningConfig::validate() const {
  if (max_len_words == 0) throw ConfigError("max_len_words must be positive");
  if (!(len_ratio_max >= 1.0)) throw ConfigError("len_ratio_max must be >= 1");
}

namespace corpus {
namespace {

std::string checked_content(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("missing file " + path.string());
  std::string content = read_file(path);
  if (auto bad = utf8_invalid_offset(content)) {
    throw DataError(path.string() + ": invalid UTF-8 at byte offset " + std::to_string(*bad));
  }
  return content;
}

std::vector<std::string> content_lines(const std::string& content) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    if (nl == std::string::npos) nl = content.size();
    lines.emplace_back(trim(std::string_view(content).substr(start, nl - start)));
    start = nl + 1;
  }
  return lines;
}

void check_line_text(const std::string& s, bool tsv) {
  if (s.find('\n') != std::string::npos || (tsv && s.find('\t') != std::string::npos)) {
    throw DataError("sentence contains a line or field separator: " + s.substr(0, 40));
  }
}

}  // namespace

MonoCorpus load_mono(const std::filesystem::path& path, const LangId& lang) {
  MonoCorpus m{lang, {}};
  for (auto& line : content_lines(checked_content(path))) {
    if (!line.empty()) m.lines.push_back(std::move(line));
  }
  return m;
}

void save_mono(const std::filesystem::path& path, const MonoCorpus& m) {
  for (const auto& l : m.lines) check_line_text(l, false);
  write_lines(path, m.lines);
}

ParallelCorpus load_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                             const Direction& direction) {
  auto src = content_lines(checked_content(src_path));
  auto tgt = content_lines(checked_content(tgt_path));
  if (src.size() != tgt.size()) {
    throw DataError("alignment error: " + src_path.string() + " has " + std::to_string(src.size()) +
                    " lines but " + tgt_path.string() + " has " + std::to_string(tgt.size()));
  }
  ParallelCorpus c{direction, {}};
  c.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) c.add(std::move(src[i]), std::move(tgt[i]));
  return c;
}

void save_parallel(const std::filesystem::path& src_path, const std::filesystem::path& tgt_path,
                   const ParallelCorpus& c) {
  std::vector<std::string> src, tgt;
  src.reserve(c.size());
  tgt.reserve(c.size());
  for (const auto& p : c.pairs) {
    check_line_text(p.src, false);
    check_line_text(p.tgt, false);
    src.push_back(p.src);
    tgt.push_back(p.tgt);
  }
  write_lines(src_path, src);
  write_lines(tgt_path, tgt);
}

ParallelCorpus load_parallel_tsv(const std::filesystem::path& path, const Direction& direction) {
  ParallelCorpus c{direction, {}};
  std::size_t lineno = 0;
  for (const auto& line : content_lines(checked_content(path))) {
    ++lineno;
    if (line.empty()) continue;
    auto cols = split(line, '\t');
    if (cols.size() < 2 || cols.size() > 3) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected 2 or 3 tab-separated columns");
    }
    const Origin origin = cols.size() == 3 ? origin_from_string(cols[2]) : Origin::human;
    c.add(std::string(trim(cols[0])), std::string(trim(cols[1])), origin);
  }
  return c;
}

void save_parallel_tsv(const std::filesystem::path& path, const ParallelCorpus& c) {
  std::string out;
  for (const auto& p : c.pairs) {
    check_line_text(p.src, true);
    check_line_text(p.tgt, true);
    out += p.src;
    out += '\t';
    out += p.tgt;
    if (p.origin != Origin::human) {
      out += '\t';
      out += to_string(p.origin);
    }
    out += '\n';
  }
  write_file(path, out);
}

Filtered<DedupReport> dedup(const ParallelCorpus& c) {
  Filtered<DedupReport> out{{c.direction, {}}, {}};
  std::unordered_set<std::string> seen;
  seen.reserve(c.size() * 2);
  for (const auto& p : c.pairs) {
    std::string key = nfc(trim(p.src));
    key += '\x1f';
    key += nfc(trim(p.tgt));
    if (seen.insert(std::move(key)).second) out.corpus.pairs.push_back(p);
  }
  out.report.before = c.size();
  out.report.after = out.corpus.size();
  out.report.eliminated = out.report.before - out.report.after;
  return out;
}

MonoCorpus dedup(const MonoCorpus& m) {
  MonoCorpus out{m.lang, {}};
  std::unordered_set<std::string> seen;
  for (const auto& l : m.lines) {
    if (seen.insert(nfc(trim(l))).second) out.lines.push_back(l);
  }
  return out;
}

Filtered<CleanReport> clean(const ParallelCorpus& c, const CleaningConfig& cfg) {
  cfg.validate();
  Filtered<CleanReport> out{{c.direction, {}}, {}};
  out.report.before = c.size();
  for (const auto& p : c.pairs) {
    SentencePair q = p;
    q.src = std::string(trim(q.src));
    q.tgt = std::string(trim(q.tgt));
    if (cfg.normalize_unicode) {
      q.src = nfc(q.src);
      q.tgt = nfc(q.tgt);
    }
    const std::size_t ns = word_count(q.src);
    const std::size_t nt = word_count(q.tgt);
    if (ns == 0 || nt == 0) {
      ++out.report.empty_side;
      continue;
    }
    if (ns > cfg.max_len_words || nt > cfg.max_len_words) {
      ++out.report.too_long;
      continue;
    }
    const double ratio = static_cast<double>(std::max(ns, nt)) / static_cast<double>(std::min(ns, nt));
    if (ratio > cfg.len_ratio_max) {
      ++out.report.bad_ratio;
      continue;
    }
    out.corpus.pairs.push_back(std::move(q));
  }
  out.report.after = out.corpus.size();
  return out;
}

ParallelCorpus reverse(const ParallelCorpus& c) {
  ParallelCorpus r{c.direction.reversed(), {}};
  r.pairs.reserve(c.size());
  for (const auto& p : c.pairs) r.pairs.push_back({p.tgt_lang, p.src_lang, p.tgt, p.src, p.origin});
  return r;
}

std::vector<std::size_t> largest_remainder_quotas(std::span<const std::size_t> sizes, std::size_t total) {
  std::vector<std::size_t> quotas(sizes.size(), 0);
  std::size_t grand = 0;
  for (auto s : sizes) grand += s;
  if (grand == 0 || total == 0) return quotas;
  // Exact integer arithmetic: quota_i = floor(total*s_i/grand), remainder = (total*s_i) mod grand.
  std::vector<std::pair<unsigned __int128, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const unsigned __int128 num = static_cast<unsigned __int128>(total) * sizes[i];
    quotas[i] = static_cast<std::size_t>(num / grand);
    assigned += quotas[i];
    rem.emplace_back(num % grand, i);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++quotas[rem[k].second];
  return quotas;
}

std::vector<HoldoutSplit> split_holdout(std::span<const ParallelCorpus> corpora, const SplitSpec& spec) {
  std::vector<std::size_t> sizes;
  std::size_t grand = 0;
  for (const auto& c : corpora) {
    sizes.push_back(c.size());
    grand += c.size();
  }
  if (spec.test_total + spec.valid_total > 0 && spec.test_total + spec.valid_total >= grand) {
    throw ConfigError("hold-out of " + std::to_string(spec.test_total + spec.valid_total) +
                      " pairs leaves no training data out of " + std::to_string(grand));
  }
  const auto test_q = largest_remainder_quotas(sizes, spec.test_total);
  const auto valid_q = largest_remainder_quotas(sizes, spec.valid_total);

  std::vector<HoldoutSplit> out;
  out.reserve(corpora.size());
  for (std::size_t ci = 0; ci < corpora.size(); ++ci) {
    const auto& c = corpora[ci];
    if (test_q[ci] + valid_q[ci] > c.size()) {
      throw ConfigError("hold-out quota " + std::to_string(test_q[ci] + valid_q[ci]) + " exceeds corpus " +
                        c.direction.str() + " of size " + std::to_string(c.size()));
    }
    std::vector<std::size_t> idx(c.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(mix_seed(spec.seed, ci));
    shuffle(idx, rng);
    std::vector<int> part(c.size(), 0);  // 0 train, 1 valid, 2 test
    for (std::size_t k = 0; k < test_q[ci]; ++k) part[idx[k]] = 2;
    for (std::size_t k = test_q[ci]; k < test_q[ci] + valid_q[ci]; ++k) part[idx[k]] = 1;
    HoldoutSplit s{{c.direction, {}}, {c.direction, {}}, {c.direction, {}}};
    for (std::size_t i = 0; i < c.size(); ++i) {
      auto& dst = part[i] == 0 ? s.train : part[i] == 1 ? s.valid : s.test;
      dst.pairs.push_back(c.pairs[i]);
    }
    out.push_back(std::move(s));
  }
  return out;
}

MonoCorpus downsample(const MonoCorpus& m, std::size_t n, std::uint64_t seed) {
  if (m.size() <= n) return m;
  std::vector<std::size_t> idx(m.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  // partial Fisher-Yates: the first n slots become a uniform sample
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + uniform_index(rng, idx.size() - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  MonoCorpus out{m.lang, {}};
  out.lines.reserve(n);
  for (auto i : idx) out.lines.push_back(m.lines[i]);
  return out;
}

std::vector<ParallelCorpus> build_multilingual(std::span<const ParallelCorpus> corpora) {
  std::set<std::pair<LangId, LangId>> seen;
  std::vector<ParallelCorpus> out;
  for (const auto& c : corpora) {
    auto key = std::minmax(c.direction.src, c.direction.tgt);
    if (!seen.insert({key.first, key.second}).second) {
      throw ConfigError("duplicate language pair " + key.first.code() + "-" + key.second.code());
    }
    out.push_back(c);
    out.push_back(reverse(c));
  }
  return out;
}

std::string clean_report_tsv(std::span<const std::pair<Direction, CleanReport>> rows) {
  std::ostringstream os;
  os << "pair\tbefore\tafter\teliminated\tempty_side\ttoo_long\tbad_ratio\n";
  for (const auto& [d, r] : rows) {
    os << d.str() << '\t' << r.before << '\t' << r.after << '\t' << (r.before - r.after) << '\t' << r.empty_side
       << '\t' << r.too_long << '\t' << r.bad_ratio << '\n';
  }
  return os.str();
}

std::string dedup_report_tsv(std::span<const std::pair<Direction, DedupReport>> rows) {
  std::ostringstream os;
  os << "pair\tbefore\tafter\teliminated\n";
  DedupReport total;
  for (const auto& [d, r] : rows) {
    os << d.str() << '\t' << r.before << '\t' << r.after << '\t' << r.eliminated << '\n';
    total.before += r.before;
    total.after += r.after;
    total.eliminated += r.eliminated;
  }
  os << "overall\t" << total.before << '\t' << total.after << '\t' << total.eliminated << '\n';
  return os.str();
}

}  // namespace corpus

CorpusManifest CorpusManifest::load(const std::filesystem::path& path) {
  const auto kv = KeyValue::load(path);
  CorpusManifest m;
  m.base_dir = path.parent_path();
  for (const auto& code : kv.get_list("languages")) m.languages.emplace_back(code);
  if (m.languages.size() < 2) throw ConfigError(path.string() + ": manifest declares fewer than 2 languages");

  std::vector<std::string> pair_names;
  for (const auto& key : kv.keys_with_prefix("pair.")) {
    auto parts = split(key, '.');
    if (parts.size() != 3) throw ConfigError(path.string() + ": malformed key " + key);
    if (std::find(pair_names.begin(), pair_names.end(), parts[1]) == pair_names.end()) pair_names.push_back(parts[1]);
  }
  for (const auto& name : pair_names) {
    PairEntry e;
    e.pair = Direction::parse(name);
    if (!m.has_language(e.pair.src) || !m.has_language(e.pair.tgt)) {
      throw ConfigError(path.string() + ": pair " + name + " uses an undeclared language");
    }
    const std::string pre = "pair." + name + ".";
    e.role = kv.get_or(pre + "role", "low");
    if (e.role != "high" && e.role != "low" && e.role != "zero") {
      throw ConfigError(path.string() + ": pair " + name + " has unknown role " + e.role);
    }
    if (auto v = kv.get(pre + "train")) e.train = *v;
    if (auto v = kv.get(pre + "valid")) e.valid = *v;
    if (auto v = kv.get(pre + "test")) e.test = *v;
    m.pairs.push_back(std::move(e));
  }

  std::vector<std::string> mono_langs;
  for (const auto& key : kv.keys_with_prefix("mono.")) {
    auto parts = split(key, '.');
    if (parts.size() != 3) throw ConfigError(path.string() + ": malformed key " + key);
    if (std::find(mono_langs.begin(), mono_langs.end(), parts[1]) == mono_langs.end()) mono_langs.push_back(parts[1]);
  }
  for (const auto& code : mono_langs) {
    MonoEntry e{LangId(code), {}};
    if (!m.has_language(e.lang)) throw ConfigError(path.string() + ": mono language " + code + " undeclared");
    for (int set = 1;; ++set) {
      auto v = kv.get("mono." + code + ".set" + std::to_string(set));
      if (!v) break;
      e.sets.emplace_back(*v);
    }
    m.mono.push_back(std::move(e));
  }
  return m;
}

ParallelCorpus CorpusManifest::load_pair_file(const std::string& value, const Direction& direction) const {
  const auto paths = split_ws(value);
  if (paths.size() == 1) return corpus::load_parallel_tsv(resolve(std::string(paths[0])), direction);
  if (paths.size() == 2) return corpus::load_parallel(resolve(std::string(paths[0])), resolve(std::string(paths[1])), direction);
  throw ConfigError("manifest: expected one TSV path or two aligned paths, got '" + value + "'");
}

void CorpusManifest::save(const std::filesystem::path& path) const {
  KeyValue kv;
  std::string langs;
  for (const auto& l : languages) langs += (langs.empty() ? "" : " ") + l.code();
  kv.set("languages", langs);
  for (const auto& e : pairs) {
    const std::string pre = "pair." + e.pair.str() + ".";
    kv.set(pre + "role", e.role);
    if (e.train) kv.set(pre + "train", e.train->generic_string());
    if (e.valid) kv.set(pre + "valid", e.valid->generic_string());
    if (e.test) kv.set(pre + "test", e.test->generic_string());
  }
  for (const auto& e : mono) {
    for (std::size_t i = 0; i < e.sets.size(); ++i) {
      kv.set("mono." + e.lang.code() + ".set" + std::to_string(i + 1), e.sets[i].generic_string());
    }
  }
  kv.save(path);
}

std::filesystem::path CorpusManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

const PairEntry* CorpusManifest::find_pair(const Direction& unordered) const {
  for (const auto& e : pairs) {
    if (e.pair == unordered || e.pair == unordered.reversed()) return &e;
  }
  return nullptr;
}

bool CorpusManifest::has_language(const LangId& l) const {
  return std::find(languages.begin(), languages.end(), l) != languages.end();
}

}  // namespace lowmt
