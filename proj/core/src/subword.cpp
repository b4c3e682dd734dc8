#include "lowmt/subword.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "lowmt/util.hpp"

namespace lowmt {
namespace {

constexpr std::string_view kHeader = "lowmt-bpe 1";

std::uint64_t pair_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

std::string byte_token(int b) {
  static const char* hex = "0123456789ABCDEF";
  std::string s = "<0x";
  s += hex[(b >> 4) & 0xF];
  s += hex[b & 0xF];
  s += '>';
  return s;
}

// Raw chunks: each begins with ' ' (the boundary) unless it is the lone space
// of a run of spaces; a dummy leading space is added to nonempty text.
std::vector<std::string_view> raw_chunks(std::string_view text, std::string& storage) {
  std::vector<std::string_view> out;
  if (text.empty()) return out;
  storage.clear();
  storage.reserve(text.size() + 1);
  storage.push_back(' ');
  storage.append(text);
  const std::string_view s(storage);
  std::size_t i = 0;
  while (i < s.size()) {
    // s[i] == ' ' by construction
    std::size_t j = i + 1;
    while (j < s.size() && s[j] != ' ') ++j;
    out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

// Units of a raw chunk; "" stands for the boundary marker.
std::vector<std::string> chunk_units(std::string_view raw) {
  std::vector<std::string> units;
  units.emplace_back();
  std::size_t i = 1;
  while (i < raw.size()) {
    std::size_t len = utf8_sequence_length(raw, i);
    if (len == 0) len = 1;
    units.emplace_back(raw.substr(i, len));
    i += len;
  }
  return units;
}

std::string escape_token(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case ' ': out += "\\s"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_token(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out += s[i];
      continue;
    }
    if (i + 1 >= s.size()) throw DataError("bad escape in subword model");
    switch (s[++i]) {
      case '\\': out += '\\'; break;
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      case 's': out += ' '; break;
      default: throw DataError("bad escape in subword model");
    }
  }
  return out;
}

}  // namespace

namespace subword {

std::vector<std::vector<std::string>> chunk(std::string_view text) {
  std::string storage;
  std::vector<std::vector<std::string>> out;
  for (auto raw : raw_chunks(text, storage)) out.push_back(chunk_units(raw));
  return out;
}

}  // namespace subword

SubwordModel::SubwordModel() { rebuild(); }

void SubwordModel::rebuild() {
  tokens_.clear();
  ids_.clear();
  merge_table_.clear();
  tokens_ = {"<pad>", "<unk>", "<s>", "</s>"};
  for (int b = 0; b < 256; ++b) tokens_.push_back(byte_token(b));
  tokens_.emplace_back(marker);
  for (std::size_t i = 0; i < tokens_.size(); ++i) ids_.emplace(tokens_[i], static_cast<int>(i));
  for (const auto& c : chars_) {
    if (ids_.count(c)) throw DataError("duplicate character in subword model");
    ids_.emplace(c, static_cast<int>(tokens_.size()));
    tokens_.push_back(c);
  }
  for (std::size_t r = 0; r < merges_.size(); ++r) {
    const auto& [l, rt] = merges_[r];
    auto li = ids_.find(l), ri = ids_.find(rt);
    if (li == ids_.end() || ri == ids_.end()) throw DataError("merge references unknown token");
    std::string joined = l + rt;
    auto it = ids_.find(joined);
    int out_id;
    if (it == ids_.end()) {
      out_id = static_cast<int>(tokens_.size());
      ids_.emplace(joined, out_id);
      tokens_.push_back(std::move(joined));
    } else {
      out_id = it->second;
    }
    merge_table_.emplace(pair_key(li->second, ri->second), std::make_pair(static_cast<int>(r), out_id));
  }
}

SubwordModel SubwordModel::train(std::span<const std::string> texts, std::size_t vocab_size, std::uint64_t) {
  const std::size_t base = static_cast<std::size_t>(marker_id) + 1;
  if (vocab_size <= base) {
    throw ConfigError("vocab_size " + std::to_string(vocab_size) + " must exceed " + std::to_string(base) +
                      " (specials, byte fallback and boundary marker)");
  }
  if (texts.empty()) throw ConfigError("cannot train a subword model on no text");

  std::map<std::string, std::size_t> chunk_freq;
  std::string storage;
  for (const auto& t : texts) {
    for (auto raw : raw_chunks(t, storage)) ++chunk_freq[std::string(raw)];
  }

  std::map<std::string, std::size_t> char_freq;
  for (const auto& [raw, f] : chunk_freq) {
    auto units = chunk_units(raw);
    for (std::size_t i = 1; i < units.size(); ++i) {
      if (units[i] == marker || utf8_sequence_length(units[i], 0) == 0) continue;
      char_freq[units[i]] += f;
    }
  }
  std::vector<std::pair<std::string, std::size_t>> chars(char_freq.begin(), char_freq.end());
  std::stable_sort(chars.begin(), chars.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  SubwordModel m;
  m.requested_size_ = vocab_size;
  for (const auto& [c, f] : chars) {
    if (f < 2 || base + m.chars_.size() >= vocab_size) break;
    m.chars_.push_back(c);
  }
  m.rebuild();

  struct Word {
    std::vector<int> symbols;
    std::size_t freq;
  };
  std::vector<Word> words;
  words.reserve(chunk_freq.size());
  for (const auto& [raw, f] : chunk_freq) words.push_back({m.initial_symbols(chunk_units(raw)), f});

  const auto mergeable = [&](int id) { return id >= marker_id; };
  std::unordered_map<std::uint64_t, std::size_t> counts;
  while (m.tokens_.size() < vocab_size) {
    counts.clear();
    for (const auto& w : words) {
      for (std::size_t i = 0; i + 1 < w.symbols.size(); ++i) {
        if (mergeable(w.symbols[i]) && mergeable(w.symbols[i + 1])) {
          counts[pair_key(w.symbols[i], w.symbols[i + 1])] += w.freq;
        }
      }
    }
    std::uint64_t best = 0;
    std::size_t best_count = 0;
    for (const auto& [key, c] : counts) {
      if (c < best_count) continue;
      if (c == best_count) {
        const int bl = static_cast<int>(best >> 32), br = static_cast<int>(best & 0xffffffffu);
        const int kl = static_cast<int>(key >> 32), kr = static_cast<int>(key & 0xffffffffu);
        const auto& ks = m.tokens_;
        if (std::tie(ks[kl], ks[kr]) >= std::tie(ks[bl], ks[br])) continue;
      }
      best = key;
      best_count = c;
    }
    if (best_count < 2) break;

    const int left = static_cast<int>(best >> 32), right = static_cast<int>(best & 0xffffffffu);
    m.merges_.emplace_back(m.tokens_[left], m.tokens_[right]);
    std::string joined = m.tokens_[left] + m.tokens_[right];
    int out_id;
    if (auto it = m.ids_.find(joined); it != m.ids_.end()) {
      out_id = it->second;
    } else {
      out_id = static_cast<int>(m.tokens_.size());
      m.ids_.emplace(joined, out_id);
      m.tokens_.push_back(std::move(joined));
    }
    m.merge_table_.emplace(best, std::make_pair(static_cast<int>(m.merges_.size() - 1), out_id));

    for (auto& w : words) {
      auto& s = w.symbols;
      std::size_t o = 0;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
          s[o++] = out_id;
          ++i;
        } else {
          s[o++] = s[i];
        }
      }
      s.resize(o);
    }
  }
  return m;
}

std::vector<int> SubwordModel::initial_symbols(const std::vector<std::string>& units) const {
  std::vector<int> out;
  out.reserve(units.size() * 2);
  for (const auto& u : units) {
    if (u.empty()) {
      out.push_back(marker_id);
      continue;
    }
    if (u != marker && utf8_sequence_length(u, 0) == u.size()) {
      auto it = ids_.find(u);
      if (it != ids_.end() && it->second > marker_id) {
        out.push_back(it->second);
        continue;
      }
    }
    for (unsigned char b : u) out.push_back(byte_base + b);
  }
  return out;
}

void SubwordModel::apply_merges(std::vector<int>& s) const {
  if (merge_table_.empty()) return;
  for (;;) {
    int best_rank = -1, best_out = -1;
    std::uint64_t best_key = 0;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      auto it = merge_table_.find(pair_key(s[i], s[i + 1]));
      if (it != merge_table_.end() && (best_rank < 0 || it->second.first < best_rank)) {
        best_rank = it->second.first;
        best_out = it->second.second;
        best_key = it->first;
      }
    }
    if (best_rank < 0) return;
    const int left = static_cast<int>(best_key >> 32), right = static_cast<int>(best_key & 0xffffffffu);
    std::size_t o = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i + 1 < s.size() && s[i] == left && s[i + 1] == right) {
        s[o++] = best_out;
        ++i;
      } else {
        s[o++] = s[i];
      }
    }
    s.resize(o);
  }
}

std::vector<int> SubwordModel::encode(std::string_view text, bool append_eos) const {
  std::vector<int> out;
  std::string storage;
  for (auto raw : raw_chunks(text, storage)) {
    auto syms = initial_symbols(chunk_units(raw));
    apply_merges(syms);
    out.insert(out.end(), syms.begin(), syms.end());
  }
  if (append_eos) out.push_back(eos_id);
  return out;
}

std::vector<std::string> SubwordModel::encode_pieces(std::string_view text) const {
  std::vector<std::string> out;
  for (int id : encode(text)) out.push_back(tokens_[static_cast<std::size_t>(id)]);
  return out;
}

std::string SubwordModel::decode(std::span<const int> ids) const {
  std::string out;
  std::string bytes;
  const auto flush = [&] {
    std::size_t i = 0;
    while (i < bytes.size()) {
      const std::size_t len = utf8_sequence_length(bytes, i);
      if (len == 0) {
        append_utf8(out, U'\uFFFD');
        ++i;
      } else {
        out.append(bytes, i, len);
        i += len;
      }
    }
    bytes.clear();
  };
  for (int id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(tokens_.size()));
    }
    if (is_byte(id)) {
      bytes.push_back(static_cast<char>(id - byte_base));
      continue;
    }
    flush();
    if (id == unk_id) {
      append_utf8(out, U'\uFFFD');
      continue;
    }
    if (is_special(id)) continue;
    const std::string& t = tokens_[static_cast<std::size_t>(id)];
    std::size_t pos = 0;
    while (pos < t.size()) {
      if (t.compare(pos, marker.size(), marker) == 0) {
        out += ' ';
        pos += marker.size();
      } else {
        out += t[pos++];
      }
    }
  }
  flush();
  if (!out.empty() && out.front() == ' ') out.erase(0, 1);
  return out;
}

const std::string& SubwordModel::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw RangeError("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::optional<int> SubwordModel::id_of(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::string SubwordModel::serialize() const {
  std::ostringstream os;
  os << kHeader << '\n';
  os << "specials <pad> <unk> <s> </s>\n";
  os << "vocab_size " << requested_size_ << '\n';
  os << "chars " << chars_.size() << '\n';
  for (const auto& c : chars_) os << escape_token(c) << '\n';
  os << "merges " << merges_.size() << '\n';
  for (const auto& [l, r] : merges_) os << escape_token(l) << ' ' << escape_token(r) << '\n';
  return os.str();
}

SubwordModel SubwordModel::deserialize(std::string_view text) {
  auto lines = split(text, '\n');
  std::size_t i = 0;
  const auto next = [&]() -> const std::string& {
    if (i >= lines.size()) throw DataError("truncated subword model");
    return lines[i++];
  };
  if (next() != kHeader) throw DataError("not a lowmt subword model (bad header)");
  if (next() != "specials <pad> <unk> <s> </s>") throw DataError("unexpected specials line in subword model");
  const auto count_of = [&](std::string_view key) {
    const std::string& l = next();
    if (!starts_with(l, key) || l.size() <= key.size() + 1) throw DataError("expected '" + std::string(key) + "'");
    return static_cast<std::size_t>(std::stoull(l.substr(key.size() + 1)));
  };
  SubwordModel m;
  m.requested_size_ = count_of("vocab_size");
  const std::size_t nchars = count_of("chars");
  for (std::size_t k = 0; k < nchars; ++k) m.chars_.push_back(unescape_token(next()));
  const std::size_t nmerges = count_of("merges");
  for (std::size_t k = 0; k < nmerges; ++k) {
    const std::string& l = next();
    const auto sp = l.find(' ');
    if (sp == std::string::npos) throw DataError("malformed merge line");
    m.merges_.emplace_back(unescape_token(std::string_view(l).substr(0, sp)),
                           unescape_token(std::string_view(l).substr(sp + 1)));
  }
  m.rebuild();
  return m;
}

void SubwordModel::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

SubwordModel SubwordModel::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("missing subword model " + path.string());
  return deserialize(read_file(path));
}

std::string SubwordModel::fingerprint() const {
  Fnv1a h;
  h.update(serialize());
  return h.hex();
}

}  // namespace lowmt
