#include "lowmt/metrics.hpp"

#include <charconv>
#include <cmath>
#include <unordered_map>

#include "lowmt/util.hpp"

namespace lowmt::metrics {
namespace {

std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const std::size_t n = utf8_sequence_length(s, i);
    if (n == 0) {
      out.push_back(U'\uFFFD');
      ++i;
      continue;
    }
    const auto b0 = static_cast<unsigned char>(s[i]);
    char32_t cp = n == 1 ? b0 : n == 2 ? (b0 & 0x1F) : n == 3 ? (b0 & 0x0F) : (b0 & 0x07);
    for (std::size_t k = 1; k < n; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    out.push_back(cp);
    i += n;
  }
  return out;
}

std::string encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) append_utf8(out, c);
  return out;
}

// Python's str.isspace(), which also drives \s and str.split().
bool is_space(char32_t c) {
  if (c == ' ' || (c >= 0x09 && c <= 0x0D) || (c >= 0x1C && c <= 0x1F)) return true;
  if (c < 0x85) return false;
  return c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 ||
         c == 0x202F || c == 0x205F || c == 0x3000;
}

bool is_digit(char32_t c) { return c >= '0' && c <= '9'; }

// [\{-\~\[-\` -\&\(-\+\:-\@\/]
bool is_13a_symbol(char32_t c) {
  return (c >= '{' && c <= '~') || (c >= '[' && c <= '`') || (c >= ' ' && c <= '&') || (c >= '(' && c <= '+') ||
         (c >= ':' && c <= '@') || c == '/';
}

void replace_all(std::u32string& s, std::u32string_view from, std::u32string_view to) {
  std::u32string out;
  std::size_t pos = 0;
  while (true) {
    const auto hit = s.find(from, pos);
    if (hit == std::u32string::npos) break;
    out.append(s, pos, hit - pos);
    out.append(to);
    pos = hit + from.size();
  }
  out.append(s, pos, std::u32string::npos);
  s = std::move(out);
}

std::u32string rstrip(std::u32string s) {
  while (!s.empty() && is_space(s.back())) s.pop_back();
  return s;
}

std::vector<std::u32string> split_py(std::u32string_view s) {
  std::vector<std::u32string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.emplace_back(s.substr(start, i - start));
  }
  return out;
}

std::vector<std::u32string> tokenize_u32(std::u32string line) {
  replace_all(line, U"<skipped>", U"");
  replace_all(line, U"-\n", U"");
  replace_all(line, U"\n", U" ");
  replace_all(line, U"&quot;", U"\"");
  replace_all(line, U"&amp;", U"&");
  replace_all(line, U"&lt;", U"<");
  replace_all(line, U"&gt;", U">");
  line = U" " + line + U" ";

  std::u32string a;
  for (char32_t c : line) {
    if (is_13a_symbol(c)) {
      a += U' ';
      a += c;
      a += U' ';
    } else {
      a += c;
    }
  }
  // ([^0-9])([\.,]) -> \1 \2 , non-overlapping left to right
  std::u32string b;
  for (std::size_t i = 0; i < a.size();) {
    if (i + 1 < a.size() && !is_digit(a[i]) && (a[i + 1] == '.' || a[i + 1] == ',')) {
      b += a[i];
      b += U' ';
      b += a[i + 1];
      b += U' ';
      i += 2;
    } else {
      b += a[i++];
    }
  }
  // ([\.,])([^0-9]) -> " \1 \2"
  std::u32string c;
  for (std::size_t i = 0; i < b.size();) {
    if (i + 1 < b.size() && (b[i] == '.' || b[i] == ',') && !is_digit(b[i + 1])) {
      c += U' ';
      c += b[i];
      c += U' ';
      c += b[i + 1];
      i += 2;
    } else {
      c += b[i++];
    }
  }
  // ([0-9])(-) -> \1 \2
  std::u32string d;
  for (std::size_t i = 0; i < c.size();) {
    if (i + 1 < c.size() && is_digit(c[i]) && c[i + 1] == '-') {
      d += c[i];
      d += U' ';
      d += c[i + 1];
      d += U' ';
      i += 2;
    } else {
      d += c[i++];
    }
  }
  return split_py(d);
}

std::string join_key(const std::vector<std::u32string>& toks, std::size_t begin, std::size_t n) {
  std::string key;
  for (std::size_t k = 0; k < n; ++k) {
    if (k) key += ' ';
    key += encode(toks[begin + k]);
  }
  return key;
}

void check_sizes(std::size_t h, std::size_t r, const char* metric) {
  if (h != r) {
    throw DataError(std::string(metric) + ": " + std::to_string(h) + " hypotheses but " + std::to_string(r) +
                    " references");
  }
  if (h == 0) throw DataError(std::string(metric) + ": empty corpus");
}

}  // namespace

std::vector<std::string> tokenize_13a(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& t : tokenize_u32(decode(text))) out.push_back(encode(t));
  return out;
}

BleuResult bleu(std::span<const std::string> hyps, std::span<const std::string> refs) {
  check_sizes(hyps.size(), refs.size(), "bleu");
  BleuResult r;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto h = tokenize_u32(rstrip(decode(hyps[s])));
    const auto ref_text = rstrip(decode(refs[s]));
    if (refs[s].empty()) throw DataError("bleu: empty reference at line " + std::to_string(s + 1));
    const auto g = tokenize_u32(ref_text);
    r.sys_len += h.size();
    r.ref_len += g.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      std::unordered_map<std::string, std::size_t> ref_counts;
      for (std::size_t i = 0; i + n <= g.size(); ++i) ++ref_counts[join_key(g, i, n)];
      std::unordered_map<std::string, std::size_t> hyp_counts;
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hyp_counts[join_key(h, i, n)];
      for (const auto& [k, c] : hyp_counts) {
        r.total[n - 1] += c;
        if (auto it = ref_counts.find(k); it != ref_counts.end()) r.correct[n - 1] += std::min(c, it->second);
      }
    }
  }
  // Precisions follow the reference scorer; the score is assembled from
  // fractions so that identical corpora give exactly 100.
  constexpr double kLogZero = -9999999999.0;
  double smooth = 1.0;
  double log_sum = 0;
  for (std::size_t n = 0; n < 4; ++n) {
    double frac = 0;
    if (r.total[n] == 0) {
      // later orders stay at zero
      for (std::size_t m = n; m < 4; ++m) log_sum += kLogZero;
      break;
    }
    if (r.correct[n] == 0) {
      smooth *= 2;
      frac = 1.0 / (smooth * static_cast<double>(r.total[n]));
    } else {
      frac = static_cast<double>(r.correct[n]) / static_cast<double>(r.total[n]);
    }
    r.precisions[n] = 100.0 * frac;
    log_sum += std::log(frac);
  }
  if (r.sys_len < r.ref_len) {
    r.brevity_penalty = r.sys_len > 0 ? std::exp(1.0 - static_cast<double>(r.ref_len) / static_cast<double>(r.sys_len)) : 0.0;
  } else {
    r.brevity_penalty = 1.0;
  }
  r.score = 100.0 * r.brevity_penalty * std::exp(log_sum / 4.0);
  return r;
}

ChrfResult chrf(std::span<const std::string> hyps, std::span<const std::string> refs) {
  check_sizes(hyps.size(), refs.size(), "chrf");
  constexpr int kOrder = 6;
  constexpr double kBeta = 2.0;
  std::array<std::size_t, kOrder> hyp_total{}, ref_total{}, match{};
  const auto strip_ws = [](std::u32string s) {
    std::u32string out;
    for (char32_t c : s) {
      if (!is_space(c)) out += c;
    }
    return out;
  };
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const auto h = strip_ws(decode(hyps[s]));
    const auto g = strip_ws(decode(refs[s]));
    for (int n = 1; n <= kOrder; ++n) {
      const auto un = static_cast<std::size_t>(n);
      std::unordered_map<std::u32string, std::size_t> hc, rc;
      for (std::size_t i = 0; i + un <= h.size(); ++i) ++hc[h.substr(i, un)];
      for (std::size_t i = 0; i + un <= g.size(); ++i) ++rc[g.substr(i, un)];
      const auto k = static_cast<std::size_t>(n - 1);
      if (h.size() >= un) hyp_total[k] += h.size() - un + 1;
      if (g.size() >= un) ref_total[k] += g.size() - un + 1;
      for (const auto& [key, c] : hc) {
        if (auto it = rc.find(key); it != rc.end()) match[k] += std::min(c, it->second);
      }
    }
  }
  ChrfResult r;
  double p = 0, rec = 0;
  for (int k = 0; k < kOrder; ++k) {
    if (hyp_total[static_cast<std::size_t>(k)] > 0 && ref_total[static_cast<std::size_t>(k)] > 0) {
      p += static_cast<double>(match[static_cast<std::size_t>(k)]) / static_cast<double>(hyp_total[static_cast<std::size_t>(k)]);
      rec += static_cast<double>(match[static_cast<std::size_t>(k)]) / static_cast<double>(ref_total[static_cast<std::size_t>(k)]);
      ++r.effective_order;
    }
  }
  if (r.effective_order > 0) {
    p /= r.effective_order;
    rec /= r.effective_order;
  }
  r.precision = p;
  r.recall = rec;
  if (p + rec > 0) {
    const double b2 = kBeta * kBeta;
    r.score = (1 + b2) * (p * rec) / (b2 * p + rec);
  }
  return r;
}

std::string bleu_signature(const Direction& dir, std::string_view test_set) {
  return "BLEU+case.mixed+lang." + dir.str() + "+numrefs.1+smooth.exp+test." + std::string(test_set) +
         "+tok.13a+version.1.4.14";
}

std::string chrf_signature(const Direction& dir, std::string_view test_set) {
  return "chrF2+lang." + dir.str() + "+numchars.6+numrefs.1+space.false+test." + std::string(test_set) +
         "+version.1.5.1";
}

std::string format_fixed(double v, int decimals) {
  if (!std::isfinite(v)) throw NumericError("cannot format a non-finite score");
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::fixed);
  std::string s(buf, res.ptr);
  bool negative = false;
  if (!s.empty() && s[0] == '-') {
    negative = true;
    s.erase(0, 1);
  }
  auto dot = s.find('.');
  if (dot == std::string::npos) {
    s += '.';
    dot = s.size() - 1;
  }
  std::string frac = s.substr(dot + 1);
  std::string whole = s.substr(0, dot);
  const auto d = static_cast<std::size_t>(decimals);
  bool carry = frac.size() > d && frac[d] >= '5';
  frac.resize(d, '0');
  std::string digits = whole + frac;
  for (std::size_t i = digits.size(); carry && i-- > 0;) {
    if (digits[i] == '9') {
      digits[i] = '0';
    } else {
      ++digits[i];
      carry = false;
    }
  }
  if (carry) digits.insert(digits.begin(), '1');
  std::string out = digits.substr(0, digits.size() - d);
  if (d > 0) out += "." + digits.substr(digits.size() - d);
  const bool zero = out.find_first_not_of("0.") == std::string::npos;
  return (negative && !zero ? "-" : "") + out;
}

double round_half_up(double v, int decimals) { return std::stod(format_fixed(v, decimals)); }

const DirectionScore* ScoreReport::find(const Direction& d) const {
  for (const auto& s : scores) {
    if (s.direction == d) return &s;
  }
  return nullptr;
}

ScoreReport aggregate(std::string label, std::vector<DirectionScore> scores, std::span<const Direction> low_directions) {
  ScoreReport r;
  r.label = std::move(label);
  r.scores = std::move(scores);
  if (low_directions.empty()) return r;
  double b = 0, c = 0;
  for (const auto& d : low_directions) {
    const auto* s = r.find(d);
    if (!s) throw DataError("aggregate: direction " + d.str() + " missing from row '" + r.label + "'");
    b += s->bleu;
    c += s->chrf;
  }
  const auto n = static_cast<double>(low_directions.size());
  r.bleu_low = b / n;
  r.chrf_low = c / n;
  return r;
}

DeltaRow delta(const ScoreReport& a, const ScoreReport& b) {
  if (a.scores.size() != b.scores.size()) {
    throw DataError("compare: rows '" + a.label + "' and '" + b.label + "' cover different directions");
  }
  DeltaRow row;
  row.label = a.label + " vs " + b.label;
  for (const auto& s : a.scores) {
    const auto* o = b.find(s.direction);
    if (!o) throw DataError("compare: direction " + s.direction.str() + " missing from row '" + b.label + "'");
    row.deltas.push_back({s.direction, s.bleu - o->bleu, s.chrf - o->chrf});
  }
  if (a.bleu_low && b.bleu_low) row.bleu_low = *a.bleu_low - *b.bleu_low;
  if (a.chrf_low && b.chrf_low) row.chrf_low = *a.chrf_low - *b.chrf_low;
  return row;
}

Comparison compare(std::span<const ScoreReport> reports, std::size_t baseline) {
  if (reports.empty()) throw DataError("compare: no reports");
  if (baseline >= reports.size()) throw ConfigError("compare: baseline index out of range");
  Comparison c;
  for (const auto& s : reports[0].scores) c.directions.push_back(s.direction);
  for (const auto& r : reports) c.rows.push_back(delta(r, reports[baseline]));
  for (const auto& d : c.directions) {
    std::size_t bb = 0, bc = 0;
    for (std::size_t i = 1; i < reports.size(); ++i) {
      if (reports[i].find(d)->bleu > reports[bb].find(d)->bleu) bb = i;
      if (reports[i].find(d)->chrf > reports[bc].find(d)->chrf) bc = i;
    }
    c.best_bleu.push_back(bb);
    c.best_chrf.push_back(bc);
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (reports[i].bleu_low && (!c.best_bleu_low || *reports[i].bleu_low > *reports[*c.best_bleu_low].bleu_low)) {
      c.best_bleu_low = i;
    }
    if (reports[i].chrf_low && (!c.best_chrf_low || *reports[i].chrf_low > *reports[*c.best_chrf_low].chrf_low)) {
      c.best_chrf_low = i;
    }
  }
  return c;
}

}  // namespace lowmt::metrics
