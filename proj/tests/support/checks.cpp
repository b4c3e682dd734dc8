#include "checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "lowmt/checkpoint.hpp"
#include "lowmt/corpus.hpp"
#include "lowmt/decoding.hpp"
#include "lowmt/metrics.hpp"
#include "lowmt/subword.hpp"
#include "lowmt/synthesis.hpp"
#include "lowmt/toy.hpp"
#include "lowmt/trainer.hpp"
#include "lowmt/transformer.hpp"

namespace lowmt::checks {
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------

Outcome metric_oracle(const fs::path& dir) {
  const auto hyps = read_lines(dir / "hyp.txt");
  const auto refs = read_lines(dir / "ref.txt");
  const auto kv = KeyValue::load(dir / "expected.txt");
  const double want_bleu = std::stod(kv.require("bleu"));
  const double want_chrf = std::stod(kv.require("chrf"));
  const auto b = metrics::bleu(hyps, refs);
  const auto c = metrics::chrf(hyps, refs);
  const auto self_b = metrics::bleu(refs, refs).score;
  const auto self_c = metrics::chrf(refs, refs).score;
  Outcome o;
  o.pass = hyps.size() == 20 && std::abs(b.score - want_bleu) <= 0.01 && std::abs(c.score - want_chrf) <= 0.001 &&
           self_b == 100.0 && self_c == 1.0;
  o.detail = "BLEU " + fmt("%.6f", b.score) + " vs " + fmt("%.6f", want_bleu) + ", chrF " + fmt("%.6f", c.score) +
             " vs " + fmt("%.6f", want_chrf) + ", self " + fmt("%.17g", self_b) + "/" + fmt("%.17g", self_c);
  return o;
}

Outcome paper_arithmetic() {
  // et-fi fi-et et-vro vro-et fi-sme sme-fi fi-sma sma-fi sme-sma sma-sme
  const char* dirs[] = {"et-fi", "fi-et", "et-vro", "vro-et", "fi-sme", "sme-fi", "fi-sma", "sma-fi", "sme-sma", "sma-sme"};
  const double baselines[] = {32.0, 29.4, 14.6, 17.5, 28.0, 28.7, 4.6, 6.3, 8.3, 9.1};
  const double ml[] = {30.9, 29.5, 23.8, 29.6, 31.3, 34.7, 9.4, 9.4, 19.8, 19.8};
  const double bt12[] = {31.3, 29.6, 26.2, 31.3, 31.4, 36.4, 12.4, 10.6, 21.6, 20.7};
  const auto row = [&](const char* label, const double* v) {
    std::vector<metrics::DirectionScore> s;
    for (int i = 0; i < 10; ++i) s.push_back({Direction::parse(dirs[i]), v[i], 0.0});
    std::vector<Direction> low;
    for (int i = 2; i < 10; ++i) low.push_back(Direction::parse(dirs[i]));
    return metrics::aggregate(label, s, low);
  };
  const auto rb = row("Baselines", baselines);
  const auto rm = row("ML", ml);
  const auto rt = row("+BT1+BT2(*)", bt12);
  const auto d = metrics::delta(rm, rb);
  double et_vro = 0;
  for (const auto& x : d.deltas) {
    if (x.direction.str() == "et-vro") et_vro = x.bleu;
  }
  const auto ml_low = metrics::format_fixed(*rm.bleu_low, 1);
  const auto bt_low = metrics::format_fixed(*rt.bleu_low, 1);
  const auto base_low = metrics::format_fixed(*rb.bleu_low, 1);
  const auto delta = metrics::format_fixed(et_vro, 1);
  Outcome o;
  o.pass = ml_low == "22.2" && bt_low == "23.8" && base_low == "14.6" && delta == "9.2";
  o.detail = "ML " + ml_low + ", +BT1+BT2(*) " + bt_low + ", Baselines " + base_low + ", et-vro delta +" + delta;
  return o;
}

// ---------------------------------------------------------------------------

double relative_error(double a, double n) {
  const double denom = std::max({std::abs(a), std::abs(n), 1e-6});
  return std::abs(a - n) / denom;
}

namespace {

std::string group_of(const std::string& name) {
  if (starts_with(name, "embed.")) return "embedding";
  if (starts_with(name, "output.")) return "output";
  const auto last = name.substr(name.rfind('.') + 1);
  if (name.find(".norm") != std::string::npos) return "norm";
  if (name.find(".ffn.") != std::string::npos) return last[0] == 'w' ? "ffn.weight" : "ffn.bias";
  if (name.find(".self.") != std::string::npos || name.find(".cross.") != std::string::npos) {
    return last[0] == 'w' ? "attention.weight" : "attention.bias";
  }
  return "other";
}

}  // namespace

GradCheck gradient_check(std::uint64_t seed, std::size_t coords) {
  nmt::ModelConfig cfg;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.heads = 2;
  cfg.d_model = 16;
  cfg.d_ff = 32;
  cfg.token_vocab = 24;
  cfg.languages = {LangId("aa"), LangId("bb"), LangId("cc")};
  cfg.factor_dim = 4;
  cfg.dropout = 0;
  cfg.label_smoothing = 0.1;
  cfg.max_len = 16;
  cfg.validate();

  Rng rng(seed);
  auto params = nmt::init_params<double>(cfg, seed);
  // Nonzero biases and non-unit gains so every term of the graph matters.
  for (auto& t : params.tensors) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] += 0.05 * (uniform_real(rng) - 0.5);
  }
  std::vector<nmt::Example> ex;
  for (int s = 0; s < 3; ++s) {
    nmt::Example e;
    const int sl = 3 + static_cast<int>(uniform_index(rng, 4));
    const int tl = 2 + static_cast<int>(uniform_index(rng, 4));
    for (int i = 0; i < sl; ++i) e.src.push_back(4 + static_cast<int>(uniform_index(rng, 20)));
    for (int i = 0; i < tl; ++i) e.tgt.push_back(4 + static_cast<int>(uniform_index(rng, 20)));
    e.factor = static_cast<int>(uniform_index(rng, 3));
    e.words = static_cast<std::size_t>(tl);
    e.id = static_cast<std::size_t>(s);
    ex.push_back(std::move(e));
  }
  const auto batch = nmt::make_batch(ex);
  const auto grads = nmt::backward(params, cfg, batch).grads;

  // pool (tensor, flat index) by group
  std::map<std::string, std::vector<std::pair<std::size_t, Eigen::Index>>> pools;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Eigen::Index i = 0; i < params.tensors[t].size(); ++i) pools[group_of(params.names[t])].emplace_back(t, i);
  }
  std::set<std::pair<std::size_t, Eigen::Index>> chosen;
  for (auto& [g, pool] : pools) {
    shuffle(pool, rng);
    for (std::size_t k = 0; k < std::min(coords, pool.size()); ++k) chosen.insert(pool[k]);
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (Eigen::Index i = 0; i < std::min<Eigen::Index>(4, params.tensors[t].size()); ++i) chosen.insert({t, i});
  }

  GradCheck out;
  const double h = 1e-5;
  for (const auto& [t, i] : chosen) {
    double& x = params.tensors[t].data()[i];
    const double saved = x;
    x = saved + h;
    const double up = nmt::forward(params, cfg, batch).loss;
    x = saved - h;
    const double down = nmt::forward(params, cfg, batch).loss;
    x = saved;
    const double numeric = (up - down) / (2 * h);
    const double analytic = grads.tensors[t].data()[i];
    const double err = relative_error(analytic, numeric);
    ++out.coords_per_group[group_of(params.names[t])];
    if (err >= out.max_rel_error) {
      out.max_rel_error = err;
      const auto cols = params.tensors[t].cols();
      out.worst = params.names[t] + "[" + std::to_string(i / cols) + "," + std::to_string(i % cols) + "] " +
                  fmt("%.10g", analytic) + " " + fmt("%.10g", numeric);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

Memorization memorization(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto spec = toy::ToyLanguageSpec::desk_default();
  const toy::ToyWorld world(spec, seed);
  Rng rng(mix_seed(seed, 7));
  const Direction d{LangId("la"), LangId("lb")};
  ParallelCorpus c{d, {}};
  std::set<std::string> seen;
  while (c.size() < 32) {
    const auto s = world.sample(rng);
    auto src = world.render(s, d.src);
    if (!seen.insert(src).second) continue;
    c.add(std::move(src), world.render(s, d.tgt));
  }
  std::vector<std::string> texts;
  for (const auto& p : c.pairs) {
    texts.push_back(p.src);
    texts.push_back(p.tgt);
  }
  const auto subword = SubwordModel::train(texts, 400);

  nmt::ModelConfig cfg;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.heads = 4;
  cfg.d_model = 64;
  cfg.d_ff = 128;
  cfg.token_vocab = static_cast<int>(subword.vocab_size());
  cfg.languages = {d.src, d.tgt};
  cfg.factor_dim = 0;
  cfg.dropout = 0;
  cfg.label_smoothing = 0;
  cfg.max_len = 64;

  nmt::TrainConfig tc;
  tc.batch_words = 1000;  // the whole corpus per update
  tc.checkpoint_interval = 25;
  tc.patience = 1000;
  tc.max_updates = 600;
  tc.learning_rate = 3e-3;
  tc.warmup = 50;
  tc.seed = seed;
  const std::vector<ParallelCorpus> corpora{c};
  const auto ex = nmt::encode_pairs(corpora, subword, cfg);
  const auto res = nmt::train(nmt::init_params<float>(cfg, seed), cfg, ex, ex, tc);

  std::vector<std::string> srcs, refs;
  for (const auto& p : c.pairs) {
    srcs.push_back(p.src);
    refs.push_back(p.tgt);
  }
  const std::vector<LangId> tgt{d.tgt};
  const auto out = nmt::translate_batch(res.best.params, cfg, subword, srcs, tgt);
  std::vector<std::string> hyps;
  for (const auto& o : out) hyps.push_back(o.text);

  Memorization m;
  m.valid_ppl = res.best.valid_ppl;
  m.bleu = metrics::bleu(hyps, refs).score;
  m.updates = res.updates;
  m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return m;
}

// ---------------------------------------------------------------------------

std::string random_utf8(Rng& rng, std::size_t max_chars) {
  static const char32_t kPools[][2] = {
      {0x61, 0x7a},     {0x41, 0x5a},     {0x30, 0x39},   {0x21, 0x2f},     {0xe0, 0xff},
      {0x100, 0x17f},   {0x391, 0x3c9},   {0x410, 0x44f}, {0x4e00, 0x4e80}, {0x1f600, 0x1f64f},
      {0x300, 0x36f},   {0x20, 0x20},     {0x9, 0xa},     {0x2581, 0x2581}, {0xfffd, 0xfffd},
  };
  const std::size_t n = uniform_index(rng, max_chars + 1);
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    // letters dominate so the strings look like words
    const std::size_t p = uniform_real(rng) < 0.5 ? 0 : uniform_index(rng, std::size(kPools));
    const auto [lo, hi] = kPools[p];
    append_utf8(s, lo + static_cast<char32_t>(uniform_index(rng, hi - lo + 1)));
  }
  return s;
}

PropertyResult tokenizer_roundtrip(std::size_t cases, std::uint64_t seed) {
  PropertyResult r{"tokenizer round-trip"};
  Rng rng(seed);
  // Training text covers only a slice of the fuzz alphabet, so most inputs
  // need byte fallback somewhere.
  std::vector<std::string> train;
  for (int i = 0; i < 300; ++i) {
    std::string s;
    const std::size_t words = 1 + uniform_index(rng, 8);
    for (std::size_t w = 0; w < words; ++w) {
      if (w) s += ' ';
      const std::size_t len = 1 + uniform_index(rng, 6);
      for (std::size_t k = 0; k < len; ++k) s += static_cast<char>('a' + uniform_index(rng, 8));
      if (uniform_real(rng) < 0.1) s += "\xC3\xA4";  // U+00E4
    }
    train.push_back(s);
  }
  const auto model = SubwordModel::train(train, 400);
  for (std::size_t i = 0; i < cases; ++i) {
    const auto s = random_utf8(rng, 24);
    const auto ids = model.encode(s);
    const auto back = model.decode(ids);
    ++r.cases;
    if (back != s) {
      if (r.failures++ == 0) r.first_failure = "'" + s + "' -> '" + back + "'";
    }
  }
  return r;
}

namespace {

ParallelCorpus random_corpus(Rng& rng, std::size_t max_size) {
  static const char* kWords[] = {"a", "b", "ab", "ba", "c", "\xC3\xA4", "x y", " a", "a "};
  ParallelCorpus c{{LangId("xx"), LangId("yy")}, {}};
  const std::size_t n = uniform_index(rng, max_size + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::string s = kWords[uniform_index(rng, std::size(kWords))];
    std::string t = kWords[uniform_index(rng, std::size(kWords))];
    c.add(s, t, static_cast<Origin>(uniform_index(rng, 3)));
  }
  return c;
}

}  // namespace

std::vector<PropertyResult> corpus_invariants(std::size_t cases, std::uint64_t seed) {
  std::vector<PropertyResult> out;
  Rng rng(seed);
  const auto fail = [](PropertyResult& r, const std::string& why) {
    if (r.failures++ == 0) r.first_failure = why;
  };

  PropertyResult dd{"dedup idempotence"};
  for (std::size_t i = 0; i < cases; ++i, ++dd.cases) {
    const auto c = random_corpus(rng, 30);
    const auto once = corpus::dedup(c);
    const auto twice = corpus::dedup(once.corpus);
    if (!(twice.corpus == once.corpus) || twice.report.eliminated != 0 ||
        once.report.before != once.report.after + once.report.eliminated) {
      fail(dd, "case " + std::to_string(i));
    }
  }
  out.push_back(dd);

  PropertyResult rv{"reverse involution"};
  for (std::size_t i = 0; i < cases; ++i, ++rv.cases) {
    const auto c = random_corpus(rng, 30);
    const auto r1 = corpus::reverse(c);
    if (!(corpus::reverse(r1) == c) || !(r1.direction == c.direction.reversed())) fail(rv, "case " + std::to_string(i));
  }
  out.push_back(rv);

  PropertyResult sp{"split partition and quotas"};
  for (std::size_t i = 0; i < cases; ++i, ++sp.cases) {
    const std::size_t k = 1 + uniform_index(rng, 5);
    std::vector<ParallelCorpus> cs;
    std::vector<std::size_t> sizes;
    std::size_t grand = 0;
    for (std::size_t j = 0; j < k; ++j) {
      ParallelCorpus c{{LangId("p" + std::to_string(j)), LangId("q")}, {}};
      const std::size_t n = uniform_index(rng, 60);
      for (std::size_t m = 0; m < n; ++m) c.add(std::to_string(j) + ":" + std::to_string(m), "t" + std::to_string(m));
      sizes.push_back(n);
      grand += n;
      cs.push_back(std::move(c));
    }
    if (grand < 2) continue;
    SplitSpec spec;
    spec.test_total = uniform_index(rng, grand / 2 + 1);
    spec.valid_total = uniform_index(rng, (grand - spec.test_total) / 2 + 1);
    spec.seed = rng();
    // oracle: floor share plus one for the largest remainders
    const auto check_quota = [&](const std::vector<std::size_t>& got, std::size_t total) {
      std::size_t sum = 0;
      for (std::size_t j = 0; j < k; ++j) {
        const auto exact_num = static_cast<unsigned __int128>(total) * sizes[j];
        const auto lo = static_cast<std::size_t>(exact_num / grand);
        if (got[j] < lo || got[j] > lo + 1) return false;
        sum += got[j];
      }
      if (sum != total) return false;
      // a bucket that received the extra unit never has a smaller remainder
      // than one that did not
      for (std::size_t a = 0; a < k; ++a) {
        for (std::size_t b = 0; b < k; ++b) {
          const auto ra = (static_cast<unsigned __int128>(total) * sizes[a]) % grand;
          const auto rb = (static_cast<unsigned __int128>(total) * sizes[b]) % grand;
          const bool a_up = got[a] > static_cast<std::size_t>(static_cast<unsigned __int128>(total) * sizes[a] / grand);
          const bool b_up = got[b] > static_cast<std::size_t>(static_cast<unsigned __int128>(total) * sizes[b] / grand);
          if (a_up && !b_up && ra < rb) return false;
        }
      }
      return true;
    };
    const auto tq = corpus::largest_remainder_quotas(sizes, spec.test_total);
    const auto vq = corpus::largest_remainder_quotas(sizes, spec.valid_total);
    if (!check_quota(tq, spec.test_total) || !check_quota(vq, spec.valid_total)) {
      fail(sp, "quota case " + std::to_string(i));
      continue;
    }
    bool fits = true;
    for (std::size_t j = 0; j < k; ++j) fits = fits && tq[j] + vq[j] <= sizes[j];
    std::vector<HoldoutSplit> parts;
    try {
      parts = corpus::split_holdout(cs, spec);
    } catch (const ConfigError&) {
      if (fits) fail(sp, "unexpected ConfigError in case " + std::to_string(i));
      continue;
    }
    if (!fits) {
      fail(sp, "missing ConfigError in case " + std::to_string(i));
      continue;
    }
    for (std::size_t j = 0; j < k; ++j) {
      const auto& p = parts[j];
      std::vector<std::string> all;
      for (const auto* part : {&p.train, &p.valid, &p.test}) {
        for (const auto& x : part->pairs) all.push_back(x.src);
      }
      std::vector<std::string> orig;
      for (const auto& x : cs[j].pairs) orig.push_back(x.src);
      std::sort(all.begin(), all.end());
      std::sort(orig.begin(), orig.end());
      if (all != orig || p.test.size() != tq[j] || p.valid.size() != vq[j]) {
        fail(sp, "partition case " + std::to_string(i));
        break;
      }
    }
    const auto again = corpus::split_holdout(cs, spec);
    for (std::size_t j = 0; j < k; ++j) {
      if (!(again[j].test == parts[j].test) || !(again[j].valid == parts[j].valid)) {
        fail(sp, "nondeterministic case " + std::to_string(i));
        break;
      }
    }
  }
  out.push_back(sp);

  PropertyResult es{"equal shares max-min <= 1"};
  for (std::size_t i = 0; i < cases; ++i, ++es.cases) {
    const std::size_t n = uniform_index(rng, 200);
    const std::size_t k = 2 + uniform_index(rng, 6);
    std::vector<LangId> langs;
    for (std::size_t j = 0; j < k; ++j) langs.emplace_back("l" + std::to_string(j));
    MonoCorpus m{langs[0], {}};
    for (std::size_t j = 0; j < n; ++j) m.lines.push_back("s" + std::to_string(j));
    const auto plan = synthesis::plan_shares(m, langs, synthesis::ShareMode::equal_shares, rng());
    const auto counts = plan.counts();
    std::size_t sum = 0;
    for (auto v : counts) sum += v;
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    if (counts.size() != k - 1 || sum != n || *hi - *lo > 1 ||
        std::find(plan.targets.begin(), plan.targets.end(), langs[0]) != plan.targets.end()) {
      fail(es, "n=" + std::to_string(n) + " k=" + std::to_string(k));
    }
  }
  out.push_back(es);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::map<std::string, double> stage_bleu(const fs::path& run_dir, const std::string& label) {
  std::map<std::string, double> out;
  for (const auto& line : read_lines(run_dir / "stages" / label / "scores.tsv")) {
    const auto f = split(line, '\t');
    if (f.size() == 3) out[f[0]] = std::stod(f[1]);
  }
  return out;
}

const experiment::StageRecord* find_stage(const experiment::RunResult& r, const std::string& kind, int nth = 0) {
  for (const auto& s : r.stages) {
    if (s.kind == kind && nth-- == 0) return &s;
  }
  return nullptr;
}

const metrics::ScoreReport* find_row(const experiment::RunResult& r, const std::string& label) {
  for (const auto& row : r.rows) {
    if (row.label == label) return &row;
  }
  return nullptr;
}

bool bytes_equal(const nmt::Parameters<float>& a, const nmt::Parameters<float>& b) {
  if (a.names != b.names || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a.tensors[i];
    const auto& y = b.tensors[i];
    if (x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (std::memcmp(x.data(), y.data(), static_cast<std::size_t>(x.size()) * sizeof(float)) != 0) return false;
  }
  return true;
}

}  // namespace

ToyClaims toy_claims(const experiment::RunResult& r, const fs::path& run_dir) {
  ToyClaims c;
  const auto* base = find_stage(r, "baselines");
  const auto* ml = find_stage(r, "multilingual");
  const auto* bt1 = find_stage(r, "bt", 0);
  const auto* bt2 = find_stage(r, "bt", 1);
  const auto* ft = find_stage(r, "finetune");
  const auto* tr = find_stage(r, "transfer");
  const auto low = [&](const experiment::StageRecord* s) -> std::optional<double> {
    if (!s) return std::nullopt;
    const auto* row = find_row(r, s->row);
    return row ? row->bleu_low : std::nullopt;
  };

  {
    const auto b = low(base), m = low(ml);
    c.multilingual_gain.pass = b && m && *m - *b >= 2.0;
    c.multilingual_gain.detail = b && m ? "BLEU_low Baselines " + fmt("%.2f", *b) + ", ML " + fmt("%.2f", *m)
                                        : "missing baselines or multilingual row";
  }
  {
    const auto m = low(ml), b1 = low(bt1), b2 = low(bt2);
    c.bt_no_degradation.pass = m && b1 && b2 && *b1 >= *m - 0.5 && *b2 >= *b1 - 0.5;
    c.bt_no_degradation.detail = m && b1 && b2 ? "BLEU_low ML " + fmt("%.2f", *m) + ", +BT1 " + fmt("%.2f", *b1) +
                                                     ", +BT2 " + fmt("%.2f", *b2)
                                               : "missing bt rows";
  }
  if (ft && base) {
    const auto& spec_dir = run_dir / "spec.txt";
    const auto kv = KeyValue::load(spec_dir);
    std::string direction;
    for (const auto& k : kv.keys_with_prefix("stage.")) {
      const std::string line = *kv.get(k);
      const auto words = split_ws(line);
      if (words.size() >= 2 && words[1] == ft->label) {
        for (const auto& w : words) {
          if (starts_with(w, "direction=")) direction = std::string(w.substr(10));
        }
      }
    }
    const auto fb = stage_bleu(run_dir, ft->label);
    const auto bb = stage_bleu(run_dir, base->label);
    if (fb.count(direction) && bb.count(direction)) {
      const double f = fb.at(direction), b = bb.at(direction);
      c.fine_tune_gain.pass = f - b >= 2.0;
      c.fine_tune_gain.detail = direction + " baseline " + fmt("%.2f", b) + ", fine-tuned " + fmt("%.2f", f);
    } else {
      c.fine_tune_gain.detail = "no scores for direction '" + direction + "'";
    }
  } else {
    c.fine_tune_gain.detail = "missing finetune or baselines stage";
  }
  if (tr) {
    const auto kv = KeyValue::load(run_dir / "spec.txt");
    std::string parent, direction;
    for (const auto& k : kv.keys_with_prefix("stage.")) {
      const std::string line = *kv.get(k);
      const auto words = split_ws(line);
      if (words.size() >= 2 && words[1] == tr->label) {
        for (const auto& w : words) {
          if (starts_with(w, "parent=")) parent = std::string(w.substr(7));
          if (starts_with(w, "direction=")) direction = std::string(w.substr(10));
        }
      }
    }
    const auto colon = parent.find(':');
    const auto parent_path = colon == std::string::npos
                                 ? run_dir / "stages" / parent / "best.ckpt"
                                 : run_dir / "stages" / parent.substr(0, colon) / parent.substr(colon + 1) / "best.ckpt";
    const auto p = nmt::Checkpoint::load(parent_path);
    auto cfg = p.config;
    const auto d = Direction::parse(direction);
    if (cfg.factor_vocab() == 2) cfg.languages = {d.src, d.tgt};
    const auto child0 = nmt::init_from(p, cfg);
    const bool same = bytes_equal(child0, p.params);
    const bool recorded = tr->init_hash == experiment::params_hash(p.params);
    c.transfer_init.pass = same && recorded;
    c.transfer_init.detail = std::string("init_from byte-equal: ") + (same ? "yes" : "no") +
                             ", recorded step-0 hash matches parent: " + (recorded ? "yes" : "no");
  } else {
    c.transfer_init.detail = "missing transfer stage";
  }
  if (ml) {
    const auto meta = KeyValue::load(run_dir / "stages" / ml->label / "stage.txt");
    const auto keys = meta.keys_with_prefix("on_target.");
    bool ok = !keys.empty();
    std::string detail;
    for (const auto& k : keys) {
      const double v = std::stod(*meta.get(k));
      ok = ok && v >= 0.8;
      detail += (detail.empty() ? "" : ", ") + k.substr(10) + " " + fmt("%.3f", v);
    }
    c.zero_shot_target.pass = ok;
    c.zero_shot_target.detail = detail.empty() ? "no zero-resource directions scored" : "on-target " + detail;
  } else {
    c.zero_shot_target.detail = "missing multilingual stage";
  }
  return c;
}

Outcome reports_identical(const fs::path& a, const fs::path& b) {
  Outcome o{true, ""};
  std::size_t n = 0;
  for (const auto& f : experiment::report_files()) {
    const auto pa = a / "report" / f, pb = b / "report" / f;
    if (!fs::exists(pa) || !fs::exists(pb) || read_file(pa) != read_file(pb)) {
      o.pass = false;
      o.detail += (o.detail.empty() ? "differs: " : ", ") + f;
    }
    ++n;
  }
  if (o.pass) o.detail = std::to_string(n) + " report files byte-identical";
  return o;
}

}  // namespace lowmt::checks
